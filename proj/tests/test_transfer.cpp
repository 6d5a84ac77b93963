#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "bowen/transfer.hpp"

using namespace bowen;
using Catch::Approx;

namespace {

const MapParams standard(2, {2.0, 0.0});

TransferOptions with_tail(TailModel m) {
    TransferOptions o;
    o.tail = m;
    return o;
}

double one(const CylinderPoint&) { return 1.0; }

// Brute-force L^2 1(z) over |k| <= K on both levels.
double brute_s2(const MapParams& p, double t, const CylinderPoint& z, int K) {
    PreimageOptions po;
    po.strip_grid = false;
    double s = 0.0;
    for (const auto& b : preimages(p, z, K, po).branches) {
        const double w = std::pow(std::abs(b.deriv), -t);
        for (const auto& c : preimages(p, b.x, K, po).branches) s += w * std::pow(std::abs(c.deriv), -t);
    }
    return s;
}

// Limit K -> inf of S(K) ~ S + a K^-1/2 + b K^-1 + c K^-3/2, solved exactly from four K.
double extrapolate(const std::vector<int>& Ks, const std::vector<double>& S) {
    const std::size_t m = Ks.size();
    std::vector<std::vector<double>> A(m, std::vector<double>(m + 1));
    for (std::size_t i = 0; i < m; ++i) {
        const double x = 1.0 / std::sqrt(double(Ks[i]));
        double pw = 1.0;
        for (std::size_t j = 0; j < m; ++j, pw *= x) A[i][j] = pw;
        A[i][m] = S[i];
    }
    for (std::size_t c = 0; c < m; ++c)
        for (std::size_t r = c + 1; r < m; ++r) {
            const double f = A[r][c] / A[c][c];
            for (std::size_t j = c; j <= m; ++j) A[r][j] -= f * A[c][j];
        }
    std::vector<double> x(m);
    for (std::size_t r = m; r-- > 0;) {
        double s = A[r][m];
        for (std::size_t j = r + 1; j < m; ++j) s -= A[r][j] * x[j];
        x[r] = s / A[r][r];
    }
    return x[0];
}

}  // namespace

TEST_CASE("Gauss-Laguerre rules are exact for low-degree polynomials", "[transfer][quadrature]") {
    for (int n : {2, 8, 16}) {
        const auto rule = gauss_laguerre(n);
        double factorial = 1.0;
        for (int k = 0; k < 2 * n; ++k) {
            if (k > 0) factorial *= k;
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += rule.weights[i] * std::pow(rule.nodes[i], k);
            CHECK(s == Approx(factorial).epsilon(1e-9));
        }
    }
    CHECK_THROWS_AS(gauss_laguerre(1), InvalidArgument);
}

TEST_CASE("transfer operator on the zero function", "[transfer]") {
    const auto z = CylinderPoint(1.0, 0.3);
    for (TailModel m : {TailModel::Bound, TailModel::Quadrature}) {
        const auto v = apply_transfer(standard, 1.5, [](const CylinderPoint&) { return 0.0; }, 0.0, z, 10, with_tail(m));
        CHECK(v.value == 0.0);
        CHECK(v.error == 0.0);
    }
    CHECK_THROWS_AS(apply_transfer(standard, 1.0, one, 1.0, z, 10), TNotSummable);
}

TEST_CASE("transfer operator is linear", "[transfer][property]") {
    const auto z = CylinderPoint(0.4, -1.1);
    auto g = [](const CylinderPoint& x) { return 1.0 / (1.0 + std::norm(x.value())); };
    auto mix = [&](const CylinderPoint& x) { return 2.0 + 3.0 * g(x); };
    for (TailModel m : {TailModel::Bound, TailModel::Quadrature}) {
        const auto o = with_tail(m);
        const auto a = apply_transfer(standard, 1.5, one, 1.0, z, 12, o);
        const auto b = apply_transfer(standard, 1.5, g, 1.0, z, 12, o);
        const auto c = apply_transfer(standard, 1.5, mix, 5.0, z, 12, o);
        CHECK(std::abs(c.value - (2.0 * a.value + 3.0 * b.value)) <= 1e-12 + 2.0 * a.error + 3.0 * b.error);
        CHECK(std::abs(c.value - (2.0 * a.value + 3.0 * b.value)) < 1e-12);
    }
}

TEST_CASE("L 1 decays to the right", "[transfer]") {
    std::vector<double> values;
    for (double re : {2.0, 10.0, 20.0}) {
        const auto v = apply_transfer(standard, 1.5, one, 1.0, CylinderPoint(re, 0.5), 50, with_tail(TailModel::Quadrature));
        if (!values.empty()) CHECK(v.value < values.back());
        values.push_back(v.value);
    }
    // The truncated sums alone show the same ordering.
    const auto near = apply_transfer(standard, 1.5, one, 1.0, CylinderPoint(2.0, 0.5), 50);
    const auto far = apply_transfer(standard, 1.5, one, 1.0, CylinderPoint(20.0, 0.5), 50);
    CHECK(far.value < near.value);
}

TEST_CASE("one tree level is one application", "[transfer]") {
    const auto z = default_base_point(standard).point;
    for (TailModel m : {TailModel::Bound, TailModel::Quadrature}) {
        const auto o = with_tail(m);
        const auto tree = iterate_transfer_one(standard, 1.5, z, 1, 20, 1e-14, o);
        const auto direct = apply_transfer(standard, 1.5, one, 1.0, z, 20, o);
        CHECK(tree.value == Approx(direct.value).epsilon(1e-14));
    }
    const auto b = iterate_transfer_one(standard, 1.5, z, 1, 20, 1e-14);
    CHECK(b.error == Approx(tail_weight_bound(20, 1.5).bound).epsilon(1e-12));
}

TEST_CASE("tree sums decrease in t", "[transfer][property]") {
    const auto z = default_base_point(standard).point;
    for (TailModel m : {TailModel::Bound, TailModel::Quadrature}) {
        const auto a = iterate_transfer_one(standard, 1.5, z, 3, 8, 1e-14, with_tail(m));
        const auto b = iterate_transfer_one(standard, 2.0, z, 3, 8, 1e-14, with_tail(m));
        CHECK(b.value < a.value);
    }
}

TEST_CASE("second iterate agrees with extrapolated brute force", "[transfer][oracle]") {
    const auto z = default_base_point(standard).point;
    const std::vector<int> Ks{50, 100, 200, 400};
    std::vector<double> S;
    for (int K : Ks) S.push_back(brute_s2(standard, 1.5, z, K));
    // Truncated sums converge like K^{1-t}: K = 200 alone is still off in the second digit.
    CHECK(S[2] < S[3]);
    const double limit = extrapolate(Ks, S);
    const auto tree = iterate_transfer_one(standard, 1.5, z, 2, 50, 0.0, with_tail(TailModel::Quadrature));
    CHECK(std::abs(tree.value - limit) < 5e-4);
    // The pure truncated tree at K = 50 reproduces the brute-force double loop exactly.
    const auto truncated = iterate_transfer_one(standard, 1.5, z, 2, 50, 0.0);
    CHECK(truncated.value == Approx(S[0]).epsilon(1e-12));
}

TEST_CASE("tail quadrature against a long direct sum", "[transfer][quadrature]") {
    PreimageOptions po;
    po.strip_grid = false;
    for (const CylinderPoint& z : {CylinderPoint(2.08, -1.0), CylinderPoint(-1.0, 2.5), CylinderPoint(6.0, 0.0)}) {
        const auto q = apply_transfer(standard, 1.5, one, 1.0, z, 10, with_tail(TailModel::Quadrature));
        double direct = 0.0;
        for (const auto& b : preimages(standard, z, 4000, po).branches) direct += std::pow(std::abs(b.deriv), -1.5);
        // What 4000 lifts still miss, from the leading term 2 (2 pi)^-t k^-t summed past 4000.
        const double rest = 2.0 * std::pow(two_pi, -1.5) * 2.0 / std::sqrt(4000.5);
        INFO("z = " << z.value());
        CHECK(q.value == Approx(direct + rest).epsilon(2e-4));
    }
}

TEST_CASE("refinement never enlarges the error", "[transfer][property]") {
    const auto z = default_base_point(standard).point;
    for (TailModel m : {TailModel::Bound, TailModel::Quadrature}) {
        const auto coarse = iterate_transfer_one(standard, 1.5, z, 3, 4, 1e-6, with_tail(m));
        const auto fine = iterate_transfer_one(standard, 1.5, z, 3, 8, 1e-7, with_tail(m));
        const auto finer = iterate_transfer_one(standard, 1.5, z, 3, 16, 1e-8, with_tail(m));
        CHECK(fine.error <= coarse.error);
        CHECK(finer.error <= fine.error);
        CHECK(fine.lo() <= coarse.hi());
        CHECK(coarse.lo() <= fine.hi());
        CHECK(finer.lo() <= fine.hi());
        CHECK(fine.lo() <= finer.hi());
        CHECK(coarse.value > 0.0);
        CHECK(finer.value > 0.0);
    }
}

TEST_CASE("node budget is enforced", "[transfer]") {
    TransferOptions o;
    o.node_budget = 50;
    const auto z = default_base_point(standard).point;
    CHECK_THROWS_AS(iterate_transfer_one(standard, 1.5, z, 4, 10, 0.0, o), BudgetExceeded);
    try {
        iterate_transfer_one(standard, 1.5, z, 4, 10, 0.0, o);
    } catch (const BudgetExceeded& e) {
        CHECK(e.budget() == 50);
    }
}

TEST_CASE("zeta sum at period one is the fixed-point sum", "[transfer][zeta]") {
    const double t = 1.5;
    const auto z = zeta_pressure(standard, t, 1, 10);
    double direct = 0.0;
    for (const auto& q : fixed_points(standard, -10, 10).points)
        if (q.repelling()) direct += std::pow(std::abs(q.multiplier), -t);
    CHECK(z.sum == Approx(direct).epsilon(1e-12));
    CHECK(z.estimate.value == Approx(std::log(direct)).epsilon(1e-12));
}

TEST_CASE("zeta points are periodic", "[transfer][zeta]") {
    const auto z = zeta_pressure(standard, 1.5, 2, 4);
    // Linear-regime branches only exist over part of the strip, and the lift-zero log branch
    // contracts onto the attracting point; every other word must produce a point.
    for (const auto& w : z.word_failures) {
        const bool linear = std::any_of(w.begin(), w.end(), [](const BranchSymbol& s) { return s.regime == Regime::Linear; });
        const bool attracting = std::all_of(w.begin(), w.end(), [](const BranchSymbol& s) { return s.lift == 0; });
        CHECK((linear || attracting));
    }
    REQUIRE_FALSE(z.points.empty());
    for (const auto& q : z.points)
        CHECK(periodic_residual(standard, q.point, 2) < 1e-11 * 2 * residual_scale(q.point.value()));
}

TEST_CASE("period-two points match Newton on F^2 from a seed grid", "[transfer][zeta][oracle]") {
    const int K = 4;
    std::vector<CylinderPoint> oracle;
    for (double re = -6.0; re <= 7.0; re += 0.02)
        for (double im = -pi + 0.01; im < pi; im += 0.02) {
            const auto r = newton_periodic(standard, cplx(re, im), 2);
            if (!r || !r->repelling()) continue;
            const CylinderPoint x = r->point, y = evaluate(standard, x);
            // Orbits with a step beyond |k| = K live far to the right.
            if (x.re() > 5.0 || y.re() > 5.0) continue;
            if (std::abs(lift_index(standard, y, x.value())) > K || std::abs(lift_index(standard, x, y.value())) > K) continue;
            bool dup = false;
            for (const auto& o : oracle) dup = dup || cylinder_distance(o, x) < 1e-8;
            if (!dup) oracle.push_back(x);
        }
    const auto z = zeta_pressure(standard, 1.5, 2, K);
    CHECK(z.points.size() == oracle.size());
    for (const auto& o : oracle) {
        double best = 1e300;
        for (const auto& q : z.points) best = std::min(best, cylinder_distance(q.point, o));
        CHECK(best < 1e-9);
    }
}

TEST_CASE("zeta pressure is stable in the truncation", "[transfer][zeta]") {
    const auto a = zeta_pressure(standard, 1.5, 2, 30, with_tail(TailModel::Quadrature));
    const auto b = zeta_pressure(standard, 1.5, 2, 100, with_tail(TailModel::Quadrature));
    // Two significant digits on the sums; P itself is close to zero here, so it is held to
    // two decimals instead.
    CHECK(std::abs(a.sum - b.sum) < 5e-3 * b.sum);
    CHECK(std::abs(a.estimate.value - b.estimate.value) < 5e-3);
}

TEST_CASE("ratio and zeta pressures bracket each other at short depth", "[transfer][zeta][property]") {
    const auto base = default_base_point(standard).point;
    const auto q = with_tail(TailModel::Quadrature);
    for (int n : {2, 3}) {
        const auto r = pressure_ratio(standard, 1.5, base, n, 4, 1e-14, q);
        const auto z = zeta_pressure(standard, 1.5, n, 4, q).estimate;
        INFO("n = " << n << ": ratio " << r.value << " +- " << r.uncertainty << ", zeta " << z.value << " +- "
                    << z.uncertainty);
        CHECK(r.lo() <= z.hi());
        CHECK(z.lo() <= r.hi());
    }
}

TEST_CASE("pressure decreases strictly and does not depend on the base", "[transfer][pressure]") {
    const auto q = with_tail(TailModel::Quadrature);
    const auto base = default_base_point(standard).point;
    const auto low = pressure_ratio(standard, 1.4, base, 4, 4, 1e-14, q);
    const auto high = pressure_ratio(standard, 1.8, base, 4, 4, 1e-14, q);
    CHECK(high.hi() < low.lo());

    const auto others = fixed_points(standard, 2, 2).points;
    const auto other = std::find_if(others.begin(), others.end(), [](const PeriodicPoint& x) { return x.repelling(); });
    REQUIRE(other != others.end());
    REQUIRE(cylinder_distance(other->point, base) > 0.1);
    const auto a = pressure_ratio(standard, 1.5, base, 4, 4, 1e-14, q);
    const auto b = pressure_ratio(standard, 1.5, other->point, 4, 4, 1e-14, q);
    CHECK(std::abs(a.value - b.value) <= a.uncertainty + b.uncertainty);
}

TEST_CASE("eigenfunction iterates", "[transfer][eigen]") {
    const auto q = with_tail(TailModel::Quadrature);
    const auto base = default_base_point(standard).point;
    const double t = 1.5;
    const double P = pressure_ratio(standard, t, base, 4, 4, 1e-14, q).value;
    const std::vector<CylinderPoint> samples{CylinderPoint(2.0, 0.0), CylinderPoint(15.0, 0.0), CylinderPoint(0.5, 1.5),
                                             CylinderPoint(4.0, -2.0)};
    const auto r = eigenfunction_iterate(standard, t, P, samples, base, 5, 4, 1e-9, q);
    REQUIRE(r.history.size() == 5);

    // One step is e^{-P} L 1 divided by the same at the base.
    const auto at = [&](const CylinderPoint& z) { return apply_transfer(standard, t, one, 1.0, z, 4, q).value; };
    for (std::size_t i = 0; i < samples.size(); ++i)
        CHECK(r.history[0].values[i] == Approx(std::exp(-P) * at(samples[i]) / (std::exp(-P) * at(base))).epsilon(1e-12));

    CHECK(r.history[2].values[1] < r.history[2].values[0]);
    for (double v : r.samples.values) CHECK(v > 0.0);
    REQUIRE(r.relative_change.size() == 4);
    CHECK(r.relative_change.back() < 0.1);
    REQUIRE(r.residual.size() == 4);
    CHECK(r.residual[3] < r.residual[0]);
}

TEST_CASE("atomic measure contract", "[transfer][atoms]") {
    const auto base = default_base_point(standard).point;
    const auto zero = conformal_atoms(standard, 1.5, -0.05, base, 0, 4, 1e-14);
    REQUIRE(zero.atoms.size() == 1);
    CHECK(zero.atoms[0].mass == 1.0);
    CHECK(cylinder_distance(zero.atoms[0].point, base) == 0.0);

    for (int depth : {1, 2, 3}) {
        const auto mu = conformal_atoms(standard, 1.5, -0.05, base, depth, 4, 1e-14);
        double total = 0.0;
        for (const auto& a : mu.atoms) {
            total += a.mass;
            CHECK(a.mass > 0.0);
            const CylinderPoint image = iterate(standard, a.point, depth);
            CHECK(cylinder_distance(image, base) < 1e-9);
        }
        CHECK(total == Approx(1.0).margin(1e-12));
    }
    CHECK_THROWS_AS(conformal_atoms(standard, 1.5, 0.0, base, 7, 4, 1e-14), InvalidArgument);
}

TEST_CASE("conformality defect shrinks with depth", "[transfer][atoms]") {
    const auto base = default_base_point(standard).point;
    // P for the same truncated system the atoms live on.
    const double P = pressure_ratio(standard, 1.5, base, 5, 4, 1e-14).value;
    const auto box = TestBox::around(base, 0.035);
    auto defect = [&](int depth) {
        return conformal_defect(standard, conformal_atoms(standard, 1.5, P, base, depth, 4, 1e-14), P, box, 4);
    };
    const double d3 = defect(3);
    const double d5 = defect(5);
    CHECK(d5 < d3);
    CHECK_THROWS_AS(conformal_defect(standard, conformal_atoms(standard, 1.5, P, base, 1, 4, 1e-14), P,
                                     TestBox::around(base, 0.5), 4),
                    InvalidArgument);
}
