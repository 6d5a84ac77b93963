#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "bowen/periodic.hpp"

using namespace bowen;
using Catch::Approx;

namespace {

// Fixed points with lift k by Newton on (l-1) z - e^z = 2 pi i k - shift from a fine seed grid.
// Plain Newton suffices: none of these fixed points has multiplier 1, so all roots are simple.
std::vector<cplx> fixed_point_oracle(const MapParams& p, int k) {
    const double a = p.ell_d() - 1.0;
    const cplx rhs = cplx(0.0, two_pi * k) - p.shift();
    std::vector<cplx> roots;
    for (double re = -2.0 * p.ell_d() - 2.0; re <= 10.0; re += 0.05) {
        for (double im = -pi + 0.025; im < pi; im += 0.05) {
            cplx z(re, im);
            for (int it = 0; it < 80; ++it) {
                const cplx d = a - std::exp(z);
                if (std::abs(d) == 0.0 || z.real() > 700) break;
                z -= (a * z - std::exp(z) - rhs) / d;
            }
            if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) continue;
            if (std::abs(a * z - std::exp(z) - rhs) > 1e-9 * (1 + std::exp(z.real()))) continue;
            const CylinderPoint zc(z);
            if (fixed_point_lift(p, zc.value()) != k) continue;
            bool dup = false;
            for (const cplx& r : roots)
                if (cylinder_distance(r, zc.value()) < 1e-7) dup = true;
            if (!dup) roots.push_back(zc.value());
        }
    }
    return roots;
}

}  // namespace

TEST_CASE("fixed points match the seed-grid oracle", "[periodic][oracle]") {
    for (const MapParams& p : {MapParams(2, {2.0, 0.0}), MapParams(2, {2.3, 0.4}), MapParams(3, {3.2, -0.4})}) {
        const auto set = fixed_points(p, -3, 3);
        CHECK(set.non_convergence.empty());
        std::size_t total = 0;
        for (int k = -3; k <= 3; ++k) {
            const auto oracle = fixed_point_oracle(p, k);
            total += oracle.size();
            for (const cplx& r : oracle) {
                double best = 1e300;
                for (const auto& q : set.points) best = std::min(best, cylinder_distance(r, q.point.value()));
                INFO("c = " << p.c() << ", k = " << k << ", oracle root " << r);
                CHECK(best < 1e-9);
            }
        }
        CHECK(set.points.size() == total);
        for (const auto& q : set.points) {
            CHECK(q.residual < 1e-11 * residual_scale(q.point.value()));
            CHECK(std::abs(q.multiplier - derivative(p, q.point)) < 1e-12 * (1 + std::abs(q.multiplier)));
        }
    }
}

TEST_CASE("log c is the lift-zero fixed point with multiplier l - c", "[periodic]") {
    const MapParams p(2, {2.0, 0.0});
    const auto set = fixed_points(p, 0, 0);
    const auto it = std::find_if(set.points.begin(), set.points.end(), [](const PeriodicPoint& q) {
        return cylinder_distance(q.point, CylinderPoint(std::log(2.0), 0.0)) < 1e-12;
    });
    REQUIRE(it != set.points.end());
    CHECK(std::abs(it->multiplier) < 1e-12);
    CHECK_FALSE(it->repelling());

    const MapParams q(3, {3.3, 0.2});
    const auto qs = fixed_points(q, 0, 0);
    bool found = false;
    for (const auto& z : qs.points)
        if (cylinder_distance(z.point, CylinderPoint(q.log_c())) < 1e-11) {
            found = true;
            CHECK(std::abs(z.multiplier - (3.0 - q.c())) < 1e-11);
        }
    CHECK(found);
}

TEST_CASE("fixed points of the conjugate parameter are conjugate", "[periodic][property]") {
    const MapParams p(2, {2.2, 0.3});
    const auto a = fixed_points(p, -2, 2);
    const auto b = fixed_points(p.conj(), -2, 2);
    REQUIRE(a.points.size() == b.points.size());
    for (const auto& x : a.points) {
        double best = 1e300;
        for (const auto& y : b.points) best = std::min(best, cylinder_distance(x.point.conj(), y.point));
        CHECK(best < 1e-9);
    }
}

TEST_CASE("the default base point is a repelling fixed point", "[periodic]") {
    const MapParams p(2, {2.0, 0.0});
    const PeriodicPoint b = default_base_point(p);
    CHECK(b.repelling());
    CHECK(periodic_residual(p, b.point, 1) < 1e-11 * residual_scale(b.point.value()));
    CHECK(fixed_point_lift(p, b.point.value()) == 1);
}

TEST_CASE("word fixed points agree with Newton on F^n", "[periodic][branch]") {
    const MapParams p(2, {2.0, 0.1});
    for (const BranchWord& w : {log_word({1}), log_word({1, -1}), log_word({2, 0, -1}), log_word({3, 1})}) {
        const auto wf = word_fixed_point(p, w, CylinderPoint(1.0, 0.5));
        REQUIRE(wf);
        const int n = static_cast<int>(w.size());
        CHECK(wf->period == n);
        CHECK(wf->repelling());
        const auto nf = newton_periodic(p, wf->point.value() + cplx(1e-4, -1e-4), n);
        REQUIRE(nf);
        CHECK(cylinder_distance(nf->point, wf->point) < 1e-10);
        CHECK(std::abs(nf->multiplier - wf->multiplier) < 1e-8 * std::abs(wf->multiplier));
    }
    // Period-one word agrees with the direct fixed-point solver.
    const auto wf = word_fixed_point(p, log_word({1}), CylinderPoint(0.0, 0.0));
    REQUIRE(wf);
    const auto set = fixed_points(p, 1, 1);
    double best = 1e300;
    for (const auto& q : set.points) best = std::min(best, cylinder_distance(q.point, wf->point));
    CHECK(best < 1e-11);
}

TEST_CASE("invalid periodic-point requests", "[periodic]") {
    const MapParams p(2, {2.0, 0.0});
    CHECK_THROWS_AS(fixed_points(p, 2, 1), InvalidArgument);
    CHECK_THROWS_AS(fixed_points(p, 0, 0, 0.0), InvalidArgument);
    CHECK_THROWS_AS(newton_periodic(p, cplx(1.0, 0.0), 0), InvalidArgument);
    CHECK_THROWS_AS(word_fixed_point(p, {}, CylinderPoint(0.0, 0.0)), InvalidArgument);
}
