// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Budgets are wall-clock limits for a single core; a criterion that blows its budget fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "bowen/dimension.hpp"
#include "bowen/io.hpp"
#include "bowen/parameter.hpp"
#include "bowen/periodic.hpp"
#include "bowen/transfer.hpp"
#include "oracles.hpp"

using namespace bowen;

namespace {

const MapParams standard(2, {2.0, 0.0});

struct Verdict {
    bool pass = true;
    std::ostringstream note;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            note << " [failed: " << what << "]";
        }
    }
};

int failures = 0;

void criterion(const char* name, double budget_s, const std::function<void(Verdict&)>& body) {
    Verdict v;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(v);
    } catch (const std::exception& e) {
        v.pass = false;
        v.note << " [exception: " << e.what() << "]";
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    v.require(s < budget_s, "runtime over " + format_number(budget_s) + " s");
    if (!v.pass) ++failures;
    std::printf("%s  %-28s %7.1f s %s\n", v.pass ? "PASS" : "FAIL", name, s, v.note.str().c_str());
    std::fflush(stdout);
}

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

int spawn(const std::string& args) {
    const std::string cmd = std::string(BOWEN_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

int main() {
    criterion("fixed-point-multiplier", 1, [](Verdict& v) {
        std::mt19937_64 rng(1);
        std::uniform_real_distribution<double> r01(0.0, 1.0);
        double worst_point = 0.0, worst_mult = 0.0;
        for (int i = 0; i < 100; ++i) {
            const int ell = 2 + i % 2;
            const cplx c = double(ell) + 0.95 * std::sqrt(r01(rng)) * std::polar(1.0, two_pi * r01(rng));
            const MapParams p(ell, c);
            const CylinderPoint z(p.log_c());
            worst_point = std::max(worst_point, cylinder_distance(evaluate(p, z), z));
            worst_mult = std::max(worst_mult, std::abs(derivative(p, z) - (double(ell) - c)));
        }
        v.note << "max |F(log c) - log c| " << fmt(worst_point) << ", max |F' - (l - c)| " << fmt(worst_mult);
        v.require(worst_point < 1e-12 && worst_mult < 1e-12, "tolerance 1e-12");
    });

    criterion("preimage-completeness", 60, [](Verdict& v) {
        const CylinderPoint w(std::log(2.0), 0.0);
        const double lo = -4.0, hi = std::log(100 * pi) + 1.0;
        const auto expected = oracle::preimage_grid(standard, w, 50, lo, hi, 0.1);
        std::vector<cplx> found;
        for (const auto& b : preimages(standard, w, 50).branches)
            if (b.x.re() >= lo && b.x.re() <= hi) found.push_back(b.x.value());
        double worst = 0.0;
        for (const cplx& r : expected) {
            double best = 1e300;
            for (const cplx& f : found) best = std::min(best, cylinder_distance(r, f));
            worst = std::max(worst, best);
        }
        v.note << "solver " << found.size() << ", oracle " << expected.size() << ", max distance " << fmt(worst);
        v.require(found.size() == expected.size(), "count");
        v.require(worst < 1e-9, "distance 1e-9");
    });

    criterion("tail-bound-soundness", 60, [](Verdict& v) {
        PreimageOptions po;
        po.strip_grid = false;
        const auto set = preimages(standard, CylinderPoint(std::log(2.0), 0.0), 1000, po);
        for (double t : {1.5, 2.0}) {
            double tail = 0.0;
            for (const auto& b : set.branches)
                if (std::abs(b.k) > 100) tail += std::pow(std::abs(b.deriv), -t);
            const double bound = tail_weight_bound(100, t).bound;
            v.note << "t=" << t << ": " << fmt(tail) << " <= " << fmt(bound) << "  ";
            v.require(tail <= bound, "t = " + fmt(t));
        }
    });

    criterion("transfer-decay", 10, [](Verdict& v) {
        TransferOptions q;
        q.tail = TailModel::Quadrature;
        const auto one = [](const CylinderPoint&) { return 1.0; };
        std::vector<WeightedValue> vals;
        for (double re : {2.0, 10.0, 20.0}) {
            vals.push_back(apply_transfer(standard, 1.5, one, 1.0, CylinderPoint(re, 0.5), 50, q));
            v.note << "L1(" << re << ") = " << fmt(vals.back().value) << "  ";
        }
        v.require(vals[1].hi() < vals[0].lo() && vals[2].hi() < vals[1].lo(), "strict decrease");
    });

    criterion("pressure-properties", 600, [](Verdict& v) {
        const double acc = 0.01;
        std::vector<PressureEstimate> e;
        for (double t : {1.3, 1.5, 1.7, 2.0}) {
            e.push_back(pressure(standard, t, acc));
            v.note << "P(" << t << ")=" << fmt(e.back().value) << "+-" << fmt(e.back().uncertainty) << " ";
        }
        for (std::size_t i = 1; i < e.size(); ++i) v.require(e[i].hi() < e[i - 1].lo(), "decrease at " + fmt(e[i].t));
        // Convexity on the equally spaced triples (1.3, 1.5, 1.7).
        const double second = e[0].value + e[2].value - 2.0 * e[1].value;
        v.require(second >= -(e[0].uncertainty + e[2].uncertainty + 2.0 * e[1].uncertainty), "convexity");
        // Chord inequality through 2.0: P(1.7) <= interpolation of P(1.5) and P(2.0).
        const double chord = e[1].value + (e[3].value - e[1].value) * 0.2 / 0.5;
        v.require(e[2].value <= chord + e[1].uncertainty + e[2].uncertainty + e[3].uncertainty, "chord");

        const auto others = fixed_points(standard, 2, 2).points;
        const auto other = std::find_if(others.begin(), others.end(), [](const PeriodicPoint& x) { return x.repelling(); });
        v.require(other != others.end(), "second repelling fixed point");
        if (other == others.end()) return;
        PressureOptions moved;
        moved.base = other->point;
        const auto b = pressure(standard, 1.5, acc, moved);
        v.note << "| other base " << fmt(b.value) << "+-" << fmt(b.uncertainty);
        v.require(std::abs(b.value - e[1].value) <= b.uncertainty + e[1].uncertainty, "base independence");
    });

    criterion("cross-oracle-pressure", 600, [](Verdict& v) {
        TransferOptions q;
        q.tail = TailModel::Quadrature;
        const auto r = pressure_ratio(standard, 1.5, default_base_point(standard).point, 4, 4, 1e-14, q);
        const auto z = zeta_pressure(standard, 1.5, 3, 4, q).estimate;
        const double gap = std::abs(r.value - z.value), allowed = r.uncertainty + z.uncertainty + 0.05;
        v.note << "ratio " << fmt(r.value) << "+-" << fmt(r.uncertainty) << ", zeta " << fmt(z.value) << "+-"
               << fmt(z.uncertainty) << ", gap " << fmt(gap) << " <= " << fmt(allowed);
        v.require(gap <= allowed, "agreement");
    });

    DimensionRecord at_two;
    criterion("bowen-zero", 1800, [&](Verdict& v) {
        at_two = bowen_dimension(standard, 5e-3);
        v.note << "t* = " << fmt(at_two.t_star) << " in [" << fmt(at_two.t_lo) << ", " << fmt(at_two.t_hi) << "]";
        v.require(at_two.t_hi - at_two.t_lo < 5e-3, "width");
        v.require(1.0 < at_two.t_star && at_two.t_star < 2.0, "range");
        v.require(at_two.diagnostics.at("p_lo") - at_two.diagnostics.at("p_lo_uncertainty") > 0.0 &&
                      at_two.diagnostics.at("p_hi") + at_two.diagnostics.at("p_hi_uncertainty") < 0.0,
                  "certified endpoint signs");
    });

    criterion("conjugation-symmetry", 3600, [](Verdict& v) {
        const auto a = bowen_dimension(MapParams(2, {2.0, 0.3}), 5e-3);
        const auto b = bowen_dimension(MapParams(2, {2.0, -0.3}), 5e-3);
        v.note << "t*(2+0.3i) = " << fmt(a.t_star) << "+-" << fmt(a.uncertainty) << ", t*(2-0.3i) = " << fmt(b.t_star)
               << "+-" << fmt(b.uncertainty);
        v.require(std::abs(a.t_star - b.t_star) <= a.uncertainty + b.uncertainty, "symmetry");
    });

    criterion("continuity-probe", 7200, [](Verdict& v) {
        GridSpec seg;
        seg.re = {2.0};
        seg.im = {0.0, 0.05, 0.1, 0.15, 0.2};
        const auto g = sweep_dimension(2, seg, 5e-3);
        v.require(g.failures.empty(), "bracket failure");
        for (std::size_t i = 0; i < g.records.size(); ++i) v.require(g.ok(i), "cell " + std::to_string(i));
        const auto jumps = adjacent_jumps(g);
        std::vector<double> sorted = jumps;
        std::sort(sorted.begin(), sorted.end());
        const double median = 0.5 * (sorted[1] + sorted[2]);
        // Bisection places t* on a dyadic grid, so jumps come in multiples of the final
        // bracket width; the median is floored at that resolution.
        double resolution = 0.0;
        for (const auto& r : g.records) resolution = std::max(resolution, r.t_hi - r.t_lo);
        const double scale = std::max(median, resolution);
        v.note << "t* =";
        for (const auto& r : g.records) v.note << " " << fmt(r.t_star);
        v.note << "; interpolated";
        for (const auto& r : g.records) v.note << " " << fmt(r.diagnostics.at("t_interpolated"));
        v.note << "; median jump " << fmt(median) << ", resolution " << fmt(resolution);
        for (double j : jumps) v.require(j <= 10.0 * scale, "jump " + fmt(j));
    });

    criterion("continuation-suite", 60, [](Verdict& v) {
        const auto track = continue_periodic(standard, default_base_point(standard), straight_path({2.0, 0.0}, {2.0, 0.3}, 20));
        v.require(!track.aborted && track.path.size() == 21, "track complete");
        double worst_res = 0.0, min_mult = 1e300;
        for (const auto& e : track.path) {
            worst_res = std::max(worst_res, e.residual);
            min_mult = std::min(min_mult, std::abs(e.multiplier));
        }
        // Implicit derivative against central differences at the middle of the track.
        const auto& mid = track.path[10];
        const double h = 1e-3;
        PeriodicPoint from;
        from.point = mid.z;
        from.multiplier = mid.multiplier;
        auto at = [&](cplx c) {
            return continue_periodic(MapParams(2, mid.c), from, straight_path(mid.c, c, 2)).path.back().z.value();
        };
        const cplx dre = cylinder_delta(at(mid.c + h), at(mid.c - h)) / (2 * h);
        const cplx dim = cylinder_delta(at(mid.c + cplx(0, h)), at(mid.c - cplx(0, h))) / (2 * h);
        const double rel = std::abs(dre - mid.dz_dc) / std::abs(mid.dz_dc);
        const double cr = std::abs(dim - cplx(0, 1) * dre) / std::abs(dre);
        v.note << "max residual " << fmt(worst_res) << ", min |mult| " << fmt(min_mult) << ", dz/dc rel err " << fmt(rel)
               << ", CR residual " << fmt(cr);
        v.require(worst_res < 1e-9, "residual");
        v.require(min_mult > 1.0, "repelling");
        v.require(rel < 1e-3, "derivative");
        v.require(cr < 1e-4, "Cauchy-Riemann");
    });

    criterion("expansion-certification", 300, [](Verdict& v) {
        const auto est = expansion_constants(standard, 0.1, 50, 10);
        v.note << "L = " << fmt(est.L) << ", kappa = " << fmt(est.kappa) << " over " << est.parameters.size()
               << " parameters";
        v.require(est.parameters.size() == 6, "center plus 5 perturbed parameters");
        v.require(est.kappa > 1.0 && est.certifies_expansion(), "kappa > 1");
        // Fresh words at each perturbed parameter under the shared (L, kappa).
        ExpansionOptions fresh;
        fresh.perturbed = 0;
        for (std::size_t j = 1; j < est.parameters.size(); ++j) {
            fresh.seed = 7000 + j;
            const auto there = expansion_constants(MapParams(2, est.parameters[j]), 0.0, 50, 10, fresh);
            v.require(expansion_holds(est, there.observations), "shared constants at " + format_complex(est.parameters[j]));
        }
    });

    criterion("conformal-defect", 600, [](Verdict& v) {
        const auto base = default_base_point(standard).point;
        const double P = pressure_ratio(standard, 1.5, base, 5, 4, 1e-14).value;
        const auto box = TestBox::around(base, 0.035);
        auto defect = [&](int depth) {
            return conformal_defect(standard, conformal_atoms(standard, 1.5, P, base, depth, 4, 1e-14), P, box, 4);
        };
        const double d3 = defect(3), d6 = defect(6);
        v.note << "defect depth 3 " << fmt(d3) << ", depth 6 " << fmt(d6);
        v.require(d6 < d3, "decrease");
    });

    criterion("cli-golden-files", 120, [](Verdict& v) {
        namespace fs = std::filesystem;
        const fs::path d = fs::temp_directory_path() / "bowen_acceptance";
        fs::create_directories(d);
        const std::vector<std::pair<std::string, std::string>> runs{
            {"pre", "preimages --ell 2 --c 2+0i --w 0.6931+0i --K 50 --threads 1 -o "},
            {"dim", "dim --ell 2 --c 2+0i --accuracy 0.02 --threads 1 -o "},
            {"cls", "classify --ell 2 --c 2+0i --res 64x64 --threads 1 -o "},
        };
        for (const auto& [tag, args] : runs) {
            const std::string a = (d / (tag + "_a")).string(), b = (d / (tag + "_b")).string();
            v.require(spawn(args + a) == 0 && spawn(args + b) == 0, tag + " exit status");
            const bool same = read_file(a) == read_file(b);
            v.note << tag << (same ? " identical  " : " differs  ");
            v.require(same, tag + " bytes");
        }
    });

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
