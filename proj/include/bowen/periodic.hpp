#pragma once

// Periodic points of F_c on the cylinder.
//
// A fixed point z of lift index k solves (l - 1) z - e^z = 2 pi i k - c + (l - 1) log c,
// which is the preimage equation with coefficient l - 1 in place of l, so the same
// seed strategies apply. Longer periods come from Newton on F^n(z) - z or from
// iterating an inverse-branch word to its fixed point.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "bowen/cylinder.hpp"
#include "bowen/errors.hpp"
#include "bowen/map.hpp"
#include "bowen/preimages.hpp"

namespace bowen {

struct PeriodicPoint {
    CylinderPoint point;
    int period = 1;
    cplx multiplier;
    /// Inverse-branch itinerary; empty when the point came from direct Newton.
    BranchWord branch_word;
    double residual = 0.0;

    bool repelling() const noexcept { return std::abs(multiplier) > 1.0; }
};

struct FixedPointSet {
    std::vector<PeriodicPoint> points;
    /// Lift indices for which no seed converged.
    std::vector<int> non_convergence;
};

/// d(F^n(z), z).
inline double periodic_residual(const MapParams& p, const CylinderPoint& z, int n) {
    return cylinder_distance(iterate(p, z, n), z);
}

/// (F^n)'(z) as a complex number; fine for the short periods used here.
inline cplx multiplier_of(const MapParams& p, CylinderPoint z, int n) {
    cplx m = 1.0;
    for (int i = 0; i < n; ++i) {
        m *= derivative(p, z);
        z = evaluate(p, z);
    }
    return m;
}

/// Lift index of a fixed point: Im((l - 1) z - e^z + shift) / (2 pi).
inline int fixed_point_lift(const MapParams& p, cplx z) noexcept {
    const cplx d = (p.ell_d() - 1.0) * z - std::exp(z) + p.shift();
    return static_cast<int>(std::lround(d.imag() / two_pi));
}

/// All fixed points with lift index in [k_lo, k_hi], deduplicated on the cylinder.
inline FixedPointSet fixed_points(const MapParams& p, int k_lo, int k_hi, double tol = 1e-11) {
    if (k_lo > k_hi) throw InvalidArgument("fixed_points needs k_lo <= k_hi");
    if (!(tol > 0.0)) throw InvalidArgument("InvalidTol: tol must be > 0");

    const double a = p.ell_d() - 1.0;
    const double dedup = 10.0 * tol;
    const int kmin = k_min(p);
    FixedPointSet out;

    auto accept = [&](std::optional<cplx> root) {
        if (!root) return;
        const CylinderPoint z(*root);
        const double residual = cylinder_distance(evaluate(p, z), z);
        if (!(residual < tol * residual_scale(z.value()))) return;
        const int k = fixed_point_lift(p, z.value());
        if (k < k_lo || k > k_hi) return;
        PeriodicPoint pp{z, 1, derivative(p, z), {{k, regime_of(p, z.value())}}, residual};
        for (auto& e : out.points) {
            if (cylinder_distance(e.point, z) < dedup) {
                if (pp.residual < e.residual) e = pp;
                return;
            }
        }
        out.points.push_back(pp);
    };

    std::vector<cplx> grid;
    for (double re = -2.0 * p.ell_d(); re <= 8.0 + 1e-12; re += 0.25)
        for (double im = -pi + 0.125; im < pi; im += 0.25) grid.emplace_back(re, im);

    const double band_radius = detail::critical_band_radius(a);
    for (int k = k_lo; k <= k_hi; ++k) {
        const cplx d = cplx(0.0, two_pi * k) - p.shift();
        accept(detail::log_regime_root(a, d, tol));
        accept(detail::edge_log_regime_root(a, d, tol));
        accept(detail::linear_regime_root(a, d, tol));
        if (std::abs(d) <= band_radius)
            for (const cplx& off : detail::critical_band_offsets())
                accept(detail::polish_root(a, std::log(a) + off, d, tol));
        if (std::abs(k) < kmin)
            for (const cplx& seed : grid) accept(detail::polish_root(a, seed, d, tol));
    }

    std::vector<bool> seen(static_cast<std::size_t>(k_hi - k_lo) + 1, false);
    for (const auto& e : out.points) seen[static_cast<std::size_t>(e.branch_word[0].lift - k_lo)] = true;
    for (int k = k_lo; k <= k_hi; ++k)
        if (!seen[static_cast<std::size_t>(k - k_lo)]) out.non_convergence.push_back(k);

    std::sort(out.points.begin(), out.points.end(), [](const PeriodicPoint& x, const PeriodicPoint& y) {
        const int kx = x.branch_word[0].lift, ky = y.branch_word[0].lift;
        if (std::abs(kx) != std::abs(ky)) return std::abs(kx) < std::abs(ky);
        if (x.point.re() != y.point.re()) return x.point.re() < y.point.re();
        if (kx != ky) return kx < ky;
        return x.point.im() < y.point.im();
    });
    return out;
}

/// Newton on F^n(z) - z over the plane lift, the 2 pi i ambiguity resolved at each step.
inline std::optional<PeriodicPoint> newton_periodic(const MapParams& p, cplx z0, int n,
                                                    double tol = 1e-11, int max_iter = 60) {
    if (n < 1) throw InvalidArgument("newton_periodic needs n >= 1");
    cplx z = z0;
    for (int it = 0; it < max_iter; ++it) {
        cplx w = z, d = 1.0;
        for (int i = 0; i < n; ++i) {
            d *= p.ell_d() - std::exp(w);
            w = evaluate_lift(p, w);
            if (!(w.real() < overflow_real_part)) return std::nullopt;
        }
        const double m = std::round((w - z).imag() / two_pi);
        const cplx g = w - z - cplx(0.0, two_pi * m);
        if (d == 1.0) return std::nullopt;
        const cplx step = g / (d - 1.0);
        z -= step;
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return std::nullopt;
        if (std::abs(step) <= 1e-15 * (1.0 + std::abs(z))) break;
    }
    const CylinderPoint zc(z);
    const double residual = periodic_residual(p, zc, n);
    double scale = 1.0;
    CylinderPoint w = zc;
    for (int i = 0; i < n; ++i) {
        scale = std::max(scale, residual_scale(w.value()));
        w = evaluate(p, w);
    }
    if (!(residual < tol * scale)) return std::nullopt;
    return PeriodicPoint{zc, n, multiplier_of(p, zc, n), {}, residual};
}

/// Fixed point of the inverse-branch word, found by iterating the word from `seed`.
/// The word is read as in inverse_branch, so F^n of the result is the result itself.
inline std::optional<PeriodicPoint> word_fixed_point(const MapParams& p, const BranchWord& word,
                                                     const CylinderPoint& seed,
                                                     double tol = 1e-11, int max_iter = 80) {
    if (word.empty()) throw InvalidArgument("word_fixed_point needs a nonempty word");
    CylinderPoint x = seed;
    bool settled = false;
    for (int it = 0; it < max_iter; ++it) {
        CylinderPoint y = x;
        for (const BranchSymbol& s : word) {
            auto step = inverse_branch_step(p, y, s, tol);
            if (!step) return std::nullopt;
            y = step->x;
        }
        const double moved = cylinder_distance(x, y);
        x = y;
        if (moved <= 1e-14 * (1.0 + std::abs(x.value()))) {
            settled = true;
            break;
        }
    }
    if (!settled) return std::nullopt;
    const int n = static_cast<int>(word.size());
    const double residual = periodic_residual(p, x, n);
    if (!(residual < tol * n * residual_scale(x.value()))) return std::nullopt;
    return PeriodicPoint{x, n, multiplier_of(p, x, n), word, residual};
}

/// The repelling fixed point used as default base for transfer-operator trees:
/// lift k = 1 if it has a repelling fixed point, otherwise k = -1.
inline PeriodicPoint default_base_point(const MapParams& p, double tol = 1e-11) {
    for (int k : {1, -1}) {
        const auto set = fixed_points(p, k, k, tol);
        for (const auto& fp : set.points)
            if (fp.repelling()) return fp;
    }
    throw NumericalFailure("no repelling fixed point on lifts 1 or -1");
}

}  // namespace bowen
