#pragma once

// Enumeration of F_c^{-1}(w). On the strip -pi < Im x <= pi a preimage of [w]
// solves l x - e^x = B_k with B_k = w + 2 pi i k - c + (l - 1) log c for exactly
// one lift index k. Each root is of one of two kinds:
//   * log regime,    |e^x| > l : attracting fixed point of x -> Log(l x - B_k)
//   * linear regime, |e^x| < l : attracting fixed point of x -> (e^x + B_k) / l
// The linear map has a single asymptotic value B_k / l and no critical points, so
// it has at most one attracting fixed point and the orbit of B_k / l finds it.
// A coarse Newton grid over the strip backs both regimes up for small |k|.

#include <algorithm>
#include <cmath>
#include <complex>
#include <optional>
#include <span>
#include <vector>

#include "bowen/cylinder.hpp"
#include "bowen/errors.hpp"
#include "bowen/map.hpp"

namespace bowen {

enum class Regime { Log, Linear };

/// One inverse branch: lift index plus regime.
struct BranchSymbol {
    int lift = 0;
    Regime regime = Regime::Log;

    friend bool operator==(const BranchSymbol&, const BranchSymbol&) = default;
};

using BranchWord = std::vector<BranchSymbol>;

inline BranchWord log_word(std::initializer_list<int> lifts) {
    BranchWord w;
    for (int k : lifts) w.push_back({k, Regime::Log});
    return w;
}

struct PreimageOptions {
    double tol = 1e-11;
    /// Right edge M0 of the strip-regime seed box {-2l <= Re <= M0}.
    double strip_right = 8.0;
    double grid_spacing = 0.5;
    bool strip_grid = true;
    /// Constant in |F'(x_k)| >= 2 pi |k| / C_geo for |k| >= K_min.
    double c_geo = 2.0;
};

struct Preimage {
    int k = 0;
    Regime regime = Regime::Log;
    CylinderPoint x;
    cplx deriv;
    double residual = 0.0;
};

struct PreimageSet {
    CylinderPoint target;
    std::vector<Preimage> branches;
    int K = 0;
    double tol = 0.0;
    /// Lift indices for which no root was found by any seed strategy.
    std::vector<int> branch_misses;
    /// max over |k| >= K_min of 2 pi |k| / |F'(x_k)|; 0 if there are no such k.
    double c_geo_observed = 0.0;
    bool derivative_bound_ok = true;
};

/// Below this |k| the asymptotic bound |F'(x_k)| >= 2 pi |k| / C_geo is not certified.
inline int k_min(const MapParams& p, double strip_right = 8.0) {
    const double v = (std::abs(p.c()) + p.ell_d() * (strip_right + pi) + two_pi) / two_pi;
    return std::max(10, static_cast<int>(std::ceil(v)));
}

/// B_k for target w: the right-hand side of l x - e^x = B_k.
inline cplx lift_constant(const MapParams& p, const CylinderPoint& w, int k) noexcept {
    return w.value() + cplx(0.0, two_pi * k) - p.shift();
}

/// Lift index of a preimage x of w, rounded to the nearest integer.
inline int lift_index(const MapParams& p, const CylinderPoint& w, cplx x) noexcept {
    const cplx b = p.ell_d() * x - std::exp(x) - w.value() + p.shift();
    return static_cast<int>(std::lround(b.imag() / two_pi));
}

inline Regime regime_of(const MapParams& p, cplx x) noexcept {
    return std::exp(x.real()) < p.ell_d() ? Regime::Linear : Regime::Log;
}

namespace detail {

inline constexpr int newton_max_iter = 60;

// The solvers below handle a x - e^x = B for any real a >= 1: a = l for preimages,
// a = l - 1 for fixed points.

/// Newton on g(x) = a x - e^x - B. Near the critical point log a a double root
/// stalls Newton around sqrt(eps); the critical point itself is tried instead.
inline std::optional<cplx> polish_root(double a, cplx x, cplx b, double tol) {
    const double l = a;
    for (int it = 0; it < newton_max_iter; ++it) {
        if (!(x.real() < overflow_real_part) || !std::isfinite(x.imag())) return std::nullopt;
        const cplx e = std::exp(x);
        const cplx g = l * x - e - b;
        const cplx d = l - e;
        if (std::abs(d) == 0.0) break;
        const cplx step = g / d;
        x -= step;
        if (std::abs(step) <= 1e-15 * (1.0 + std::abs(x))) break;
    }
    if (!std::isfinite(x.real()) || !std::isfinite(x.imag()) || x.real() > overflow_real_part)
        return std::nullopt;
    if (std::abs(l - std::exp(x)) < 1e-4) {
        const double turns = std::round(x.imag() / two_pi);
        const cplx crit(std::log(l), two_pi * turns);
        if (std::abs(l * crit - std::exp(crit) - b) < tol && std::abs(crit - x) < 1e-3) return crit;
    }
    return x;
}

/// Log regime: contracting steps of x -> log(l x - B) from `seed`, then Newton. The
/// logarithm follows the branch nearest to the current iterate so that roots hugging
/// the strip edge Im = +-pi are not split by the principal cut.
inline std::optional<cplx> log_regime_root(double a, cplx b, double tol, cplx seed) {
    cplx x = seed;
    for (int it = 0; it < 8; ++it) {
        const cplx arg = a * x - b;
        if (arg == cplx{}) return std::nullopt;
        const cplx principal = std::log(arg);
        const double turns = std::round((x.imag() - principal.imag()) / two_pi);
        x = principal + cplx(0.0, two_pi * turns);
    }
    return polish_root(a, x, b, tol);
}

/// Principal log-regime root, seeded at Log(-B).
inline std::optional<cplx> log_regime_root(double a, cplx b, double tol) {
    if (b == cplx{}) return std::nullopt;
    return log_regime_root(a, b, tol, std::log(-b));
}

/// When Log(-B) sits in the outer half of the strip a second log-regime root can hide
/// across the edge; seed one turn over, toward the opposite edge.
inline std::optional<cplx> edge_log_regime_root(double a, cplx b, double tol) {
    if (b == cplx{}) return std::nullopt;
    const cplx seed = std::log(-b);
    if (std::abs(seed.imag()) < 0.5 * pi) return std::nullopt;
    return log_regime_root(a, b, tol, seed - cplx(0.0, std::copysign(two_pi, seed.imag())));
}

/// Linear regime: iterate x -> (e^x + B) / a from its asymptotic value B / a.
inline std::optional<cplx> linear_regime_root(double a, cplx b, double tol) {
    const double l = a;
    // A strip root with |e^x| < a has |Im B| = |a Im x - Im e^x| < a (pi + 1).
    if (std::abs(b.imag()) > l * (pi + 1.0)) return std::nullopt;
    cplx x = b / l;
    for (int it = 0; it < 200; ++it) {
        if (x.real() > std::log(l) + 2.0) return std::nullopt;  // left the contracting half-plane
        const cplx next = (std::exp(x) + b) / l;
        const double moved = std::abs(next - x);
        x = next;
        if (moved < 1e-3) break;
    }
    if (x.real() > std::log(l) + 2.0) return std::nullopt;
    return polish_root(a, x, b, tol);
}

/// Roots with |e^x| close to l are attracting for neither regime. They satisfy
/// |Re x - log l| <= band_half_width, which bounds |B| by the returned radius.
inline constexpr double band_half_width = 0.6;

inline double critical_band_radius(double a) noexcept {
    const double l = a;
    const double re = std::log(l) + band_half_width;
    return l * std::hypot(re, pi) + l * std::exp(band_half_width);
}

inline const std::vector<cplx>& critical_band_offsets() {
    static const std::vector<cplx> offsets = [] {
        std::vector<cplx> v;
        for (double dr : {-band_half_width, 0.0, band_half_width})
            for (int j = 0; j < 12; ++j) v.emplace_back(dr, -pi + (j + 0.5) * two_pi / 12.0);
        return v;
    }();
    return offsets;
}

/// Every band point lies within band_seed_reach of some offset seed. A seed that far
/// from a root x has |g(seed)| <= reach * max |l - e^z| near x, so larger values mean
/// no band root is close and Newton can be skipped.
inline constexpr double band_seed_reach = 0.4;

inline bool band_seed_useful(double a, cplx seed, cplx b) {
    const double l = a;
    const double slope = l + l * std::exp(band_half_width + band_seed_reach);
    const double g = std::abs(l * seed - std::exp(seed) - b);
    return g <= 1.1 * band_seed_reach * slope;
}

inline void insert_unique(std::vector<Preimage>& out, Preimage cand, double dedup) {
    for (auto& e : out) {
        if (cylinder_distance(e.x, cand.x) < dedup) {
            if (cand.residual < e.residual) e = cand;
            return;
        }
    }
    out.push_back(cand);
}

}  // namespace detail

/// Residual scale at x: |F(x) - w| can't be resolved below eps * |e^x| once e^x is large.
inline double residual_scale(cplx x) noexcept { return 1.0 + std::exp(x.real()); }

/// Validates a candidate root for target w and returns it with its true lift index.
/// The test is relative: |F(x) - w| < tol * (1 + |e^x|).
inline std::optional<Preimage> validate_preimage(const MapParams& p, const CylinderPoint& w,
                                                 cplx x, double tol) {
    const CylinderPoint xc(x);
    const double residual = cylinder_distance(evaluate(p, xc), w);
    if (!(residual < tol * residual_scale(xc.value()))) return std::nullopt;
    const cplx xv = xc.value();
    return Preimage{lift_index(p, w, xv), regime_of(p, xv), xc, derivative(p, xc), residual};
}

/// All validated preimages of w with lift index |k| <= K, sorted by |k| then Re x.
inline PreimageSet preimages(const MapParams& p, const CylinderPoint& w, int K,
                             const PreimageOptions& opt = {}) {
    if (K < 1) throw InvalidArgument("preimages needs K >= 1");
    if (!(opt.tol > 0.0)) throw InvalidArgument("InvalidTol: tol must be > 0");

    PreimageSet set;
    set.target = w;
    set.K = K;
    set.tol = opt.tol;
    const double dedup = 10.0 * opt.tol;
    const int kmin = k_min(p, opt.strip_right);
    const double l = p.ell_d();
    const double band_radius = detail::critical_band_radius(l);

    auto accept = [&](std::optional<cplx> root) {
        if (!root) return;
        auto v = validate_preimage(p, w, *root, opt.tol);
        if (v && std::abs(v->k) <= K) detail::insert_unique(set.branches, *v, dedup);
    };

    std::vector<cplx> grid;
    if (opt.strip_grid) {
        const double left = -2.0 * p.ell_d();
        const double h = opt.grid_spacing;
        for (double re = left; re <= opt.strip_right + 1e-12; re += h)
            for (double im = -pi + 0.5 * h; im < pi; im += h) grid.emplace_back(re, im);
    }

    for (int k = -K; k <= K; ++k) {
        const cplx b = lift_constant(p, w, k);
        accept(detail::log_regime_root(l, b, opt.tol));
        accept(detail::edge_log_regime_root(l, b, opt.tol));
        accept(detail::linear_regime_root(l, b, opt.tol));
        if (std::abs(b) <= band_radius)
            for (const cplx& off : detail::critical_band_offsets()) {
                const cplx seed = std::log(l) + off;
                if (detail::band_seed_useful(l, seed, b))
                    accept(detail::polish_root(l, seed, b, opt.tol));
            }
        if (opt.strip_grid && std::abs(k) < kmin)
            for (const cplx& seed : grid) accept(detail::polish_root(l, seed, b, opt.tol));
    }

    std::vector<bool> seen(2 * static_cast<std::size_t>(K) + 1, false);
    for (const auto& e : set.branches) seen[static_cast<std::size_t>(e.k + K)] = true;
    for (int k = -K; k <= K; ++k)
        if (!seen[static_cast<std::size_t>(k + K)]) set.branch_misses.push_back(k);

    for (const auto& e : set.branches) {
        if (std::abs(e.k) < kmin) continue;
        const double ratio = two_pi * std::abs(e.k) / std::abs(e.deriv);
        set.c_geo_observed = std::max(set.c_geo_observed, ratio);
    }
    set.derivative_bound_ok = set.c_geo_observed <= opt.c_geo;

    std::sort(set.branches.begin(), set.branches.end(), [](const Preimage& a, const Preimage& b) {
        if (std::abs(a.k) != std::abs(b.k)) return std::abs(a.k) < std::abs(b.k);
        if (a.x.re() != b.x.re()) return a.x.re() < b.x.re();
        if (a.k != b.k) return a.k < b.k;
        return a.x.im() < b.x.im();
    });
    return set;
}

// ---------------------------------------------------------------------------
// Tail of the transfer-operator sum

struct TailBound {
    int K = 0;
    double t = 0.0;
    double bound = 0.0;
};

inline constexpr double default_c_geo = 2.0;

/// Upper bound for sum_{|k| > K} |F'(x_k)|^{-t}: 2 C_geo (2 pi)^{-t} K^{1-t} / (t - 1).
inline TailBound tail_weight_bound(int K, double t, double c_geo = default_c_geo) {
    if (!(t > 1.0)) throw TNotSummable(t);
    if (K < 1) throw InvalidArgument("tail_weight_bound needs K >= 1");
    const double bound =
        2.0 * c_geo * std::pow(two_pi, -t) * std::pow(static_cast<double>(K), 1.0 - t) / (t - 1.0);
    return {K, t, bound};
}

// ---------------------------------------------------------------------------
// Inverse branches along symbolic words

/// The preimage of w on one branch, or nullopt if that branch has no root at w.
inline std::optional<Preimage> inverse_branch_step(const MapParams& p, const CylinderPoint& w,
                                                   BranchSymbol s, double tol) {
    const cplx b = lift_constant(p, w, s.lift);
    const auto root = s.regime == Regime::Log ? detail::log_regime_root(p.ell_d(), b, tol)
                                              : detail::linear_regime_root(p.ell_d(), b, tol);
    if (!root) return std::nullopt;
    auto v = validate_preimage(p, w, *root, tol);
    if (!v || v->k != s.lift || v->regime != s.regime) return std::nullopt;
    return v;
}

/// Applies the branches of `word` in order: x_1 = branch_{s_1}(w), x_2 = branch_{s_2}(x_1), ...
/// so that F^n(result) = w.
inline CylinderPoint inverse_branch(const MapParams& p, const CylinderPoint& w,
                                    std::span<const BranchSymbol> word, double tol = 1e-11) {
    if (word.empty()) throw InvalidArgument("inverse_branch needs a nonempty word");
    CylinderPoint x = w;
    int depth = 0;
    for (const BranchSymbol& s : word) {
        ++depth;
        auto step = inverse_branch_step(p, x, s, tol);
        if (!step) throw BranchMiss(s.lift, depth);
        x = step->x;
    }
    return x;
}

}  // namespace bowen
