#pragma once

// Transfer operator L_t g(z) = sum over x in F^{-1}(z) of |F'(x)|^{-t} g(x), its
// iterates on the constant 1 through preimage trees, pressure estimates, eigenfunction
// iterates and atomic approximations of the conformal measure.
//
// Branches with |k| <= K are enumerated. For the rest there are two models:
//   * Bound: leave them out and charge tail_weight_bound(K, t) times a sup estimate.
//   * Quadrature: the principal log-regime root x(s) of l x - e^x = w + 2 pi i s - shift
//     is smooth in a real lift s, so sum_{k > K} g(k) is replaced by the integral from
//     s0 = K + 1/2 plus the midpoint end term g'(s0) / 24. The integral runs over
//     s = s0 + sigma (e^v - 1) with Gauss-Laguerre nodes in (t - 1) v, where the
//     integrand decays like e^{-(t-1) v}. Sample points become tree nodes, so deeper
//     levels see the tail as well. Its error is an estimate, not a bound.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bowen/cylinder.hpp"
#include "bowen/errors.hpp"
#include "bowen/map.hpp"
#include "bowen/parallel.hpp"
#include "bowen/periodic.hpp"
#include "bowen/preimages.hpp"

namespace bowen {

struct WeightedValue {
    double value = 0.0;
    double error = 0.0;
    bool budget_exceeded = false;

    double lo() const noexcept { return value - error; }
    double hi() const noexcept { return value + error; }
};

enum class TailModel { Bound, Quadrature };

inline const char* to_string(TailModel m) noexcept {
    return m == TailModel::Bound ? "bound" : "quadrature";
}

struct TransferOptions {
    TailModel tail = TailModel::Bound;
    int quadrature_nodes = 8;
    std::size_t node_budget = 5'000'000;
    int threads = 1;
    double tol = 1e-11;
    double c_geo = default_c_geo;
};

inline void check_summable(double t) {
    if (!(t > 1.0)) throw TNotSummable(t);
}

// ---------------------------------------------------------------------------
// Tail quadrature

struct LaguerreRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// n-point Gauss-Laguerre rule for the weight e^{-y} on [0, inf).
inline LaguerreRule gauss_laguerre(int n) {
    if (n < 2 || n > 40) throw InvalidArgument("gauss_laguerre supports 2..40 nodes");
    LaguerreRule r;
    const auto un = static_cast<unsigned>(n);
    for (int i = 0; i < n; ++i) {
        double z;
        if (i == 0) {
            z = 3.0 / (1.0 + 2.4 * n);
        } else if (i == 1) {
            z = r.nodes[0] + 15.0 / (1.0 + 2.5 * n);
        } else {
            const double ai = i - 1;
            z = r.nodes[i - 1] + (1.0 + 2.55 * ai) / (1.9 * ai) * (r.nodes[i - 1] - r.nodes[i - 2]);
        }
        for (int it = 0; it < 100; ++it) {
            const double ln = std::laguerre(un, z);
            const double dln = n * (ln - std::laguerre(un - 1, z)) / z;
            const double dz = ln / dln;
            z -= dz;
            if (std::abs(dz) <= 1e-15 * z) break;
        }
        const double next = std::laguerre(un + 1, z);
        r.nodes.push_back(z);
        r.weights.push_back(z / ((n + 1.0) * (n + 1.0) * next * next));
    }
    return r;
}

/// Sample points and weights standing in for the branches |k| > K at one target.
struct TailQuadrature {
    std::vector<std::pair<CylinderPoint, double>> samples;
    /// Sum of sample weights: the estimate of sum_{|k| > K} |F'(x_k)|^{-t}.
    double mass = 0.0;
    /// Estimated absolute error of `mass`.
    double error = 0.0;
    /// Weight of nodes that could not be sampled (beyond the overflow cap).
    double dropped = 0.0;
};

/// Sample points with Re x beyond this are not materialized.
inline constexpr double tail_real_cap = 600.0;

/// Empirical envelope of the Laguerre error for targets far to the right, as a
/// fraction of the tail mass, in terms of rho = |w - shift| / (2 pi s0).
inline double far_target_error(double rho) noexcept {
    const double r = std::min(1.0, rho);
    return 0.05 * r * r;
}

namespace detail {

/// Principal log-regime root for the real lift s.
inline std::optional<cplx> real_lift_root(const MapParams& p, const CylinderPoint& w, double s,
                                          double tol) {
    return log_regime_root(p.ell_d(), w.value() + cplx(0.0, two_pi * s) - p.shift(), tol);
}

}  // namespace detail

/// Tail samples at target w. `calibration` is a relative error added for the rule itself
/// (see quadrature_calibration).
inline void tail_quadrature(const MapParams& p, const CylinderPoint& w, int K, double t,
                            const LaguerreRule& rule, double tol, double calibration,
                            TailQuadrature& out) {
    out.samples.clear();
    out.mass = out.error = out.dropped = 0.0;
    const double a = t - 1.0;
    const double l = p.ell_d();
    const double s0 = K + 0.5;
    const double rho = std::abs(w.value() - p.shift()) / (two_pi * s0);
    const double sigma = s0 * std::max(1.0, rho);
    double end_terms = 0.0;

    for (int side : {1, -1}) {
        const std::size_t first = out.samples.size();
        double end_term = 0.0;
        if (auto x0 = detail::real_lift_root(p, w, side * s0, tol)) {
            const cplx e = std::exp(*x0);
            const cplx d = l - e;
            const double dlog = -t * std::real(-e * cplx(0.0, two_pi * side) / (d * d));
            end_term = std::pow(std::abs(d), -t) * dlog / 24.0;
        }
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            const double v = rule.nodes[i] / a;
            const double s = s0 + sigma * std::expm1(v);
            const double log_front = std::log(rule.weights[i] / a) + rule.nodes[i] + std::log(sigma) + v;
            std::optional<cplx> x;
            if (std::log(two_pi * s) < tail_real_cap) x = detail::real_lift_root(p, w, side * s, tol);
            if (!x) {
                out.dropped += std::exp(log_front - t * std::log(two_pi * s));
                continue;
            }
            const double log_deriv = std::log(std::abs(l - std::exp(*x)));
            out.samples.emplace_back(CylinderPoint(*x), std::exp(log_front - t * log_deriv));
        }
        // The end term needs g at s0; the nearest sample stands in for the far part of g.
        if (out.samples.size() > first) {
            out.samples[first].second = std::max(0.0, out.samples[first].second + end_term);
        }
        end_terms += std::abs(end_term);
    }
    for (const auto& s : out.samples) out.mass += s.second;
    out.error = 0.5 * end_terms + (far_target_error(rho) + calibration) * out.mass;
}

/// Relative change of the tail mass at w when the rule grows by eight nodes.
inline double quadrature_calibration(const MapParams& p, const CylinderPoint& w, int K, double t,
                                     int nodes, double tol) {
    TailQuadrature lo, hi;
    tail_quadrature(p, w, K, t, gauss_laguerre(nodes), tol, 0.0, lo);
    tail_quadrature(p, w, K, t, gauss_laguerre(nodes + 8), tol, 0.0, hi);
    if (!(hi.mass > 0.0)) return 0.0;
    return std::abs(lo.mass - hi.mass) / hi.mass;
}

inline PreimageOptions tree_preimage_options(const TransferOptions& opt) {
    PreimageOptions po;
    po.tol = opt.tol;
    po.c_geo = opt.c_geo;
    po.strip_grid = false;
    return po;
}

// ---------------------------------------------------------------------------
// One application

/// L_t g(z) over |k| <= K plus the tail model. g_sup bounds |g|.
inline WeightedValue apply_transfer(const MapParams& p, double t,
                                    const std::function<double(const CylinderPoint&)>& g,
                                    double g_sup, const CylinderPoint& z, int K,
                                    const TransferOptions& opt = {}) {
    check_summable(t);
    const auto set = preimages(p, z, K, tree_preimage_options(opt));
    WeightedValue out;
    for (const auto& b : set.branches) out.value += std::pow(std::abs(b.deriv), -t) * g(b.x);
    if (opt.tail == TailModel::Bound) {
        out.error = tail_weight_bound(K, t, opt.c_geo).bound * std::abs(g_sup);
        return out;
    }
    const double calib = quadrature_calibration(p, z, K, t, opt.quadrature_nodes, opt.tol);
    TailQuadrature tq;
    tail_quadrature(p, z, K, t, gauss_laguerre(opt.quadrature_nodes), opt.tol, calib, tq);
    double weighted = 0.0;
    for (const auto& [x, wt] : tq.samples) {
        const double gx = g(x);
        out.value += wt * gx;
        weighted += wt * std::abs(gx);
    }
    const double rel = tq.mass > 0.0 ? tq.error / tq.mass : 0.0;
    out.error = rel * weighted + tq.dropped * std::abs(g_sup);
    return out;
}

// ---------------------------------------------------------------------------
// Preimage trees

struct TreeResult {
    /// levels[j] = L_t^j 1(z) for j = 0..n.
    std::vector<WeightedValue> levels;
    /// Runtime estimate of sup L_t 1: the largest one-step sum over expanded nodes.
    double sup_estimate = 0.0;
    std::size_t expanded = 0;
    bool budget_exceeded = false;
    /// Relative calibration term of the tail rule (0 for the bound model).
    double quadrature_calibration = 0.0;
};

namespace detail {

struct TreeNode {
    CylinderPoint x;
    double w = 0.0;
    /// Accumulated relative error inherited from tail estimates along the path.
    double rel = 0.0;
};

struct ChunkOut {
    std::vector<TreeNode> children;
    double child_sum = 0.0;
    double child_err = 0.0;
    double pruned = 0.0;
    double dropped = 0.0;
    double sup = 0.0;
    std::size_t expanded = 0;
};

inline constexpr std::size_t tree_chunk = 256;

}  // namespace detail

/// Breadth-first expansion of the depth-n preimage tree of z.
///
/// At every level, nodes lighter than prune * (level total) are not expanded; their
/// subtrees are charged as w * G^(levels below) with G = sup_estimate. Omitted tails
/// are charged the same way (bound model) or carried as sample nodes (quadrature).
inline TreeResult expand_tree(const MapParams& p, double t, const CylinderPoint& z, int n, int K,
                              double prune, const TransferOptions& opt = {}) {
    check_summable(t);
    if (n < 0) throw InvalidArgument("tree depth must be >= 0");
    if (K < 1) throw InvalidArgument("tree needs K >= 1");
    if (!(prune >= 0.0)) throw InvalidArgument("prune must be >= 0");

    const bool quad = opt.tail == TailModel::Quadrature;
    const PreimageOptions po = tree_preimage_options(opt);
    const double tau = quad ? 0.0 : tail_weight_bound(K, t, opt.c_geo).bound;
    LaguerreRule rule;
    TreeResult res;
    if (quad) {
        rule = gauss_laguerre(opt.quadrature_nodes);
        res.quadrature_calibration = quadrature_calibration(p, z, K, t, opt.quadrature_nodes, opt.tol);
    }
    const double calib = res.quadrature_calibration;
    const int threads = resolve_threads(opt.threads);

    std::vector<double> sums(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> rel_err(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> pruned_at(static_cast<std::size_t>(n) + 1, 0.0);
    std::vector<double> dropped_at(static_cast<std::size_t>(n) + 1, 0.0);
    sums[0] = 1.0;
    int reached = n;

    std::vector<detail::TreeNode> level{{z, 1.0, 0.0}};
    for (int j = 0; j < n; ++j) {
        double total = 0.0;
        for (const auto& nd : level) total += nd.w;
        const double cut = j == 0 ? 0.0 : prune * total;
        std::size_t to_expand = 0;
        for (const auto& nd : level) to_expand += nd.w >= cut;
        if (res.expanded + to_expand > opt.node_budget) {
            res.budget_exceeded = true;
            reached = j;
            break;
        }
        const bool store = j + 1 < n;
        const std::size_t chunks = (level.size() + detail::tree_chunk - 1) / detail::tree_chunk;
        std::vector<detail::ChunkOut> outs(chunks);
        parallel_for(chunks, threads, [&](std::size_t c) {
            detail::ChunkOut& o = outs[c];
            TailQuadrature tq;
            const std::size_t end = std::min(level.size(), (c + 1) * detail::tree_chunk);
            for (std::size_t i = c * detail::tree_chunk; i < end; ++i) {
                const detail::TreeNode& nd = level[i];
                if (nd.w < cut) {
                    o.pruned += nd.w;
                    continue;
                }
                ++o.expanded;
                double local = 0.0;
                auto emit = [&](const CylinderPoint& x, double wt, double rel) {
                    const double cw = nd.w * wt;
                    local += wt;
                    o.child_sum += cw;
                    o.child_err += cw * rel;
                    if (store) o.children.push_back({x, cw, rel});
                };
                const auto set = preimages(p, nd.x, K, po);
                for (const auto& b : set.branches) emit(b.x, std::pow(std::abs(b.deriv), -t), nd.rel);
                if (quad) {
                    tail_quadrature(p, nd.x, K, t, rule, opt.tol, calib, tq);
                    const double rel = nd.rel + (tq.mass > 0.0 ? tq.error / tq.mass : 0.0);
                    for (const auto& [x, wt] : tq.samples) emit(x, wt, rel);
                    o.dropped += nd.w * tq.dropped;
                    local += tq.dropped;
                } else {
                    o.dropped += nd.w * tau;
                    local += tau;
                }
                o.sup = std::max(o.sup, local);
            }
        });
        std::vector<detail::TreeNode> next;
        double child_sum = 0.0, child_err = 0.0;
        for (auto& o : outs) {
            child_sum += o.child_sum;
            child_err += o.child_err;
            pruned_at[static_cast<std::size_t>(j)] += o.pruned;
            dropped_at[static_cast<std::size_t>(j) + 1] += o.dropped;
            res.sup_estimate = std::max(res.sup_estimate, o.sup);
            res.expanded += o.expanded;
            if (store) next.insert(next.end(), o.children.begin(), o.children.end());
        }
        sums[static_cast<std::size_t>(j) + 1] = child_sum;
        rel_err[static_cast<std::size_t>(j) + 1] = child_err;
        level.swap(next);
    }

    const double G = res.sup_estimate;
    res.levels.resize(static_cast<std::size_t>(n) + 1);
    for (int m = 0; m <= n; ++m) {
        WeightedValue& v = res.levels[static_cast<std::size_t>(m)];
        if (m > reached) {
            v.value = sums[static_cast<std::size_t>(reached)];
            v.error = std::numeric_limits<double>::infinity();
            v.budget_exceeded = true;
            continue;
        }
        v.value = sums[static_cast<std::size_t>(m)];
        double e = rel_err[static_cast<std::size_t>(m)];
        for (int j = 0; j < m; ++j)
            e += pruned_at[static_cast<std::size_t>(j)] * std::pow(G, m - j);
        for (int j = 1; j <= m; ++j)
            e += dropped_at[static_cast<std::size_t>(j)] * std::pow(G, m - j);
        v.error = e;
    }
    return res;
}

/// L_t^n 1(z) with its error. Throws BudgetExceeded (carrying the partial sum) when the
/// tree outgrows opt.node_budget.
inline WeightedValue iterate_transfer_one(const MapParams& p, double t, const CylinderPoint& z,
                                          int n, int K, double prune,
                                          const TransferOptions& opt = {}) {
    if (n < 1) throw InvalidArgument("iterate_transfer_one needs n >= 1");
    const TreeResult r = expand_tree(p, t, z, n, K, prune, opt);
    const WeightedValue& v = r.levels[static_cast<std::size_t>(n)];
    if (r.budget_exceeded) throw BudgetExceeded(v.value, opt.node_budget);
    return v;
}

// ---------------------------------------------------------------------------
// Pressure

enum class PressureMethod { Ratio, Zeta };

inline const char* to_string(PressureMethod m) noexcept {
    return m == PressureMethod::Ratio ? "ratio" : "zeta";
}

struct PressureEstimate {
    double t = 0.0;
    double value = 0.0;
    double uncertainty = 0.0;
    PressureMethod method = PressureMethod::Ratio;
    int n = 0;
    int K = 0;
    double prune = 0.0;
    /// Part of the uncertainty coming from the error bars of the sums.
    double interval = 0.0;
    /// Part coming from the change against the previous depth (heuristic).
    double drift = 0.0;
    TailModel tail = TailModel::Bound;
    CylinderPoint base;
    bool budget_exceeded = false;

    double lo() const noexcept { return value - uncertainty; }
    double hi() const noexcept { return value + uncertainty; }
};

namespace detail {

/// Half-width of log(a / b) over a +- ea, b +- eb, measured from log(a / b).
inline double log_ratio_halfwidth(double a, double ea, double b, double eb) {
    if (!(a - ea > 0.0) || !(b - eb > 0.0)) return std::numeric_limits<double>::infinity();
    const double mid = std::log(a / b);
    const double lo = std::log((a - ea) / (b + eb));
    const double hi = std::log((a + ea) / (b - eb));
    return std::max(mid - lo, hi - mid);
}

}  // namespace detail

/// log(S_n / S_{n-1}) with S_j = L_t^j 1(z).
inline PressureEstimate pressure_ratio(const MapParams& p, double t, const CylinderPoint& z, int n,
                                       int K, double prune, const TransferOptions& opt = {}) {
    if (n < 2) throw InvalidArgument("pressure_ratio needs n >= 2");
    const TreeResult r = expand_tree(p, t, z, n, K, prune, opt);
    const auto& S = r.levels;
    const auto un = static_cast<std::size_t>(n);
    if (r.budget_exceeded) throw BudgetExceeded(S[un].value, opt.node_budget);

    PressureEstimate e;
    e.t = t;
    e.method = PressureMethod::Ratio;
    e.n = n;
    e.K = K;
    e.prune = prune;
    e.tail = opt.tail;
    e.base = z;
    e.value = std::log(S[un].value / S[un - 1].value);
    const double prev = std::log(S[un - 1].value / S[un - 2].value);
    e.drift = std::abs(e.value - prev);
    e.interval = detail::log_ratio_halfwidth(S[un].value, S[un].error, S[un - 1].value, S[un - 1].error);
    e.uncertainty = e.interval + e.drift;
    return e;
}

// ---------------------------------------------------------------------------
// Periodic-orbit (zeta) oracle

struct ZetaResult {
    PressureEstimate estimate;
    /// Sum of |(F^n)'|^{-t} over the found points (tail samples included).
    double sum = 0.0;
    /// Periodic points for words made of enumerated branches only.
    std::vector<PeriodicPoint> points;
    /// Lift words of the enumerated paths whose contraction did not settle.
    std::vector<BranchWord> word_failures;
};

namespace detail {

struct ZetaSymbol {
    bool sampled = false;
    BranchSymbol branch;  // enumerated branch
    double lift = 0.0;    // real lift of a tail sample
    double weight = 1.0;  // quadrature weight of a tail sample
    double rel = 0.0;     // its relative error
};

/// One step of a closed inverse-branch path: the root x solves l x - e^x = b.
struct ZetaStep {
    cplx x;
    cplx b;
    BranchSymbol branch;
    bool sampled = false;
    double log_weight = 0.0;
    double rel = 0.0;
};

inline std::vector<ZetaSymbol> zeta_alphabet(const MapParams& p, double t, int K,
                                             const TransferOptions& opt, const CylinderPoint& base) {
    std::vector<ZetaSymbol> alpha;
    for (int k = -K; k <= K; ++k) alpha.push_back({false, {k, Regime::Log}});
    const double lin_reach = p.ell_d() * (pi + 1.0) + pi + std::abs(p.shift().imag());
    for (int k = -K; k <= K; ++k)
        if (two_pi * std::abs(k) <= lin_reach) alpha.push_back({false, {k, Regime::Linear}});
    if (opt.tail != TailModel::Quadrature) return alpha;

    // Tail samples as extra symbols. The lifts are fixed (no per-target stretching), and
    // the end correction uses its power-law form, a factor 1 - t (t - 1) / (24 s0^2).
    const LaguerreRule rule = gauss_laguerre(opt.quadrature_nodes);
    const double a = t - 1.0;
    const double s0 = K + 0.5;
    const double end_factor = 1.0 - t * (t - 1.0) / (24.0 * s0 * s0);
    const double rho = std::abs(base.value() - p.shift()) / (two_pi * s0);
    const double calib = quadrature_calibration(p, base, K, t, opt.quadrature_nodes, opt.tol);
    const double rel = 0.5 * (1.0 - end_factor) + far_target_error(rho) + calib;
    for (int side : {1, -1})
        for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
            const double v = rule.nodes[i] / a;
            const double s = s0 * std::exp(v);
            if (std::log(two_pi * s) >= tail_real_cap) continue;
            const double weight = end_factor * rule.weights[i] / a * std::exp(rule.nodes[i]) * s;
            ZetaSymbol sym;
            sym.sampled = true;
            sym.lift = side * s;
            sym.weight = weight;
            sym.rel = rel;
            alpha.push_back(sym);
        }
    return alpha;
}

}  // namespace detail

/// (1/n) log of the sum of |(F^n)'(x)|^{-t} over period-n points x. Each depth-n path of
/// the preimage tree of the base point (|k| <= K, plus tail samples for the quadrature
/// model) is closed into a loop and contracted onto the fixed point of its branches.
inline ZetaResult zeta_pressure(const MapParams& p, double t, int n, int K,
                                const TransferOptions& opt = {}) {
    check_summable(t);
    if (n < 1) throw InvalidArgument("zeta_pressure needs n >= 1");
    if (K < 1) throw InvalidArgument("zeta_pressure needs K >= 1");

    const PeriodicPoint base_pt = default_base_point(p, opt.tol);

    const auto alpha = detail::zeta_alphabet(p, t, K, opt, base_pt.point);
    const PreimageOptions po = tree_preimage_options(opt);
    std::vector<CylinderPoint> roots{base_pt.point};
    for (const auto& fp : fixed_points(p, -1, 1, opt.tol).points)
        if (fp.repelling() && cylinder_distance(fp.point, base_pt.point) > 1e-6) roots.push_back(fp.point);

    // Children of a target: every enumerated preimage (band and linear roots included, so
    // several roots may share a lift) plus one child per tail sample.
    auto children = [&](const CylinderPoint& y, bool with_samples) {
        std::vector<detail::ZetaStep> out;
        for (const auto& b : preimages(p, y, K, po).branches)
            out.push_back({b.x.value(), lift_constant(p, y, b.k), {b.k, b.regime}, false, 0.0, 0.0});
        if (!with_samples) return out;
        for (const auto& sym : alpha) {
            if (!sym.sampled) continue;
            if (auto root = detail::real_lift_root(p, y, sym.lift, opt.tol))
                out.push_back({*root, y.value() + cplx(0.0, two_pi * sym.lift) - p.shift(),
                               {static_cast<int>(std::lround(sym.lift)), Regime::Log}, true,
                               std::log(sym.weight), sym.rel});
        }
        return out;
    };

    // Sums for period n and period n - 1 (the latter gives the drift).
    auto run = [&](int len, ZetaResult* keep, double& err_out) -> double {
        // All depth-len paths of the preimage tree of each root. Partial branches (linear
        // regime) may be absent from one tree and present in another; the extra roots add
        // enumerated paths only, so tail samples are counted once.
        std::vector<std::vector<detail::ZetaStep>> paths;
        std::vector<cplx> path_root;
        for (std::size_t r = 0; r < roots.size(); ++r) {
            std::vector<std::vector<detail::ZetaStep>> level{{}};
            for (int d = 0; d < len; ++d) {
                std::vector<std::vector<detail::ZetaStep>> next;
                for (const auto& path : level) {
                    const CylinderPoint y = path.empty() ? roots[r] : CylinderPoint(path.back().x);
                    for (const auto& c : children(y, r == 0)) {
                        next.push_back(path);
                        next.back().push_back(c);
                    }
                }
                level.swap(next);
            }
            for (auto& path : level) {
                paths.push_back(std::move(path));
                path_root.push_back(roots[r].value());
            }
        }

        struct Slot {
            double sum = 0.0, err = 0.0;
            std::optional<PeriodicPoint> point;
            bool sampled = false;
            bool failed = false;
        };
        std::vector<Slot> slots(paths.size());
        const double l = p.ell_d();
        parallel_for(paths.size(), resolve_threads(opt.threads), [&](std::size_t idx) {
            auto steps = paths[idx];
            const std::size_t m = steps.size();
            double log_front = 0.0, rel = 0.0;
            bool sampled = false;
            for (const auto& s : steps)
                if (s.sampled) {
                    sampled = true;
                    log_front += s.log_weight;
                    rel += s.rel;
                }
            slots[idx].sampled = sampled;
            // Close the path into a loop: step i has target x_{i-1} (x_{-1} = x_{m-1}). Each
            // root is continued from where it is, its constant moved with its target.
            std::vector<cplx> target(m);
            target[0] = path_root[idx];
            for (std::size_t i = 1; i < m; ++i) target[i] = steps[i - 1].x;
            bool ok = false;
            for (int it = 0; it < 200 && !ok; ++it) {
                const cplx before = steps[m - 1].x;
                bool alive = true;
                for (std::size_t i = 0; i < m && alive; ++i) {
                    const cplx y = i == 0 ? steps[m - 1].x : steps[i - 1].x;
                    steps[i].b += cylinder_delta(y, target[i]);
                    target[i] = y;
                    const auto root = detail::polish_root(l, steps[i].x, steps[i].b, opt.tol);
                    if (!root || std::abs(l * *root - std::exp(*root) - steps[i].b) >
                                     opt.tol * residual_scale(*root))
                        alive = false;
                    else
                        steps[i].x = *root;
                }
                if (!alive) break;
                ok = cylinder_distance(before, steps[m - 1].x) <= 1e-14 * (1.0 + std::abs(steps[m - 1].x));
            }
            if (!ok) {
                slots[idx].failed = true;
                return;
            }
            double log_mult = 0.0;
            cplx mult = 1.0;
            for (const auto& s : steps) {
                const cplx d = l - std::exp(s.x);
                log_mult += std::log(std::abs(d));
                if (!sampled) mult *= d;
            }
            if (!(log_mult > 0.0)) return;  // attracting cycle: not part of the sum
            const double contrib = std::exp(log_front - t * log_mult);
            slots[idx].sum = contrib;
            slots[idx].err = contrib * rel;
            if (!sampled) {
                const CylinderPoint x(steps[m - 1].x);
                const double residual = periodic_residual(p, x, len);
                if (!(residual < opt.tol * len * residual_scale(x.value()) * 10.0)) {
                    slots[idx] = Slot{};
                    slots[idx].failed = true;
                    return;
                }
                BranchWord bw;
                for (const auto& s : steps) bw.push_back(s.branch);
                slots[idx].point = PeriodicPoint{x, len, mult, bw, residual};
            }
        });

        // Two paths continued onto the same periodic point count it once.
        std::vector<std::size_t> order;
        for (std::size_t idx = 0; idx < slots.size(); ++idx)
            if (slots[idx].point) order.push_back(idx);
        std::vector<CylinderPoint> where(slots.size());
        for (std::size_t idx : order) where[idx] = slots[idx].point->point;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return where[a].re() < where[b].re() || (where[a].re() == where[b].re() && a < b);
        });
        for (std::size_t u = 0; u < order.size(); ++u) {
            for (std::size_t v = u; v-- > 0;) {
                if (where[order[u]].re() - where[order[v]].re() > 1e-9) break;
                if (slots[order[v]].point && cylinder_distance(where[order[v]], where[order[u]]) < 1e-9) {
                    slots[order[u]] = Slot{};
                    break;
                }
            }
        }

        double total = 0.0, err = 0.0;
        for (std::size_t idx = 0; idx < slots.size(); ++idx) {
            total += slots[idx].sum;
            err += slots[idx].err;
            if (!keep) continue;
            if (slots[idx].point) keep->points.push_back(*slots[idx].point);
            if (slots[idx].failed && !slots[idx].sampled) {
                BranchWord bw;
                for (const auto& s : paths[idx]) bw.push_back(s.branch);
                keep->word_failures.push_back(bw);
            }
        }
        err_out = err;
        return total;
    };

    ZetaResult out;
    double err_n = 0.0;
    out.sum = run(n, &out, err_n);
    if (!(out.sum > 0.0)) throw NumericalFailure("zeta sum is empty");

    PressureEstimate& e = out.estimate;
    e.t = t;
    e.method = PressureMethod::Zeta;
    e.n = n;
    e.K = K;
    e.tail = opt.tail;
    e.base = base_pt.point;
    e.value = std::log(out.sum) / n;
    if (opt.tail == TailModel::Bound) {
        // Each symbol slot misses at most tau relative to the enumerated one-step mass.
        const auto set = preimages(p, base_pt.point, K, tree_preimage_options(opt));
        double s1 = 0.0;
        for (const auto& b : set.branches) s1 += std::pow(std::abs(b.deriv), -t);
        e.interval = std::log1p(tail_weight_bound(K, t, opt.c_geo).bound / s1);
    } else {
        e.interval = std::log1p(err_n / out.sum) / n;
    }
    if (n >= 2) {
        double err_prev = 0.0;
        const double prev = run(n - 1, nullptr, err_prev);
        // With Z_n ~ C e^{nP} the error log(C) / n is (n - 1) times the step drift.
        if (prev > 0.0) e.drift = (n - 1) * std::abs(e.value - std::log(prev) / (n - 1));
    }
    e.uncertainty = e.interval + e.drift;
    return out;
}

// ---------------------------------------------------------------------------
// Eigenfunction iterates

struct FunctionSamples {
    std::vector<CylinderPoint> points;
    std::vector<double> values;
    double t = 0.0;
};

struct EigenfunctionResult {
    /// Iterate m of the normalized operator, scaled to 1 at the base point.
    FunctionSamples samples;
    /// history[j - 1] holds iterate j, j = 1..m.
    std::vector<FunctionSamples> history;
    /// relative_change[j - 2] = max over samples of |psi_j - psi_{j-1}| / psi_j, j = 2..m.
    std::vector<double> relative_change;
    /// residual[j - 1] = max over samples of |e^{-P} L psi_j - psi_j|, j = 1..m-1.
    std::vector<double> residual;
};

/// Iterates of e^{-P} L_t on 1 at the sample points, each scaled so that its value at
/// `base` is 1 (the scale cancels e^{-jP}; P enters the fixed-point residual only).
inline EigenfunctionResult eigenfunction_iterate(const MapParams& p, double t, double P,
                                                 const std::vector<CylinderPoint>& samples,
                                                 const CylinderPoint& base, int iterations, int K,
                                                 double prune, const TransferOptions& opt = {}) {
    check_summable(t);
    if (iterations < 1) throw InvalidArgument("eigenfunction_iterate needs iterations >= 1");
    const int m = iterations;
    auto levels = [&](const CylinderPoint& z) {
        TreeResult r = expand_tree(p, t, z, m, K, prune, opt);
        if (r.budget_exceeded) throw BudgetExceeded(r.levels.back().value, opt.node_budget);
        return r.levels;
    };
    const auto at_base = levels(base);
    std::vector<std::vector<WeightedValue>> at_samples;
    for (const auto& z : samples) at_samples.push_back(levels(z));

    EigenfunctionResult out;
    for (int j = 1; j <= m; ++j) {
        FunctionSamples fs;
        fs.t = t;
        fs.points = samples;
        for (const auto& lv : at_samples)
            fs.values.push_back(lv[static_cast<std::size_t>(j)].value / at_base[static_cast<std::size_t>(j)].value);
        out.history.push_back(fs);
    }
    for (int j = 2; j <= m; ++j) {
        double worst = 0.0;
        const auto& cur = out.history[static_cast<std::size_t>(j - 1)].values;
        const auto& prev = out.history[static_cast<std::size_t>(j - 2)].values;
        for (std::size_t i = 0; i < cur.size(); ++i)
            worst = std::max(worst, std::abs(cur[i] - prev[i]) / cur[i]);
        out.relative_change.push_back(worst);
    }
    const double decay = std::exp(-P);
    for (int j = 1; j < m; ++j) {
        double worst = 0.0;
        const double norm = at_base[static_cast<std::size_t>(j)].value;
        for (const auto& lv : at_samples) {
            const double psi = lv[static_cast<std::size_t>(j)].value / norm;
            const double next = decay * lv[static_cast<std::size_t>(j) + 1].value / norm;
            worst = std::max(worst, std::abs(next - psi));
        }
        out.residual.push_back(worst);
    }
    out.samples = out.history.back();
    return out;
}

// ---------------------------------------------------------------------------
// Atomic approximation of the conformal measure

struct Atom {
    CylinderPoint point;
    double mass = 0.0;
};

struct AtomicMeasure {
    std::vector<Atom> atoms;
    double t = 0.0;
    int depth = 0;
    CylinderPoint base;
    /// Share of the unnormalized mass cut by pruning.
    double pruned_share = 0.0;
};

inline constexpr int default_atom_depth_cap = 6;

/// Atoms at the depth-`depth` preimages of base (|k| <= K on every step) with mass
/// proportional to |(F^depth)'|^{-t} e^{depth P}, normalized to total 1.
inline AtomicMeasure conformal_atoms(const MapParams& p, double t, double P,
                                     const CylinderPoint& base, int depth, int K, double prune,
                                     const TransferOptions& opt = {},
                                     int depth_cap = default_atom_depth_cap) {
    check_summable(t);
    if (depth < 0) throw InvalidArgument("conformal_atoms needs depth >= 0");
    if (depth > depth_cap) throw InvalidArgument("conformal_atoms depth exceeds the cap");
    AtomicMeasure mu;
    mu.t = t;
    mu.depth = depth;
    mu.base = base;
    const PreimageOptions po = tree_preimage_options(opt);
    const int threads = resolve_threads(opt.threads);

    std::vector<Atom> level{{base, 1.0}};
    double cut_mass = 0.0;
    for (int j = 0; j < depth; ++j) {
        double total = 0.0;
        for (const auto& a : level) total += a.mass;
        const double cut = prune * total;
        const std::size_t chunks = (level.size() + detail::tree_chunk - 1) / detail::tree_chunk;
        std::vector<std::vector<Atom>> outs(chunks);
        std::vector<double> cut_parts(chunks, 0.0);
        parallel_for(chunks, threads, [&](std::size_t c) {
            const std::size_t end = std::min(level.size(), (c + 1) * detail::tree_chunk);
            for (std::size_t i = c * detail::tree_chunk; i < end; ++i) {
                if (level[i].mass < cut) {
                    cut_parts[c] += level[i].mass;
                    continue;
                }
                const auto set = preimages(p, level[i].point, K, po);
                for (const auto& b : set.branches)
                    outs[c].push_back({b.x, level[i].mass * std::pow(std::abs(b.deriv), -t) * std::exp(P)});
            }
        });
        std::vector<Atom> next;
        for (std::size_t c = 0; c < chunks; ++c) {
            next.insert(next.end(), outs[c].begin(), outs[c].end());
            cut_mass += cut_parts[c];
        }
        level.swap(next);
    }
    double total = 0.0;
    for (const auto& a : level) total += a.mass;
    if (!(total > 0.0)) throw NumericalFailure("conformal_atoms: empty measure");
    mu.pruned_share = cut_mass / (cut_mass + total);
    for (auto& a : level) a.mass /= total;
    mu.atoms = std::move(level);
    return mu;
}

/// Cylinder rectangle used to test conformality.
struct TestBox {
    double re_lo = 0.0, re_hi = 0.0, im_lo = 0.0, im_hi = 0.0;

    static TestBox around(const CylinderPoint& z, double half_width) {
        return {z.re() - half_width, z.re() + half_width, z.im() - half_width, z.im() + half_width};
    }
    CylinderPoint center() const { return CylinderPoint(0.5 * (re_lo + re_hi), 0.5 * (im_lo + im_hi)); }
    double diameter() const { return std::hypot(re_hi - re_lo, im_hi - im_lo); }
    bool contains(const CylinderPoint& z) const {
        if (z.re() < re_lo || z.re() > re_hi) return false;
        const double d = canonical_imag(z.im() - center().im());
        return std::abs(d) <= 0.5 * (im_hi - im_lo);
    }
};

/// Boxes of smaller diameter are taken as injectivity sets of F.
inline constexpr double default_injectivity_diameter = 0.1;

/// |nu(F(A)) - sum over atoms x in A of e^P |F'(x)|^t nu(x)| for the atomic measure nu.
/// nu(F(A)) counts the atoms with a preimage (|k| <= K) inside A.
inline double conformal_defect(const MapParams& p, const AtomicMeasure& mu, double P, const TestBox& A,
                               int K, const TransferOptions& opt = {},
                               double injectivity_diameter = default_injectivity_diameter) {
    if (!(A.re_hi > A.re_lo) || !(A.im_hi > A.im_lo)) throw InvalidArgument("empty test box");
    if (!(A.diameter() < injectivity_diameter))
        throw InvalidArgument("test box too large to be an injectivity set");
    const PreimageOptions po = tree_preimage_options(opt);
    // Images of A lie within sup|F'| * (half diagonal) of F(center).
    const CylinderPoint image_center = evaluate(p, A.center());
    const double reach = (p.ell_d() + std::exp(A.re_hi)) * 0.5 * A.diameter() * 1.01;

    double rhs = 0.0;
    for (const auto& a : mu.atoms)
        if (A.contains(a.point)) rhs += std::exp(P) * std::pow(std::abs(derivative(p, a.point)), mu.t) * a.mass;

    const int threads = resolve_threads(opt.threads);
    const std::size_t chunks = (mu.atoms.size() + detail::tree_chunk - 1) / detail::tree_chunk;
    std::vector<double> parts(chunks, 0.0);
    parallel_for(chunks, threads, [&](std::size_t c) {
        const std::size_t end = std::min(mu.atoms.size(), (c + 1) * detail::tree_chunk);
        for (std::size_t i = c * detail::tree_chunk; i < end; ++i) {
            const auto& a = mu.atoms[i];
            if (cylinder_distance(a.point, image_center) > reach) continue;
            const auto set = preimages(p, a.point, K, po);
            for (const auto& b : set.branches)
                if (A.contains(b.x)) {
                    parts[c] += a.mass;
                    break;
                }
        }
    });
    double lhs = 0.0;
    for (double v : parts) lhs += v;
    return std::abs(lhs - rhs);
}

}  // namespace bowen
