#pragma once

// Dependence on the parameter c: continuation of repelling periodic points, uniform
// expansion constants over a small parameter disk, dimension sweeps and finite-difference
// smoothness diagnostics of c -> t*(c).

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "bowen/cylinder.hpp"
#include "bowen/dimension.hpp"
#include "bowen/errors.hpp"
#include "bowen/map.hpp"
#include "bowen/periodic.hpp"
#include "bowen/preimages.hpp"

namespace bowen {

class StepRejected : public NumericalFailure {
public:
    StepRejected(cplx c_from, cplx c_to)
        : NumericalFailure("continuation step rejected after all halvings"), from_(c_from), to_(c_to) {}
    cplx from() const noexcept { return from_; }
    cplx to() const noexcept { return to_; }

private:
    cplx from_, to_;
};

class DenominatorNearOne : public NumericalFailure {
public:
    explicit DenominatorNearOne(cplx c) : NumericalFailure("|1 - (F^n)'| < 1e-6 on the track"), c_(c) {}
    cplx c() const noexcept { return c_; }

private:
    cplx c_;
};

class NoExpansion : public NumericalFailure {
public:
    NoExpansion(int n, double log_abs)
        : NumericalFailure("observed |(F^n)'| <= 1 at n = " + std::to_string(n) +
                           " (log = " + std::to_string(log_abs) + ")"),
          n_(n) {}
    int n() const noexcept { return n_; }

private:
    int n_;
};

class InsufficientGrid : public InvalidArgument {
public:
    using InvalidArgument::InvalidArgument;
};

// ---------------------------------------------------------------------------
// Continuation

/// dF/dc used in the parameter-derivative recursion: the exact 1 - (l - 1) / c, or the
/// constant 1 (kept for comparison).
enum class ParamDerivativeMode { Exact, Unit };

struct ContinuationEntry {
    cplx c;
    CylinderPoint z;
    cplx multiplier;
    double residual = 0.0;
    /// dz/dc from the implicit-function formula.
    cplx dz_dc;
};

struct ContinuationTrack {
    int period = 1;
    PeriodicPoint start;
    std::vector<ContinuationEntry> path;
    /// Set when the point stopped being repelling; the path ends before that parameter.
    bool aborted = false;
    std::string report;
};

struct ContinuationOptions {
    double tol = 1e-10;
    ParamDerivativeMode d1f = ParamDerivativeMode::Exact;
    int max_halvings = 6;
};

/// dz/dc of a period-n point: D_1F^n / (1 - D_2F^n), with D_1F^n by the chain recursion.
inline cplx periodic_point_velocity(const MapParams& p, const CylinderPoint& z, int n,
                                    ParamDerivativeMode mode = ParamDerivativeMode::Exact) {
    const cplx d1 = mode == ParamDerivativeMode::Exact ? param_derivative(p) : cplx(1.0);
    cplx dc = 0.0, dz = 1.0;
    CylinderPoint w = z;
    for (int i = 0; i < n; ++i) {
        const cplx fp = derivative(p, w);
        dc = d1 + fp * dc;
        dz *= fp;
        w = evaluate(p, w);
    }
    if (std::abs(1.0 - dz) < 1e-6) throw DenominatorNearOne(p.c());
    return dc / (1.0 - dz);
}

namespace detail {

/// Newton correction at parameter c from seed z; nullopt unless it lands near the seed.
inline std::optional<PeriodicPoint> correct_periodic(const MapParams& p, const CylinderPoint& seed,
                                                     int n, double tol, double reach) {
    auto r = newton_periodic(p, seed.value(), n, tol);
    if (!r || cylinder_distance(r->point, seed) > reach) return std::nullopt;
    return r;
}

}  // namespace detail

/// Follows a repelling periodic point along the parameter path (path[0] is the start
/// parameter). Each step is predicted with dz/dc and corrected by Newton; a rejected step
/// is retried as two halves, up to max_halvings deep.
inline ContinuationTrack continue_periodic(const MapParams& start_params, const PeriodicPoint& start,
                                           const std::vector<cplx>& path,
                                           const ContinuationOptions& opt = {}) {
    if (path.empty()) throw InvalidArgument("continuation path is empty");
    if (std::abs(path.front() - start_params.c()) > 1e-12)
        throw InvalidArgument("continuation path must begin at the start parameter");
    const int n = start.period;
    if (periodic_residual(start_params, start.point, n) >= opt.tol * n * residual_scale(start.point.value()))
        throw InvalidArgument("start point is not periodic at the start parameter");

    ContinuationTrack track;
    track.period = n;
    track.start = start;
    const int ell = start_params.ell();

    auto entry_at = [&](const MapParams& p, const CylinderPoint& z) {
        return ContinuationEntry{p.c(), z, multiplier_of(p, z, n), periodic_residual(p, z, n),
                                 periodic_point_velocity(p, z, n, opt.d1f)};
    };
    track.path.push_back(entry_at(start_params, start.point));
    if (!(std::abs(track.path.back().multiplier) > 1.0))
        throw InvalidArgument("start point is not repelling");

    // One attempt from `from` to parameter c; nullopt when the corrector misbehaves.
    auto attempt = [&](const ContinuationEntry& from, cplx c) -> std::optional<ContinuationEntry> {
        if (std::abs(c - static_cast<double>(ell)) >= 1.0) return std::nullopt;
        const MapParams p(ell, c);
        const cplx dc = c - from.c;
        const CylinderPoint predicted(from.z.value() + from.dz_dc * dc);
        const double reach = 0.1 + 10.0 * std::abs(from.dz_dc * dc);
        auto r = detail::correct_periodic(p, predicted, n, opt.tol, reach);
        if (!r) return std::nullopt;
        return entry_at(p, r->point);
    };

    // Reaches c from `from`, splitting the step into halves on rejection.
    std::function<std::optional<ContinuationEntry>(const ContinuationEntry&, cplx, int)> advance =
        [&](const ContinuationEntry& from, cplx c, int depth) -> std::optional<ContinuationEntry> {
        if (auto e = attempt(from, c)) return e;
        if (depth >= opt.max_halvings) return std::nullopt;
        const cplx mid = 0.5 * (from.c + c);
        auto half = advance(from, mid, depth + 1);
        if (!half) return std::nullopt;
        return advance(*half, c, depth + 1);
    };

    for (std::size_t i = 1; i < path.size(); ++i) {
        const ContinuationEntry& from = track.path.back();
        auto next = advance(from, path[i], 0);
        if (!next) throw StepRejected(from.c, path[i]);
        if (!(std::abs(next->multiplier) > 1.0)) {
            track.aborted = true;
            track.report = "point stopped being repelling at c = " + std::to_string(path[i].real()) +
                           (path[i].imag() < 0 ? "" : "+") + std::to_string(path[i].imag()) + "i";
            break;
        }
        track.path.push_back(*next);
    }
    return track;
}

/// Straight path of `steps` equal steps from a to b (steps + 1 parameters).
inline std::vector<cplx> straight_path(cplx a, cplx b, int steps) {
    if (steps < 1) throw InvalidArgument("straight_path needs steps >= 1");
    std::vector<cplx> out;
    for (int i = 0; i <= steps; ++i) out.push_back(a + (b - a) * (static_cast<double>(i) / steps));
    return out;
}

// ---------------------------------------------------------------------------
// Expansion constants

struct ExpansionObservation {
    cplx c;
    int n = 1;
    /// log |(F^n)'(x)|.
    double log_abs = 0.0;
};

struct ContractionObservation {
    cplx c;
    int n = 1;
    /// log of d(inverse images) / d(targets) for a pair of nearby targets.
    double log_ratio = 0.0;
};

struct ExpansionEstimate {
    double L = 0.0;
    double kappa = 0.0;
    double L_inv = 0.0;
    double beta = 0.0;
    int samples = 0;
    int n_max = 0;
    cplx center;
    double radius = 0.0;
    std::vector<cplx> parameters;
    std::vector<ExpansionObservation> observations;
    std::vector<ContractionObservation> contractions;
    /// Per observation: log|(F^n)'| - (log L + n log kappa) >= 0.
    std::vector<double> fit_residuals;

    bool certifies_expansion() const noexcept { return kappa > 1.0 && L > 0.0; }
};

struct ExpansionOptions {
    std::uint64_t seed = 20240601;
    /// Lifts used when sampling preimage words.
    int K = 3;
    /// Perturbed parameters on the circle of radius c_radius / 2 around the center.
    int perturbed = 5;
    double pair_distance = 1e-5;
    double tol = 1e-11;
};

namespace detail {

/// Line y = a + b n below every (n_i, y_i), chosen to be highest at n_mid.
inline std::pair<double, double> lower_line(const std::vector<std::pair<int, double>>& pts, double n_mid) {
    double best_a = -std::numeric_limits<double>::infinity(), best_b = 0.0, best_val = best_a;
    auto feasible = [&](double a, double b) {
        for (const auto& [n, y] : pts)
            if (a + b * n > y + 1e-12 * (1.0 + std::abs(y))) return false;
        return true;
    };
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            if (pts[i].first == pts[j].first) continue;
            const double b = (pts[j].second - pts[i].second) / (pts[j].first - pts[i].first);
            const double a = pts[i].second - b * pts[i].first;
            const double val = a + b * n_mid;
            if (val > best_val && feasible(a, b)) {
                best_a = a;
                best_b = b;
                best_val = val;
            }
        }
    if (!std::isfinite(best_a)) {
        // Single abscissa: flat line through the minimum.
        double m = std::numeric_limits<double>::infinity();
        for (const auto& pt : pts) m = std::min(m, pt.second);
        best_a = m;
        best_b = 0.0;
    }
    return {best_a, best_b};
}

/// Per-depth minima (or maxima with negate) of observations.
template <class Obs, class Get>
std::vector<std::pair<int, double>> envelope_points(const std::vector<Obs>& obs, Get get, bool lower) {
    std::map<int, double> best;
    for (const auto& o : obs) {
        const double y = get(o);
        auto it = best.find(o.n);
        if (it == best.end()) best[o.n] = y;
        else it->second = lower ? std::min(it->second, y) : std::max(it->second, y);
    }
    return {best.begin(), best.end()};
}

}  // namespace detail

/// Expansion and contraction observations at one parameter: repelling fixed points and
/// their powers, and random depth-n preimage words of the base point with pairs of nearby
/// targets pushed through the same branches.
inline void collect_expansion(const MapParams& p, int samples, int n_max, const ExpansionOptions& opt,
                              std::mt19937_64& rng, std::vector<ExpansionObservation>& exp_obs,
                              std::vector<ContractionObservation>& con_obs) {
    std::uniform_real_distribution<double> angle(-pi, pi);
    for (const auto& fp : fixed_points(p, -opt.K, opt.K, opt.tol).points) {
        if (!fp.repelling()) continue;
        const double la = std::log(std::abs(fp.multiplier));
        const int k = lift_index(p, fp.point, fp.point.value());
        double log_ratio = 0.0;
        for (int n = 1; n <= n_max; ++n) {
            exp_obs.push_back({p.c(), n, n * la});
            // The fixed point's own inverse branch applied to a nearby target.
            const cplx offset = opt.pair_distance * std::polar(1.0, angle(rng));
            auto y = detail::polish_root(p.ell_d(), fp.point.value(), lift_constant(p, fp.point, k) + offset, opt.tol);
            if (!y) break;
            log_ratio += std::log(std::abs(*y - fp.point.value()) / opt.pair_distance);
            con_obs.push_back({p.c(), n, log_ratio});
        }
    }
    const CylinderPoint base = default_base_point(p, opt.tol).point;
    PreimageOptions po;
    po.tol = opt.tol;
    po.strip_grid = false;
    for (int s = 0; s < samples; ++s) {
        CylinderPoint x = base;
        double log_abs = 0.0, log_ratio = 0.0;
        for (int n = 1; n <= n_max; ++n) {
            const auto set = preimages(p, x, opt.K, po);
            if (set.branches.empty()) break;
            std::uniform_int_distribution<std::size_t> pick(0, set.branches.size() - 1);
            const Preimage& b = set.branches[pick(rng)];
            // A companion target at a fixed small distance, pulled back along the same
            // branch by Newton from b.x; the distance is renormalized at every step.
            const cplx offset = opt.pair_distance * std::polar(1.0, angle(rng));
            auto y = detail::polish_root(p.ell_d(), b.x.value(), lift_constant(p, x, b.k) + offset, opt.tol);
            if (!y) break;
            const double d = std::abs(*y - b.x.value());
            if (!(d > 0.0)) break;
            x = b.x;
            log_abs += std::log(std::abs(b.deriv));
            log_ratio += std::log(d / opt.pair_distance);
            exp_obs.push_back({p.c(), n, log_abs});
            con_obs.push_back({p.c(), n, log_ratio});
        }
    }
}

/// Largest (L, kappa) with |(F^n)'| >= L kappa^n over every observation, pooled over the
/// center and `perturbed` parameters on the circle of radius c_radius / 2. The contraction
/// fit (L_inv, beta) uses finite-difference ratios of inverse branches on the same words.
inline ExpansionEstimate expansion_constants(const MapParams& p, double c_radius, int samples,
                                             int n_max, const ExpansionOptions& opt = {}) {
    if (samples < 10) throw InvalidArgument("expansion_constants needs samples >= 10");
    if (n_max < 5) throw InvalidArgument("expansion_constants needs n_max >= 5");
    if (!(c_radius >= 0.0)) throw InvalidArgument("c_radius must be >= 0");

    ExpansionEstimate est;
    est.samples = samples;
    est.n_max = n_max;
    est.center = p.c();
    est.radius = c_radius;
    est.parameters.push_back(p.c());
    for (int j = 0; j < opt.perturbed; ++j)
        est.parameters.push_back(p.c() + 0.5 * c_radius * std::polar(1.0, two_pi * (j + 0.5) / opt.perturbed));

    std::mt19937_64 rng(opt.seed);
    for (cplx c : est.parameters) {
        if (std::abs(c - p.ell_d()) >= 1.0) throw InvalidArgument("expansion window leaves the parameter disk");
        collect_expansion(MapParams(p.ell(), c), samples, n_max, opt, rng, est.observations, est.contractions);
    }
    for (const auto& o : est.observations)
        if (!(o.log_abs > 0.0)) throw NoExpansion(o.n, o.log_abs);

    const double n_mid = 0.5 * (1.0 + n_max);
    const auto lower = detail::envelope_points(est.observations, [](const ExpansionObservation& o) { return o.log_abs; }, true);
    const auto [a, b] = detail::lower_line(lower, n_mid);
    est.L = std::exp(a);
    est.kappa = std::exp(b);
    for (const auto& o : est.observations) est.fit_residuals.push_back(o.log_abs - (a + b * o.n));

    // Upper line over the contraction ratios: fit the lower line of their negatives.
    const auto upper = detail::envelope_points(est.contractions, [](const ContractionObservation& o) { return -o.log_ratio; }, true);
    if (!upper.empty()) {
        const auto [ai, bi] = detail::lower_line(upper, n_mid);
        est.L_inv = std::exp(-ai);
        est.beta = std::exp(-bi);
    }
    return est;
}

/// Every observation satisfies |(F^n)'| >= L kappa^n (relative slack 1e-12).
inline bool expansion_holds(const ExpansionEstimate& est, const std::vector<ExpansionObservation>& obs) {
    const double a = std::log(est.L), b = std::log(est.kappa);
    for (const auto& o : obs)
        if (o.log_abs < a + b * o.n - 1e-12 * (1.0 + std::abs(o.log_abs))) return false;
    return true;
}

/// Bound on |dz/dc| for continued points implied by the expansion constants.
inline double velocity_bound(const ExpansionEstimate& est) {
    if (!est.certifies_expansion()) return std::numeric_limits<double>::infinity();
    return 2.0 * est.kappa / (est.L * (est.kappa - 1.0));
}

// ---------------------------------------------------------------------------
// Sweeps

struct GridSpec {
    std::vector<double> re;
    std::vector<double> im;
};

/// n x m points centered at `center` with the given half-widths.
inline GridSpec square_grid(cplx center, double half_width, int points_per_axis) {
    if (points_per_axis < 1) throw InvalidArgument("grid needs at least one point per axis");
    GridSpec g;
    for (int i = 0; i < points_per_axis; ++i) {
        const double f = points_per_axis == 1 ? 0.0 : -1.0 + 2.0 * i / (points_per_axis - 1);
        g.re.push_back(center.real() + half_width * f);
        g.im.push_back(center.imag() + half_width * f);
    }
    return g;
}

inline constexpr double default_sweep_margin = 0.05;

struct SweepGrid {
    int ell = 2;
    GridSpec spec;
    /// Row-major over (im, re): index = i_im * re.size() + i_re.
    std::vector<cplx> centers;
    std::vector<DimensionRecord> records;
    std::vector<std::string> failures;

    std::size_t nx() const noexcept { return spec.re.size(); }
    std::size_t ny() const noexcept { return spec.im.size(); }
    bool ok(std::size_t i) const { return std::isfinite(records[i].t_star); }
};

namespace detail {

inline double at(const SweepGrid& g, std::size_t ix, std::size_t iy) {
    return g.records[iy * g.nx() + ix].t_star;
}

/// Least-squares quadratic through the 3x3 block centered at (cx, cy); RMS residual.
inline double quadratic_fit_residual(const SweepGrid& g, std::size_t cx, std::size_t cy) {
    constexpr int P = 6;
    std::array<std::array<double, P + 1>, P> m{};
    int used = 0;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            const double v = at(g, cx + dx, cy + dy);
            if (!std::isfinite(v)) continue;
            const std::array<double, P> row{1.0, double(dx), double(dy), double(dx * dx), double(dx * dy), double(dy * dy)};
            for (int i = 0; i < P; ++i) {
                for (int j = 0; j < P; ++j) m[i][j] += row[i] * row[j];
                m[i][P] += row[i] * v;
            }
            ++used;
        }
    if (used < 9) return std::numeric_limits<double>::quiet_NaN();
    // Gaussian elimination with partial pivoting on the normal equations.
    for (int col = 0; col < P; ++col) {
        int piv = col;
        for (int r = col + 1; r < P; ++r)
            if (std::abs(m[r][col]) > std::abs(m[piv][col])) piv = r;
        std::swap(m[col], m[piv]);
        for (int r = 0; r < P; ++r) {
            if (r == col) continue;
            const double f = m[r][col] / m[col][col];
            for (int k = col; k <= P; ++k) m[r][k] -= f * m[col][k];
        }
    }
    std::array<double, P> coef{};
    for (int i = 0; i < P; ++i) coef[i] = m[i][P] / m[i][i];
    double ss = 0.0;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            const double fit = coef[0] + coef[1] * dx + coef[2] * dy + coef[3] * dx * dx + coef[4] * dx * dy + coef[5] * dy * dy;
            const double r = at(g, cx + dx, cy + dy) - fit;
            ss += r * r;
        }
    return std::sqrt(ss / 9.0);
}

/// Index of the 3x3 block center nearest to i along an axis of length n (needs n >= 3).
inline std::size_t block_center(std::size_t i, std::size_t n) {
    return std::clamp<std::size_t>(i, 1, n - 2);
}

}  // namespace detail

/// Per-cell diagnostics: gradient and Hessian by finite differences, local quadratic-fit
/// residual and the conjugate-symmetry defect. Written into each record's diagnostics.
inline void attach_sweep_diagnostics(SweepGrid& g) {
    const std::size_t nx = g.nx(), ny = g.ny();
    const double nan = std::numeric_limits<double>::quiet_NaN();
    auto diff1 = [&](const std::vector<double>& axis, std::size_t i, auto value) {
        const std::size_t n = axis.size();
        if (n < 2) return nan;
        const std::size_t lo = i == 0 ? 0 : i - 1, hi = i + 1 == n ? n - 1 : i + 1;
        return (value(hi) - value(lo)) / (axis[hi] - axis[lo]);
    };
    auto diff2 = [&](const std::vector<double>& axis, std::size_t i, auto value) {
        const std::size_t n = axis.size();
        if (n < 3) return nan;
        const std::size_t c = detail::block_center(i, n);
        const double h = 0.5 * (axis[c + 1] - axis[c - 1]);
        return (value(c + 1) - 2.0 * value(c) + value(c - 1)) / (h * h);
    };
    for (std::size_t iy = 0; iy < ny; ++iy)
        for (std::size_t ix = 0; ix < nx; ++ix) {
            auto& d = g.records[iy * nx + ix].diagnostics;
            auto along_re = [&](std::size_t j) { return detail::at(g, j, iy); };
            auto along_im = [&](std::size_t j) { return detail::at(g, ix, j); };
            d["grad_re"] = diff1(g.spec.re, ix, along_re);
            d["grad_im"] = diff1(g.spec.im, iy, along_im);
            d["hess_re_re"] = diff2(g.spec.re, ix, along_re);
            d["hess_im_im"] = diff2(g.spec.im, iy, along_im);
            d["fit_residual"] = nx >= 3 && ny >= 3
                                    ? detail::quadratic_fit_residual(g, detail::block_center(ix, nx), detail::block_center(iy, ny))
                                    : nan;
            // Conjugate partner on the grid, if any.
            double defect = nan;
            const double want = -g.spec.im[iy];
            for (std::size_t jy = 0; jy < ny; ++jy)
                if (std::abs(g.spec.im[jy] - want) <= 1e-12 * (1.0 + std::abs(want)))
                    defect = std::abs(detail::at(g, ix, iy) - detail::at(g, ix, jy));
            d["sym_defect"] = defect;
        }
}

/// bowen_dimension at every grid point (|c - l| < 1 - margin required). A failing cell is
/// recorded with t_star = NaN and the sweep continues.
inline SweepGrid sweep_dimension(int ell, const GridSpec& spec, double accuracy,
                                 const DimensionOptions& opt = {}, double margin = default_sweep_margin) {
    if (spec.re.empty() || spec.im.empty()) throw InvalidArgument("sweep grid is empty");
    SweepGrid g;
    g.ell = ell;
    g.spec = spec;
    for (double im : spec.im)
        for (double re : spec.re) {
            const cplx c(re, im);
            if (!(std::abs(c - static_cast<double>(ell)) < 1.0 - margin))
                throw InvalidArgument("sweep center outside the parameter disk margin");
            g.centers.push_back(c);
        }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (cplx c : g.centers) {
        try {
            g.records.push_back(bowen_dimension(MapParams(ell, c), accuracy, opt));
        } catch (const NumericalFailure& e) {
            DimensionRecord r;
            r.c = c;
            r.t_star = r.uncertainty = r.t_lo = r.t_hi = nan;
            r.diagnostics["failed"] = 1.0;
            g.records.push_back(r);
            g.failures.push_back(e.what());
        }
    }
    attach_sweep_diagnostics(g);
    return g;
}

/// Richardson consistency of second differences along each axis, quadratic-fit residuals
/// and symmetry defects. Needs at least 5 points per axis.
inline std::map<std::string, double> smoothness_diagnostic(const SweepGrid& g, double tolerance = 0.3) {
    const std::size_t nx = g.nx(), ny = g.ny();
    if (nx < 5 || ny < 5) throw InsufficientGrid("smoothness_diagnostic needs >= 5 points per axis");
    if (g.records.size() != nx * ny) throw InvalidArgument("sweep records do not match the grid");
    std::map<std::string, double> out;

    auto axis = [&](const std::string& name, bool along_re) {
        const std::size_t n = along_re ? nx : ny, m = along_re ? ny : nx;
        double sum_h = 0.0, sum_2h = 0.0, max_h = 0.0;
        for (std::size_t line = 0; line < m; ++line)
            for (std::size_t i = 2; i + 2 < n; ++i) {
                auto v = [&](std::size_t j) { return along_re ? detail::at(g, j, line) : detail::at(g, line, j); };
                const double d_h = v(i + 1) - 2.0 * v(i) + v(i - 1);
                const double d_2h = v(i + 2) - 2.0 * v(i) + v(i - 2);
                if (!std::isfinite(d_h) || !std::isfinite(d_2h)) continue;
                sum_h += std::abs(d_h);
                sum_2h += std::abs(d_2h);
                max_h = std::max(max_h, std::abs(d_h));
            }
        out["second_diff_max_" + name] = max_h;
        if (sum_h > 0.0) {
            const double ratio = sum_2h / sum_h;
            out["richardson_ratio_" + name] = ratio;
            out["richardson_consistent_" + name] = std::abs(ratio - 4.0) <= tolerance * 4.0 ? 1.0 : 0.0;
        } else {
            // Flat along this axis: no curvature to compare.
            out["richardson_ratio_" + name] = std::numeric_limits<double>::quiet_NaN();
            out["richardson_consistent_" + name] = sum_2h == 0.0 ? 1.0 : 0.0;
        }
    };
    axis("re", true);
    axis("im", false);

    double fit_max = 0.0, sym_max = 0.0;
    std::vector<double> unc;
    for (std::size_t iy = 1; iy + 1 < ny; ++iy)
        for (std::size_t ix = 1; ix + 1 < nx; ++ix) {
            const double r = detail::quadratic_fit_residual(g, ix, iy);
            if (std::isfinite(r)) fit_max = std::max(fit_max, r);
        }
    for (std::size_t i = 0; i < g.records.size(); ++i) {
        const auto it = g.records[i].diagnostics.find("sym_defect");
        if (it != g.records[i].diagnostics.end() && std::isfinite(it->second)) sym_max = std::max(sym_max, it->second);
        if (std::isfinite(g.records[i].uncertainty)) unc.push_back(g.records[i].uncertainty);
    }
    out["fit_residual_max"] = fit_max;
    out["sym_defect_max"] = sym_max;
    if (!unc.empty()) {
        std::nth_element(unc.begin(), unc.begin() + unc.size() / 2, unc.end());
        out["uncertainty_median"] = unc[unc.size() / 2];
    }
    out["richardson_tolerance"] = tolerance;
    return out;
}

/// Adjacent |delta t*| along a one-dimensional sweep (grid with a single row or column).
inline std::vector<double> adjacent_jumps(const SweepGrid& g) {
    std::vector<double> out;
    for (std::size_t i = 1; i < g.records.size(); ++i)
        out.push_back(std::abs(g.records[i].t_star - g.records[i - 1].t_star));
    return out;
}

}  // namespace bowen
