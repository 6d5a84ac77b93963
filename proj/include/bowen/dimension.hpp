#pragma once

// Pressure at a given accuracy and the Bowen zero t* of t -> P(t).
//
// pressure() climbs a ladder of (depth, K) settings until the reported uncertainty
// drops below the requested accuracy. bowen_dimension() scans a fixed set of t for a
// sign change that is certified beyond the uncertainties, then bisects.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bowen/errors.hpp"
#include "bowen/map.hpp"
#include "bowen/periodic.hpp"
#include "bowen/transfer.hpp"

namespace bowen {

class AccuracyNotReached : public NumericalFailure {
public:
    explicit AccuracyNotReached(PressureEstimate partial)
        : NumericalFailure("pressure accuracy not reached: uncertainty " +
                           std::to_string(partial.uncertainty) + " at t = " + std::to_string(partial.t)),
          partial_(std::move(partial)) {}
    const PressureEstimate& partial() const noexcept { return partial_; }

private:
    PressureEstimate partial_;
};

class NoBracket : public NumericalFailure {
public:
    explicit NoBracket(std::vector<PressureEstimate> trace)
        : NumericalFailure("no certified sign change of the pressure on the scan"),
          trace_(std::move(trace)) {}
    const std::vector<PressureEstimate>& trace() const noexcept { return trace_; }

private:
    std::vector<PressureEstimate> trace_;
};

struct TreeSetting {
    int n = 4;
    int K = 4;
};

struct PressureOptions {
    TransferOptions transfer = [] {
        TransferOptions o;
        o.tail = TailModel::Quadrature;
        return o;
    }();
    double prune = 1e-14;
    /// Settings tried in order by pressure().
    std::vector<TreeSetting> ladder{{3, 4}, {4, 4}, {5, 4}, {5, 8}};
    /// Base point of the trees; the default repelling fixed point when empty.
    std::optional<CylinderPoint> base;
};

inline CylinderPoint resolve_base(const MapParams& p, const PressureOptions& opt) {
    return opt.base ? *opt.base : default_base_point(p, opt.transfer.tol).point;
}

/// Ratio pressure at one tree setting.
inline PressureEstimate pressure_at(const MapParams& p, double t, const TreeSetting& s,
                                    const PressureOptions& opt) {
    return pressure_ratio(p, t, resolve_base(p, opt), s.n, s.K, opt.prune, opt.transfer);
}

/// First ladder estimate with uncertainty < accuracy. Throws AccuracyNotReached with the
/// most accurate estimate seen when the ladder runs out or a tree exceeds its budget.
inline PressureEstimate pressure(const MapParams& p, double t, double accuracy,
                                 const PressureOptions& opt = {}) {
    check_summable(t);
    if (!(accuracy > 0.0)) throw InvalidArgument("accuracy must be > 0");
    if (opt.ladder.empty()) throw InvalidArgument("pressure ladder is empty");
    PressureOptions local = opt;
    local.base = resolve_base(p, opt);
    std::optional<PressureEstimate> best;
    for (const TreeSetting& s : local.ladder) {
        PressureEstimate e;
        try {
            e = pressure_at(p, t, s, local);
        } catch (const BudgetExceeded&) {
            break;
        }
        if (!best || e.uncertainty < best->uncertainty) best = e;
        if (e.uncertainty < accuracy) return e;
    }
    if (!best) {
        PressureEstimate e;
        e.t = t;
        e.uncertainty = std::numeric_limits<double>::infinity();
        e.budget_exceeded = true;
        best = e;
    }
    throw AccuracyNotReached(*best);
}

// ---------------------------------------------------------------------------

struct DimensionOptions {
    PressureOptions pressure;
    /// Setting used for the scan and for each bisection midpoint.
    TreeSetting scan{3, 4};
    TreeSetting bisect{4, 4};
    /// Used once when the bisect setting leaves the sign ambiguous.
    TreeSetting escalated{5, 4};
    std::vector<double> scan_points{1.05, 1.2, 1.4, 1.7, 2.0, 2.5};
    double low_fallback = 1.01;
};

struct DimensionRecord {
    cplx c;
    double t_star = 0.0;
    double uncertainty = 0.0;
    double t_lo = 0.0;
    double t_hi = 0.0;
    int evaluations = 0;
    std::map<std::string, double> diagnostics;
    /// Every pressure evaluation, in order.
    std::vector<PressureEstimate> trace;
    /// True when bisection stopped on an ambiguous sign before reaching the accuracy.
    bool limited_by_truncation = false;
    /// Flag (not an error) for t* outside (1, 2).
    bool outside_unit_interval = false;
};

enum class Sign { Positive, Negative, Ambiguous };

inline Sign certified_sign(const PressureEstimate& e) noexcept {
    if (e.value - e.uncertainty > 0.0) return Sign::Positive;
    if (e.value + e.uncertainty < 0.0) return Sign::Negative;
    return Sign::Ambiguous;
}

/// Zero of the pressure in t, bracketed by certified signs.
inline DimensionRecord bowen_dimension(const MapParams& p, double accuracy = 5e-3,
                                       const DimensionOptions& opt = {}) {
    if (!(accuracy > 0.0)) throw InvalidArgument("accuracy must be > 0");
    DimensionOptions local = opt;
    local.pressure.base = resolve_base(p, opt.pressure);

    DimensionRecord rec;
    rec.c = p.c();
    int escalations = 0;

    // Certified sign at t: first setting, then the escalated one if still ambiguous.
    auto sign_at = [&](double t, const TreeSetting& first) {
        PressureEstimate e = pressure_at(p, t, first, local.pressure);
        rec.trace.push_back(e);
        Sign s = certified_sign(e);
        if (s == Sign::Ambiguous) {
            ++escalations;
            e = pressure_at(p, t, local.escalated, local.pressure);
            rec.trace.push_back(e);
            s = certified_sign(e);
        }
        return std::make_pair(s, e);
    };

    std::optional<PressureEstimate> lo, hi;
    bool saw_positive = false;
    for (double t : local.scan_points) {
        const auto [s, e] = sign_at(t, local.scan);
        if (s == Sign::Positive) {
            lo = e;
            saw_positive = true;
        } else if (s == Sign::Negative) {
            hi = e;
            break;
        }
    }
    if (hi && !saw_positive) {
        const auto [s, e] = sign_at(local.low_fallback, local.scan);
        if (s == Sign::Positive) lo = e;
    }
    if (!lo || !hi) throw NoBracket(rec.trace);
    const int scan_evaluations = static_cast<int>(rec.trace.size());

    while (hi->t - lo->t >= accuracy) {
        const double mid = 0.5 * (lo->t + hi->t);
        const auto [s, e] = sign_at(mid, local.bisect);
        if (s == Sign::Positive) {
            lo = e;
        } else if (s == Sign::Negative) {
            hi = e;
        } else {
            rec.limited_by_truncation = true;
            break;
        }
    }

    rec.t_lo = lo->t;
    rec.t_hi = hi->t;
    rec.t_star = 0.5 * (rec.t_lo + rec.t_hi);
    rec.uncertainty = 0.5 * (rec.t_hi - rec.t_lo);
    rec.evaluations = static_cast<int>(rec.trace.size());
    rec.outside_unit_interval = !(rec.t_star > 1.0 && rec.t_star < 2.0);
    auto& d = rec.diagnostics;
    d["scan_evaluations"] = scan_evaluations;
    d["escalations"] = escalations;
    d["p_lo"] = lo->value;
    d["p_lo_uncertainty"] = lo->uncertainty;
    d["p_hi"] = hi->value;
    d["p_hi_uncertainty"] = hi->uncertainty;
    d["slope"] = (hi->value - lo->value) / (hi->t - lo->t);
    // Linear interpolation of the zero between the bracket ends; finer than the midpoint.
    d["t_interpolated"] = lo->t + lo->value * (hi->t - lo->t) / (lo->value - hi->value);
    d["limited_by_truncation"] = rec.limited_by_truncation ? 1.0 : 0.0;
    d["base_re"] = local.pressure.base->re();
    d["base_im"] = local.pressure.base->im();
    return rec;
}

}  // namespace bowen
