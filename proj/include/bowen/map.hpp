#pragma once

// The family f(z) = l z + c - (l - 1) log c - e^z and its projection F_c to the
// cylinder C / 2 pi i Z. Because l is an integer, f(z + 2 pi i k) = f(z) + 2 pi i l k,
// so every quantity here is independent of the chosen lift.

#include <cmath>
#include <complex>
#include <limits>
#include <string>

#include "bowen/cylinder.hpp"
#include "bowen/errors.hpp"

namespace bowen {

/// The pair (l, c) with l >= 2 and c in the open disk D(l, 1).
class MapParams {
public:
    MapParams(int ell, cplx c) : ell_(ell), c_(c) {
        if (ell < 2) throw InvalidArgument("ell must be >= 2, got " + std::to_string(ell));
        if (!(std::abs(c - static_cast<double>(ell)) < 1.0))
            throw InvalidArgument("c must satisfy |c - ell| < 1");
        log_c_ = std::log(c_);  // principal branch, Re c > 0 on the disk
        shift_ = c_ - static_cast<double>(ell_ - 1) * log_c_;
    }

    int ell() const noexcept { return ell_; }
    double ell_d() const noexcept { return static_cast<double>(ell_); }
    cplx c() const noexcept { return c_; }
    cplx log_c() const noexcept { return log_c_; }
    /// c - (l - 1) log c, the additive constant of f.
    cplx shift() const noexcept { return shift_; }
    /// Multiplier of the attracting fixed point log c.
    cplx multiplier() const noexcept { return ell_d() - c_; }
    /// The critical point log l (one representative on the cylinder).
    CylinderPoint critical_point() const noexcept { return CylinderPoint(std::log(ell_d()), 0.0); }

    MapParams conj() const { return MapParams(ell_, std::conj(c_)); }
    MapParams with_c(cplx c) const { return MapParams(ell_, c); }

private:
    int ell_;
    cplx c_;
    cplx log_c_;
    cplx shift_;
};

/// f evaluated on a lift, without reduction to the cylinder.
inline cplx evaluate_lift(const MapParams& p, cplx z) noexcept {
    return p.ell_d() * z + p.shift() - std::exp(z);
}

/// F_c([z]). Inputs with Re z beyond ~709 overflow e^z.
inline CylinderPoint evaluate(const MapParams& p, const CylinderPoint& z) noexcept {
    return CylinderPoint(evaluate_lift(p, z.value()));
}

/// F_c^n([z]).
inline CylinderPoint iterate(const MapParams& p, CylinderPoint z, int n) noexcept {
    for (int i = 0; i < n; ++i) z = evaluate(p, z);
    return z;
}

/// F_c'(z) = l - e^z.
inline cplx derivative(const MapParams& p, const CylinderPoint& z) noexcept {
    return p.ell_d() - std::exp(z.value());
}

/// d f_c(z) / d c = 1 - (l - 1) / c. It does not depend on z.
inline cplx param_derivative(const MapParams& p, const CylinderPoint& /*z*/ = {}) noexcept {
    return 1.0 - static_cast<double>(p.ell() - 1) / p.c();
}

/// (F^n)'(z) stored as unit phase and log-modulus so that long orbits cannot overflow.
struct OrbitDerivative {
    cplx phase{1.0, 0.0};
    double log_abs = 0.0;

    double abs() const noexcept { return std::exp(log_abs); }
    cplx value() const noexcept { return abs() * phase; }

    void multiply(cplx factor) noexcept {
        const double m = std::abs(factor);
        if (m == 0.0) {
            log_abs = -std::numeric_limits<double>::infinity();
            phase = {1.0, 0.0};
            return;
        }
        log_abs += std::log(m);
        phase *= factor / m;
    }
};

/// Product of F'(F^i(z)) for i = 0..n-1.
inline OrbitDerivative orbit_derivative(const MapParams& p, CylinderPoint z, int n) {
    if (n < 1) throw InvalidArgument("orbit_derivative needs n >= 1");
    OrbitDerivative d;
    for (int i = 0; i < n; ++i) {
        d.multiply(derivative(p, z));
        z = evaluate(p, z);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Fatou trichotomy

enum class OrbitTag { AttractedToLogC, BakerEscape, EscapePlusInfinity, Unresolved };

inline const char* to_string(OrbitTag tag) noexcept {
    switch (tag) {
        case OrbitTag::AttractedToLogC: return "AttractedToLogC";
        case OrbitTag::BakerEscape: return "BakerEscape";
        case OrbitTag::EscapePlusInfinity: return "EscapePlusInfinity";
        case OrbitTag::Unresolved: return "Unresolved";
    }
    return "?";
}

struct OrbitClass {
    OrbitTag tag = OrbitTag::Unresolved;
    int iterations_used = 0;
};

/// Re z above this value counts toward escape to +infinity.
inline double escape_threshold(const MapParams& p) noexcept {
    return std::max(50.0, 10.0 * p.ell_d());
}

inline constexpr int escape_confirmation_window = 5;

/// Past this real part e^z overflows a double; the orbit is treated as escaped.
inline constexpr double overflow_real_part = 700.0;

/// Proximity to log c that is taken as capture by the attracting basin.
inline double default_attraction_radius(const MapParams& p) noexcept {
    return std::min(0.05, 0.5 * (1.0 - std::abs(p.multiplier())));
}

inline OrbitClass classify_orbit(const MapParams& p, CylinderPoint z, int max_iter,
                                 double radius_eps) {
    if (max_iter < 1) throw InvalidArgument("classify_orbit needs max_iter >= 1");
    if (!(radius_eps > 0.0)) throw InvalidArgument("classify_orbit needs radius_eps > 0");
    const CylinderPoint fixed(p.log_c());
    const double baker_edge = -2.0 * p.ell_d();
    const double escape = escape_threshold(p);
    int streak = 0;
    for (int i = 0; i <= max_iter; ++i) {
        if (cylinder_distance(z, fixed) < radius_eps) return {OrbitTag::AttractedToLogC, i};
        if (z.re() < baker_edge) return {OrbitTag::BakerEscape, i};
        if (z.re() > escape) {
            ++streak;
            if (streak >= escape_confirmation_window || z.re() > overflow_real_part)
                return {OrbitTag::EscapePlusInfinity, i};
        } else {
            streak = 0;
        }
        if (i == max_iter) break;
        z = evaluate(p, z);
    }
    return {OrbitTag::Unresolved, max_iter};
}

inline OrbitClass classify_orbit(const MapParams& p, CylinderPoint z, int max_iter) {
    return classify_orbit(p, z, max_iter, default_attraction_radius(p));
}

}  // namespace bowen
