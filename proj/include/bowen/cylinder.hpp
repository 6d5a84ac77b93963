#pragma once

#include <cmath>
#include <complex>
#include <numbers>

namespace bowen {

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Reduces an imaginary part to the canonical window (-pi, pi].
inline double canonical_imag(double im) noexcept {
    double r = std::remainder(im, two_pi);
    if (r <= -pi) r += two_pi;
    return r;
}

/// A point of the cylinder C / 2 pi i Z, stored by its representative with
/// imaginary part in (-pi, pi].
class CylinderPoint {
public:
    constexpr CylinderPoint() = default;
    explicit CylinderPoint(cplx z) noexcept : re_(z.real()), im_(canonical_imag(z.imag())) {}
    CylinderPoint(double re, double im) noexcept : re_(re), im_(canonical_imag(im)) {}

    double re() const noexcept { return re_; }
    double im() const noexcept { return im_; }
    cplx value() const noexcept { return {re_, im_}; }

    CylinderPoint conj() const noexcept { return CylinderPoint(re_, -im_); }

    friend bool operator==(const CylinderPoint&, const CylinderPoint&) = default;

private:
    double re_ = 0.0;
    double im_ = 0.0;
};

/// Shortest lift of a - b, i.e. the representative of [a - b] with Im in (-pi, pi].
inline cplx cylinder_delta(cplx a, cplx b) noexcept {
    const cplx d = a - b;
    return {d.real(), canonical_imag(d.imag())};
}

/// d([a],[b]) = min_k |a - b + 2 pi i k|.
inline double cylinder_distance(const CylinderPoint& a, const CylinderPoint& b) noexcept {
    return std::abs(cylinder_delta(a.value(), b.value()));
}

inline double cylinder_distance(cplx a, cplx b) noexcept {
    return std::abs(cylinder_delta(a, b));
}

}  // namespace bowen
