// Small tour of the library at l = 2, c = 2: a few preimages, the pressure at two
// exponents, and a coarse dimension bracket. Runs in well under a minute.

#include <cstdio>

#include "bowen/dimension.hpp"
#include "bowen/periodic.hpp"
#include "bowen/preimages.hpp"

int main() {
    using namespace bowen;
    const MapParams p(2, {2.0, 0.0});

    const CylinderPoint w(p.log_c());
    const PreimageSet set = preimages(p, w, 3);
    std::printf("preimages of log c with |k| <= 3: %zu\n", set.branches.size());
    for (const auto& b : set.branches)
        std::printf("  k = %2d  x = %+.6f %+.6fi  |F'(x)| = %.4f\n", b.k, b.x.re(), b.x.im(), std::abs(b.deriv));

    const PeriodicPoint base = default_base_point(p);
    std::printf("tree base point: %+.6f %+.6fi, multiplier modulus %.4f\n", base.point.re(), base.point.im(),
                std::abs(base.multiplier));

    for (double t : {1.3, 1.8}) {
        const PressureEstimate e = pressure(p, t, 0.02);
        std::printf("P(%.1f) = %+.4f +- %.4f  (depth %d)\n", t, e.value, e.uncertainty, e.n);
    }

    // Coarse trees: quick, with a wider bracket than the default run.
    DimensionOptions coarse;
    coarse.scan = coarse.bisect = {3, 4};
    coarse.escalated = {4, 4};
    const DimensionRecord r = bowen_dimension(p, 0.02, coarse);
    std::printf("dimension bracket [%.4f, %.4f], t* = %.4f\n", r.t_lo, r.t_hi, r.t_star);
}
