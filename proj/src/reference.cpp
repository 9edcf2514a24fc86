#include "chainforge/spec.hpp"

#include <cmath>

namespace chainforge {

namespace {

// Frozen reference fiber profiles. Knot slopes are piecewise linear between
// corner knots, so the curve never overshoots between segment endpoints and
// the monotonicity windows can be certified from knot data alone.
static constexpr HermiteKnot k_band1[] = {{-1, 0.29999999999999999, -0.29999999999999999}, {0, 0, -0.29999999999999999}, {0.20000000000000001, -0.059999999999999998, -0.29999999999999999}, {0.29999999999999999, -0.075499999999999998, -0.01}, {1.0800000000000001, -0.083299999999999999, -0.01}, {1.1399999999999999, -0.10688214285714286, -0.77607142857142852}, {1.3600000000000001, -0.27761785714285714, -0.77607142857142852}, {1.4199999999999999, -0.30120000000000002, -0.01}, {3.5, -0.32200000000000001, -0.01}, {3.6000000000000001, -0.32250000000000001, 0}, {3.7200000000000002, -0.26550000000000001, 0.94999999999999996}, {3.98, -0.018499999999999999, 0.94999999999999996}, {4, 0, 0.90000000000000002}, {4.0999999999999996, 0.0625, 0.34999999999999998}, {6, 0.72750000000000004, 0.34999999999999998}};

static constexpr HermiteKnot k_band2[] = {{-1, 1.4870000000000001, -0.29999999999999999}, {0, 1.1870000000000001, -0.29999999999999999}, {0.10000000000000001, 1.147, -0.5}, {1.3500000000000001, 0.52200000000000002, -0.5}, {1.45, 0.49299999999999999, -0.080000000000000002}, {2.5, 0.40899999999999997, -0.080000000000000002}, {2.6000000000000001, 0.35999999999999999, -0.90000000000000002}, {3, 0, -0.90000000000000002}, {3.1000000000000001, -0.065000000000000002, -0.40000000000000002}, {3.3999999999999999, -0.13250000000000001, -0.050000000000000003}, {3.5, -0.13550000000000001, -0.01}, {3.6000000000000001, -0.13600000000000001, 0}, {3.7000000000000002, -0.11657142857142858, 0.38857142857142857}, {4, 0, 0.38857142857142857}, {4.4000000000000004, 0.15542857142857142, 0.38857142857142857}, {4.5999999999999996, 0.21928571428571428, 0.25}, {6, 0.56928571428571428, 0.25}};

static constexpr HermiteKnot k_band3[] = {{-1, 0.5, -0.14999999999999999}, {0, 0.34999999999999998, -0.14999999999999999}, {0.55833333333333335, 0.26624999999999999, -0.14999999999999999}, {0.90833333333333333, 0.082500000000000004, -0.90000000000000002}, {1, 0, -0.90000000000000002}, {1.3999999999999999, -0.17999999999999999, 0}, {2, 0, 0.59999999999999998}, {2.1000000000000001, 0.047500000000000001, 0.34999999999999998}, {2.5, 0.1875, 0.34999999999999998}, {2.7999999999999998, 0.38250000000000001, 0.94999999999999996}, {5.5, 2.9474999999999998, 0.94999999999999996}, {5.7000000000000002, 3.0724999999999998, 0.29999999999999999}, {6, 3.1625000000000001, 0.29999999999999999}};

static constexpr HermiteKnot k_band4[] = {{-1, 0.76249999999999996, -0.29999999999999999}, {0.59999999999999998, 0.28249999999999997, -0.29999999999999999}, {0.90000000000000002, 0.095000000000000001, -0.94999999999999996}, {1, 0, -0.94999999999999996}, {1.3263157894736841, -0.31, -0.94999999999999996}, {1.3999999999999999, -0.34499999999999997, 0}, {1.5, -0.34439999999999998, 0.012}, {3.8999999999999999, -0.31559999999999999, 0.012}, {4, -0.29999999999999999, 0.29999999999999999}, {5, 0, 0.29999999999999999}, {5.1500000000000004, 0.089999999999999997, 0.90000000000000002}, {6, 0.85499999999999998, 0.90000000000000002}};

template <std::size_t N>
FiberMap make_fiber(const HermiteKnot (&knots)[N], double attracting, double repelling) {
    FiberMap f;
    f.profile = HermiteCurve(knots, N);
    f.amplitude = 0.15;
    f.attracting = attracting;
    f.repelling = repelling;
    return f;
}

}  // namespace

SkewProductSpec reference_spec() {
    SkewProductSpec spec;
    spec.bands[0] = {0.1, 1.1, 0.1, 1.1, +1};
    spec.bands[1] = {1.2, 2.2, 1.2, 2.2, -1};
    spec.bands[2] = {2.8, 3.8, 2.8, 3.8, +1};
    spec.bands[3] = {3.9, 4.9, 3.9, 4.9, -1};
    spec.fibers[0] = make_fiber(k_band1, 0.0, 4.0);
    spec.fibers[1] = make_fiber(k_band2, 3.0, 4.0);
    spec.fibers[2] = make_fiber(k_band3, 1.0, 2.0);
    spec.fibers[3] = make_fiber(k_band4, 1.0, 5.0);
    spec.blend_halfwidth_fraction = 0.5;
    spec.s = 0.0;
    spec.s_max = 0.009;
    spec.validated = false;
    return spec;
}

bool PerturbationBump::in_support(const Vec3& w) const {
    for (int j = 0; j < 3; ++j)
        if (std::abs(w[j] - center[j]) >= radii[j]) return false;
    return true;
}

double PerturbationBump::value(const Vec3& w) const {
    double prod = 1.0;
    for (int j = 0; j < 3; ++j) {
        const double z = (w[j] - center[j]) / radii[j];
        const double q = 1.0 - z * z;
        if (q <= 0.0) return 0.0;
        prod *= q * q * q;
    }
    return prod;
}

Vec3 PerturbationBump::gradient(const Vec3& w) const {
    double q[3], z[3];
    for (int j = 0; j < 3; ++j) {
        z[j] = (w[j] - center[j]) / radii[j];
        q[j] = 1.0 - z[j] * z[j];
        if (q[j] <= 0.0) return Vec3::Zero();
    }
    Vec3 grad;
    for (int j = 0; j < 3; ++j) {
        double others = 1.0;
        for (int k = 0; k < 3; ++k)
            if (k != j) others *= q[k] * q[k] * q[k];
        grad[j] = -6.0 * z[j] * q[j] * q[j] / radii[j] * others;
    }
    return grad;
}

}  // namespace chainforge
