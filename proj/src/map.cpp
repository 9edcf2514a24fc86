#include "chainforge/map.hpp"

#include <cmath>

namespace chainforge {

namespace {

void require_validated(const SkewProductSpec& spec) {
    if (!spec.validated)
        throw UsageError("spec not validated: run validate_spec before applying the map");
}

// Quintic smoothstep, C2 at both ends.
double smooth01(double u) {
    if (u <= 0.0) return 0.0;
    if (u >= 1.0) return 1.0;
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
}

}  // namespace

// Solve tau + s*beta(x, y, tau) = t for tau. The fiber partial of the bump
// term is far below 1, so the plain fixed-point iteration contracts fast;
// the iteration count is fixed for determinism.
double unshift_fiber(const SkewProductSpec& spec, double x, double y, double t) {
    if (!spec.bump || spec.s == 0.0) return t;
    double tau = t;
    for (int i = 0; i < 24; ++i)
        tau = t - spec.s * spec.bump->value(Vec3(x, y, tau));
    return tau;
}

std::optional<int> band_index(double x, double y, Direction dir, const SkewProductSpec& spec) {
    for (int i = 0; i < 4; ++i) {
        const BandSpec& b = spec.bands[i];
        if (dir == Direction::Forward) {
            if (y >= b.y_lo && y <= b.y_hi) return i + 1;
        } else {
            if (x >= b.x_lo && x <= b.x_hi) return i + 1;
        }
    }
    return std::nullopt;
}

void branch_forward(const BandSpec& b, double x, double y, double& xn, double& yn) {
    if (b.orientation > 0) {
        xn = b.x_lo + x / 5.0;
        yn = 5.0 * (y - b.y_lo);
    } else {
        xn = b.x_hi - x / 5.0;
        yn = 5.0 * (b.y_hi - y);
    }
}

void branch_inverse(const BandSpec& b, double xn, double yn, double& x, double& y) {
    if (b.orientation > 0) {
        x = 5.0 * (xn - b.x_lo);
        y = b.y_lo + yn / 5.0;
    } else {
        x = 5.0 * (b.x_hi - xn);
        y = b.y_hi - yn / 5.0;
    }
}

double fiber_value_at(const SkewProductSpec& spec, double y, double t) {
    // below the first band / above the last: nearest band applies
    if (y <= spec.bands[0].y_hi) return spec.fibers[0].g(t);
    if (y >= spec.bands[3].y_lo) return spec.fibers[3].g(t);
    for (int i = 0; i < 3; ++i) {
        const double hi = spec.bands[i].y_hi, lo = spec.bands[i + 1].y_lo;
        if (y >= hi && y <= lo) {
            const double gap = lo - hi;
            const double mid = 0.5 * (hi + lo);
            const double hw = spec.blend_halfwidth_fraction * gap;
            const double w = hw > 0.0 ? smooth01((y - (mid - hw)) / (2.0 * hw))
                                      : (y < mid ? 0.0 : 1.0);
            return (1.0 - w) * spec.fibers[i].g(t) + w * spec.fibers[i + 1].g(t);
        }
        if (y > spec.bands[i + 1].y_lo && y <= spec.bands[i + 1].y_hi)
            return spec.fibers[i + 1].g(t);
    }
    return spec.fibers[3].g(t);  // unreachable for ordered bands
}

OrbitState apply(const OrbitState& state, const SkewProductSpec& spec) {
    require_validated(spec);
    if (!state.inside) return state;
    const Vec3& z = state.z;
    const auto b = band_index(z.x(), z.y(), Direction::Forward, spec);
    if (!b) return OrbitState::escaped(Direction::Forward, ExitFace::YBandGap, state.step + 1, z);
    double xn, yn;
    branch_forward(spec.band(*b), z.x(), z.y(), xn, yn);
    double tn = spec.fiber(*b).g(z.z());
    if (spec.bump && spec.s != 0.0) tn += spec.s * spec.bump->value(Vec3(xn, yn, tn));
    const Vec3 zn(xn, yn, tn);
    if (tn > kFiberHi)
        return OrbitState::escaped(Direction::Forward, ExitFace::FiberAbove, state.step + 1, zn);
    if (tn < kFiberLo)
        return OrbitState::escaped(Direction::Forward, ExitFace::FiberBelow, state.step + 1, zn);
    OrbitState out = state;
    out.z = zn;
    out.step = state.step + 1;
    return out;
}

OrbitState apply_inverse(const OrbitState& state, const SkewProductSpec& spec) {
    require_validated(spec);
    if (!state.inside) return state;
    const Vec3& z = state.z;
    const auto b = band_index(z.x(), z.y(), Direction::Backward, spec);
    if (!b) return OrbitState::escaped(Direction::Backward, ExitFace::XBandGap, state.step + 1, z);
    const double tau = unshift_fiber(spec, z.x(), z.y(), z.z());
    double xp, yp;
    branch_inverse(spec.band(*b), z.x(), z.y(), xp, yp);
    const double tp = spec.fiber(*b).g_inverse(tau);
    const Vec3 zp(xp, yp, tp);
    if (tp < kFiberLo)
        return OrbitState::escaped(Direction::Backward, ExitFace::FiberBelow, state.step + 1, zp);
    if (tp > kFiberHi)
        return OrbitState::escaped(Direction::Backward, ExitFace::FiberAbove, state.step + 1, zp);
    OrbitState out = state;
    out.z = zp;
    out.step = state.step + 1;
    return out;
}

Mat3 differential(const Vec3& point, const SkewProductSpec& spec, Direction dir) {
    require_validated(spec);
    if (dir == Direction::Forward) {
        const auto b = band_index(point.x(), point.y(), Direction::Forward, spec);
        if (!b) throw UsageError("differential: outside branch domain");
        const BandSpec& B = spec.band(*b);
        const double sg = B.orientation > 0 ? 1.0 : -1.0;
        double xn, yn;
        branch_forward(B, point.x(), point.y(), xn, yn);
        const double t1 = spec.fiber(*b).g(point.z());
        const double gp = spec.fiber(*b).dg(point.z());
        Mat3 J = Mat3::Zero();
        J(0, 0) = sg / 5.0;
        J(1, 1) = 5.0 * sg;
        if (spec.bump && spec.s != 0.0) {
            const Vec3 grad = spec.bump->gradient(Vec3(xn, yn, t1));
            J(2, 0) = spec.s * grad.x() * (sg / 5.0);
            J(2, 1) = spec.s * grad.y() * (5.0 * sg);
            J(2, 2) = (1.0 + spec.s * grad.z()) * gp;
        } else {
            J(2, 2) = gp;
        }
        return J;
    }
    // backward: closed-form inverse of the forward differential at the preimage
    const auto b = band_index(point.x(), point.y(), Direction::Backward, spec);
    if (!b) throw UsageError("differential: outside branch domain");
    OrbitState pre = apply_inverse(OrbitState::at(point), spec);
    if (!pre.inside) throw UsageError("differential: preimage escapes the block");
    const Mat3 F = differential(pre.z, spec, Direction::Forward);
    Mat3 J = Mat3::Zero();
    J(0, 0) = 1.0 / F(0, 0);
    J(1, 1) = 1.0 / F(1, 1);
    J(2, 2) = 1.0 / F(2, 2);
    J(2, 0) = -F(2, 0) / (F(0, 0) * F(2, 2));
    J(2, 1) = -F(2, 1) / (F(1, 1) * F(2, 2));
    return J;
}

}  // namespace chainforge
