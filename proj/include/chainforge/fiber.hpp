#pragma once

#include <cstddef>
#include <vector>

namespace chainforge {

struct HermiteKnot {
    double t, u, du;
};

// C1 piecewise-cubic curve through (t, u) knots with prescribed knot slopes.
// Values extrapolate as constants beyond the end knots; the slope clamps to
// the end knot slopes there, so slope() is continuous on all of R.
class HermiteCurve {
public:
    HermiteCurve() = default;
    HermiteCurve(const HermiteKnot* knots, std::size_t n);
    explicit HermiteCurve(std::vector<HermiteKnot> knots);

    double value(double x) const;
    double slope(double x) const;
    const std::vector<HermiteKnot>& knots() const { return k_; }

private:
    std::vector<HermiteKnot> k_;
};

// Fiber map g(t) = t + amplitude * u(t). Increasing whenever
// amplitude * |u'| < 1, which validation enforces with margin.
struct FiberMap {
    HermiteCurve profile;
    double amplitude = 0.15;
    double attracting = 0.0;  // attracting fixed value of g
    double repelling = 0.0;   // repelling fixed value of g

    double g(double t) const;
    double dg(double t) const;
    // Monotone bisection on [-3, 9], fixed 80 iterations. Deterministic.
    double g_inverse(double y) const;
};

}  // namespace chainforge
