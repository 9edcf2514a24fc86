#include "chainforge/fiber.hpp"

#include "chainforge/types.hpp"

#include <algorithm>
#include <utility>

namespace chainforge {

namespace {

void check_knots(const std::vector<HermiteKnot>& k) {
    if (k.size() < 2) throw UsageError("profile needs at least two knots");
    for (std::size_t i = 1; i < k.size(); ++i)
        if (!(k[i].t > k[i - 1].t)) throw UsageError("profile knots must be strictly increasing");
}

}  // namespace

HermiteCurve::HermiteCurve(const HermiteKnot* knots, std::size_t n) : k_(knots, knots + n) {
    check_knots(k_);
}

HermiteCurve::HermiteCurve(std::vector<HermiteKnot> knots) : k_(std::move(knots)) {
    check_knots(k_);
}

double HermiteCurve::value(double x) const {
    const std::size_t n = k_.size();
    if (x <= k_.front().t) return k_.front().u;
    if (x >= k_.back().t) return k_.back().u;
    std::size_t lo = 0, hi = n;  // locate segment: k_[i].t <= x < k_[i+1].t
    while (lo < hi) {
        std::size_t mid = (lo + hi) / 2;
        if (k_[mid].t <= x) lo = mid + 1; else hi = mid;
    }
    const std::size_t i = lo - 1;
    const double h = k_[i + 1].t - k_[i].t;
    const double s = (x - k_[i].t) / h;
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    const double h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s);
    const double h11 = s * s * (s - 1);
    return h00 * k_[i].u + h10 * h * k_[i].du + h01 * k_[i + 1].u + h11 * h * k_[i + 1].du;
}

double HermiteCurve::slope(double x) const {
    const std::size_t n = k_.size();
    if (x <= k_.front().t) return k_.front().du;
    if (x >= k_.back().t) return k_.back().du;
    std::size_t lo = 0, hi = n;
    while (lo < hi) {
        std::size_t mid = (lo + hi) / 2;
        if (k_[mid].t <= x) lo = mid + 1; else hi = mid;
    }
    const std::size_t i = lo - 1;
    const double h = k_[i + 1].t - k_[i].t;
    const double s = (x - k_[i].t) / h;
    const double dh00 = (6 * s * s - 6 * s) / h;
    const double dh10 = 3 * s * s - 4 * s + 1;
    const double dh01 = (-6 * s * s + 6 * s) / h;
    const double dh11 = 3 * s * s - 2 * s;
    return dh00 * k_[i].u + dh10 * k_[i].du + dh01 * k_[i + 1].u + dh11 * k_[i + 1].du;
}

double FiberMap::g(double t) const { return t + amplitude * profile.value(t); }

double FiberMap::dg(double t) const { return 1.0 + amplitude * profile.slope(t); }

double FiberMap::g_inverse(double y) const {
    double a = -3.0, b = 9.0;
    for (int i = 0; i < 80; ++i) {
        const double m = 0.5 * (a + b);
        if (g(m) < y) a = m; else b = m;
    }
    return 0.5 * (a + b);
}

}  // namespace chainforge
