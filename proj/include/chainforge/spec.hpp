#pragma once

#include "chainforge/fiber.hpp"
#include "chainforge/types.hpp"

#include <array>
#include <optional>
#include <string>

namespace chainforge {

// One horseshoe branch. I = [x_lo, x_hi] is the backward band (x side),
// J = [y_lo, y_hi] the forward band (y side). Orientation +1 keeps both axes,
// -1 reverses both, so every branch has base determinant +1:
//   orientation +1:  (x, y) -> (x_lo + x/5, 5 (y - y_lo))
//   orientation -1:  (x, y) -> (x_hi - x/5, 5 (y_hi - y))
struct BandSpec {
    double x_lo = 0, x_hi = 0, y_lo = 0, y_hi = 0;
    int orientation = 1;
};

// Compactly supported C2 bump, product of one-axis factors (1 - z^2)^3 with
// z = (w_j - center_j) / radii_j, zero outside the open support box.
struct PerturbationBump {
    Vec3 center = Vec3::Zero();
    Vec3 radii = Vec3::Ones();

    bool in_support(const Vec3& w) const;
    double value(const Vec3& w) const;
    Vec3 gradient(const Vec3& w) const;
};

struct SkewProductSpec {
    std::array<BandSpec, 4> bands;
    std::array<FiberMap, 4> fibers;
    // Ramp half-width of the partition-of-unity blend between neighbouring
    // fiber maps, as a fraction of each inter-band y-gap measured from the
    // gap midpoint; 0.5 spans the whole gap. Points in a gap escape in one
    // forward step, so this never influences recurrence.
    double blend_halfwidth_fraction = 0.5;
    std::optional<PerturbationBump> bump;
    double s = 0.0;       // applied bump strength
    double s_max = 0.009; // declared strength range, used by validation
    bool validated = false;

    const BandSpec& band(int id) const { return bands[id - 1]; }   // id in 1..4
    const FiberMap& fiber(int id) const { return fibers[id - 1]; }
};

// The reference system (frozen profile tables), not yet validated.
SkewProductSpec reference_spec();

// reference_spec() with the validated flag set; computed once, then copied.
const SkewProductSpec& validated_reference_spec();

// JSON round trip. Schema tag "chainforge-spec/1"; doubles survive exactly.
std::string spec_to_json(const SkewProductSpec& spec);
SkewProductSpec spec_from_json(const std::string& text);
SkewProductSpec spec_from_file(const std::string& path);
void spec_to_file(const SkewProductSpec& spec, const std::string& path);

}  // namespace chainforge
