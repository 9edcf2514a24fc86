#pragma once

#include "chainforge/spec.hpp"

#include <optional>

namespace chainforge {

// Forward bands are read off the y axis (J_i), backward bands off x (I_i).
// None means the next image (resp. preimage) escapes the block.
std::optional<int> band_index(double x, double y, Direction dir, const SkewProductSpec& spec);

// Exact affine branch action on base coordinates.
void branch_forward(const BandSpec& b, double x, double y, double& xn, double& yn);
void branch_inverse(const BandSpec& b, double xn, double yn, double& x, double& y);

// Fiber map at base height y: the band's map inside a band, a quintic
// partition-of-unity blend of the two neighbours across a gap. Orbits never
// sample the blended region (gap points escape first); it exists so the map
// is defined and smooth on the whole block.
double fiber_value_at(const SkewProductSpec& spec, double y, double t);

// One step of the skew product. Escaped states pass through unchanged.
OrbitState apply(const OrbitState& state, const SkewProductSpec& spec);
OrbitState apply_inverse(const OrbitState& state, const SkewProductSpec& spec);

// Removes the perturbation shift from a post-step fiber value: solves
// tau + s*beta(x, y, tau) = t. Identity when the map is unperturbed.
double unshift_fiber(const SkewProductSpec& spec, double x, double y, double t);

// Exact analytic differential of the (bump-perturbed) map at an inside point
// with a defined band. The matrix is lower triangular; its lower-right entry
// is the fiber derivative and its determinant is positive.
Mat3 differential(const Vec3& point, const SkewProductSpec& spec, Direction dir);

}  // namespace chainforge
