#pragma once

#include "chainforge/spec.hpp"

#include <string>
#include <vector>

namespace chainforge {

struct CheckResult {
    std::string name;
    bool pass = false;
    double measured = 0.0;   // headline number for the check
    Vec3 witness = Vec3::Zero();  // worst sample point (band id, y or t, value) per check
    std::string detail;
};

// Cone-field invariance summary. Margins are 1 minus the worst expansion of
// the cone inequality over all sampled boundary vectors; positive means the
// image cone sits strictly inside.
struct ConeReport {
    std::size_t samples = 0;
    int iterate_count = 1;  // reported, not prescribed
    double margin_u = 0.0;   // unstable cone, forward invariant
    double margin_cu = 0.0;  // center-unstable cone, forward invariant
    double margin_s = 0.0;   // stable cone, backward invariant
    double margin_cs = 0.0;  // center-stable cone, backward invariant
    double central_lo = 0.0, central_hi = 0.0;  // perturbed fiber derivative range
    bool pass = false;
};

struct ValidationReport {
    std::vector<CheckResult> checks;
    ConeReport cones;
    // Unperturbed fiber derivative range over the sweep grid.
    double fiber_derivative_lo = 0.0, fiber_derivative_hi = 0.0;
    // 1 / (max fiber derivative of bands 1,2 on the contraction window);
    // every backward central step through those bands expands width by at
    // least this factor.
    double backward_center_expansion_floor = 0.0;
    std::size_t grid_resolution = 0;
    bool all_pass = false;

    const CheckResult* find(const std::string& name) const;
};

// Runs every check on a dense deterministic grid and collects all failures
// (never aborts on the first). Sets spec.validated when everything passes.
ValidationReport validate_spec(SkewProductSpec& spec, std::size_t grid_resolution = 200000);

// Standalone central width-expansion floors, measured on the same grid the
// full validation uses. Backward: 1 / max g' of bands 1,2 over [-1, 3.5].
// Forward: min g' of bands 3,4 over [1.5, 6] (may be below 1; the reference
// profiles only engineer the backward floor).
double backward_center_expansion_floor(const SkewProductSpec& spec,
                                       std::size_t grid_resolution = 200000);
double forward_center_expansion_floor(const SkewProductSpec& spec,
                                      std::size_t grid_resolution = 200000);

std::string validation_report_to_json(const ValidationReport& report);

}  // namespace chainforge
