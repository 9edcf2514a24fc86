#pragma once

#include "chainforge/spec.hpp"

#include <string>
#include <utility>
#include <vector>

namespace chainforge {

// Center-stable strip in the lower trapping box: a ruled surface spanning the
// full extent of the passive base axis over an interval of the active one,
// bounded in the fiber by two polylines. Unperturbed strips are plain
// t-intervals (single-knot profiles). Default runs live in Q_p with the
// active axis y; mirrored runs live in Q_q with the active axis x.
struct CsStrip {
    double y_lo = 0, y_hi = 0;  // active base interval
    std::vector<std::pair<double, double>> lower, upper;  // (base coord, t)

    double floor_at(double coord) const;
    double ceil_at(double coord) const;
    double width() const;  // min fiber extent over the profile knots
    static CsStrip constant(double y_lo, double y_hi, double t_lo, double t_hi);
};

enum class StripOutcome { Children, HitP, HitP2, HitQ, HitQ3 };

const char* to_string(StripOutcome o);

struct StepResult {
    StripOutcome outcome = StripOutcome::Children;
    std::vector<CsStrip> strips;  // surviving children in band order
};

// One backward step: preimages of the strip through branches 1 and 2, clipped
// to the Q_p fiber range [-1, 3.5], kept only if they meet C x [0.5, 2.5] and
// expand the width by at least the measured floor. If the input strip already
// meets one of the vertical unstable leaves (t = 0 at the p column, t = 3 at
// the p_2 column) the step reports that Hit instead. With mirrored = true the
// forward analog runs in Q_q through branches 3 and 4 (clip [1.5, 6], window
// C x [2.5, 4.5], leaves t = 5 and t = 2).
// Errors: invalid strip, or no surviving child ("strip escaped Q_p").
StepResult backward_step(const CsStrip& strip, const SkewProductSpec& spec,
                         bool mirrored = false);

struct GrowthRun {
    std::vector<double> widths;  // width after each completed step
    std::vector<double> ratios;  // per-step expansion factors
    StripOutcome terminal = StripOutcome::Children;  // Children means MaxIters
    bool hit = false;
    int steps = 0;
    double lambda_hat = 0;  // geometric mean of the ratios
    double min_ratio = 0;
    double expansion_floor = 0;  // measured floor the run was filtered by
};

// Iterates backward_step keeping the widest child until a Hit or max_iters
// (<= 200) steps. The width sequence certifies the central expansion: every
// ratio is at least the floor, and the run terminates by Hit well before the
// width exceeds the box's central extent.
GrowthRun width_growth_run(const CsStrip& initial, int max_iters, const SkewProductSpec& spec,
                           bool mirrored = false);

std::string growth_run_to_json(const GrowthRun& run);

}  // namespace chainforge
