#include "chainforge/blender.hpp"

#include <algorithm>
#include <cmath>

#include "chainforge/validate.hpp"
#include "json.hpp"

namespace chainforge {

namespace {

double interp(const std::vector<std::pair<double, double>>& prof, double coord) {
    if (prof.empty()) throw UsageError("strip has no fiber profile");
    if (prof.size() == 1 || coord <= prof.front().first) return prof.front().second;
    if (coord >= prof.back().first) return prof.back().second;
    std::size_t lo = 0, hi = prof.size() - 1;
    while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        if (prof[mid].first <= coord)
            lo = mid;
        else
            hi = mid;
    }
    const double w = (coord - prof[lo].first) / (prof[hi].first - prof[lo].first);
    return prof[lo].second + w * (prof[hi].second - prof[lo].second);
}

std::vector<double> merged_coords(const CsStrip& s) {
    std::vector<double> c;
    c.reserve(s.lower.size() + s.upper.size());
    for (const auto& k : s.lower) c.push_back(k.first);
    for (const auto& k : s.upper) c.push_back(k.first);
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    return c;
}

// One strip system: the box, branch pair, direction, central window, and the
// two leaf heights a Hit is tested against.
struct StripSystem {
    int band_a, band_b;
    bool backward;
    double clip_lo, clip_hi;      // fiber extent of the box
    double window_lo, window_hi;  // central window the strip must meet
    double base_lo, base_hi;      // active-axis extent of the box
    double hit_first, hit_second;
    StripOutcome first, second;
    double floor_;
    const char* box;
};

StripSystem p_system(const SkewProductSpec& spec) {
    return {1,   2,   true,          -1.0,
            3.5, 0.5, 2.5,           0.0,
            7.0 / 3.0, 0.0, 3.0,     StripOutcome::HitP,
            StripOutcome::HitP2,     backward_center_expansion_floor(spec),
            "Q_p"};
}

StripSystem q_system(const SkewProductSpec& spec) {
    return {3,   4,   false,         1.5,
            6.0, 2.5, 4.5,           0.0,
            5.0, 5.0, 2.0,           StripOutcome::HitQ,
            StripOutcome::HitQ3,     forward_center_expansion_floor(spec),
            "Q_q"};
}

void require_valid_strip(const CsStrip& s, const StripSystem& sys) {
    if (s.lower.empty() || s.upper.empty()) throw UsageError("backward_step: empty strip profile");
    if (!(s.y_lo <= s.y_hi) || s.y_lo < sys.base_lo - 1e-12 || s.y_hi > sys.base_hi + 1e-12)
        throw UsageError("backward_step: strip base interval outside the box");
    for (const auto* prof : {&s.lower, &s.upper}) {
        for (std::size_t i = 0; i < prof->size(); ++i) {
            const double t = (*prof)[i].second;
            if (t < sys.clip_lo - 1e-12 || t > sys.clip_hi + 1e-12)
                throw UsageError("backward_step: strip fiber values outside the box");
            if (i > 0) {
                const double dc = (*prof)[i].first - (*prof)[i - 1].first;
                const double dt = (*prof)[i].second - (*prof)[i - 1].second;
                if (!(dc > 0) || std::abs(dt) > 0.1 * dc + 1e-12)
                    throw UsageError("backward_step: strip profile breaks the cone slope bound");
            }
        }
    }
    for (double c : merged_coords(s))
        if (interp(s.upper, c) < interp(s.lower, c) - 1e-12)
            throw UsageError("backward_step: strip has negative width");
}

StripOutcome input_hit(const CsStrip& s, const StripSystem& sys) {
    const std::vector<double> coords = merged_coords(s);
    auto straddles = [&](double v) {
        for (double c : coords)
            if (interp(s.lower, c) <= v && v <= interp(s.upper, c)) return true;
        return false;
    };
    if (straddles(sys.hit_first)) return sys.first;
    if (straddles(sys.hit_second)) return sys.second;
    return StripOutcome::Children;
}

// Active-axis transform of the step: backward runs pull the base interval
// into the band's forward slab, mirrored (forward) runs contract it into the
// branch image.
double base_transform(const BandSpec& b, bool backward, double c) {
    if (backward) return b.orientation > 0 ? b.y_lo + c / 5.0 : b.y_hi - c / 5.0;
    return b.orientation > 0 ? b.x_lo + c / 5.0 : b.x_hi - c / 5.0;
}

bool make_child(const CsStrip& parent, int band, const StripSystem& sys,
                const SkewProductSpec& spec, CsStrip& out) {
    const BandSpec& b = spec.band(band);
    const FiberMap& f = spec.fiber(band);
    CsStrip child;
    const double c1 = base_transform(b, sys.backward, parent.y_lo);
    const double c2 = base_transform(b, sys.backward, parent.y_hi);
    child.y_lo = std::min(c1, c2);
    child.y_hi = std::max(c1, c2);

    auto map_profile = [&](const std::vector<std::pair<double, double>>& prof, bool is_lower) {
        std::vector<std::pair<double, double>> mapped;
        mapped.reserve(prof.size());
        for (const auto& [c, t] : prof) {
            const double tc = sys.backward ? f.g_inverse(t) : f.g(t);
            const double clipped =
                is_lower ? std::max(tc, sys.clip_lo) : std::min(tc, sys.clip_hi);
            mapped.emplace_back(base_transform(b, sys.backward, c), clipped);
        }
        std::sort(mapped.begin(), mapped.end());
        return mapped;
    };
    child.lower = map_profile(parent.lower, true);
    child.upper = map_profile(parent.upper, false);

    // empty anywhere -> the preimage misses the box there
    for (double c : merged_coords(child))
        if (interp(child.upper, c) < interp(child.lower, c)) return false;
    // must meet the central window
    bool meets = false;
    for (double c : merged_coords(child))
        if (interp(child.upper, c) >= sys.window_lo && interp(child.lower, c) <= sys.window_hi)
            meets = true;
    if (!meets) return false;
    // width growth certificate; never triggers for valid inputs at s = 0
    if (child.width() < sys.floor_ * parent.width() - 1e-13) return false;
    out = std::move(child);
    return true;
}

std::vector<CsStrip> step_children(const CsStrip& strip, const StripSystem& sys,
                                   const SkewProductSpec& spec) {
    std::vector<CsStrip> kids;
    for (int band : {sys.band_a, sys.band_b}) {
        CsStrip child;
        if (make_child(strip, band, sys, spec, child)) kids.push_back(std::move(child));
    }
    if (kids.empty()) throw UsageError(std::string("strip escaped ") + sys.box);
    return kids;
}

}  // namespace

double CsStrip::floor_at(double coord) const { return interp(lower, coord); }
double CsStrip::ceil_at(double coord) const { return interp(upper, coord); }

double CsStrip::width() const {
    double w = 1e300;
    for (double c : merged_coords(*this)) w = std::min(w, interp(upper, c) - interp(lower, c));
    return w;
}

CsStrip CsStrip::constant(double y_lo, double y_hi, double t_lo, double t_hi) {
    CsStrip s;
    s.y_lo = y_lo;
    s.y_hi = y_hi;
    s.lower = {{y_lo, t_lo}};
    s.upper = {{y_lo, t_hi}};
    return s;
}

const char* to_string(StripOutcome o) {
    switch (o) {
        case StripOutcome::Children: return "Children";
        case StripOutcome::HitP: return "HitP";
        case StripOutcome::HitP2: return "HitP2";
        case StripOutcome::HitQ: return "HitQ";
        case StripOutcome::HitQ3: return "HitQ3";
    }
    return "?";
}

StepResult backward_step(const CsStrip& strip, const SkewProductSpec& spec, bool mirrored) {
    if (!spec.validated) throw UsageError("backward_step: spec not validated");
    const StripSystem sys = mirrored ? q_system(spec) : p_system(spec);
    require_valid_strip(strip, sys);
    StepResult res;
    res.outcome = input_hit(strip, sys);
    if (res.outcome != StripOutcome::Children) return res;
    res.strips = step_children(strip, sys, spec);
    return res;
}

GrowthRun width_growth_run(const CsStrip& initial, int max_iters, const SkewProductSpec& spec,
                           bool mirrored) {
    if (!spec.validated) throw UsageError("width_growth_run: spec not validated");
    if (max_iters < 0 || max_iters > 200)
        throw UsageError("width_growth_run: max_iters must be in [0, 200]");
    const StripSystem sys = mirrored ? q_system(spec) : p_system(spec);
    require_valid_strip(initial, sys);

    GrowthRun run;
    run.expansion_floor = sys.floor_;
    CsStrip cur = initial;
    for (;;) {
        const StripOutcome h = input_hit(cur, sys);
        if (h != StripOutcome::Children) {
            run.terminal = h;
            run.hit = true;
            break;
        }
        if (run.steps >= max_iters) break;
        std::vector<CsStrip> kids = step_children(cur, sys, spec);
        std::size_t best = 0;
        for (std::size_t i = 1; i < kids.size(); ++i)
            if (kids[i].width() > kids[best].width()) best = i;
        const double w_in = cur.width();
        run.ratios.push_back(kids[best].width() / w_in);
        run.widths.push_back(kids[best].width());
        cur = std::move(kids[best]);
        ++run.steps;
    }
    if (!run.ratios.empty()) {
        double sum = 0;
        for (double r : run.ratios) sum += std::log(r);
        run.lambda_hat = std::exp(sum / double(run.ratios.size()));
        run.min_ratio = *std::min_element(run.ratios.begin(), run.ratios.end());
    }
    return run;
}

std::string growth_run_to_json(const GrowthRun& run) {
    nlohmann::ordered_json j;
    j["steps"] = run.steps;
    j["hit"] = run.hit;
    j["terminal"] = run.hit ? to_string(run.terminal) : "MaxIters";
    j["lambda_hat"] = run.lambda_hat;
    j["min_ratio"] = run.min_ratio;
    j["expansion_floor"] = run.expansion_floor;
    j["widths"] = run.widths;
    j["ratios"] = run.ratios;
    return j.dump(2);
}

}  // namespace chainforge
