#include "chainforge/manifolds.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "chainforge/map.hpp"
#include "chainforge/symbolic.hpp"
#include "json.hpp"

namespace chainforge {

namespace {

void require_validated(const SkewProductSpec& spec, const char* who) {
    if (!spec.validated)
        throw UsageError(std::string(who) + ": spec not validated: run validate_spec first");
}

double branch_x(const BandSpec& b, double x) {
    return b.orientation > 0 ? b.x_lo + x / 5.0 : b.x_hi - x / 5.0;
}

double branch_x_back(const BandSpec& b, double x) {
    return b.orientation > 0 ? 5.0 * (x - b.x_lo) : 5.0 * (b.x_hi - x);
}

double pull_y(const BandSpec& b, double y) {
    return b.orientation > 0 ? b.y_lo + y / 5.0 : b.y_hi - y / 5.0;
}

struct Anchors {
    Vec3 p, q;
};

Anchors anchors(const SkewProductSpec& spec) {
    const BasePoint bp = base_point_of_word(Word::parse("1"), spec);
    const BasePoint bq = base_point_of_word(Word::parse("4"), spec);
    return {Vec3(bp.x, bp.y, spec.fiber(1).attracting),
            Vec3(bq.x, bq.y, spec.fiber(4).repelling)};
}

bool in_block(const Vec3& z) {
    return z.x() >= kBaseLo && z.x() <= kBaseHi && z.y() >= kBaseLo && z.y() <= kBaseHi &&
           z.z() >= kFiberLo && z.z() <= kFiberHi;
}

// Piecewise-linear resampling of a fiber profile with midpoint refinement
// until the interpolation sag drops below 1e-6.
std::vector<std::pair<double, double>> sample_profile(const std::function<double(double)>& f) {
    std::vector<std::pair<double, double>> out;
    std::function<void(double, double, double, double, int)> refine =
        [&](double a, double fa, double b, double fb, int d) {
            const double m = 0.5 * (a + b);
            const double fm = f(m);
            if (d < 12 && std::abs(fm - 0.5 * (fa + fb)) > 1e-6) {
                refine(a, fa, m, fm, d + 1);
                refine(m, fm, b, fb, d + 1);
                return;
            }
            out.emplace_back(a, fa);
            out.emplace_back(m, fm);
        };
    const int coarse = 16;
    double prev = kBaseLo, fprev = f(prev);
    for (int j = 1; j <= coarse; ++j) {
        const double c = kBaseLo + (kBaseHi - kBaseLo) * double(j) / double(coarse);
        const double fc = f(c);
        refine(prev, fprev, c, fc, 0);
        prev = c;
        fprev = fc;
    }
    out.emplace_back(prev, fprev);
    return out;
}

double fiber_margin(double t) { return std::min(t + 1.0, 6.0 - t); }

// Max-margin adversarial fiber iteration: at every step the branch (and,
// under perturbation, the worst admissible bump shift) is chosen to keep the
// value as deep inside [-1, 6] as possible. Returns the escape step, or 0 if
// the value survives the whole budget.
int adversarial_escape(double t, bool backward, int max_steps, const SkewProductSpec& spec) {
    const double slack = spec.bump ? std::abs(spec.s) : 0.0;
    for (int k = 0; k < max_steps; ++k) {
        double best = 0, best_margin = -1e300;
        for (int sym = 1; sym <= 4; ++sym) {
            const double v =
                backward ? spec.fiber(sym).g_inverse(t) : spec.fiber(sym).g(t);
            const double m = fiber_margin(v);
            if (m > best_margin) {
                best_margin = m;
                best = v;
            }
        }
        if (best_margin + slack < 0.0) return k + 1;
        if (slack > 0.0) best += best < 2.5 ? slack : -slack;
        t = best;
    }
    return 0;
}

}  // namespace

double Leaf::value_at(double coord) const {
    if (profile.empty()) throw UsageError("leaf has no fiber profile");
    if (profile.size() == 1) return profile.front().second;
    if (coord <= profile.front().first) return profile.front().second;
    if (coord >= profile.back().first) return profile.back().second;
    std::size_t lo = 0, hi = profile.size() - 1;
    while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        if (profile[mid].first <= coord)
            lo = mid;
        else
            hi = mid;
    }
    const auto& [a, fa] = profile[lo];
    const auto& [b, fb] = profile[hi];
    const double w = (coord - a) / (b - a);
    return fa + w * (fb - fa);
}

namespace {

// Pointwise half-orbit check with an explicit uncertainty radius. The band
// coordinate expands five-fold per step, so initial rounding of the point
// grows until the next band decision is no longer machine-decidable; at that
// point the check stops as passed. Escapes are reported only when the miss
// margin exceeds the accumulated radius, so they are genuine.
void require_half_orbit_inside(const Vec3& point, bool backward,
                               const SkewProductSpec& spec) {
    double x = point.x(), y = point.y(), t = point.z();
    const double c0 = backward ? x : y;
    double delta = 6e-17 * (1.0 + std::abs(c0));
    double delta_t = 6e-17 * (1.0 + std::abs(t));
    for (int k = 0; k < 300; ++k) {
        const double c = backward ? x : y;
        int band = 0;
        double edge = 1e300;
        for (int i = 1; i <= 4; ++i) {
            const BandSpec& b = spec.band(i);
            const double lo = backward ? b.x_lo : b.y_lo;
            const double hi = backward ? b.x_hi : b.y_hi;
            if (c >= lo && c <= hi) {
                band = i;
                edge = std::min(c - lo, hi - c);
                break;
            }
            edge = std::min(edge, std::min(std::abs(c - lo), std::abs(c - hi)));
        }
        if (band == 0) {
            if (edge > delta) throw UsageError("no strong leaf: point transient");
            return;
        }
        if (edge <= delta) return;
        const BandSpec& b = spec.band(band);
        double xn, yn;
        if (backward) {
            branch_inverse(b, x, y, xn, yn);
            t = spec.fiber(band).g_inverse(t);
        } else {
            branch_forward(b, x, y, xn, yn);
            t = spec.fiber(band).g(t);
        }
        x = xn;
        y = yn;
        if (t < kFiberLo || t > kFiberHi) {
            if (t < kFiberLo - delta_t || t > kFiberHi + delta_t)
                throw UsageError("no strong leaf: point transient");
            return;
        }
        delta = 5.0 * delta + 6e-16 * (1.0 + std::abs(backward ? x : y));
        delta_t = 1.2 * delta_t + 6e-16 * (1.0 + std::abs(t));
    }
}

}  // namespace

Leaf local_strong_leaf(const Vec3& point, LeafKind kind, const SkewProductSpec& spec) {
    require_validated(spec, "local_strong_leaf");
    if (spec.s != 0.0)
        throw UsageError("local_strong_leaf: exact strong leaves need the unperturbed map");
    if (!in_block(point)) throw UsageError("local_strong_leaf: point outside the block");

    require_half_orbit_inside(point, kind == LeafKind::VerticalUnstable, spec);

    Leaf leaf;
    leaf.kind = kind;
    leaf.base = kind == LeafKind::VerticalUnstable ? point.x() : point.y();
    leaf.profile = {{0.0, point.z()}};
    return leaf;
}

namespace {

Leaf make_child(const Leaf& parent, int sym, char origin, const SkewProductSpec& spec,
                bool perturbed) {
    const BandSpec& b = spec.band(sym);
    const FiberMap& fm = spec.fiber(sym);
    Leaf child;
    child.kind = parent.kind;
    child.generation = parent.generation + 1;
    child.word = parent.word + char('0' + sym);
    if (origin == 'p') {
        child.base = branch_x(b, parent.base);
        if (!perturbed) {
            child.profile = {{0.0, fm.g(parent.profile.front().second)}};
        } else {
            child.profile = sample_profile([&](double ynew) {
                const double yold = pull_y(b, ynew);
                const double t = fm.g(parent.value_at(yold));
                return t + spec.s * spec.bump->value(Vec3(child.base, ynew, t));
            });
        }
    } else {
        child.base = pull_y(b, parent.base);
        if (!perturbed) {
            child.profile = {{0.0, fm.g_inverse(parent.profile.front().second)}};
        } else {
            child.profile = sample_profile([&](double xpre) {
                const double xpost = branch_x(b, xpre);
                const double t = parent.value_at(xpost);
                return fm.g_inverse(unshift_fiber(spec, xpost, parent.base, t));
            });
        }
    }
    return child;
}

}  // namespace

LeafSet grow_lamination(char origin, int depth, const SkewProductSpec& spec) {
    require_validated(spec, "grow_lamination");
    if (origin != 'p' && origin != 'q')
        throw UsageError("grow_lamination: origin must be 'p' or 'q'");
    if (depth < 0 || depth > 14) throw UsageError("grow_lamination: depth must be in [0, 14]");

    const Anchors anc = anchors(spec);
    const bool perturbed = spec.bump && spec.s != 0.0;
    constexpr std::size_t kLeafBudget = 3000000;

    LeafSet set;
    set.origin = origin;
    set.depth = depth;
    set.s = spec.s;
    set.kind = origin == 'p' ? LeafKind::VerticalUnstable : LeafKind::HorizontalStable;

    Leaf root;
    root.kind = set.kind;
    root.base = origin == 'p' ? anc.p.x() : anc.q.y();
    root.profile = {{0.0, origin == 'p' ? anc.p.z() : anc.q.z()}};
    set.leaves.push_back(std::move(root));

    std::size_t level_begin = 0;
    for (int d = 1; d <= depth; ++d) {
        const std::size_t level_end = set.leaves.size();
        for (std::size_t li = level_begin; li < level_end; ++li) {
            for (int sym = 1; sym <= 4; ++sym) {
                Leaf child = make_child(set.leaves[li], sym, origin, spec, perturbed);
                double lo = 1e300, hi = -1e300;
                for (const auto& [c, v] : child.profile) {
                    (void)c;
                    lo = std::min(lo, v);
                    hi = std::max(hi, v);
                }
                if (lo < kFiberLo || hi > kFiberHi) {
                    set.escaped.push_back(std::move(child.word));
                    continue;
                }
                if (set.leaves.size() + set.escaped.size() >= kLeafBudget)
                    throw ResourceError("grow_lamination: leaf budget exceeded");
                set.leaves.push_back(std::move(child));
            }
        }
        level_begin = level_end;
    }
    return set;
}

std::string leaves_to_json(const LeafSet& set) {
    nlohmann::ordered_json j;
    j["origin"] = std::string(1, set.origin);
    j["kind"] = set.kind == LeafKind::VerticalUnstable ? "vertical-unstable" : "horizontal-stable";
    j["depth"] = set.depth;
    j["s"] = set.s;
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const Leaf& leaf : set.leaves) {
        nlohmann::ordered_json e;
        e["word"] = leaf.word;
        e["base"] = leaf.base;
        e["generation"] = leaf.generation;
        nlohmann::ordered_json prof = nlohmann::ordered_json::array();
        for (const auto& [c, v] : leaf.profile) prof.push_back({c, v});
        e["profile"] = std::move(prof);
        arr.push_back(std::move(e));
    }
    j["leaves"] = std::move(arr);
    j["escaped"] = set.escaped;
    return j.dump(2);
}

RegionWitness region_witness(const Vec3& point, Region region, int depth,
                             const SkewProductSpec& spec) {
    require_validated(spec, "region_witness");
    if (spec.s != 0.0)
        throw UsageError("region_witness: region witnesses are defined for the unperturbed map");
    if (depth < 1 || depth > 100000) throw UsageError("region_witness: depth out of range");
    if (!in_block(point)) throw UsageError("region_witness: point outside the block");

    const double t0 = point.z();
    const bool in_region = (region == Region::R1 && t0 <= 4.5) ||
                           (region == Region::R2 && t0 >= 0.5) ||
                           (region == Region::R3 && t0 >= 0.5 && t0 <= 2.5) ||
                           (region == Region::R4 && t0 >= 2.5 && t0 <= 4.5);
    if (!in_region) throw UsageError("region_witness: point outside the named region");

    const Anchors anc = anchors(spec);
    RegionWitness w;
    w.region = region;

    if (region == Region::R1 || region == Region::R2) {
        // drive the fiber value onto the target root with the two-band greedy
        // itinerary; the base coordinate of the witness is the pullback that
        // realizes exactly this itinerary
        const bool toward_p = region == Region::R1;
        const double target = toward_p ? anc.p.z() : anc.q.z();
        const double tol = toward_p ? 1e-8 : 1e-6;
        double t = t0;
        std::string word;
        int steps = 0;
        while (std::abs(t - target) > tol && steps < depth) {
            int sym;
            if (toward_p)
                sym = t > 3.5 ? 4 : 1;
            else
                sym = t < 1.5 ? 1 : 4;
            t = toward_p ? spec.fiber(sym).g(t) : spec.fiber(sym).g_inverse(t);
            word.push_back(char('0' + sym));
            ++steps;
        }
        w.itinerary = word;
        w.steps = steps;
        w.target = target;
        w.achieved = t;
        w.residual = std::abs(t - target);
        w.found = w.residual <= tol;
        if (toward_p) {
            double y = anc.p.y();
            for (auto it = word.rbegin(); it != word.rend(); ++it)
                y = pull_y(spec.band(*it - '0'), y);
            w.leaf_point = Vec3(point.x(), y, t0);
        } else {
            double x = anc.q.x();
            for (auto it = word.rbegin(); it != word.rend(); ++it)
                x = branch_x(spec.band(*it - '0'), x);
            w.leaf_point = Vec3(x, point.y(), t0);
        }
        return w;
    }

    // R3 / R4: realize the fiber value inside the two-branch system by greedy
    // digit expansion, then replay the expansion to audit the roundtrip
    const bool low_pair = region == Region::R3;
    const double split = low_pair ? spec.fiber(1).g(3.0) : spec.fiber(3).g_inverse(5.0);
    const double slab_lo = low_pair ? 0.0 : 2.0;
    const double slab_hi = low_pair ? 3.0 : 5.0;
    const int expansion = std::min(depth, 60);

    double tau = t0;
    std::vector<int> word;
    for (int k = 0; k < expansion; ++k) {
        int d;
        if (low_pair)
            d = tau <= split ? 1 : 2;
        else
            d = tau <= split ? 3 : 4;
        tau = low_pair ? spec.fiber(d).g_inverse(tau) : spec.fiber(d).g(tau);
        word.push_back(d);
        if (tau < slab_lo - 1e-12 || tau > slab_hi + 1e-12) {
            w.found = false;
            w.steps = k + 1;
            return w;  // expansion left the slab: no witness at this depth
        }
    }
    double r = tau;
    for (auto it = word.rbegin(); it != word.rend(); ++it)
        r = low_pair ? spec.fiber(*it).g(r) : spec.fiber(*it).g_inverse(r);

    for (int d : word) w.itinerary.push_back(char('0' + d));
    w.steps = expansion;
    w.target = t0;
    w.achieved = r;
    w.residual = std::abs(r - t0);
    w.found = w.residual <= 1e-8;
    if (low_pair) {
        double x = anc.p.x();
        for (auto it = word.rbegin(); it != word.rend(); ++it) x = branch_x(spec.band(*it), x);
        w.leaf_point = Vec3(x, anc.p.y(), t0);
    } else {
        double y = anc.q.y();
        for (auto it = word.rbegin(); it != word.rend(); ++it) y = pull_y(spec.band(*it), y);
        w.leaf_point = Vec3(anc.q.x(), y, t0);
    }
    return w;
}

CuspidalReport cuspidal_check(CuspidalTarget target, int samples, int N,
                              const SkewProductSpec& spec) {
    require_validated(spec, "cuspidal_check");
    if (samples < 2 || N < 1) throw UsageError("cuspidal_check: bad sample count or budget");

    double t0 = 0, dt = 0;
    bool backward = false;
    switch (target) {
        case CuspidalTarget::PLeftStable:
            t0 = -0.1;
            dt = -0.4;
            backward = true;
            break;
        case CuspidalTarget::QRightUnstable:
            t0 = 5.1;
            dt = 0.4;
            backward = false;
            break;
        case CuspidalTarget::PRightStable:
            t0 = 0.1;
            dt = 0.4;
            backward = true;
            break;
        case CuspidalTarget::QLeftUnstable:
            t0 = 4.5;
            dt = 0.4;
            backward = false;
            break;
    }

    CuspidalReport rep;
    rep.target = target;
    rep.samples = samples;
    for (int j = 0; j < samples; ++j) {
        const double t = t0 + dt * double(j) / double(samples - 1);
        const int k = adversarial_escape(t, backward, N, spec);
        if (k > 0) {
            ++rep.escaped;
            rep.worst_steps = std::max(rep.worst_steps, k);
        }
    }
    rep.pass = rep.escaped == rep.samples;
    return rep;
}

std::vector<Vec3> replay_points(const TransitReplay& replay, const SkewProductSpec& spec) {
    require_validated(spec, "replay_points");
    if (replay.y_path.size() != replay.forward_symbols.size() + 1)
        throw UsageError("replay_points: y path and symbol list disagree");
    if (std::abs(replay.start.y() - replay.y_path.front()) > 1e-9)
        throw UsageError("replay_points: start does not match y path");

    std::vector<Vec3> pts;
    pts.reserve(replay.y_path.size());
    double x = replay.start.x(), t = replay.start.z();
    pts.emplace_back(x, replay.y_path.front(), t);
    for (std::size_t k = 0; k < replay.forward_symbols.size(); ++k) {
        const int sym = replay.forward_symbols[k];
        if (sym < 1 || sym > 4) throw UsageError("replay_points: symbol out of range");
        x = branch_x(spec.band(sym), x);
        t = spec.fiber(sym).g(t);
        if (spec.bump && spec.s != 0.0)
            t += spec.s * spec.bump->value(Vec3(x, replay.y_path[k + 1], t));
        pts.emplace_back(x, replay.y_path[k + 1], t);
    }
    return pts;
}

ProbeReport lambda_probe(const Vec3& x, double radius, double tube_radius, int N,
                         const SkewProductSpec& spec, const TransitReplay* replay, int samples,
                         std::uint64_t seed) {
    require_validated(spec, "lambda_probe");
    if (radius <= 0.0 || tube_radius < 0.0 || tube_radius >= radius)
        throw UsageError("lambda_probe: need 0 <= tube radius < radius");
    if (N < 1 || samples < 1) throw UsageError("lambda_probe: bad budget or sample count");

    const Anchors anc = anchors(spec);
    ProbeReport rep;
    rep.samples_requested = samples;

    // Heteroclinic precondition: the candidate's orbit must pass within 1e-6
    // of q forward and of p backward. A structured replay is used when given,
    // because pointwise iteration cannot carry a long transit itinerary.
    double fmin = 1e300, bmin = 1e300;
    if (replay) {
        const std::vector<Vec3> pts = replay_points(*replay, spec);
        if (replay->crossing >= pts.size())
            throw UsageError("lambda_probe: replay crossing index out of range");
        for (std::size_t k = replay->crossing; k < pts.size(); ++k)
            fmin = std::min(fmin, (pts[k] - anc.q).norm());
        const BandSpec& b1 = spec.band(1);
        double bx = replay->start.x(), by = replay->start.y(), bt = replay->start.z();
        for (int k = 0; k < 300; ++k) {
            bx = branch_x_back(b1, bx);
            by = pull_y(b1, by);
            bt = spec.fiber(1).g_inverse(bt);
            bmin = std::min(bmin, (Vec3(bx, by, bt) - anc.p).norm());
        }
    } else {
        OrbitState st = OrbitState::at(x);
        for (int k = 0; k < 1000 && st.inside; ++k) {
            st = apply(st, spec);
            if (st.inside) fmin = std::min(fmin, (st.z - anc.q).norm());
        }
        st = OrbitState::at(x);
        for (int k = 0; k < 1000 && st.inside; ++k) {
            st = apply_inverse(st, spec);
            if (st.inside) bmin = std::min(bmin, (st.z - anc.p).norm());
        }
    }
    rep.forward_min_dist = fmin;
    rep.backward_min_dist = bmin;
    rep.precondition_ok = fmin <= 1e-6 && bmin <= 1e-6;
    if (!rep.precondition_ok)
        throw UsageError("not a heteroclinic point: orbit misses p or q beyond tolerance");

    // Certify the exit neighborhoods: everything in V^u leaves forward,
    // everything in V^s leaves backward, even against the adversarial branch
    // choice.
    constexpr double kVuLo = 5.05, kVuHi = 5.55, kVsLo = -0.55, kVsHi = -0.05;
    rep.exits_certified = true;
    for (int j = 0; j < 200 && rep.exits_certified; ++j) {
        const double tu = kVuLo + (kVuHi - kVuLo) * double(j) / 199.0;
        const double ts = kVsLo + (kVsHi - kVsLo) * double(j) / 199.0;
        if (adversarial_escape(tu, false, 400, spec) == 0) rep.exits_certified = false;
        if (adversarial_escape(ts, true, 400, spec) == 0) rep.exits_certified = false;
    }
    if (!rep.exits_certified) {
        rep.detail = "exit neighborhood failed its escape certificate";
        return rep;
    }

    Rng rng(seed);
    for (int i = 0; i < samples; ++i) {
        Vec3 z;
        for (int c = 0; c < 3; ++c) z[c] = x[c] + radius * (2.0 * rng.uniform() - 1.0);
        const Vec3 raw = z;
        z.x() = std::clamp(z.x(), kBaseLo, kBaseHi);
        z.y() = std::clamp(z.y(), kBaseLo, kBaseHi);
        z.z() = std::clamp(z.z(), kFiberLo, kFiberHi);
        if ((z - raw).norm() != 0.0) rep.clipped = true;

        if (std::abs(z.y() - x.y()) > tube_radius) {
            ++rep.forward_checked;
            OrbitState st = OrbitState::at(z);
            bool ok = false;
            for (int k = 1; k <= N; ++k) {
                st = apply(st, spec);
                if (!st.inside || (st.z.z() >= kVuLo && st.z.z() <= kVuHi)) {
                    ok = true;
                    rep.worst_forward_steps = std::max(rep.worst_forward_steps, k);
                    break;
                }
            }
            if (!ok) ++rep.forward_failed;
        }
        if (std::abs(z.x() - x.x()) > tube_radius) {
            ++rep.backward_checked;
            OrbitState st = OrbitState::at(z);
            bool ok = false;
            for (int k = 1; k <= N; ++k) {
                st = apply_inverse(st, spec);
                if (!st.inside || (st.z.z() >= kVsLo && st.z.z() <= kVsHi)) {
                    ok = true;
                    rep.worst_backward_steps = std::max(rep.worst_backward_steps, k);
                    break;
                }
            }
            if (!ok) ++rep.backward_failed;
        }
    }

    rep.pass = rep.forward_failed == 0 && rep.backward_failed == 0 && rep.forward_checked > 0 &&
               rep.backward_checked > 0;
    if (!rep.pass && rep.detail.empty()) rep.detail = "a sample survived past the step budget";
    return rep;
}

}  // namespace chainforge
