#include "chainforge/conley.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chainforge/map.hpp"

namespace chainforge {
namespace {

constexpr int kMaxDepth = 9;
constexpr int kFullDepth = 6;  // full box enumeration up to here, refinement above
constexpr std::size_t kActiveBudget = 6000000;
constexpr int kMaxRouteSteps = 600;
constexpr double kJumpSlack = 1e-12;  // one map step is not exact in doubles

constexpr double kBlockLo[3] = {kBaseLo, kBaseLo, kFiberLo};
constexpr double kBlockHi[3] = {kBaseHi, kBaseHi, kFiberHi};

bool point_in_block(const Vec3& z) {
    return z.x() >= kBaseLo && z.x() <= kBaseHi && z.y() >= kBaseLo && z.y() <= kBaseHi &&
           z.z() >= kFiberLo && z.z() <= kFiberHi;
}

// integer ranges of boxes overlapping the rect fattened by eps; empty when the
// fattened rect misses the block. Boxes are half-open except the last one.
struct AxisWindow {
    int lo[3];
    int hi[3];
    bool empty = true;
};

AxisWindow window_of(const BoxGrid& grid, const ImageRect& r, double eps) {
    AxisWindow w;
    const Vec3 side = grid.side();
    const int n = grid.per_axis();
    for (int a = 0; a < 3; ++a) {
        const double lo = r.lo[a] - eps;
        const double hi = r.hi[a] + eps;
        if (lo > kBlockHi[a] || hi < kBlockLo[a]) return w;
        const int i0 = int(std::floor((lo - kBlockLo[a]) / side[a]));
        const int i1 = int(std::floor((hi - kBlockLo[a]) / side[a]));
        w.lo[a] = std::max(i0, 0);
        w.hi[a] = std::min(i1, n - 1);
        if (w.lo[a] > w.hi[a]) return w;
    }
    w.empty = false;
    return w;
}

// image of an in-band point, mirroring one forward map step exactly
Vec3 band_image(const SkewProductSpec& spec, int band, const Vec3& z) {
    const BandSpec& b = spec.band(band);
    double xn, yn;
    branch_forward(b, z.x(), z.y(), xn, yn);
    double tn = spec.fiber(band).g(z.z());
    if (spec.bump && spec.s != 0.0) tn += spec.s * spec.bump->value(Vec3(xn, yn, tn));
    return Vec3(xn, yn, tn);
}

// per-band image enclosures of one box: corner+center samples padded by the
// branch Lipschitz constants (1/5 horizontal, 5 vertical, 6/5 on the fiber)
// plus the absolute reach of the perturbation
int build_rects(const SkewProductSpec& spec, const Vec3& lo, const Vec3& hi, ImageRect out[4]) {
    int count = 0;
    const bool bumped = spec.bump && spec.s != 0.0;
    for (int band = 1; band <= 4; ++band) {
        const BandSpec& b = spec.band(band);
        const double ys0 = std::max(lo.y(), b.y_lo);
        const double ys1 = std::min(hi.y(), b.y_hi);
        if (ys0 > ys1) continue;
        const double xs[3] = {lo.x(), 0.5 * (lo.x() + hi.x()), hi.x()};
        const double ys[3] = {ys0, 0.5 * (ys0 + ys1), ys1};
        const double ts[3] = {lo.z(), 0.5 * (lo.z() + hi.z()), hi.z()};
        Vec3 mn = Vec3::Constant(std::numeric_limits<double>::infinity());
        Vec3 mx = -mn;
        auto absorb = [&](double x, double y, double t) {
            const Vec3 w = band_image(spec, band, Vec3(x, y, t));
            mn = mn.cwiseMin(w);
            mx = mx.cwiseMax(w);
        };
        for (int i = 0; i < 3; i += 2)
            for (int j = 0; j < 3; j += 2)
                for (int k = 0; k < 3; k += 2) absorb(xs[i], ys[j], ts[k]);
        absorb(xs[1], ys[1], ts[1]);
        const double px = 0.5 * (xs[2] - xs[0]) * 0.2;
        const double py = 0.5 * (ys[2] - ys[0]) * 5.0;
        const double pt = 0.5 * (ts[2] - ts[0]) * 1.2 + (bumped ? std::abs(spec.s) : 0.0);
        out[count].lo = mn - Vec3(px, py, pt);
        out[count].hi = mx + Vec3(px, py, pt);
        ++count;
    }
    return count;
}

// resumable enumeration of the targets of one node; may repeat a target when
// several band enclosures cover it
struct OutCursor {
    const BoxGraph* g = nullptr;
    std::uint32_t rect = 0;
    std::uint32_t rect_end = 0;
    AxisWindow w;
    int ix = 0, iy = 0, it = 0;
    bool primed = false;

    void open(const BoxGraph& graph, std::size_t node) {
        g = &graph;
        rect = graph.rect_begin[node];
        rect_end = graph.rect_begin[node + 1];
        primed = false;
    }

    std::int64_t next() {
        while (true) {
            if (!primed) {
                if (rect >= rect_end) return -1;
                w = window_of(g->grid, g->rects[rect], g->eps);
                if (w.empty) {
                    ++rect;
                    continue;
                }
                ix = w.lo[0];
                iy = w.lo[1];
                it = w.lo[2];
                primed = true;
            }
            const std::uint64_t key = g->grid.key(ix, iy, it);
            advance();
            const std::size_t node = g->node_of_key(key);
            if (node == BoxGraph::npos) continue;  // box not active in a refined covering
            return std::int64_t(node);
        }
    }

    void advance() {
        if (++ix <= w.hi[0]) return;
        ix = w.lo[0];
        if (++iy <= w.hi[1]) return;
        iy = w.lo[1];
        if (++it <= w.hi[2]) return;
        ++rect;
        primed = false;
    }
};

double dist_point_rect(const Vec3& p, const Vec3& lo, const Vec3& hi) {
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double c = std::min(std::max(p[a], lo[a]), hi[a]);
        d2 += (p[a] - c) * (p[a] - c);
    }
    return std::sqrt(d2);
}

double dist_to_interval(double v, double lo, double hi) {
    if (v < lo) return lo - v;
    if (v > hi) return hi - v;
    return 0.0;
}

// Deterministic steering construction for one certificate leg. A single
// feasible rectangle is carried forward: every point of the running rect is
// reachable from some point of the previous one with per-axis jumps inside
// the budget, because the in-band map is affine in the base and monotone in
// the fiber. The branch sequence is planned on the fiber axis, the only slow
// coordinate (vertical expansion frees the base position within a few steps),
// and finishes with an alignment tail that parks the base point under the
// preimage of the target. Representatives are recovered backwards from the
// goal by per-axis clamping into the stored rects.
class LegRouter {
  public:
    LegRouter(const BoxGraph& g, double tol)
        : spec_(g.spec), tol_(tol), tol_xy_(tol / std::sqrt(3.0)) {
        bumped_ = spec_.bump && spec_.s != 0.0;
        tol_t_ = bumped_ ? std::max(tol_xy_ - 2.0 * std::abs(spec_.s), 0.0) : tol_xy_;
    }

    // interior points of a chain a -> ... -> b (endpoints excluded); an empty
    // vector means one map step from a already lands within the budget of b
    std::optional<std::vector<Vec3>> route(const Vec3& a, const Vec3& b) {
        const OrbitState fa = apply(OrbitState::at(a), spec_);
        if (!fa.inside) return std::nullopt;
        if ((fa.z - b).norm() <= tol_) return std::vector<Vec3>{};
        if (image_distance_floor(b) > tol_) return std::nullopt;

        // alignment tail: the last three branches pin the base position so
        // that the final preimage of b falls inside the running rect
        const int f = nearest_strip(b.x());
        const double pre1 = strip_preimage(f, b.x());
        const int w2 = nearest_strip(pre1);
        const double pre2 = strip_preimage(w2, pre1);
        const int w1 = nearest_strip(pre2);
        const int w0 = nearest_strip(strip_preimage(w1, pre2));
        const int tail[3] = {w0, w1, w2};

        // fiber window that must be met before committing to the tail,
        // pulled back through the tail branches with a safety margin
        const double tstar = spec_.fiber(f).g_inverse(b.z());
        const double margin = 0.9 * tol_t_;
        Interval gate{tstar - margin / 1.2, tstar + margin / 1.2};
        for (int k = 2; k >= 0; --k) gate = widen(ginv_interval(tail[k], gate), margin);

        const Rect seed = seed_rect(fa.z);
        Rect rect = seed;
        std::vector<Step> steps;
        int pending = 0;  // tail branches already committed
        for (int iter = 0; iter <= kMaxRouteSteps; ++iter) {
            if (const auto hit = try_goal(rect, b)) return reconstruct(seed, steps, *hit);
            int w = -1;
            if (pending == 3) pending = 0;  // tail ran and the goal missed: replan
            if (pending > 0) {
                w = tail[pending];
                ++pending;
            } else if (intersects(Interval{rect.lo.z(), rect.hi.z()}, gate)) {
                w = tail[0];
                pending = 1;
            }
            if (w >= 0 && !slice_valid(rect, w)) {
                w = -1;
                pending = 0;
            }
            if (w < 0) w = greedy_band(rect, gate);
            if (w < 0) return std::nullopt;  // every branch slice is empty
            const auto next = step_rect(rect, w);
            if (!next) return std::nullopt;
            steps.push_back(Step{w, *next});
            rect = *next;
        }
        return std::nullopt;
    }

  private:
    struct Rect {
        Vec3 lo, hi;
    };
    struct Step {
        int band;
        Rect rect;  // feasible rect after taking this branch
    };
    struct Interval {
        double lo, hi;
    };

    static bool intersects(const Interval& a, const Interval& b) {
        return a.lo <= b.hi && b.lo <= a.hi;
    }
    static Interval widen(const Interval& i, double pad) {
        return Interval{i.lo - pad, i.hi + pad};
    }
    static double interval_dist(const Interval& a, const Interval& b) {
        if (a.lo > b.hi) return a.lo - b.hi;
        if (b.lo > a.hi) return b.lo - a.hi;
        return 0.0;
    }

    Interval ginv_interval(int band, const Interval& i) const {
        const FiberMap& fm = spec_.fiber(band);
        return Interval{fm.g_inverse(i.lo), fm.g_inverse(i.hi)};
    }

    // branch image windows on the x axis are width-1 strips
    Interval strip_window(int band) const {
        const BandSpec& bs = spec_.band(band);
        const double span = (kBaseHi - kBaseLo) / 5.0;
        return bs.orientation > 0 ? Interval{bs.x_lo, bs.x_lo + span}
                                  : Interval{bs.x_hi - span, bs.x_hi};
    }

    int nearest_strip(double x) const {
        int best = 1;
        double bd = std::numeric_limits<double>::infinity();
        for (int w = 1; w <= 4; ++w) {
            const double d = interval_dist(Interval{x, x}, strip_window(w));
            if (d < bd) {
                bd = d;
                best = w;
            }
        }
        return best;
    }

    // x coordinate whose branch image is the clamp of x into the strip
    double strip_preimage(int band, double x) const {
        const BandSpec& bs = spec_.band(band);
        const Interval s = strip_window(band);
        const double xc = std::clamp(x, s.lo, s.hi);
        return bs.orientation > 0 ? 5.0 * (xc - bs.x_lo) : 5.0 * (bs.x_hi - xc);
    }

    // no point of any branch image can come closer to the target than this
    double image_distance_floor(const Vec3& b) const {
        double best = std::numeric_limits<double>::infinity();
        const double span = (kBaseHi - kBaseLo) / 5.0;
        const double pad = spec_.bump ? std::abs(spec_.s) : 0.0;
        for (int band = 1; band <= 4; ++band) {
            const BandSpec& bs = spec_.band(band);
            const double x0 = bs.orientation > 0 ? bs.x_lo : bs.x_hi - span;
            const double x1 = bs.orientation > 0 ? bs.x_lo + span : bs.x_hi;
            const FiberMap& fm = spec_.fiber(band);
            const double t0 = fm.g(kFiberLo) - pad;
            const double t1 = fm.g(kFiberHi) + pad;
            const double dx = dist_to_interval(b.x(), x0, x1);
            const double dt = dist_to_interval(b.z(), t0, t1);
            best = std::min(best, std::hypot(dx, dt));
        }
        return best;
    }

    // one direct displacement from the image point opens the chain
    Rect seed_rect(const Vec3& f) const {
        Rect r;
        for (int a = 0; a < 3; ++a) {
            r.lo[a] = std::max(f[a] - tol_xy_, kBlockLo[a]);
            r.hi[a] = std::min(f[a] + tol_xy_, kBlockHi[a]);
        }
        return r;
    }

    // rect cut down to the rows a branch acts on; x and t are untouched
    std::optional<Rect> band_slice(const Rect& r, int band) const {
        const BandSpec& bs = spec_.band(band);
        const double ys0 = std::max(r.lo.y(), bs.y_lo);
        const double ys1 = std::min(r.hi.y(), bs.y_hi);
        if (ys0 > ys1) return std::nullopt;
        Rect s = r;
        s.lo.y() = ys0;
        s.hi.y() = ys1;
        return s;
    }

    bool slice_valid(const Rect& r, int band) const { return band_slice(r, band).has_value(); }

    // exact slice image, fattened by the per-axis jump budget, cut to the block
    std::optional<Rect> step_rect(const Rect& r, int band) const {
        const auto s = band_slice(r, band);
        if (!s) return std::nullopt;
        const ImageRect img = slice_image(band, s->lo, s->hi);
        Rect out;
        out.lo = img.lo - Vec3(tol_xy_, tol_xy_, tol_t_);
        out.hi = img.hi + Vec3(tol_xy_, tol_xy_, tol_t_);
        for (int a = 0; a < 3; ++a) {
            out.lo[a] = std::max(out.lo[a], kBlockLo[a]);
            out.hi[a] = std::min(out.hi[a], kBlockHi[a]);
            if (out.lo[a] > out.hi[a]) return std::nullopt;
        }
        return out;
    }

    // branch whose fiber image moves the running fiber interval closest to
    // the gate window; ties go to the lowest branch index
    int greedy_band(const Rect& r, const Interval& gate) const {
        int best = -1;
        double bd = std::numeric_limits<double>::infinity();
        for (int w = 1; w <= 4; ++w) {
            if (!slice_valid(r, w)) continue;
            const FiberMap& fm = spec_.fiber(w);
            double t0 = fm.g(r.lo.z());
            double t1 = fm.g(r.hi.z());
            if (t0 > t1) std::swap(t0, t1);
            const double d = interval_dist(widen(Interval{t0, t1}, tol_t_), gate);
            if (d < bd) {
                bd = d;
                best = w;
            }
        }
        return best;
    }

    // nearest-preimage representative inside a band slice, per axis
    Vec3 aim(int band, const Vec3& slo, const Vec3& shi, const Vec3& target) const {
        const BandSpec& bs = spec_.band(band);
        double x, y;
        branch_inverse(bs, target.x(), target.y(), x, y);
        const double t = spec_.fiber(band).g_inverse(target.z());
        return Vec3(std::clamp(x, slo.x(), shi.x()), std::clamp(y, slo.y(), shi.y()),
                    std::clamp(t, slo.z(), shi.z()));
    }

    ImageRect slice_image(int band, const Vec3& slo, const Vec3& shi) const {
        const BandSpec& bs = spec_.band(band);
        double x0, y0, x1, y1;
        branch_forward(bs, slo.x(), slo.y(), x0, y0);
        branch_forward(bs, shi.x(), shi.y(), x1, y1);
        if (x0 > x1) std::swap(x0, x1);
        if (y0 > y1) std::swap(y0, y1);
        const FiberMap& fm = spec_.fiber(band);
        double t0 = fm.g(slo.z());
        double t1 = fm.g(shi.z());
        if (t0 > t1) std::swap(t0, t1);
        if (spec_.bump && spec_.s != 0.0) {
            t0 -= std::abs(spec_.s);
            t1 += std::abs(spec_.s);
        }
        return ImageRect{Vec3(x0, y0, t0), Vec3(x1, y1, t1)};
    }

    std::optional<Vec3> try_goal(const Rect& r, const Vec3& b) const {
        for (int band = 1; band <= 4; ++band) {
            const auto s = band_slice(r, band);
            if (!s) continue;
            const Vec3 z = aim(band, s->lo, s->hi, b);
            const OrbitState st = apply(OrbitState::at(z), spec_);
            if (st.inside && (st.z - b).norm() <= tol_) return z;
        }
        return std::nullopt;
    }

    std::vector<Vec3> reconstruct(const Rect& seed, const std::vector<Step>& steps,
                                  const Vec3& goal_point) const {
        std::vector<Vec3> pts(steps.size() + 1);
        pts.back() = goal_point;
        for (std::size_t k = steps.size(); k >= 1; --k) {
            const Rect& parent = k >= 2 ? steps[k - 2].rect : seed;
            const int band = steps[k - 1].band;
            const auto s = band_slice(parent, band);
            pts[k - 1] = aim(band, s->lo, s->hi, pts[k]);
        }
        return pts;
    }

    const SkewProductSpec& spec_;
    double tol_;
    double tol_xy_;
    double tol_t_;
    bool bumped_ = false;
};

}  // namespace

std::uint64_t BoxGrid::key_of(const Vec3& z) const {
    const int n = per_axis();
    const Vec3 s = side();
    auto index = [&](double v, double lo, double sd) {
        const int i = int(std::floor((v - lo) / sd));
        return std::clamp(i, 0, n - 1);
    };
    return key(index(z.x(), kBaseLo, s.x()), index(z.y(), kBaseLo, s.y()),
               index(z.z(), kFiberLo, s.z()));
}

Vec3 BoxGrid::center(std::uint64_t k) const {
    const auto c = coords(k);
    const Vec3 s = side();
    return Vec3(kBaseLo + (c[0] + 0.5) * s.x(), kBaseLo + (c[1] + 0.5) * s.y(),
                kFiberLo + (c[2] + 0.5) * s.z());
}

void BoxGrid::bounds(std::uint64_t k, Vec3& lo, Vec3& hi) const {
    const auto c = coords(k);
    const Vec3 s = side();
    lo = Vec3(kBaseLo + c[0] * s.x(), kBaseLo + c[1] * s.y(), kFiberLo + c[2] * s.z());
    hi = Vec3(kBaseLo + (c[0] + 1) * s.x(), kBaseLo + (c[1] + 1) * s.y(),
              kFiberLo + (c[2] + 1) * s.z());
}

std::size_t BoxGraph::node_of_key(std::uint64_t key) const {
    const std::uint64_t n = std::uint64_t(grid.per_axis());
    if (key >= n * n * n) return npos;
    switch (lookup_) {
        case Lookup::Full:
            return std::size_t(key);
        case Lookup::Dense: {
            const std::uint32_t v = dense_[key];
            return v == std::uint32_t(-1) ? npos : std::size_t(v);
        }
        case Lookup::Sorted: {
            const auto it = std::lower_bound(grid.active.begin(), grid.active.end(), key);
            if (it == grid.active.end() || *it != key) return npos;
            return std::size_t(it - grid.active.begin());
        }
    }
    return npos;
}

std::size_t BoxGraph::node_of_point(const Vec3& z) const {
    if (!point_in_block(z)) return npos;
    return node_of_key(grid.key_of(z));
}

bool BoxGraph::has_edge(std::size_t from, std::size_t to) const {
    const auto c = grid.coords(grid.active[to]);
    for (std::uint32_t r = rect_begin[from]; r < rect_begin[from + 1]; ++r) {
        const AxisWindow w = window_of(grid, rects[r], eps);
        if (w.empty) continue;
        if (c[0] >= w.lo[0] && c[0] <= w.hi[0] && c[1] >= w.lo[1] && c[1] <= w.hi[1] &&
            c[2] >= w.lo[2] && c[2] <= w.hi[2])
            return true;
    }
    return false;
}

void BoxGraph::for_each_out(std::size_t from,
                            const std::function<void(std::uint32_t)>& fn) const {
    OutCursor cur;
    cur.open(*this, from);
    for (std::int64_t t; (t = cur.next()) >= 0;) fn(std::uint32_t(t));
}

BoxGraph build_box_graph(const SkewProductSpec& spec, int depth, double eps, int threads) {
    if (!spec.validated)
        throw UsageError("spec not validated: run validate_spec before building box graphs");
    if (depth < 0) throw UsageError("box subdivision depth must be non-negative");
    if (depth > kMaxDepth)
        throw ResourceError("box subdivision depth exceeds the hard ceiling of 9");
    if (std::isnan(eps)) throw UsageError("fattening radius must be a number");

    const auto diameter_at = [](int d) {
        BoxGrid g;
        g.depth = d;
        return g.diameter();
    };
    const double eps_final = eps < 0.0 ? diameter_at(depth) : eps;

    // one level: enclosures, exit flags and the node lookup over a key set
    const auto build_level = [&](int d, double level_eps,
                                 std::vector<std::uint64_t> keys) -> BoxGraph {
        BoxGraph g;
        g.grid.depth = d;
        g.grid.active = std::move(keys);
        g.eps = level_eps;
        g.spec = spec;
        const std::size_t count = g.grid.active.size();
        const std::uint64_t n = std::uint64_t(g.grid.per_axis());

        if (count == n * n * n) {
            g.lookup_ = BoxGraph::Lookup::Full;
        } else if (n <= 256) {
            g.lookup_ = BoxGraph::Lookup::Dense;
            g.dense_.assign(std::size_t(n * n * n), std::uint32_t(-1));
            for (std::size_t i = 0; i < count; ++i)
                g.dense_[g.grid.active[i]] = std::uint32_t(i);
        } else {
            g.lookup_ = BoxGraph::Lookup::Sorted;
        }

        std::vector<std::uint8_t> counts(count, 0);
        parallel_for_chunks(count, 2048, threads, [&](std::size_t b, std::size_t e) {
            ImageRect tmp[4];
            for (std::size_t i = b; i < e; ++i) {
                Vec3 lo, hi;
                g.grid.bounds(g.grid.active[i], lo, hi);
                counts[i] = std::uint8_t(build_rects(spec, lo, hi, tmp));
            }
        });
        g.rect_begin.assign(count + 1, 0);
        for (std::size_t i = 0; i < count; ++i)
            g.rect_begin[i + 1] = g.rect_begin[i] + counts[i];
        g.rects.resize(g.rect_begin[count]);
        g.exit_flag.assign(count, 0);
        parallel_for_chunks(count, 2048, threads, [&](std::size_t b, std::size_t e) {
            ImageRect tmp[4];
            for (std::size_t i = b; i < e; ++i) {
                Vec3 lo, hi;
                g.grid.bounds(g.grid.active[i], lo, hi);
                const int m = build_rects(spec, lo, hi, tmp);
                bool reachable = false;
                for (int k = 0; k < m; ++k) {
                    g.rects[g.rect_begin[i] + k] = tmp[k];
                    if (!window_of(g.grid, tmp[k], level_eps).empty) reachable = true;
                }
                if (!reachable) g.exit_flag[i] = 1;
            }
        });
        return g;
    };

    const int base_depth = std::min(depth, kFullDepth);
    const auto level_eps = [&](int d) {
        const double scale = double(std::uint64_t(1) << (depth - d));
        return std::max(diameter_at(d), eps_final * scale);
    };

    std::vector<std::uint64_t> keys(std::size_t(std::uint64_t(1) << (3 * base_depth)));
    for (std::size_t i = 0; i < keys.size(); ++i) keys[i] = i;
    BoxGraph g = build_level(base_depth, level_eps(base_depth), std::move(keys));

    // refinement: only the children of chain-recurrent boxes stay active; the
    // level fattening above keeps every finer recurrent box inside them
    for (int d = base_depth + 1; d <= depth; ++d) {
        const ChainClasses cc = chain_classes(g);
        const std::uint64_t n = std::uint64_t(1) << d;
        std::vector<std::uint64_t> children;
        children.reserve(cc.recurrent.size() * 8);
        for (std::uint32_t v : cc.recurrent) {
            const auto c = g.grid.coords(g.grid.active[v]);
            for (int dt = 0; dt < 2; ++dt)
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        children.push_back(
                            (std::uint64_t(2 * c[2] + dt) * n + std::uint64_t(2 * c[1] + dy)) *
                                n +
                            std::uint64_t(2 * c[0] + dx));
        }
        if (children.size() > kActiveBudget)
            throw ResourceError("refined box covering exceeds the memory budget");
        std::sort(children.begin(), children.end());
        g = build_level(d, level_eps(d), std::move(children));
    }
    return g;
}

std::size_t count_edges(const BoxGraph& graph, int threads) {
    const std::size_t n = graph.node_count();
    const std::size_t chunk = 1024;
    if (n == 0) return 0;
    std::vector<std::size_t> partial((n + chunk - 1) / chunk, 0);
    parallel_for_chunks(n, chunk, threads, [&](std::size_t b, std::size_t e) {
        std::vector<std::uint32_t> targets;
        std::size_t sum = 0;
        for (std::size_t i = b; i < e; ++i) {
            if (graph.exit_flag[i]) continue;
            targets.clear();
            OutCursor cur;
            cur.open(graph, i);
            for (std::int64_t t; (t = cur.next()) >= 0;) targets.push_back(std::uint32_t(t));
            std::sort(targets.begin(), targets.end());
            sum += std::size_t(std::unique(targets.begin(), targets.end()) - targets.begin());
        }
        partial[b / chunk] = sum;
    });
    std::size_t total = 0;
    for (std::size_t s : partial) total += s;
    return total;
}

ChainClasses chain_classes(const BoxGraph& graph) {
    const std::size_t n = graph.node_count();
    ChainClasses out;
    std::vector<std::uint32_t> idx(n, 0), low(n, 0);
    std::vector<std::uint8_t> onstk(n, 0);
    std::vector<std::uint32_t> stk;
    std::uint32_t counter = 0;

    struct Frame {
        std::uint32_t v;
        OutCursor cur;
    };
    std::vector<Frame> frames;

    const auto open_frame = [&](std::uint32_t v) {
        idx[v] = low[v] = ++counter;
        stk.push_back(v);
        onstk[v] = 1;
        Frame f;
        f.v = v;
        f.cur.open(graph, v);
        frames.push_back(f);
    };

    for (std::size_t root = 0; root < n; ++root) {
        if (graph.exit_flag[root] || idx[root] != 0) continue;
        open_frame(std::uint32_t(root));
        while (!frames.empty()) {
            const std::int64_t t = frames.back().cur.next();
            if (t >= 0) {
                const std::uint32_t w = std::uint32_t(t);
                if (graph.exit_flag[w]) continue;
                if (idx[w] == 0) {
                    open_frame(w);
                } else if (onstk[w]) {
                    Frame& f = frames.back();
                    low[f.v] = std::min(low[f.v], idx[w]);
                }
            } else {
                const std::uint32_t v = frames.back().v;
                const std::uint32_t lv = low[v];
                frames.pop_back();
                if (!frames.empty()) {
                    Frame& p = frames.back();
                    low[p.v] = std::min(low[p.v], lv);
                }
                if (lv == idx[v]) {
                    std::vector<std::uint32_t> members;
                    while (true) {
                        const std::uint32_t u = stk.back();
                        stk.pop_back();
                        onstk[u] = 0;
                        members.push_back(u);
                        if (u == v) break;
                    }
                    std::sort(members.begin(), members.end());
                    const bool recurrent =
                        members.size() >= 2 || graph.has_edge(members[0], members[0]);
                    if (recurrent) out.classes.push_back(std::move(members));
                }
            }
        }
    }

    std::sort(out.classes.begin(), out.classes.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    for (const auto& c : out.classes)
        out.recurrent.insert(out.recurrent.end(), c.begin(), c.end());
    std::sort(out.recurrent.begin(), out.recurrent.end());
    return out;
}

PseudoOrbit pseudo_orbit_certificate(const Vec3& from, const std::optional<Vec3>& via,
                                     const Vec3& to, double eps, const BoxGraph& graph) {
    const auto check_point = [](const Vec3& z) {
        if (!point_in_block(z))
            throw UsageError("certificate endpoints must lie inside the block");
    };
    check_point(from);
    if (via) check_point(*via);
    check_point(to);
    if (!(eps >= 0.0)) throw UsageError("jump budget must be non-negative");

    const double tol = eps + kJumpSlack;
    LegRouter router(graph, tol);

    std::vector<Vec3> anchors{from};
    if (via) anchors.push_back(*via);
    anchors.push_back(to);

    std::vector<Vec3> pts{from};
    for (std::size_t i = 0; i + 1 < anchors.size(); ++i) {
        auto leg = router.route(anchors[i], anchors[i + 1]);
        if (!leg)
            throw NoPathError(
                "no box path realizes the requested connection at this jump budget; refine "
                "the grid or relax the budget");
        pts.insert(pts.end(), leg->begin(), leg->end());
        pts.push_back(anchors[i + 1]);
    }
    bool closed = false;
    if (auto back = router.route(to, from)) {
        pts.insert(pts.end(), back->begin(), back->end());
        closed = true;
    }

    // collapse exact repeats created by zero-length legs
    std::vector<Vec3> cleaned;
    cleaned.reserve(pts.size());
    for (const Vec3& z : pts)
        if (cleaned.empty() || (cleaned.back() - z).norm() != 0.0) cleaned.push_back(z);
    if (closed && cleaned.size() > 1 && (cleaned.back() - cleaned.front()).norm() == 0.0)
        cleaned.pop_back();
    pts = std::move(cleaned);

    // snap interior representatives to box centers wherever the budget allows
    const auto is_anchor = [&](const Vec3& z) {
        for (const Vec3& a : anchors)
            if ((z - a).norm() == 0.0) return true;
        return false;
    };
    for (std::size_t k = 1; k < pts.size(); ++k) {
        if (is_anchor(pts[k])) continue;
        const bool has_next = k + 1 < pts.size() || closed;
        if (!has_next) continue;
        const std::size_t node = graph.node_of_point(pts[k]);
        if (node == BoxGraph::npos) continue;
        const Vec3 c = graph.grid.center(graph.grid.active[node]);
        const OrbitState prev = apply(OrbitState::at(pts[k - 1]), graph.spec);
        if (!prev.inside || (prev.z - c).norm() > tol) continue;
        const OrbitState img = apply(OrbitState::at(c), graph.spec);
        const Vec3& next = k + 1 < pts.size() ? pts[k + 1] : pts[0];
        if (!img.inside || (img.z - next).norm() > tol) continue;
        pts[k] = c;
    }

    // pointwise verification of every jump, wrap included
    double worst = 0.0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const bool last = k + 1 == pts.size();
        if (last && !closed) break;
        const OrbitState st = apply(OrbitState::at(pts[k]), graph.spec);
        const Vec3& target = last ? pts[0] : pts[k + 1];
        if (!st.inside || (st.z - target).norm() > tol) {
#ifdef CHAINFORGE_ROUTE_DEBUG
            std::fprintf(stderr,
                         "verify fail k=%zu/%zu inside=%d jump=%.6e tol=%.6e\n"
                         "  z      = (%.9f, %.9f, %.9f)\n  F(z)   = (%.9f, %.9f, %.9f)\n"
                         "  target = (%.9f, %.9f, %.9f)\n",
                         k, pts.size(), int(st.inside), (st.z - target).norm(), tol,
                         pts[k].x(), pts[k].y(), pts[k].z(), st.z.x(), st.z.y(), st.z.z(),
                         target.x(), target.y(), target.z());
#endif
            throw NoPathError("assembled orbit failed pointwise jump verification");
        }
        worst = std::max(worst, (st.z - target).norm());
    }

    PseudoOrbit orbit;
    orbit.points = std::move(pts);
    orbit.eps = worst;
    orbit.closed = closed;
    return orbit;
}

IsolationProfile local_isolation_profile(const Vec3& point, const std::vector<double>& radii,
                                         const std::vector<int>& depths,
                                         const SkewProductSpec& spec, int threads) {
    if (!point_in_block(point))
        throw UsageError("isolation profile point must lie inside the block");
    if (radii.empty() || depths.empty())
        throw UsageError("isolation profile needs at least one radius and one depth");
    for (double r : radii)
        if (!std::isfinite(r) || r <= 0.0)
            throw UsageError("isolation profile radii must be positive");
    for (int d : depths) {
        if (d < 0) throw UsageError("box subdivision depth must be non-negative");
        if (d > kMaxDepth)
            throw ResourceError("box subdivision depth exceeds the hard ceiling of 9");
    }

    // finite orbit of the point, both directions, until escape or 500 steps
    std::vector<Vec3> tube{point};
    OrbitState st = OrbitState::at(point);
    for (int k = 0; k < 500; ++k) {
        st = apply(st, spec);
        if (!st.inside) break;
        tube.push_back(st.z);
    }
    st = OrbitState::at(point);
    for (int k = 0; k < 500; ++k) {
        st = apply_inverse(st, spec);
        if (!st.inside) break;
        tube.push_back(st.z);
    }

    struct DepthData {
        double diam = 0.0;
        std::vector<ImageRect> boxes;
        std::vector<Vec3> centers;
    };
    std::map<int, DepthData> cache;
    for (int d : depths) {
        if (cache.count(d)) continue;
        const BoxGraph g = build_box_graph(spec, d, -1.0, threads);
        const ChainClasses cc = chain_classes(g);
        DepthData data;
        data.diam = g.grid.diameter();
        data.boxes.reserve(cc.recurrent.size());
        data.centers.reserve(cc.recurrent.size());
        for (std::uint32_t v : cc.recurrent) {
            ImageRect r;
            g.grid.bounds(g.grid.active[v], r.lo, r.hi);
            data.boxes.push_back(r);
            data.centers.push_back(g.grid.center(g.grid.active[v]));
        }
        cache.emplace(d, std::move(data));
    }

    IsolationProfile profile;
    profile.point = point;
    for (int d : depths) {
        const DepthData& data = cache.at(d);
        for (double r : radii) {
            std::size_t count = 0;
            for (std::size_t i = 0; i < data.boxes.size(); ++i) {
                if (dist_point_rect(point, data.boxes[i].lo, data.boxes[i].hi) > r) continue;
                double mind = std::numeric_limits<double>::infinity();
                for (const Vec3& z : tube) {
                    mind = std::min(mind, (data.centers[i] - z).norm());
                    if (mind <= data.diam) break;
                }
                if (mind > data.diam) ++count;
            }
            IsolationRow row;
            row.radius = r;
            row.depth = d;
            row.count = count;
            row.box_diameter = data.diam;
            profile.rows.push_back(row);
        }
    }
    return profile;
}

std::array<Vec3, 8> branch_fixed_points(const SkewProductSpec& spec) {
    std::array<Vec3, 8> out;
    for (int band = 1; band <= 4; ++band) {
        const BandSpec& b = spec.band(band);
        const double x = b.orientation > 0 ? b.x_lo * 5.0 / 4.0 : b.x_hi * 5.0 / 6.0;
        const double y = b.orientation > 0 ? b.y_lo * 5.0 / 4.0 : b.y_hi * 5.0 / 6.0;
        const FiberMap& fm = spec.fiber(band);
        out[std::size_t(2 * (band - 1))] = Vec3(x, y, fm.attracting);
        out[std::size_t(2 * (band - 1) + 1)] = Vec3(x, y, fm.repelling);
    }
    return out;
}

namespace {

int class_of_point(const BoxGraph& g, const ChainClasses& cc, const Vec3& z) {
    const std::size_t node = g.node_of_point(z);
    if (node == BoxGraph::npos) return -1;
    for (std::size_t k = 0; k < cc.classes.size(); ++k)
        if (std::binary_search(cc.classes[k].begin(), cc.classes[k].end(),
                               std::uint32_t(node)))
            return int(k);
    return -1;
}

}  // namespace

std::string classes_to_json(const BoxGraph& graph, const ChainClasses& cc) {
    nlohmann::ordered_json j;
    j["depth"] = graph.grid.depth;
    j["eps"] = graph.eps;
    j["box_count"] = graph.node_count();
    j["recurrent_boxes"] = cc.recurrent.size();
    j["class_count"] = cc.classes.size();
    const Vec3 side = graph.grid.side();
    const double box_volume = side.x() * side.y() * side.z();
    auto classes = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < cc.classes.size(); ++k) {
        nlohmann::ordered_json c;
        c["id"] = k;
        c["boxes"] = cc.classes[k].size();
        c["volume"] = double(cc.classes[k].size()) * box_volume;
        classes.push_back(std::move(c));
    }
    j["classes"] = std::move(classes);
    auto fixed = nlohmann::ordered_json::array();
    const auto points = branch_fixed_points(graph.spec);
    for (std::size_t i = 0; i < points.size(); ++i) {
        nlohmann::ordered_json f;
        f["index"] = i;
        f["point"] = {points[i].x(), points[i].y(), points[i].z()};
        f["class"] = class_of_point(graph, cc, points[i]);
        fixed.push_back(std::move(f));
    }
    j["fixed_points"] = std::move(fixed);
    return j.dump(2);
}

std::string boxes_csv(const BoxGraph& graph, const ChainClasses& cc) {
    std::string out = "depth,ix,iy,it,class\n";
    for (std::size_t k = 0; k < cc.classes.size(); ++k)
        for (std::uint32_t v : cc.classes[k]) {
            const auto c = graph.grid.coords(graph.grid.active[v]);
            out += std::to_string(graph.grid.depth);
            out += ',';
            out += std::to_string(c[0]);
            out += ',';
            out += std::to_string(c[1]);
            out += ',';
            out += std::to_string(c[2]);
            out += ',';
            out += std::to_string(k);
            out += '\n';
        }
    return out;
}

std::string pseudo_orbit_to_json(const PseudoOrbit& orbit) {
    nlohmann::ordered_json j;
    j["length"] = orbit.points.size();
    j["closed"] = orbit.closed;
    j["eps"] = orbit.eps;
    auto pts = nlohmann::ordered_json::array();
    for (const Vec3& z : orbit.points) pts.push_back({z.x(), z.y(), z.z()});
    j["points"] = std::move(pts);
    return j.dump(2);
}

std::string isolation_to_json(const IsolationProfile& profile) {
    nlohmann::ordered_json j;
    j["point"] = {profile.point.x(), profile.point.y(), profile.point.z()};
    auto rows = nlohmann::ordered_json::array();
    for (const IsolationRow& r : profile.rows) {
        nlohmann::ordered_json row;
        row["radius"] = r.radius;
        row["depth"] = r.depth;
        row["count"] = r.count;
        row["box_diameter"] = r.box_diameter;
        rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);
    return j.dump(2);
}

}  // namespace chainforge
