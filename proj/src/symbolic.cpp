#include "chainforge/symbolic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>

#include "json.hpp"

namespace chainforge {

namespace {

void require_validated(const SkewProductSpec& spec, const char* who) {
    if (!spec.validated)
        throw UsageError(std::string(who) + ": spec not validated: run validate_spec first");
}

void require_word(const Word& w, const char* who) {
    if (w.symbols.empty()) throw UsageError(std::string(who) + ": empty word");
    for (int s : w.symbols)
        if (s < 1 || s > 4) throw UsageError(std::string(who) + ": symbol out of range 1..4");
}

// One-dimensional affine branch map x -> anchor + sign*x/5 composed left to
// right; the composition stays affine, so a fixed point is exact arithmetic.
struct Affine {
    double m = 1, c = 0;
    void pre_compose_into(double sign, double anchor) {
        // new(x) = anchor + sign/5 * old(x)
        m = sign * m / 5.0;
        c = anchor + sign * c / 5.0;
    }
    double fixed_point() const { return c / (1.0 - m); }
    double operator()(double x) const { return m * x + c; }
};

double x_anchor(const BandSpec& b) { return b.orientation > 0 ? b.x_lo : b.x_hi; }
double y_anchor(const BandSpec& b) { return b.orientation > 0 ? b.y_lo : b.y_hi; }

}  // namespace

Word::Word(std::vector<int> syms) : symbols(std::move(syms)) {
    for (int s : symbols)
        if (s < 1 || s > 4) throw UsageError("Word: symbol out of range 1..4");
}

Word Word::parse(const std::string& digits) {
    std::vector<int> syms;
    syms.reserve(digits.size());
    for (char c : digits) {
        if (c < '1' || c > '4') throw UsageError("Word::parse: expected digits 1..4");
        syms.push_back(c - '0');
    }
    return Word(std::move(syms));
}

std::string Word::str() const {
    std::string s;
    s.reserve(symbols.size());
    for (int v : symbols) s.push_back(char('0' + v));
    return s;
}

Word Word::canonical_rotation() const {
    const int n = length();
    if (n <= 1) return *this;
    std::vector<int> best = symbols;
    std::vector<int> rot = symbols;
    for (int k = 1; k < n; ++k) {
        std::rotate(rot.begin(), rot.begin() + 1, rot.end());
        if (rot < best) best = rot;
    }
    Word w;
    w.symbols = std::move(best);
    return w;
}

bool Word::is_canonical() const { return symbols == canonical_rotation().symbols; }

bool Word::is_primitive() const {
    const int n = length();
    for (int d = 1; d < n; ++d) {
        if (n % d != 0) continue;
        bool repeats = true;
        for (int i = d; i < n && repeats; ++i) repeats = symbols[i] == symbols[i - d];
        if (repeats) return false;
    }
    return n >= 1;
}

BasePoint base_point_of_word(const Word& w, const SkewProductSpec& spec) {
    require_validated(spec, "base_point_of_word");
    require_word(w, "base_point_of_word");
    // x: forward branch maps applied in word order, first symbol innermost.
    Affine fx;
    for (int s : w.symbols) {
        const BandSpec& b = spec.band(s);
        fx.pre_compose_into(double(b.orientation), x_anchor(b));
    }
    // y: inverse vertical maps with the first symbol outermost, so that the
    // fixed point sits in band w[0] and its forward itinerary repeats w.
    Affine fy;
    for (auto it = w.symbols.rbegin(); it != w.symbols.rend(); ++it) {
        const BandSpec& b = spec.band(*it);
        fy.pre_compose_into(double(b.orientation), y_anchor(b));
    }
    return {fx.fixed_point(), fy.fixed_point()};
}

double apply_word_fiber(const Word& w, const SkewProductSpec& spec, double t) {
    for (int s : w.symbols) t = spec.fiber(s).g(t);
    return t;
}

double apply_word_fiber_inverse(const Word& w, const SkewProductSpec& spec, double t) {
    for (auto it = w.symbols.rbegin(); it != w.symbols.rend(); ++it)
        t = spec.fiber(*it).g_inverse(t);
    return t;
}

double word_fiber_derivative(const Word& w, const SkewProductSpec& spec, double t) {
    double prod = 1;
    for (int s : w.symbols) {
        prod *= spec.fiber(s).dg(t);
        t = spec.fiber(s).g(t);
    }
    return prod;
}

std::vector<FiberRoot> fiber_periodic_points(const Word& w, const SkewProductSpec& spec,
                                             std::size_t grid) {
    require_validated(spec, "fiber_periodic_points");
    require_word(w, "fiber_periodic_points");
    if (grid < 1000) throw UsageError("fiber_periodic_points: grid too coarse");

    const double lo = kFiberLo, hi = kFiberHi;
    auto F = [&](double t) { return apply_word_fiber(w, spec, t) - t; };

    std::vector<double> roots;
    const double h = (hi - lo) / double(grid);
    double t0 = lo, f0 = F(t0);
    for (std::size_t j = 1; j <= grid; ++j) {
        const double t1 = lo + h * double(j);
        const double f1 = F(t1);
        if (f0 == 0.0) {
            roots.push_back(t0);
        } else if (f0 * f1 < 0.0) {
            double a = t0, b = t1, fa = f0;
            for (int it = 0; it < 80; ++it) {
                const double m = 0.5 * (a + b);
                const double fm = F(m);
                if (fa * fm <= 0.0) {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            roots.push_back(0.5 * (a + b));
        }
        t0 = t1;
        f0 = f1;
    }
    if (f0 == 0.0) roots.push_back(t0);

    std::sort(roots.begin(), roots.end());
    std::vector<FiberRoot> out;
    for (double r : roots) {
        if (!out.empty() && std::abs(r - out.back().t) <= 1e-9) continue;
        FiberRoot fr;
        fr.t = r;
        fr.multiplier = word_fiber_derivative(w, spec, r);
        fr.hyperbolic = std::abs(fr.multiplier - 1.0) >= 1e-6;
        if (!fr.hyperbolic) fr.note = "non-hyperbolic root: refine the fiber profiles";
        out.push_back(std::move(fr));
    }
    return out;
}

std::vector<Word> primitive_words(int n_max) {
    if (n_max < 1 || n_max > 8)
        throw UsageError("primitive_words: n_max must be in [1, 8]");
    std::vector<Word> out;
    for (int n = 1; n <= n_max; ++n) {
        std::vector<int> syms(std::size_t(n), 1);
        while (true) {
            Word w;
            w.symbols = syms;
            if (w.is_canonical() && w.is_primitive()) out.push_back(w);
            // odometer increment in lex order
            int i = n - 1;
            while (i >= 0 && syms[std::size_t(i)] == 4) {
                syms[std::size_t(i)] = 1;
                --i;
            }
            if (i < 0) break;
            ++syms[std::size_t(i)];
        }
    }
    return out;
}

std::vector<PeriodicOrbitRecord> enumerate_periodic(int n_max, const SkewProductSpec& spec,
                                                    int threads) {
    require_validated(spec, "enumerate_periodic");
    if (n_max < 1 || n_max > 8)
        throw UsageError("enumerate_periodic: n_max must be in [1, 8]");

    const std::vector<Word> words = primitive_words(n_max);
    std::vector<std::vector<PeriodicOrbitRecord>> slots(words.size());

    parallel_for_chunks(words.size(), 4, threads, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const Word& w = words[i];
            const int n = w.length();
            const BasePoint base = base_point_of_word(w, spec);
            double sig = 1;
            for (int s : w.symbols) sig *= double(spec.band(s).orientation);
            const double pow5 = std::pow(5.0, double(n));

            for (const FiberRoot& root : fiber_periodic_points(w, spec)) {
                PeriodicOrbitRecord rec;
                rec.word = w;
                rec.base = base;
                rec.t_values.resize(std::size_t(n));
                double t = root.t;
                for (int k = 0; k < n; ++k) {
                    rec.t_values[std::size_t(k)] = t;
                    t = spec.fiber(w.symbols[std::size_t(k)]).g(t);
                }
                rec.base_stable_mult = sig / pow5;
                rec.base_unstable_mult = sig * pow5;
                rec.fiber_multiplier = root.multiplier;
                rec.stable_index = std::abs(root.multiplier) < 1.0 ? 2 : 1;
                rec.hyperbolic = root.hyperbolic;
                rec.note = root.note;

                bool sym12 = true, sym34 = true;
                for (int s : w.symbols) {
                    sym12 = sym12 && (s == 1 || s == 2);
                    sym34 = sym34 && (s == 3 || s == 4);
                }
                bool t_low = true, t_high = true;
                for (double tv : rec.t_values) {
                    t_low = t_low && tv >= -1.0 && tv <= 3.5;
                    t_high = t_high && tv >= 1.5 && tv <= 6.0;
                }
                rec.in_K_p = sym12 && t_low;
                rec.in_K_q = sym34 && t_high;
                slots[i].push_back(std::move(rec));
            }
        }
    });

    std::vector<PeriodicOrbitRecord> out;
    for (auto& s : slots)
        for (auto& r : s) out.push_back(std::move(r));
    return out;
}

namespace {

// Adjacent-root basin interval of a fixed point of the composed fiber map.
// Roots are memoized per word; the composed map is strictly increasing, so
// between consecutive fixed points orbits move monotonically.
struct BasinInterval {
    double lo = -1e300, hi = 1e300;
};

const std::vector<double>& memoized_roots(const Word& w, const SkewProductSpec& spec) {
    static std::map<std::string, std::vector<double>> cache;
    static std::mutex guard;
    std::lock_guard<std::mutex> lk(guard);
    auto it = cache.find(w.str());
    if (it != cache.end()) return it->second;
    std::vector<double> roots;
    for (const FiberRoot& r : fiber_periodic_points(w, spec)) roots.push_back(r.t);
    return cache.emplace(w.str(), std::move(roots)).first->second;
}

BasinInterval basin_around(const Word& w, double t_root, const SkewProductSpec& spec,
                           const char* who) {
    const std::vector<double>& roots = memoized_roots(w, spec);
    std::size_t k = roots.size();
    for (std::size_t i = 0; i < roots.size(); ++i)
        if (std::abs(roots[i] - t_root) <= 1e-9) {
            k = i;
            break;
        }
    if (k == roots.size())
        throw UsageError(std::string(who) + ": record value is not a fixed point of its word");
    BasinInterval b;
    if (k > 0) b.lo = roots[k - 1];
    if (k + 1 < roots.size()) b.hi = roots[k + 1];
    return b;
}

struct LeafNode {
    double value = 0;
    std::vector<int> word;
};

constexpr double kBasinMargin = 1e-8;
constexpr double kCoincidenceTol = 1e-9;

// Orbit coordinates used to reject the degenerate crossing that is the
// periodic point itself: (x, t) pairs for unstable leaves, (y, t) pairs for
// stable ones.
std::vector<std::pair<double, double>> orbit_pairs(const PeriodicOrbitRecord& r,
                                                   const SkewProductSpec& spec, bool use_x) {
    std::vector<std::pair<double, double>> out;
    double x = r.base.x, y = r.base.y;
    for (std::size_t k = 0; k < r.t_values.size(); ++k) {
        out.emplace_back(use_x ? x : y, r.t_values[k]);
        const BandSpec& b = spec.band(r.word.symbols[k]);
        const double s = double(b.orientation);
        x = x_anchor(b) + s * x / 5.0;
        y = (y - y_anchor(b)) * 5.0 * s;
    }
    return out;
}

bool near_orbit(const std::vector<std::pair<double, double>>& orbit, double coord, double value) {
    for (const auto& [c, t] : orbit)
        if (std::abs(c - coord) <= kCoincidenceTol && std::abs(t - value) <= kCoincidenceTol)
            return true;
    return false;
}

struct DirectionSearch {
    bool found = false;
    RelationWitness witness;
};

// Grows the expanding side of the source leaf-value tree breadth first and
// stops at the first value strictly inside the target basin whose crossing
// is not the periodic point itself and whose convergence run checks out.
DirectionSearch search_direction(const PeriodicOrbitRecord& S, const PeriodicOrbitRecord& T,
                                 int depth, const SkewProductSpec& spec, bool forward) {
    DirectionSearch out;

    // forward: unstable leaves of S carry values g_w(t_S); they must land in
    // the attracting basin of t_T.  backward: stable leaves of T carry values
    // g_w^{-1}(t_T); they must land in the backward basin of t_S.
    const PeriodicOrbitRecord& grow_from = forward ? S : T;
    const PeriodicOrbitRecord& basin_of = forward ? T : S;
    const BasinInterval basin =
        basin_around(basin_of.word, basin_of.t_values[0], spec, "homoclinic_related");

    const bool same_orbit = S.word == T.word && std::abs(S.t_values[0] - T.t_values[0]) <= 1e-9;
    // The crossing sits on the basin owner's invariant set, so the only way
    // it degenerates to a periodic point is by landing on that very orbit.
    const auto orbit_deg = orbit_pairs(basin_of, spec, forward);

    const std::size_t beam_cap = forward ? 4096 : 1024;
    const int verify_cap = forward ? 2000 : 300;

    auto leaf_coord = [&](const std::vector<int>& word) {
        // forward leaves live on a vertical line whose x is the affine image
        // of the source base x; backward leaves on a horizontal line in y.
        if (forward) {
            double x = grow_from.base.x;
            for (int s : word) {
                const BandSpec& b = spec.band(s);
                x = x_anchor(b) + double(b.orientation) * x / 5.0;
            }
            return x;
        }
        double y = grow_from.base.y;
        for (int s : word) {
            const BandSpec& b = spec.band(s);
            y = y_anchor(b) + double(b.orientation) * y / 5.0;
        }
        return y;
    };

    auto try_accept = [&](const LeafNode& node) {
        if (node.value <= basin.lo + kBasinMargin || node.value >= basin.hi - kBasinMargin)
            return false;
        if (same_orbit && node.word.empty()) return false;
        const double coord = leaf_coord(node.word);
        if (near_orbit(orbit_deg, coord, node.value)) return false;

        // convergence audit: iterate the composed map (or its inverse) of the
        // basin's word and require monotone approach to the basin root
        const double target = basin_of.t_values[0];
        double v = node.value;
        double dist = std::abs(v - target);
        const double initial = dist;
        int steps = 0;
        bool monotone = true;
        while (dist > 1e-8 && steps < verify_cap) {
            v = forward ? apply_word_fiber(basin_of.word, spec, v)
                        : apply_word_fiber_inverse(basin_of.word, spec, v);
            const double nd = std::abs(v - target);
            if (nd > dist + 1e-12) {
                monotone = false;
                break;
            }
            dist = nd;
            ++steps;
        }
        if (!monotone) return false;
        if (dist > 1e-8 && dist > 0.9 * initial) return false;

        out.found = true;
        out.witness.leaf_word.symbols = node.word;
        out.witness.value = node.value;
        out.witness.basin_lo = basin.lo;
        out.witness.basin_hi = basin.hi;
        out.witness.verify_steps = steps;
        out.witness.verify_initial = initial;
        out.witness.verify_final = dist;
        return true;
    };

    std::vector<LeafNode> level;
    level.push_back({grow_from.t_values[0], {}});
    if (try_accept(level[0])) return out;

    for (int d = 1; d <= depth; ++d) {
        std::vector<LeafNode> next;
        next.reserve(level.size() * 4);
        for (const LeafNode& node : level) {
            for (int s = 1; s <= 4; ++s) {
                LeafNode child;
                child.value = forward ? spec.fiber(s).g(node.value)
                                      : spec.fiber(s).g_inverse(node.value);
                child.word = node.word;
                child.word.push_back(s);
                if (try_accept(child)) return out;
                next.push_back(std::move(child));
            }
        }
        std::sort(next.begin(), next.end(), [](const LeafNode& a, const LeafNode& b) {
            if (a.value != b.value) return a.value < b.value;
            return a.word < b.word;
        });
        std::vector<LeafNode> dedup;
        for (auto& n : next)
            if (dedup.empty() || std::abs(n.value - dedup.back().value) > 1e-9)
                dedup.push_back(std::move(n));
        if (dedup.size() > beam_cap) {
            std::vector<LeafNode> thin;
            thin.reserve(beam_cap);
            const double stride = double(dedup.size()) / double(beam_cap);
            for (std::size_t j = 0; j < beam_cap; ++j)
                thin.push_back(dedup[std::size_t(double(j) * stride)]);
            dedup = std::move(thin);
        }
        level = std::move(dedup);
    }
    return out;
}

}  // namespace

RelationResult homoclinic_related(const PeriodicOrbitRecord& A, const PeriodicOrbitRecord& B,
                                  int depth, const SkewProductSpec& spec) {
    require_validated(spec, "homoclinic_related");
    if (depth < 1 || depth > 16) throw UsageError("homoclinic_related: depth must be in [1, 16]");
    if (A.t_values.empty() || B.t_values.empty())
        throw UsageError("homoclinic_related: record has no fiber orbit");
    if (!A.hyperbolic || !B.hyperbolic)
        throw UsageError("homoclinic_related: records must be hyperbolic");
    if (A.stable_index != B.stable_index)
        throw UsageError("homoclinic_related: records have different stable indices");

    // Stable index 2 means the fiber root attracts, so unstable leaves are
    // grown forward; index 1 mirrors everything through the inverse maps.
    const bool forward = A.stable_index == 2;

    RelationResult res;
    DirectionSearch ab = search_direction(A, B, depth, spec, forward);
    if (!ab.found) return res;
    DirectionSearch ba = search_direction(B, A, depth, spec, forward);
    if (!ba.found) return res;
    res.status = Relation::Related;
    res.a_to_b = ab.witness;
    res.b_to_a = ba.witness;
    return res;
}

std::string periodic_records_to_json(const std::vector<PeriodicOrbitRecord>& records) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const PeriodicOrbitRecord& r : records) {
        nlohmann::ordered_json j;
        j["word"] = r.word.str();
        j["x"] = r.base.x;
        j["y"] = r.base.y;
        j["t_values"] = r.t_values;
        j["base_stable_mult"] = r.base_stable_mult;
        j["base_unstable_mult"] = r.base_unstable_mult;
        j["fiber_multiplier"] = r.fiber_multiplier;
        j["stable_index"] = r.stable_index;
        j["hyperbolic"] = r.hyperbolic;
        j["in_K_p"] = r.in_K_p;
        j["in_K_q"] = r.in_K_q;
        if (!r.note.empty()) j["note"] = r.note;
        arr.push_back(std::move(j));
    }
    return arr.dump(2);
}

}  // namespace chainforge
