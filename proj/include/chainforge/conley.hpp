#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "chainforge/spec.hpp"
#include "chainforge/types.hpp"

namespace chainforge {

// Raised by pseudo_orbit_certificate when the transition graph does not
// connect the requested endpoints at the given jump budget. The usual cure is
// a deeper grid or a larger budget.
struct NoPathError : std::runtime_error {
    explicit NoPathError(const std::string& what) : std::runtime_error(what) {}
};

// Uniform subdivision of the block [0,5]^2 x [-1,6] into 2^depth boxes per
// axis. Only the boxes listed in `active` carry graph nodes; full coverings
// list every box, refined coverings list a subset.
struct BoxGrid {
    int depth = 0;
    std::vector<std::uint64_t> active;  // sorted box keys

    int per_axis() const { return 1 << depth; }
    // box sides are exact dyadic fractions of the block extents
    Vec3 side() const {
        const double n = double(per_axis());
        return Vec3(5.0 / n, 5.0 / n, 7.0 / n);
    }
    double diameter() const { return side().norm(); }

    std::uint64_t key(int ix, int iy, int it) const {
        const std::uint64_t n = std::uint64_t(per_axis());
        return (std::uint64_t(it) * n + std::uint64_t(iy)) * n + std::uint64_t(ix);
    }
    std::array<int, 3> coords(std::uint64_t key) const {
        const std::uint64_t n = std::uint64_t(per_axis());
        return {int(key % n), int((key / n) % n), int(key / (n * n))};
    }
    // key of the box containing a point of the block (indices clamped so the
    // closed upper faces belong to the last box)
    std::uint64_t key_of(const Vec3& z) const;
    Vec3 center(std::uint64_t key) const;
    void bounds(std::uint64_t key, Vec3& lo, Vec3& hi) const;
};

// Axis-aligned enclosure of the image of one band slice of a box.
struct ImageRect {
    Vec3 lo;
    Vec3 hi;
};

// Fattened-image transition graph over a box covering. Edges are not stored:
// they are enumerated on demand from the per-box image enclosures, fattened
// by eps on every axis. A node is exit-flagged when it can have no successor
// inside the block (its box misses every band, or all enclosures leave).
struct BoxGraph {
    static constexpr std::size_t npos = std::size_t(-1);

    BoxGrid grid;
    double eps = 0.0;
    SkewProductSpec spec;

    std::vector<std::uint32_t> rect_begin;  // CSR offsets into rects, size nodes+1
    std::vector<ImageRect> rects;
    std::vector<std::uint8_t> exit_flag;

    std::size_t node_count() const { return grid.active.size(); }
    std::size_t node_of_key(std::uint64_t key) const;
    std::size_t node_of_point(const Vec3& z) const;
    bool has_edge(std::size_t from, std::size_t to) const;
    void for_each_out(std::size_t from, const std::function<void(std::uint32_t)>& fn) const;

  private:
    friend BoxGraph build_box_graph(const SkewProductSpec&, int, double, int);
    // node lookup: identity for full coverings, dense or sorted otherwise
    enum class Lookup { Full, Dense, Sorted };
    Lookup lookup_ = Lookup::Full;
    std::vector<std::uint32_t> dense_;
};

// Builds the transition graph at the given depth. eps < 0 selects the default
// fattening of one box diameter. Depths above the full-enumeration threshold
// refine only the chain-recurrent boxes of the previous depth, which keeps
// the covering an outer approximation of every recurrent orbit.
BoxGraph build_box_graph(const SkewProductSpec& spec, int depth, double eps = -1.0,
                         int threads = 0);

// Number of distinct directed edges leaving non-exit nodes.
std::size_t count_edges(const BoxGraph& graph, int threads = 0);

struct ChainClasses {
    std::vector<std::vector<std::uint32_t>> classes;  // sorted members, sorted by front
    std::vector<std::uint32_t> recurrent;             // sorted union of all classes
};

// Chain-recurrent boxes and their classes: strongly connected components of
// the interior subgraph that carry at least one internal edge.
ChainClasses chain_classes(const BoxGraph& graph);

struct PseudoOrbit {
    std::vector<Vec3> points;
    double eps = 0.0;  // largest observed jump |F(z_k) - z_{k+1}|
    bool closed = false;
};

// Concrete jump-bounded orbit from `from` to `to` (through `via` when given),
// assembled along a shortest admissible path of graph boxes and verified
// pointwise. The closing leg back to `from` is always attempted; its success
// sets `closed`. Throws NoPathError when a mandatory leg cannot be realized.
PseudoOrbit pseudo_orbit_certificate(const Vec3& from, const std::optional<Vec3>& via,
                                     const Vec3& to, double eps, const BoxGraph& graph);

struct IsolationRow {
    double radius = 0.0;
    int depth = 0;
    std::size_t count = 0;
    double box_diameter = 0.0;
};

struct IsolationProfile {
    Vec3 point;
    std::vector<IsolationRow> rows;
};

// For each (depth, radius) pair: the number of chain-recurrent boxes that
// intersect the ball around the point but stay at least one box diameter away
// from the point's finite orbit (forward and backward, until escape or 500
// steps). Zero rows at small radii and fine depths are isolation evidence.
IsolationProfile local_isolation_profile(const Vec3& point, const std::vector<double>& radii,
                                         const std::vector<int>& depths,
                                         const SkewProductSpec& spec, int threads = 0);

// The eight fixed points of the unperturbed map: per band, the fixed base
// coordinate paired with the attracting and the repelling fiber zero.
std::array<Vec3, 8> branch_fixed_points(const SkewProductSpec& spec);

std::string classes_to_json(const BoxGraph& graph, const ChainClasses& cc);
std::string boxes_csv(const BoxGraph& graph, const ChainClasses& cc);
std::string pseudo_orbit_to_json(const PseudoOrbit& orbit);
std::string isolation_to_json(const IsolationProfile& profile);

}  // namespace chainforge
