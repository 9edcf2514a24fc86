#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "chainforge/conley.hpp"
#include "chainforge/map.hpp"
#include "chainforge/spec.hpp"

using namespace chainforge;

namespace {

struct RefClasses {
    std::vector<std::vector<std::uint32_t>> classes;
    std::vector<std::uint32_t> recurrent;
};

// Reference recurrence oracle: Kosaraju's double pass (finish order on the
// graph, then reachability sweeps on the transpose) over a materialized
// adjacency. Independent of the module's single-pass computation; meant for
// graphs up to ~1e4 nodes.
RefClasses classes_by_double_reachability(std::size_t n,
                                          const std::vector<std::vector<std::uint32_t>>& out) {
    std::vector<std::vector<std::uint32_t>> in(n);
    for (std::size_t v = 0; v < n; ++v)
        for (std::uint32_t w : out[v]) in[w].push_back(std::uint32_t(v));

    // pass 1: iterative DFS, record finish order
    std::vector<std::uint32_t> order;
    order.reserve(n);
    std::vector<std::uint8_t> seen(n, 0);
    std::vector<std::pair<std::uint32_t, std::size_t>> stack;
    for (std::uint32_t v0 = 0; v0 < n; ++v0) {
        if (seen[v0]) continue;
        seen[v0] = 1;
        stack.emplace_back(v0, 0);
        while (!stack.empty()) {
            auto& [v, pos] = stack.back();
            if (pos < out[v].size()) {
                const std::uint32_t w = out[v][pos++];
                if (!seen[w]) {
                    seen[w] = 1;
                    stack.emplace_back(w, 0);
                }
            } else {
                order.push_back(v);
                stack.pop_back();
            }
        }
    }

    // pass 2: sweep the transpose in reverse finish order
    std::vector<int> comp(n, -1);
    std::vector<std::vector<std::uint32_t>> sccs;
    std::vector<std::uint32_t> queue;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if (comp[*it] >= 0) continue;
        const int id = int(sccs.size());
        sccs.emplace_back();
        comp[*it] = id;
        queue.assign(1, *it);
        while (!queue.empty()) {
            const std::uint32_t v = queue.back();
            queue.pop_back();
            sccs[id].push_back(v);
            for (std::uint32_t w : in[v])
                if (comp[w] < 0) {
                    comp[w] = id;
                    queue.push_back(w);
                }
        }
    }

    RefClasses ref;
    for (auto& m : sccs) {
        std::sort(m.begin(), m.end());
        const bool self_loop =
            m.size() == 1 && std::binary_search(out[m[0]].begin(), out[m[0]].end(), m[0]);
        if (m.size() >= 2 || self_loop) ref.classes.push_back(std::move(m));
    }
    std::sort(ref.classes.begin(), ref.classes.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    for (const auto& c : ref.classes)
        ref.recurrent.insert(ref.recurrent.end(), c.begin(), c.end());
    std::sort(ref.recurrent.begin(), ref.recurrent.end());
    return ref;
}

// Interior adjacency, materialized: exit nodes neither send nor receive,
// duplicate targets collapse, lists end up sorted.
std::vector<std::vector<std::uint32_t>> materialize(const BoxGraph& g) {
    std::vector<std::vector<std::uint32_t>> out(g.node_count());
    for (std::size_t i = 0; i < g.node_count(); ++i) {
        if (g.exit_flag[i]) continue;
        g.for_each_out(i, [&](std::uint32_t j) {
            if (!g.exit_flag[j]) out[i].push_back(j);
        });
        auto& o = out[i];
        std::sort(o.begin(), o.end());
        o.erase(std::unique(o.begin(), o.end()), o.end());
    }
    return out;
}

double dist_point_box(const Vec3& p, const Vec3& lo, const Vec3& hi) {
    double d2 = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double c = std::min(std::max(p[a], lo[a]), hi[a]);
        d2 += (p[a] - c) * (p[a] - c);
    }
    return std::sqrt(d2);
}

}  // namespace

TEST_CASE("chain classes match the double pass reachability oracle") {
    const SkewProductSpec& spec = validated_reference_spec();
    for (int depth : {3, 4}) {
        CAPTURE(depth);
        const BoxGraph g = build_box_graph(spec, depth);
        const std::size_t n = g.node_count();
        REQUIRE(n == std::size_t(1) << (3 * depth));

        const auto out = materialize(g);
        const RefClasses want = classes_by_double_reachability(n, out);
        const ChainClasses got = chain_classes(g);

        REQUIRE(got.classes.size() == want.classes.size());
        CHECK(got.classes == want.classes);
        CHECK(got.recurrent == want.recurrent);
    }
}

TEST_CASE("fattened transitions cover direct images of random points") {
    const SkewProductSpec& spec = validated_reference_spec();
    for (int depth : {4, 5}) {
        CAPTURE(depth);
        const BoxGraph g = build_box_graph(spec, depth);
        Rng rng(20260817 + depth);
        std::size_t covered = 0, missing = 0;
        for (int k = 0; k < 100000; ++k) {
            const Vec3 z(rng.uniform(0.0, 5.0), rng.uniform(0.0, 5.0), rng.uniform(-1.0, 6.0));
            const OrbitState next = apply(OrbitState::at(z), spec);
            if (!next.inside) continue;  // only pairs that stay in the block
            const std::size_t i = g.node_of_point(z);
            const std::size_t j = g.node_of_point(next.z);
            ++covered;
            if (!g.has_edge(i, j)) ++missing;
        }
        CHECK(covered > 50000);
        CHECK(missing == 0);
    }
}

TEST_CASE("branch fixed point boxes keep self loops at every depth") {
    const SkewProductSpec& spec = validated_reference_spec();
    const auto fixed = branch_fixed_points(spec);

    // sanity: each listed point is fixed under one application of the map
    for (const Vec3& z : fixed) {
        const OrbitState next = apply(OrbitState::at(z), spec);
        REQUIRE(next.inside);
        REQUIRE((next.z - z).norm() < 1e-12);
    }

    for (int depth = 1; depth <= 6; ++depth) {
        CAPTURE(depth);
        const BoxGraph g = build_box_graph(spec, depth);
        for (const Vec3& z : fixed) {
            const std::size_t i = g.node_of_point(z);
            REQUIRE(i != BoxGraph::npos);
            CHECK(!g.exit_flag[i]);
            CHECK(g.has_edge(i, i));
        }
    }
}

TEST_CASE("boxes strictly inside a band gap only exit") {
    const SkewProductSpec& spec = validated_reference_spec();
    // central y gap (2.2, 2.8); boxes fully inside exist from depth 5 on
    for (int depth : {5, 6}) {
        CAPTURE(depth);
        const BoxGraph g = build_box_graph(spec, depth);
        const int n = g.grid.per_axis();
        const double hy = 5.0 / n;
        std::size_t checked = 0;
        for (int iy = 0; iy < n; ++iy) {
            const double lo = iy * hy, hi = (iy + 1) * hy;
            if (!(lo > 2.2 && hi < 2.8)) continue;
            // sample a few columns across the gap row
            for (int ix : {0, n / 2, n - 1}) {
                for (int it : {0, n / 2, n - 1}) {
                    const std::size_t node = g.node_of_key(g.grid.key(ix, iy, it));
                    REQUIRE(node != BoxGraph::npos);
                    CHECK(g.exit_flag[node]);
                    std::size_t outs = 0;
                    g.for_each_out(node, [&](std::uint32_t) { ++outs; });
                    CHECK(outs == 0);
                    ++checked;
                }
            }
        }
        CHECK(checked >= 9);
    }

    // edge gap [0, 0.1): the first row at depth 6 sits strictly below band 1
    const BoxGraph g6 = build_box_graph(spec, 6);
    const std::size_t low = g6.node_of_key(g6.grid.key(3, 0, 20));
    REQUIRE(low != BoxGraph::npos);
    CHECK(g6.exit_flag[low]);
}

TEST_CASE("edge count stays proportional to the box count") {
    const SkewProductSpec& spec = validated_reference_spec();
    for (int depth : {3, 4, 5}) {
        CAPTURE(depth);
        const BoxGraph g = build_box_graph(spec, depth);
        const std::size_t nodes = g.node_count();
        const std::size_t edges = count_edges(g);
        CHECK(edges >= nodes);        // nearly every box has successors
        CHECK(edges <= 700 * nodes);  // bounded image aspect keeps degrees O(1)
    }
}

TEST_CASE("all eight branch fixed point boxes share one chain class at depth 6") {
    const SkewProductSpec& spec = validated_reference_spec();
    const BoxGraph g = build_box_graph(spec, 6);  // eps defaults to one box diameter
    const ChainClasses cc = chain_classes(g);
    REQUIRE(!cc.classes.empty());

    // classes are pairwise disjoint and their union is the recurrent set
    std::size_t total = 0;
    std::vector<std::uint32_t> merged;
    for (const auto& c : cc.classes) {
        REQUIRE(std::is_sorted(c.begin(), c.end()));
        total += c.size();
        merged.insert(merged.end(), c.begin(), c.end());
    }
    std::sort(merged.begin(), merged.end());
    CHECK(std::adjacent_find(merged.begin(), merged.end()) == merged.end());
    CHECK(total == cc.recurrent.size());
    CHECK(merged == cc.recurrent);

    // no exit-flagged node is ever recurrent
    for (std::uint32_t v : cc.recurrent) REQUIRE(!g.exit_flag[v]);

    // membership: one common class holds every branch fixed point box
    const auto fixed = branch_fixed_points(spec);
    std::set<std::size_t> class_ids;
    for (const Vec3& z : fixed) {
        const std::uint32_t node = std::uint32_t(g.node_of_point(z));
        std::size_t id = std::size_t(-1);
        for (std::size_t k = 0; k < cc.classes.size(); ++k)
            if (std::binary_search(cc.classes[k].begin(), cc.classes[k].end(), node)) {
                id = k;
                break;
            }
        REQUIRE(id != std::size_t(-1));
        class_ids.insert(id);
    }
    CHECK(class_ids.size() == 1);
}

TEST_CASE("pseudo orbit certificates") {
    const SkewProductSpec& spec = validated_reference_spec();
    const BoxGraph g = build_box_graph(spec, 6);
    const auto fixed = branch_fixed_points(spec);
    const Vec3 p = fixed[0];             // (0.125, 0.125, 0)
    const Vec3 q3 = fixed[5];            // (3.5, 3.5, 2)
    REQUIRE(p.z() == 0.0);
    REQUIRE(q3.z() == 2.0);

    SUBCASE("a fixed point certifies itself with zero jump budget") {
        const PseudoOrbit orbit = pseudo_orbit_certificate(p, p, p, 0.0, g);
        CHECK(orbit.points.size() == 1);
        CHECK((orbit.points[0] - p).norm() == 0.0);
        CHECK(orbit.closed);
        CHECK(orbit.eps <= 1e-13);  // floating point residual of one map step
    }

    SUBCASE("closed loop through a waypoint on the vertical leaf") {
        const Vec3 via(0.125, 3.0, 0.0);
        const PseudoOrbit orbit = pseudo_orbit_certificate(p, via, q3, 0.1, g);
        REQUIRE(orbit.points.size() >= 3);
        CHECK(orbit.points.size() <= 10000);
        CHECK(orbit.closed);
        CHECK(orbit.eps <= 0.1 + 1e-9);

        // anchors appear literally in the sequence, in order
        CHECK((orbit.points.front() - p).norm() == 0.0);
        std::size_t via_at = orbit.points.size(), to_at = orbit.points.size();
        for (std::size_t k = 0; k < orbit.points.size(); ++k) {
            if (via_at == orbit.points.size() && (orbit.points[k] - via).norm() == 0.0) via_at = k;
            if ((orbit.points[k] - q3).norm() == 0.0) to_at = k;
        }
        REQUIRE(via_at < orbit.points.size());
        REQUIRE(to_at < orbit.points.size());
        CHECK(via_at <= to_at);

        // independent pointwise verification of every jump, wrap included
        double worst = 0.0;
        for (std::size_t k = 0; k < orbit.points.size(); ++k) {
            const Vec3& z = orbit.points[k];
            CHECK(z.x() >= 0.0);
            CHECK(z.x() <= 5.0);
            CHECK(z.z() >= -1.0);
            CHECK(z.z() <= 6.0);
            const bool last = k + 1 == orbit.points.size();
            if (last && !orbit.closed) break;
            const OrbitState next = apply(OrbitState::at(z), spec);
            REQUIRE(next.inside);
            const Vec3& target = last ? orbit.points.front() : orbit.points[k + 1];
            worst = std::max(worst, (next.z - target).norm());
        }
        CHECK(worst <= 0.1 + 1e-9);
        CHECK(worst == doctest::Approx(orbit.eps).epsilon(1e-12));
    }

    SUBCASE("no path reaches a band gap target") {
        const Vec3 gap_center(2.5, 2.5, 2.5);
        CHECK_THROWS_AS(pseudo_orbit_certificate(p, std::nullopt, gap_center, 0.1, g),
                        NoPathError);
    }

    SUBCASE("endpoint and budget guards") {
        CHECK_THROWS_AS(pseudo_orbit_certificate(Vec3(-1.0, 0.5, 0.0), std::nullopt, p, 0.1, g),
                        UsageError);
        CHECK_THROWS_AS(pseudo_orbit_certificate(p, std::nullopt, Vec3(0.5, 0.5, 7.0), 0.1, g),
                        UsageError);
        CHECK_THROWS_AS(pseudo_orbit_certificate(p, std::nullopt, q3, -0.5, g), UsageError);
    }
}

TEST_CASE("recurrent boxes grow with the fattening radius") {
    const SkewProductSpec& spec = validated_reference_spec();
    const BoxGraph g1 = build_box_graph(spec, 4);
    const BoxGraph g2 = build_box_graph(spec, 4, 2.0 * g1.eps);
    REQUIRE(g2.eps == 2.0 * g1.eps);

    CHECK(count_edges(g1) <= count_edges(g2));

    const ChainClasses c1 = chain_classes(g1);
    const ChainClasses c2 = chain_classes(g2);
    // node indices coincide at equal depth (full enumeration): subset check
    CHECK(std::includes(c2.recurrent.begin(), c2.recurrent.end(), c1.recurrent.begin(),
                        c1.recurrent.end()));
}

TEST_CASE("refined recurrent boxes stay inside padded coarse classes") {
    const SkewProductSpec& spec = validated_reference_spec();
    const BoxGraph g4 = build_box_graph(spec, 4);
    const BoxGraph g5 = build_box_graph(spec, 5);
    const ChainClasses c4 = chain_classes(g4);
    const ChainClasses c5 = chain_classes(g5);
    REQUIRE(!c4.recurrent.empty());
    REQUIRE(!c5.recurrent.empty());

    std::set<std::uint64_t> coarse;
    for (std::uint32_t v : c4.recurrent) coarse.insert(g4.grid.active[v]);

    const int n4 = g4.grid.per_axis();
    std::size_t outside = 0;
    for (std::uint32_t v : c5.recurrent) {
        const auto c = g5.grid.coords(g5.grid.active[v]);
        // parent box, then a one-box halo around it
        bool near = false;
        for (int dt = -1; dt <= 1 && !near; ++dt)
            for (int dy = -1; dy <= 1 && !near; ++dy)
                for (int dx = -1; dx <= 1 && !near; ++dx) {
                    const int ix = c[0] / 2 + dx, iy = c[1] / 2 + dy, it = c[2] / 2 + dt;
                    if (ix < 0 || iy < 0 || it < 0 || ix >= n4 || iy >= n4 || it >= n4) continue;
                    near = coarse.count(g4.grid.key(ix, iy, it)) > 0;
                }
        if (!near) ++outside;
    }
    CHECK(outside == 0);
}

TEST_CASE("adaptive refinement above the full enumeration depth") {
    const SkewProductSpec& spec = validated_reference_spec();

    // independently recompute the expected active set: children of depth 6
    // recurrent boxes
    const BoxGraph g6 = build_box_graph(spec, 6);
    const ChainClasses c6 = chain_classes(g6);
    std::set<std::uint64_t> expected;
    const std::uint64_t n7 = 128;
    for (std::uint32_t v : c6.recurrent) {
        const auto c = g6.grid.coords(g6.grid.active[v]);
        for (int dt = 0; dt < 2; ++dt)
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx)
                    expected.insert((std::uint64_t(2 * c[2] + dt) * n7 + (2 * c[1] + dy)) * n7 +
                                    (2 * c[0] + dx));
    }

    const BoxGraph g7 = build_box_graph(spec, 7);
    REQUIRE(g7.grid.depth == 7);
    CHECK(g7.node_count() == expected.size());
    CHECK(g7.node_count() < (std::size_t(1) << 21));  // well below full enumeration
    for (std::uint64_t key : g7.grid.active) REQUIRE(expected.count(key) == 1);

    const ChainClasses c7 = chain_classes(g7);
    for (const Vec3& z : branch_fixed_points(spec)) {
        const std::size_t node = g7.node_of_point(z);
        REQUIRE(node != BoxGraph::npos);
        CHECK(!g7.exit_flag[node]);
        CHECK(g7.has_edge(node, node));
        CHECK(std::binary_search(c7.recurrent.begin(), c7.recurrent.end(), std::uint32_t(node)));
    }
}

TEST_CASE("depth and resource guards") {
    const SkewProductSpec& spec = validated_reference_spec();
    CHECK_THROWS_AS(build_box_graph(spec, 10), ResourceError);
    CHECK_THROWS_AS(build_box_graph(spec, 99), ResourceError);
    CHECK_THROWS_AS(build_box_graph(spec, -1), UsageError);
    CHECK_THROWS_AS(build_box_graph(reference_spec(), 4), UsageError);

    const std::vector<double> r{0.1};
    const std::vector<int> d{4};
    CHECK_THROWS_AS(local_isolation_profile(Vec3(9.0, 0.5, 0.0), r, d, spec), UsageError);
    CHECK_THROWS_AS(local_isolation_profile(Vec3(0.5, 0.5, 0.0), {}, d, spec), UsageError);
    CHECK_THROWS_AS(local_isolation_profile(Vec3(0.5, 0.5, 0.0), r, {}, spec), UsageError);
    CHECK_THROWS_AS(local_isolation_profile(Vec3(0.5, 0.5, 0.0), {-0.1}, d, spec), UsageError);
    CHECK_THROWS_AS(local_isolation_profile(Vec3(0.5, 0.5, 0.0), r, {10}, spec), ResourceError);
}

TEST_CASE("isolation profiles separate recurrence from gap points") {
    const SkewProductSpec& spec = validated_reference_spec();
    const Vec3 p = branch_fixed_points(spec)[0];

    SUBCASE("the fixed point keeps recurrent company at every depth") {
        const IsolationProfile prof =
            local_isolation_profile(p, {0.2}, {6, 7}, spec);
        REQUIRE(prof.rows.size() == 2);
        for (const IsolationRow& row : prof.rows) {
            CAPTURE(row.depth);
            CHECK(row.radius == 0.2);
            CHECK(row.count > 0);  // p sits inside the nontrivial class
            CHECK(row.box_diameter > 0.0);
        }
        CHECK(prof.rows[0].depth == 6);
        CHECK(prof.rows[1].depth == 7);
    }

    SUBCASE("a gap point sees no chain recurrence at all") {
        const Vec3 gap_center(2.5, 2.5, 2.5);
        const IsolationProfile prof =
            local_isolation_profile(gap_center, {0.1}, {5, 6}, spec);
        REQUIRE(prof.rows.size() == 2);
        for (const IsolationRow& row : prof.rows) {
            CAPTURE(row.depth);
            CHECK(row.count == 0);
        }
    }
}

TEST_CASE("serialization of classes, certificates and profiles") {
    const SkewProductSpec& spec = validated_reference_spec();
    const BoxGraph g = build_box_graph(spec, 4);
    const ChainClasses cc = chain_classes(g);

    const std::string json = classes_to_json(g, cc);
    CHECK(json.find("\"depth\": 4") != std::string::npos);
    CHECK(json.find("\"class_count\"") != std::string::npos);
    CHECK(json.find("\"fixed_points\"") != std::string::npos);
    CHECK(json.find("\"recurrent_boxes\"") != std::string::npos);

    const std::string csv = boxes_csv(g, cc);
    REQUIRE(csv.rfind("depth,ix,iy,it,class", 0) == 0);
    const std::size_t lines = std::size_t(std::count(csv.begin(), csv.end(), '\n'));
    CHECK(lines == cc.recurrent.size() + 1);

    const Vec3 p = branch_fixed_points(spec)[0];
    const PseudoOrbit orbit = pseudo_orbit_certificate(p, p, p, 1e-6, g);
    const std::string oj = pseudo_orbit_to_json(orbit);
    CHECK(oj.find("\"closed\": true") != std::string::npos);
    CHECK(oj.find("\"length\": 1") != std::string::npos);

    const IsolationProfile prof = local_isolation_profile(p, {0.2}, {4}, spec);
    const std::string pj = isolation_to_json(prof);
    CHECK(pj.find("\"rows\"") != std::string::npos);
    CHECK(pj.find("\"radius\": 0.2") != std::string::npos);
}
