#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "chainforge/map.hpp"
#include "chainforge/symbolic.hpp"
#include "chainforge/validate.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <map>

using namespace chainforge;

namespace {

const PeriodicOrbitRecord& find_record(const std::vector<PeriodicOrbitRecord>& recs,
                                       const std::string& word, int index) {
    for (const auto& r : recs)
        if (r.word.str() == word && r.stable_index == index) return r;
    REQUIRE(false);
    return recs.front();
}

const PeriodicOrbitRecord& find_record_at(const std::vector<PeriodicOrbitRecord>& recs,
                                          const std::string& word, double t) {
    for (const auto& r : recs)
        if (r.word.str() == word && std::abs(r.t_values[0] - t) < 1e-6) return r;
    REQUIRE(false);
    return recs.front();
}

}  // namespace

TEST_CASE("word parsing, rotation and primitivity") {
    Word w = Word::parse("312");
    CHECK(w.str() == "312");
    CHECK(w.canonical_rotation().str() == "123");
    CHECK_FALSE(w.is_canonical());
    CHECK(Word::parse("123").is_canonical());

    CHECK(Word::parse("12").is_primitive());
    CHECK_FALSE(Word::parse("1212").is_primitive());
    CHECK_FALSE(Word::parse("111").is_primitive());
    CHECK(Word::parse("1").is_primitive());

    CHECK_THROWS_AS(Word::parse("105"), UsageError);
    CHECK_THROWS_AS(Word::parse("5"), UsageError);
}

TEST_CASE("single letter base points are the band fixed points") {
    const SkewProductSpec& spec = validated_reference_spec();
    BasePoint b1 = base_point_of_word(Word::parse("1"), spec);
    CHECK(b1.x == doctest::Approx(0.125).epsilon(1e-15));
    CHECK(b1.y == doctest::Approx(0.125).epsilon(1e-15));
    BasePoint b2 = base_point_of_word(Word::parse("2"), spec);
    CHECK(b2.x == doctest::Approx(11.0 / 6.0).epsilon(1e-14));
    CHECK(b2.y == doctest::Approx(11.0 / 6.0).epsilon(1e-14));
    BasePoint b3 = base_point_of_word(Word::parse("3"), spec);
    CHECK(b3.x == doctest::Approx(3.5).epsilon(1e-15));
    CHECK(b3.y == doctest::Approx(3.5).epsilon(1e-15));
    BasePoint b4 = base_point_of_word(Word::parse("4"), spec);
    CHECK(b4.x == doctest::Approx(49.0 / 12.0).epsilon(1e-14));
    CHECK(b4.y == doctest::Approx(49.0 / 12.0).epsilon(1e-14));
}

TEST_CASE("periodic base points close up under the full map") {
    const SkewProductSpec& spec = validated_reference_spec();
    for (const char* digits : {"13", "124", "3142", "1234"}) {
        Word w = Word::parse(digits);
        BasePoint base = base_point_of_word(w, spec);
        auto roots = fiber_periodic_points(w, spec);
        REQUIRE(!roots.empty());
        OrbitState st = OrbitState::at(Vec3(base.x, base.y, roots[0].t));
        for (int k = 0; k < w.length(); ++k) {
            st = apply(st, spec);
            REQUIRE(st.inside);
        }
        CHECK(std::abs(st.z.x() - base.x) < 1e-10);
        CHECK(std::abs(st.z.y() - base.y) < 1e-10);
        CHECK(std::abs(st.z.z() - roots[0].t) < 1e-9);
    }
}

TEST_CASE("single letter fiber roots match the designed zeros and multipliers") {
    const SkewProductSpec& spec = validated_reference_spec();
    struct Row {
        const char* word;
        double root, mult;
    };
    const std::array<Row, 8> table{{{"1", 0.0, 0.955},
                                    {"1", 4.0, 1.135},
                                    {"2", 3.0, 0.865},
                                    {"2", 4.0, 1.0582857142857143},
                                    {"3", 1.0, 0.865},
                                    {"3", 2.0, 1.09},
                                    {"4", 1.0, 0.8575},
                                    {"4", 5.0, 1.045}}};
    std::map<std::string, std::vector<FiberRoot>> roots;
    for (const char* w : {"1", "2", "3", "4"}) {
        roots[w] = fiber_periodic_points(Word::parse(w), spec);
        CHECK(roots[w].size() == 2);
    }
    for (const Row& row : table) {
        bool hit = false;
        for (const FiberRoot& r : roots[row.word]) {
            if (std::abs(r.t - row.root) > 1e-12) continue;
            hit = true;
            CHECK(r.multiplier == doctest::Approx(row.mult).epsilon(1e-12));
            CHECK(r.hyperbolic);
        }
        CHECK(hit);
    }
}

TEST_CASE("mixed word roots exist and obey the chain rule") {
    const SkewProductSpec& spec = validated_reference_spec();
    Word w = Word::parse("13");
    auto roots = fiber_periodic_points(w, spec);
    bool inside = false;
    for (const FiberRoot& r : roots) {
        if (r.t > 0.0 && r.t < 2.0) inside = true;
        CHECK(r.hyperbolic);

        const double h = 1e-6;
        const double num = (apply_word_fiber(w, spec, r.t + h) -
                            apply_word_fiber(w, spec, r.t - h)) /
                           (2.0 * h);
        CHECK(r.multiplier == doctest::Approx(num).epsilon(2e-6));

        // a fixed point of the composition really is 2-periodic in the fiber
        CHECK(std::abs(apply_word_fiber(w, spec, r.t) - r.t) < 1e-11);
    }
    CHECK(inside);
}

TEST_CASE("primitive word census matches the necklace count") {
    auto words = primitive_words(6);
    std::array<std::int64_t, 7> by_len{};
    for (const Word& w : words) {
        CHECK(w.is_canonical());
        CHECK(w.is_primitive());
        by_len[std::size_t(w.length())]++;
    }
    CHECK(by_len[1] == 4);
    CHECK(by_len[2] == 6);
    CHECK(by_len[3] == 20);
    CHECK(by_len[4] == 60);
    CHECK(by_len[5] == 204);
    CHECK(by_len[6] == 670);

    // every length-n branch itinerary belongs to exactly one rotation class
    // of a primitive word whose length divides n, so these sum to 4^n
    for (int n = 1; n <= 6; ++n) {
        std::int64_t total = 0;
        for (int d = 1; d <= n; ++d)
            if (n % d == 0) total += std::int64_t(d) * by_len[std::size_t(d)];
        CHECK(total == std::int64_t(std::pow(4.0, n)));
    }
}

TEST_CASE("period one census lists all eight fixed points") {
    const SkewProductSpec& spec = validated_reference_spec();
    auto recs = enumerate_periodic(1, spec);
    REQUIRE(recs.size() == 8);

    int attracting = 0, repelling = 0;
    for (const auto& r : recs) {
        CHECK(r.hyperbolic);
        CHECK(r.t_values.size() == 1);
        if (r.stable_index == 2)
            ++attracting;
        else
            ++repelling;
        CHECK(std::abs(r.base_stable_mult) == doctest::Approx(0.2).epsilon(1e-15));
        CHECK(std::abs(r.base_unstable_mult) == doctest::Approx(5.0).epsilon(1e-15));
    }
    CHECK(attracting == 4);
    CHECK(repelling == 4);

    const auto& p1 = find_record(recs, "1", 2);
    CHECK(std::abs(p1.t_values[0] - 0.0) < 1e-12);
    CHECK(p1.in_K_p);
    CHECK_FALSE(p1.in_K_q);

    const auto& q1 = find_record(recs, "1", 1);
    CHECK(std::abs(q1.t_values[0] - 4.0) < 1e-12);
    CHECK_FALSE(q1.in_K_p);
    CHECK_FALSE(q1.in_K_q);

    const auto& p2 = find_record(recs, "2", 2);
    CHECK(std::abs(p2.t_values[0] - 3.0) < 1e-12);
    CHECK(p2.in_K_p);

    const auto& q4 = find_record(recs, "4", 1);
    CHECK(std::abs(q4.t_values[0] - 5.0) < 1e-12);
    CHECK(q4.in_K_q);
    CHECK_FALSE(q4.in_K_p);

    const auto& p4 = find_record(recs, "4", 2);
    CHECK(std::abs(p4.t_values[0] - 1.0) < 1e-12);
    CHECK_FALSE(p4.in_K_q);  // fiber value below the upper window
}

TEST_CASE("attracting and repelling roots stay in their designed slabs") {
    const SkewProductSpec& spec = validated_reference_spec();
    auto recs = enumerate_periodic(4, spec);
    CHECK(recs.size() > 90);

    for (const auto& r : recs) {
        bool sym12 = true, sym34 = true;
        for (int s : r.word.symbols) {
            sym12 = sym12 && (s == 1 || s == 2);
            sym34 = sym34 && (s == 3 || s == 4);
        }
        if (sym12 && r.stable_index == 2) {
            for (double t : r.t_values) {
                CHECK(t > -1e-9);
                CHECK(t < 3.0 + 1e-9);
            }
            CHECK(r.in_K_p);
        }
        if (sym34 && r.stable_index == 1) {
            for (double t : r.t_values) {
                CHECK(t > 2.0 - 1e-9);
                CHECK(t < 5.0 + 1e-9);
            }
            CHECK(r.in_K_q);
        }
        // orbit closure: every fiber value is itself a root of the rotated word
        const int n = r.word.length();
        double t = r.t_values[std::size_t(n - 1)];
        t = spec.fiber(r.word.symbols[std::size_t(n - 1)]).g(t);
        CHECK(std::abs(t - r.t_values[0]) < 1e-9);
    }
}

TEST_CASE("census guards") {
    const SkewProductSpec& spec = validated_reference_spec();
    CHECK_THROWS_AS(enumerate_periodic(0, spec), UsageError);
    CHECK_THROWS_AS(enumerate_periodic(9, spec), UsageError);
    SkewProductSpec raw = reference_spec();
    CHECK_THROWS_AS(enumerate_periodic(1, raw), UsageError);
    CHECK_THROWS_AS(base_point_of_word(Word::parse("1"), raw), UsageError);
    CHECK_THROWS_AS(primitive_words(9), UsageError);
}

TEST_CASE("census is independent of the thread count") {
    const SkewProductSpec& spec = validated_reference_spec();
    auto a = enumerate_periodic(3, spec, 1);
    auto b = enumerate_periodic(3, spec, 4);
    CHECK(periodic_records_to_json(a) == periodic_records_to_json(b));
}

TEST_CASE("homoclinic relation within the attracting family") {
    const SkewProductSpec& spec = validated_reference_spec();
    auto recs = enumerate_periodic(1, spec);
    const auto& p1 = find_record(recs, "1", 2);
    const auto& p2 = find_record(recs, "2", 2);

    SUBCASE("an orbit relates to itself through a nontrivial excursion") {
        RelationResult r = homoclinic_related(p1, p1, 12, spec);
        REQUIRE(r.status == Relation::Related);
        CHECK(r.a_to_b.leaf_word.length() >= 1);
        CHECK(r.b_to_a.leaf_word.length() >= 1);
        CHECK(r.a_to_b.value > r.a_to_b.basin_lo);
        CHECK(r.a_to_b.value < r.a_to_b.basin_hi);
    }

    SUBCASE("distinct attracting fixed points are related") {
        RelationResult r = homoclinic_related(p1, p2, 12, spec);
        REQUIRE(r.status == Relation::Related);
        // the witness run must have made real progress toward the target root
        CHECK((r.a_to_b.verify_final <= 1e-8 ||
               r.a_to_b.verify_final <= 0.9 * r.a_to_b.verify_initial));
        CHECK((r.b_to_a.verify_final <= 1e-8 ||
               r.b_to_a.verify_final <= 0.9 * r.b_to_a.verify_initial));
    }
}

TEST_CASE("homoclinic relation within the repelling family") {
    const SkewProductSpec& spec = validated_reference_spec();
    auto recs = enumerate_periodic(1, spec);
    const auto& q1 = find_record(recs, "1", 1);
    const auto& q4 = find_record(recs, "4", 1);

    RelationResult r = homoclinic_related(q1, q4, 12, spec);
    REQUIRE(r.status == Relation::Related);

    RelationResult self = homoclinic_related(q4, q4, 12, spec);
    REQUIRE(self.status == Relation::Related);
    CHECK(self.a_to_b.leaf_word.length() >= 1);
}

TEST_CASE("homoclinic relation rejects bad inputs") {
    const SkewProductSpec& spec = validated_reference_spec();
    auto recs = enumerate_periodic(1, spec);
    const auto& p1 = find_record(recs, "1", 2);
    const auto& q4 = find_record(recs, "4", 1);

    CHECK_THROWS_AS(homoclinic_related(p1, q4, 12, spec), UsageError);
    CHECK_THROWS_AS(homoclinic_related(p1, p1, 0, spec), UsageError);

    PeriodicOrbitRecord fake = p1;
    fake.hyperbolic = false;
    CHECK_THROWS_AS(homoclinic_related(fake, p1, 12, spec), UsageError);

    PeriodicOrbitRecord drift = p1;
    drift.t_values[0] = 1.7;  // not a fixed point of its own word
    CHECK_THROWS_AS(homoclinic_related(drift, p1, 12, spec), UsageError);
}

TEST_CASE("census records serialize with orbit data") {
    const SkewProductSpec& spec = validated_reference_spec();
    auto recs = enumerate_periodic(1, spec);
    std::string js = periodic_records_to_json(recs);
    CHECK(js.find("\"word\": \"1\"") != std::string::npos);
    CHECK(js.find("\"stable_index\"") != std::string::npos);
    CHECK(js.find("\"in_K_p\"") != std::string::npos);
    CHECK(js.find("\"fiber_multiplier\"") != std::string::npos);
}
