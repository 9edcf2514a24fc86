#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "chainforge/spec.hpp"

#include <cmath>

using namespace chainforge;

TEST_CASE("reference band table") {
    const SkewProductSpec spec = reference_spec();
    const double table[4][4] = {{0.1, 1.1, 0.1, 1.1},
                                {1.2, 2.2, 1.2, 2.2},
                                {2.8, 3.8, 2.8, 3.8},
                                {3.9, 4.9, 3.9, 4.9}};
    const int orient[4] = {1, -1, 1, -1};
    for (int i = 0; i < 4; ++i) {
        CHECK(spec.bands[i].x_lo == table[i][0]);
        CHECK(spec.bands[i].x_hi == table[i][1]);
        CHECK(spec.bands[i].y_lo == table[i][2]);
        CHECK(spec.bands[i].y_hi == table[i][3]);
        CHECK(spec.bands[i].orientation == orient[i]);
    }
    CHECK_FALSE(spec.validated);
    CHECK(spec.s == 0.0);
    CHECK(spec.s_max == 0.009);
}

TEST_CASE("json round trip preserves every number bit for bit") {
    SkewProductSpec spec = reference_spec();
    PerturbationBump bump;
    bump.center = Vec3(2.825, 3.5, 0.0525);
    bump.radii = Vec3(0.3, 0.3, 0.4);
    spec.bump = bump;
    spec.s = -3.0865e-05;

    const std::string text = spec_to_json(spec);
    const SkewProductSpec back = spec_from_json(text);

    for (int i = 0; i < 4; ++i) {
        CHECK(back.bands[i].x_lo == spec.bands[i].x_lo);
        CHECK(back.bands[i].x_hi == spec.bands[i].x_hi);
        CHECK(back.bands[i].y_lo == spec.bands[i].y_lo);
        CHECK(back.bands[i].y_hi == spec.bands[i].y_hi);
        CHECK(back.bands[i].orientation == spec.bands[i].orientation);
        CHECK(back.fibers[i].amplitude == spec.fibers[i].amplitude);
        CHECK(back.fibers[i].attracting == spec.fibers[i].attracting);
        CHECK(back.fibers[i].repelling == spec.fibers[i].repelling);
        const auto& ka = back.fibers[i].profile.knots();
        const auto& kb = spec.fibers[i].profile.knots();
        REQUIRE(ka.size() == kb.size());
        for (std::size_t j = 0; j < ka.size(); ++j) {
            CHECK(ka[j].t == kb[j].t);
            CHECK(ka[j].u == kb[j].u);
            CHECK(ka[j].du == kb[j].du);
        }
    }
    CHECK(back.blend_halfwidth_fraction == spec.blend_halfwidth_fraction);
    REQUIRE(back.bump.has_value());
    CHECK(back.bump->center == spec.bump->center);
    CHECK(back.bump->radii == spec.bump->radii);
    CHECK(back.s == spec.s);
    CHECK(back.s_max == spec.s_max);
    CHECK_FALSE(back.validated);  // trust is never serialized

    // a second dump is byte-identical
    CHECK(spec_to_json(back) == text);
}

TEST_CASE("schema tag is enforced") {
    SkewProductSpec spec = reference_spec();
    std::string text = spec_to_json(spec);
    CHECK(text.find("chainforge-spec/1") != std::string::npos);
    auto pos = text.find("chainforge-spec/1");
    text.replace(pos, 17, "chainforge-spec/9");
    CHECK_THROWS_AS(spec_from_json(text), IoError);
    CHECK_THROWS_AS(spec_from_json("{\"bands\": []}"), IoError);
    CHECK_THROWS_AS(spec_from_json("not json"), IoError);
    CHECK_THROWS_AS(spec_from_file("/nonexistent/path/spec.json"), IoError);
}

TEST_CASE("bump profile value and support") {
    PerturbationBump bump;
    bump.center = Vec3(1.0, 2.0, 0.5);
    bump.radii = Vec3(0.3, 0.3, 0.4);
    CHECK(bump.value(bump.center) == 1.0);
    CHECK(bump.gradient(bump.center) == Vec3::Zero());
    CHECK(bump.value(Vec3(1.3, 2.0, 0.5)) == 0.0);
    CHECK(bump.value(Vec3(1.0, 2.0, 0.9)) == 0.0);
    CHECK(bump.value(Vec3(100, 100, 100)) == 0.0);
    CHECK(bump.in_support(Vec3(1.1, 2.1, 0.6)));
    CHECK_FALSE(bump.in_support(Vec3(1.0, 2.0, 0.91)));

    // gradient matches a central finite difference
    const Vec3 w(1.07, 1.91, 0.62);
    const Vec3 grad = bump.gradient(w);
    const double h = 1e-6;
    for (int j = 0; j < 3; ++j) {
        Vec3 wp = w, wm = w;
        wp[j] += h;
        wm[j] -= h;
        const double fd = (bump.value(wp) - bump.value(wm)) / (2 * h);
        CHECK(grad[j] == doctest::Approx(fd).epsilon(1e-5));
    }

    // value is continuous at the support boundary
    CHECK(bump.value(Vec3(1.0 + 0.3 * (1 - 1e-9), 2.0, 0.5)) ==
          doctest::Approx(0.0).epsilon(1e-12));
}
