#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "chainforge/validate.hpp"

#include <cmath>

using namespace chainforge;

TEST_CASE("reference spec passes every check") {
    SkewProductSpec spec = reference_spec();
    const ValidationReport rep = validate_spec(spec, 400000);
    for (const auto& c : rep.checks) {
        INFO(c.name, ": ", c.detail);
        CHECK(c.pass);
    }
    CHECK(rep.all_pass);
    CHECK(spec.validated);
    CHECK(rep.fiber_derivative_lo >= 0.85 - 1e-12);
    CHECK(rep.fiber_derivative_hi <= 1.15 + 1e-12);
    CHECK(rep.backward_center_expansion_floor ==
          doctest::Approx(1.0015022533800702).epsilon(1e-12));
    CHECK(rep.cones.pass);
    CHECK(rep.cones.margin_u > 0.0);
    CHECK(rep.cones.margin_cu > 0.0);
    CHECK(rep.cones.margin_s > 0.0);
    CHECK(rep.cones.margin_cs > 0.0);
    CHECK(rep.cones.central_lo > 0.8);
    CHECK(rep.cones.central_hi < 1.2);
}

TEST_CASE("amplitude 1.5 breaks the derivative bounds with a witness") {
    SkewProductSpec spec = reference_spec();
    for (auto& f : spec.fibers) f.amplitude = 1.5;
    const ValidationReport rep = validate_spec(spec);
    CHECK_FALSE(rep.all_pass);
    CHECK_FALSE(spec.validated);
    const CheckResult* c = rep.find("derivative_bounds");
    REQUIRE(c != nullptr);
    CHECK_FALSE(c->pass);
    // the witness names a band whose derivative leaves (4/5, 6/5)
    CHECK(c->witness.x() >= 1.0);
    CHECK(c->witness.x() <= 4.0);
    CHECK((c->witness.y() <= 0.8 || c->witness.z() >= 1.2));
    // the failure list is complete: every check still reported
    SkewProductSpec good = reference_spec();
    const ValidationReport ref_rep = validate_spec(good);
    CHECK(rep.checks.size() == ref_rep.checks.size());
}

TEST_CASE("widened band breaks the geometry check") {
    SkewProductSpec spec = reference_spec();
    spec.bands[1].y_hi = 2.5;  // width 1.3, also pokes past 7/3
    const ValidationReport rep = validate_spec(spec);
    CHECK_FALSE(rep.all_pass);
    const CheckResult* c = rep.find("band_geometry");
    REQUIRE(c != nullptr);
    CHECK_FALSE(c->pass);
    CHECK(c->detail.find("width") != std::string::npos);
}

TEST_CASE("perturbed central derivative range stays inside (4/5, 6/5)") {
    SkewProductSpec spec = reference_spec();
    PerturbationBump bump;
    bump.center = Vec3(2.825, 3.5, 0.0525);
    bump.radii = Vec3(0.3, 0.3, 0.4);
    spec.bump = bump;
    spec.s = 0.009;
    spec.s_max = 0.009;
    const ValidationReport rep = validate_spec(spec);
    CHECK(rep.all_pass);
    CHECK(rep.cones.central_lo > 0.8);
    CHECK(rep.cones.central_hi < 1.2);
    // frozen margins for the reference bump family
    CHECK(rep.cones.central_lo >= 0.81);
    CHECK(rep.cones.central_hi <= 1.192);
}

TEST_CASE("report serializes to json") {
    SkewProductSpec spec = reference_spec();
    const ValidationReport rep = validate_spec(spec);
    const std::string text = validation_report_to_json(rep);
    CHECK(text.find("\"all_pass\": true") != std::string::npos);
    CHECK(text.find("band_geometry") != std::string::npos);
    CHECK(text.find("cone_invariance") != std::string::npos);
    CHECK(text.find("central_range") != std::string::npos);
}
