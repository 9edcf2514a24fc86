#include "chainforge/validate.hpp"

#include "chainforge/map.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace chainforge {

namespace {

constexpr double kConeAperture = 0.1;

struct Sweep {
    // per band: fiber derivative range, fixed-point data, sign-change count
    double dg_lo[4], dg_hi[4];
    double dg_hi_contract[4];  // max g' over [-1, 3.5], bands report only 0,1
    double dg_lo_expand[4];    // min g' over [1.5, 6], bands report only 2,3
    int sign_changes[4];
    double worst_side_sign[4];  // min of the required strict sign margins
    double side_witness_t[4];
};

Sweep run_sweep(const SkewProductSpec& spec, std::size_t n_per_band) {
    Sweep s;
    const std::size_t n = std::max<std::size_t>(n_per_band, 1000);
    for (int b = 0; b < 4; ++b) {
        const FiberMap& f = spec.fibers[b];
        double lo = 2.0, hi = 0.0, loc = 2.0, hic = 0.0;
        double worst = 1e300, worst_t = 0.0;
        int changes = 0;
        int prev_sign = 0;
        for (std::size_t j = 0; j < n; ++j) {
            const double t = kFiberLo + (kFiberHi - kFiberLo) * double(j) / double(n - 1);
            const double d = f.dg(t);
            lo = std::min(lo, d);
            hi = std::max(hi, d);
            if (t <= 3.5) hic = std::max(hic, d);
            if (t >= 1.5) loc = std::min(loc, d);
            const double u = f.g(t) - t;
            const int sign = u > 0 ? 1 : (u < 0 ? -1 : 0);
            if (sign != 0) {
                if (prev_sign != 0 && sign != prev_sign) ++changes;
                prev_sign = sign;
            }
            // strict sign pattern +/-/+ away from the two zeros
            const double a = f.attracting, r = f.repelling;
            double margin = 1e300;
            if (t < a - 1e-9 || t > r + 1e-9) margin = u;
            else if (t > a + 1e-9 && t < r - 1e-9) margin = -u;
            if (margin < worst) {
                worst = margin;
                worst_t = t;
            }
        }
        s.dg_lo[b] = lo;
        s.dg_hi[b] = hi;
        s.dg_hi_contract[b] = hic;
        s.dg_lo_expand[b] = loc;
        s.sign_changes[b] = changes;
        s.worst_side_sign[b] = worst;
        s.side_witness_t[b] = worst_t;
    }
    return s;
}

// Pushes cone boundary vectors through J and measures how strictly the image
// satisfies the cone inequality. Returns 1 - worst ratio (positive = inside).
double cone_margin_u(const Mat3& J) {
    double worst = 0.0;
    for (double dx : {-kConeAperture, 0.0, kConeAperture})
        for (double dt : {-kConeAperture, 0.0, kConeAperture}) {
            const Vec3 v = J * Vec3(dx, 1.0, dt);
            worst = std::max(worst, std::max(std::abs(v.x()), std::abs(v.z())) /
                                        (kConeAperture * std::abs(v.y())));
        }
    return 1.0 - worst;
}

double cone_margin_cu(const Mat3& J) {
    double worst = 0.0;
    for (double cy : {-1.0, -0.5, 0.0, 0.5, 1.0})
        for (double ct : {-1.0, 1.0}) {
            const Vec3 v1 = J * Vec3(kConeAperture, cy, ct);
            worst = std::max(worst, std::abs(v1.x()) /
                                        (kConeAperture * std::max(std::abs(v1.y()), std::abs(v1.z()))));
            const Vec3 v2 = J * Vec3(kConeAperture, ct, cy);
            worst = std::max(worst, std::abs(v2.x()) /
                                        (kConeAperture * std::max(std::abs(v2.y()), std::abs(v2.z()))));
        }
    return 1.0 - worst;
}

double cone_margin_s(const Mat3& Jb) {
    double worst = 0.0;
    for (double dy : {-kConeAperture, 0.0, kConeAperture})
        for (double dt : {-kConeAperture, 0.0, kConeAperture}) {
            const Vec3 v = Jb * Vec3(1.0, dy, dt);
            worst = std::max(worst, std::max(std::abs(v.y()), std::abs(v.z())) /
                                        (kConeAperture * std::abs(v.x())));
        }
    return 1.0 - worst;
}

double cone_margin_cs(const Mat3& Jb) {
    double worst = 0.0;
    for (double cx : {-1.0, -0.5, 0.0, 0.5, 1.0})
        for (double ct : {-1.0, 1.0}) {
            const Vec3 v1 = Jb * Vec3(cx, kConeAperture, ct);
            worst = std::max(worst, std::abs(v1.y()) /
                                        (kConeAperture * std::max(std::abs(v1.x()), std::abs(v1.z()))));
            const Vec3 v2 = Jb * Vec3(ct, kConeAperture, cx);
            worst = std::max(worst, std::abs(v2.y()) /
                                        (kConeAperture * std::max(std::abs(v2.x()), std::abs(v2.z()))));
        }
    return 1.0 - worst;
}

}  // namespace

const SkewProductSpec& validated_reference_spec() {
    static const SkewProductSpec cached = [] {
        SkewProductSpec s = reference_spec();
        validate_spec(s, 200000);
        if (!s.validated) throw std::logic_error("reference spec failed its own validation");
        return s;
    }();
    return cached;
}

const CheckResult* ValidationReport::find(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

ValidationReport validate_spec(SkewProductSpec& spec, std::size_t grid_resolution) {
    ValidationReport rep;
    rep.grid_resolution = grid_resolution;
    auto add = [&rep](CheckResult c) { rep.checks.push_back(std::move(c)); };

    // --- band geometry
    {
        CheckResult c;
        c.name = "band_geometry";
        c.pass = true;
        std::ostringstream msg;
        auto fail = [&](const std::string& why, double measured, int band) {
            c.pass = false;
            msg << (msg.tellp() > 0 ? "; " : "") << why;
            c.measured = measured;
            c.witness = Vec3(double(band), measured, 0.0);
        };
        for (int i = 0; i < 4; ++i) {
            const BandSpec& b = spec.bands[i];
            if (std::abs((b.x_hi - b.x_lo) - 1.0) > 1e-12 || std::abs((b.y_hi - b.y_lo) - 1.0) > 1e-12)
                fail("band " + std::to_string(i + 1) + " width != 1", b.x_hi - b.x_lo, i + 1);
            if (b.orientation != 1 && b.orientation != -1)
                fail("band " + std::to_string(i + 1) + " orientation not +-1", b.orientation, i + 1);
            const double lo = 0.0, hi = 5.0;
            if (b.x_lo <= lo || b.x_hi >= hi || b.y_lo <= lo || b.y_hi >= hi)
                fail("band " + std::to_string(i + 1) + " not interior to the square", b.x_lo, i + 1);
            // lower pair must sit inside (0, 7/3), upper pair inside (8/3, 5)
            if (i < 2) {
                if (b.y_hi >= 7.0 / 3.0 || b.x_hi >= 7.0 / 3.0)
                    fail("band " + std::to_string(i + 1) + " not inside (0, 7/3)", b.y_hi, i + 1);
            } else {
                if (b.y_lo <= 8.0 / 3.0 || b.x_lo <= 8.0 / 3.0)
                    fail("band " + std::to_string(i + 1) + " not inside (8/3, 5)", b.y_lo, i + 1);
            }
        }
        for (int i = 0; i + 1 < 4; ++i) {
            if (spec.bands[i].x_hi >= spec.bands[i + 1].x_lo)
                fail("x bands overlap or touch", spec.bands[i].x_hi, i + 1);
            if (spec.bands[i].y_hi >= spec.bands[i + 1].y_lo)
                fail("y bands overlap or touch", spec.bands[i].y_hi, i + 1);
        }
        c.detail = c.pass ? "widths, containment, ordering ok" : msg.str();
        add(std::move(c));
    }

    const Sweep sw = run_sweep(spec, grid_resolution / 4);
    rep.fiber_derivative_lo = *std::min_element(sw.dg_lo, sw.dg_lo + 4);
    rep.fiber_derivative_hi = *std::max_element(sw.dg_hi, sw.dg_hi + 4);
    rep.backward_center_expansion_floor =
        1.0 / std::max(sw.dg_hi_contract[0], sw.dg_hi_contract[1]);

    // --- fiber fixed-point table
    {
        CheckResult c;
        c.name = "fiber_fixed_points";
        c.pass = true;
        std::ostringstream msg;
        for (int i = 0; i < 4; ++i) {
            const FiberMap& f = spec.fibers[i];
            const double ea = std::abs(f.g(f.attracting) - f.attracting);
            const double er = std::abs(f.g(f.repelling) - f.repelling);
            const double da = f.dg(f.attracting), dr = f.dg(f.repelling);
            if (ea > 1e-15 || er > 1e-15) {
                c.pass = false;
                msg << "band " << i + 1 << " fixed values drift; ";
                c.witness = Vec3(double(i + 1), f.attracting, ea);
            }
            if (!(da < 1.0) || !(dr > 1.0)) {
                c.pass = false;
                msg << "band " << i + 1 << " fixed-point stability wrong; ";
                c.witness = Vec3(double(i + 1), da, dr);
            }
            if (sw.sign_changes[i] != 2) {
                c.pass = false;
                msg << "band " << i + 1 << " has " << sw.sign_changes[i]
                    << " sign changes of g-id, expected 2; ";
                c.witness = Vec3(double(i + 1), double(sw.sign_changes[i]), 0.0);
            }
            c.measured = std::max(c.measured, std::max(ea, er));
        }
        c.detail = c.pass ? "g fixes the declared values, correct stability, two roots per band"
                          : msg.str();
        add(std::move(c));
    }

    // --- derivative bounds (strict, with measured range)
    {
        CheckResult c;
        c.name = "derivative_bounds";
        c.pass = rep.fiber_derivative_lo > 0.8 && rep.fiber_derivative_hi < 1.2;
        c.measured = rep.fiber_derivative_hi;
        std::ostringstream msg;
        msg << "g' in [" << rep.fiber_derivative_lo << ", " << rep.fiber_derivative_hi << "]";
        if (!c.pass) {
            for (int i = 0; i < 4; ++i)
                if (sw.dg_lo[i] <= 0.8 || sw.dg_hi[i] >= 1.2) {
                    c.witness = Vec3(double(i + 1), sw.dg_lo[i], sw.dg_hi[i]);
                    msg << "; band " << i + 1 << " out of (4/5, 6/5)";
                }
        }
        c.detail = msg.str();
        add(std::move(c));
    }

    // --- monotonicity windows
    {
        CheckResult c;
        c.name = "monotonicity_windows";
        const double hi12 = std::max(sw.dg_hi_contract[0], sw.dg_hi_contract[1]);
        const double lo34 = std::min(sw.dg_lo_expand[2], sw.dg_lo_expand[3]);
        c.pass = hi12 < 1.0 && lo34 > 1.0;
        c.measured = hi12;
        c.witness = Vec3(hi12, lo34, 0.0);
        std::ostringstream msg;
        msg << "bands 1,2: g' <= " << hi12 << " on [-1,3.5]; bands 3,4: g' >= " << lo34
            << " on [1.5,6]";
        c.detail = msg.str();
        add(std::move(c));
    }

    // --- strict sign pattern of g - id between and beyond the fixed values
    {
        CheckResult c;
        c.name = "side_interval_signs";
        c.pass = true;
        double worst = 1e300;
        for (int i = 0; i < 4; ++i) {
            if (sw.worst_side_sign[i] < worst) {
                worst = sw.worst_side_sign[i];
                c.witness = Vec3(double(i + 1), sw.side_witness_t[i], worst);
            }
            if (sw.worst_side_sign[i] <= 0.0) c.pass = false;
        }
        c.measured = worst;
        c.detail = "min |g(t)-t| margin over the strict-sign regions";
        add(std::move(c));
    }

    // --- covering conditions for the fiber systems
    {
        CheckResult c;
        c.name = "fiber_covering";
        const double lower = spec.fibers[0].g(3.0) - spec.fibers[1].g(0.0);
        const double upper = spec.fibers[2].g_inverse(5.0) - spec.fibers[3].g_inverse(2.0);
        c.pass = lower >= 0.0 && upper >= 0.0;
        c.measured = std::min(lower, upper);
        c.witness = Vec3(lower, upper, 0.0);
        std::ostringstream msg;
        msg << "g1(3)-g2(0) = " << lower << ", g3inv(5)-g4inv(2) = " << upper;
        c.detail = msg.str();
        add(std::move(c));
    }

    // --- cone invariance under the perturbed map across the declared range
    {
        SkewProductSpec probe = spec;
        probe.validated = true;  // validation itself may drive the machinery
        ConeReport& cr = rep.cones;
        cr.iterate_count = 1;
        cr.margin_u = cr.margin_cu = cr.margin_s = cr.margin_cs = 1.0;
        cr.central_lo = 1e300;
        cr.central_hi = -1e300;
        std::vector<double> svals = {0.0};
        if (spec.bump) {
            svals.push_back(spec.s_max);
            svals.push_back(-spec.s_max);
            if (spec.s != 0.0) svals.push_back(spec.s);
        }
        const int ny = 13, nt = 41, nx = 31;
        for (double sv : svals) {
            probe.s = sv;
            for (int b = 0; b < 4; ++b) {
                for (int iy = 0; iy < ny; ++iy) {
                    const BandSpec& B = probe.bands[b];
                    const double y = B.y_lo + (B.y_hi - B.y_lo) * double(iy) / double(ny - 1);
                    const double x_b = B.x_lo + (B.x_hi - B.x_lo) * double(iy) / double(ny - 1);
                    for (int it = 0; it < nt; ++it) {
                        const double t = kFiberLo + (kFiberHi - kFiberLo) * double(it) / double(nt - 1);
                        for (int ix = 0; ix < nx; ++ix) {
                            const double x = kBaseLo + (kBaseHi - kBaseLo) * double(ix) / double(nx - 1);
                            // forward families at a forward-band point
                            const Vec3 zf(x, y, t);
                            const Mat3 Jf = differential(zf, probe, Direction::Forward);
                            cr.margin_u = std::min(cr.margin_u, cone_margin_u(Jf));
                            cr.margin_cu = std::min(cr.margin_cu, cone_margin_cu(Jf));
                            cr.central_lo = std::min(cr.central_lo, Jf(2, 2));
                            cr.central_hi = std::max(cr.central_hi, Jf(2, 2));
                            // backward families at a backward-band point
                            const Vec3 zb(x_b, x, t);  // x plays the free y role here
                            OrbitState pre = apply_inverse(OrbitState::at(zb), probe);
                            if (pre.inside) {
                                const Mat3 Jb = differential(zb, probe, Direction::Backward);
                                cr.margin_s = std::min(cr.margin_s, cone_margin_s(Jb));
                                cr.margin_cs = std::min(cr.margin_cs, cone_margin_cs(Jb));
                                cr.central_lo = std::min(cr.central_lo, 1.0 / Jb(2, 2));
                                cr.central_hi = std::max(cr.central_hi, 1.0 / Jb(2, 2));
                            }
                            ++cr.samples;
                        }
                    }
                }
            }
        }
        cr.pass = cr.margin_u > 0 && cr.margin_cu > 0 && cr.margin_s > 0 && cr.margin_cs > 0 &&
                  cr.central_lo > 0.8 && cr.central_hi < 1.2;

        CheckResult c;
        c.name = "cone_invariance";
        c.pass = cr.pass;
        c.measured = std::min(std::min(cr.margin_u, cr.margin_cu), std::min(cr.margin_s, cr.margin_cs));
        c.witness = Vec3(cr.central_lo, cr.central_hi, c.measured);
        std::ostringstream msg;
        msg << "min cone margin " << c.measured << ", central derivative in [" << cr.central_lo
            << ", " << cr.central_hi << "]";
        c.detail = msg.str();
        add(std::move(c));
    }

    rep.all_pass = true;
    for (const auto& c : rep.checks) rep.all_pass = rep.all_pass && c.pass;
    if (rep.all_pass) spec.validated = true;
    return rep;
}

double backward_center_expansion_floor(const SkewProductSpec& spec,
                                       std::size_t grid_resolution) {
    const Sweep sw = run_sweep(spec, grid_resolution / 4);
    return 1.0 / std::max(sw.dg_hi_contract[0], sw.dg_hi_contract[1]);
}

double forward_center_expansion_floor(const SkewProductSpec& spec,
                                      std::size_t grid_resolution) {
    const Sweep sw = run_sweep(spec, grid_resolution / 4);
    return std::min(sw.dg_lo_expand[2], sw.dg_lo_expand[3]);
}

std::string validation_report_to_json(const ValidationReport& rep) {
    nlohmann::ordered_json j;
    j["all_pass"] = rep.all_pass;
    j["grid_resolution"] = rep.grid_resolution;
    j["fiber_derivative_range"] = {rep.fiber_derivative_lo, rep.fiber_derivative_hi};
    j["backward_center_expansion_floor"] = rep.backward_center_expansion_floor;
    j["checks"] = nlohmann::ordered_json::array();
    for (const auto& c : rep.checks) {
        nlohmann::ordered_json jc;
        jc["name"] = c.name;
        jc["pass"] = c.pass;
        jc["measured"] = c.measured;
        jc["witness"] = {c.witness.x(), c.witness.y(), c.witness.z()};
        jc["detail"] = c.detail;
        j["checks"].push_back(jc);
    }
    nlohmann::ordered_json jc;
    jc["samples"] = rep.cones.samples;
    jc["iterate_count"] = rep.cones.iterate_count;
    jc["margins"] = {{"u", rep.cones.margin_u},
                     {"cu", rep.cones.margin_cu},
                     {"s", rep.cones.margin_s},
                     {"cs", rep.cones.margin_cs}};
    jc["central_range"] = {rep.cones.central_lo, rep.cones.central_hi};
    jc["pass"] = rep.cones.pass;
    j["cones"] = jc;
    return j.dump(2);
}

}  // namespace chainforge
