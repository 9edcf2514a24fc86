#include "chainforge/spec.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace chainforge {

namespace {

using nlohmann::ordered_json;

constexpr const char* kSchemaTag = "chainforge-spec/1";

ordered_json fiber_to_json(const FiberMap& f) {
    ordered_json j;
    j["amplitude"] = f.amplitude;
    j["attracting"] = f.attracting;
    j["repelling"] = f.repelling;
    auto knots = ordered_json::array();
    for (const auto& k : f.profile.knots()) knots.push_back({k.t, k.u, k.du});
    j["knots"] = std::move(knots);
    return j;
}

FiberMap fiber_from_json(const ordered_json& j) {
    FiberMap f;
    f.amplitude = j.at("amplitude").get<double>();
    f.attracting = j.at("attracting").get<double>();
    f.repelling = j.at("repelling").get<double>();
    std::vector<HermiteKnot> knots;
    for (const auto& row : j.at("knots"))
        knots.push_back({row.at(0).get<double>(), row.at(1).get<double>(), row.at(2).get<double>()});
    f.profile = HermiteCurve(std::move(knots));
    return f;
}

}  // namespace

std::string spec_to_json(const SkewProductSpec& spec) {
    ordered_json j;
    j["schema"] = kSchemaTag;
    auto bands = ordered_json::array();
    for (const auto& b : spec.bands) {
        ordered_json jb;
        jb["x_lo"] = b.x_lo;
        jb["x_hi"] = b.x_hi;
        jb["y_lo"] = b.y_lo;
        jb["y_hi"] = b.y_hi;
        jb["orientation"] = b.orientation;
        bands.push_back(jb);
    }
    j["bands"] = std::move(bands);
    auto fibers = ordered_json::array();
    for (const auto& f : spec.fibers) fibers.push_back(fiber_to_json(f));
    j["fibers"] = std::move(fibers);
    j["blend_halfwidth_fraction"] = spec.blend_halfwidth_fraction;
    if (spec.bump) {
        ordered_json jb;
        jb["center"] = {spec.bump->center.x(), spec.bump->center.y(), spec.bump->center.z()};
        jb["radii"] = {spec.bump->radii.x(), spec.bump->radii.y(), spec.bump->radii.z()};
        j["bump"] = jb;
    } else {
        j["bump"] = nullptr;
    }
    j["s"] = spec.s;
    j["s_max"] = spec.s_max;
    return j.dump(2);
}

SkewProductSpec spec_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw IoError(std::string("spec parse error: ") + e.what());
    }
    if (!j.contains("schema") || j["schema"] != kSchemaTag)
        throw IoError("spec schema tag missing or unsupported (want chainforge-spec/1)");
    SkewProductSpec spec;
    try {
        const auto& bands = j.at("bands");
        const auto& fibers = j.at("fibers");
        if (bands.size() != 4 || fibers.size() != 4)
            throw IoError("spec needs exactly 4 bands and 4 fiber maps");
        for (int i = 0; i < 4; ++i) {
            const auto& jb = bands.at(i);
            spec.bands[i] = {jb.at("x_lo").get<double>(), jb.at("x_hi").get<double>(),
                             jb.at("y_lo").get<double>(), jb.at("y_hi").get<double>(),
                             jb.at("orientation").get<int>()};
            spec.fibers[i] = fiber_from_json(fibers.at(i));
        }
        spec.blend_halfwidth_fraction = j.at("blend_halfwidth_fraction").get<double>();
        if (j.contains("bump") && !j["bump"].is_null()) {
            PerturbationBump bump;
            const auto& jb = j["bump"];
            for (int k = 0; k < 3; ++k) {
                bump.center[k] = jb.at("center").at(k).get<double>();
                bump.radii[k] = jb.at("radii").at(k).get<double>();
            }
            spec.bump = bump;
        }
        spec.s = j.at("s").get<double>();
        spec.s_max = j.at("s_max").get<double>();
    } catch (const IoError&) {
        throw;
    } catch (const std::exception& e) {
        throw IoError(std::string("spec field error: ") + e.what());
    }
    spec.validated = false;  // trust is never serialized; revalidate after load
    return spec;
}

SkewProductSpec spec_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open spec file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return spec_from_json(ss.str());
}

void spec_to_file(const SkewProductSpec& spec, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write spec file: " + path);
    out << spec_to_json(spec) << "\n";
}

}  // namespace chainforge
