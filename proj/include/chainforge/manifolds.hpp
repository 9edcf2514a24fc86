#pragma once

#include "chainforge/spec.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace chainforge {

enum class LeafKind { VerticalUnstable, HorizontalStable };

// One strong-manifold plaque.  A vertical leaf spans y in [0,5] at fixed x,
// a horizontal leaf spans x in [0,5] at fixed y.  The fiber profile is a
// polyline over the spanning coordinate; without perturbation it is a single
// constant sample.
struct Leaf {
    LeafKind kind = LeafKind::VerticalUnstable;
    std::string word;  // branch itinerary that produced this leaf
    double base = 0;   // the fixed coordinate (x for vertical, y for horizontal)
    std::vector<std::pair<double, double>> profile;  // (spanning coord, t)
    int generation = 0;

    bool constant() const { return profile.size() == 1; }
    double value_at(double coord) const;
};

struct LeafSet {
    char origin = 'p';
    LeafKind kind = LeafKind::VerticalUnstable;
    int depth = 0;
    double s = 0;
    std::vector<Leaf> leaves;
    std::vector<std::string> escaped;  // words whose fiber left [-1, 6]
};

Leaf local_strong_leaf(const Vec3& point, LeafKind kind, const SkewProductSpec& spec);

// Forward images of the unstable leaf at p (origin 'p') or backward images
// of the stable leaf at q (origin 'q'), indexed by branch words.
LeafSet grow_lamination(char origin, int depth, const SkewProductSpec& spec);

std::string leaves_to_json(const LeafSet& set);

enum class Region { R1, R2, R3, R4 };

struct RegionWitness {
    bool found = false;
    Region region = Region::R1;
    std::string itinerary;  // branch word realizing the witness
    Vec3 leaf_point = Vec3::Zero();
    double target = 0;    // fiber value aimed for
    double achieved = 0;  // fiber value reached
    double residual = 0;
    int steps = 0;
};

// Fiber-side witnesses for the four covering regions:
//   R1 = C x [-1, 4.5]   drive the unstable leaf onto the stable side of p
//   R2 = C x [0.5, 6]    drive the stable leaf backward onto the unstable side of q
//   R3 = C x [0.5, 2.5]  match the fiber value inside the {1,2} branch system
//   R4 = C x [2.5, 4.5]  match the fiber value inside the {3,4} branch system
RegionWitness region_witness(const Vec3& point, Region region, int depth,
                             const SkewProductSpec& spec);

enum class CuspidalTarget { PLeftStable, QRightUnstable, PRightStable, QLeftUnstable };

struct CuspidalReport {
    CuspidalTarget target = CuspidalTarget::PLeftStable;
    int samples = 0;
    int escaped = 0;
    int worst_steps = 0;  // largest escape time among escaping samples
    bool pass = false;    // every sample escaped
};

// Adversarial escape check on one side of a strong manifold: each sampled
// fiber value is iterated in the escaping direction with the branch chosen
// to maximize the distance to the fiber boundary; PASS means even that
// adversary leaves [-1, 6] within N steps.  The two *-inversion targets
// sample the recurrent side and are expected to FAIL.
CuspidalReport cuspidal_check(CuspidalTarget target, int samples, int N,
                              const SkewProductSpec& spec);

// A transit orbit written as structure instead of a raw point: the branch
// itinerary from a point on the unstable side of p through the connecting
// word and down the stable tail toward q, with the y coordinates supplied by
// backward pullback (forward y replay would lose the itinerary to rounding).
struct TransitReplay {
    Vec3 start = Vec3::Zero();
    std::vector<int> forward_symbols;
    std::vector<double> y_path;    // y before step k; size = symbols + 1
    std::size_t crossing = 0;      // index of the handoff point in the path
};

// Orbit points of the replay: x and t by direct branch/fiber evaluation
// (with the perturbation), y copied from the pullback path.
std::vector<Vec3> replay_points(const TransitReplay& replay, const SkewProductSpec& spec);

struct ProbeReport {
    bool pass = false;
    bool precondition_ok = false;
    bool exits_certified = false;
    bool clipped = false;
    int samples_requested = 0;
    int forward_checked = 0, backward_checked = 0;
    int forward_failed = 0, backward_failed = 0;
    int worst_forward_steps = 0, worst_backward_steps = 0;
    double forward_min_dist = 0, backward_min_dist = 0;  // orbit distances to q / p
    std::string detail;
};

// Escape probe around a heteroclinic candidate: samples off the local
// center-stable / center-unstable sheets must leave the block or reach the
// certified exit neighborhoods V^u = C x [5.05, 5.55] (forward) and
// V^s = C x [-0.55, -0.05] (backward) within N steps.
ProbeReport lambda_probe(const Vec3& x, double radius, double tube_radius, int N,
                         const SkewProductSpec& spec, const TransitReplay* replay = nullptr,
                         int samples = 1000, std::uint64_t seed = 12345);

}  // namespace chainforge
