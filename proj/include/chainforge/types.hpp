#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace chainforge {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Block geometry: base square times fiber interval. Fixed for the toolkit.
inline constexpr double kBaseLo = 0.0;
inline constexpr double kBaseHi = 5.0;
inline constexpr double kFiberLo = -1.0;
inline constexpr double kFiberHi = 6.0;

enum class Direction { Forward, Backward };

// Face through which an orbit left the block.
enum class ExitFace { XBandGap, YBandGap, FiberBelow, FiberAbove };

const char* to_string(Direction d);
const char* to_string(ExitFace f);

// Orbit point that is either inside the block or has escaped through a face.
// Escaped states are absorbing: stepping them again returns them unchanged.
struct OrbitState {
    bool inside = true;
    Vec3 z = Vec3::Zero();
    Direction dir = Direction::Forward;  // direction of the escaping step
    ExitFace face = ExitFace::YBandGap;
    int step = 0;  // step count at which the escape happened

    static OrbitState at(const Vec3& z) {
        OrbitState s;
        s.z = z;
        return s;
    }
    static OrbitState escaped(Direction d, ExitFace f, int step, const Vec3& last) {
        OrbitState s;
        s.inside = false;
        s.z = last;
        s.dir = d;
        s.face = f;
        s.step = step;
        return s;
    }
};

// Caller broke a documented precondition.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
// Work or memory estimate exceeds the configured ceiling.
struct ResourceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic RNG; uniform() uses the top 53 bits of mt19937_64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

private:
    std::mt19937_64 eng_;
};

std::uint64_t fnv1a64(std::string_view data);

// Runs body(lo, hi) over fixed-size chunks of [0, n). Chunk boundaries do not
// depend on the worker count, so writers of disjoint per-index slots produce
// identical results for any `threads` value.
void parallel_for_chunks(std::size_t n, std::size_t chunk, int threads,
                         const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace chainforge
