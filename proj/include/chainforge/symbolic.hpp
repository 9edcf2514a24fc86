#pragma once

#include "chainforge/spec.hpp"

#include <string>
#include <vector>

namespace chainforge {

// Finite word over the branch alphabet {1,2,3,4}; orbit identity is the
// canonical (lexicographically smallest) cyclic rotation.
struct Word {
    std::vector<int> symbols;

    Word() = default;
    explicit Word(std::vector<int> syms);
    static Word parse(const std::string& digits);

    int length() const { return int(symbols.size()); }
    std::string str() const;
    Word canonical_rotation() const;
    bool is_canonical() const;
    // primitive = not a repetition of a strictly shorter word
    bool is_primitive() const;
    bool operator==(const Word& o) const { return symbols == o.symbols; }
};

struct BasePoint {
    double x = 0, y = 0;
};

// Unique base point whose forward band itinerary repeats w: x is the fixed
// point of the forward affine composition, y of the backward one.
BasePoint base_point_of_word(const Word& w, const SkewProductSpec& spec);

// Composed fiber map g_{w_n} o ... o g_{w_1} and friends.
double apply_word_fiber(const Word& w, const SkewProductSpec& spec, double t);
double apply_word_fiber_inverse(const Word& w, const SkewProductSpec& spec, double t);
double word_fiber_derivative(const Word& w, const SkewProductSpec& spec, double t);

struct FiberRoot {
    double t = 0;
    double multiplier = 1;  // derivative of the composed map at the root
    bool hyperbolic = true;
    std::string note;
};

// All fixed points of the composed fiber map in [-1, 6]: sign-change
// bracketing on a fine grid, then bisection to 1e-12.
std::vector<FiberRoot> fiber_periodic_points(const Word& w, const SkewProductSpec& spec,
                                             std::size_t grid = 100000);

struct PeriodicOrbitRecord {
    Word word;  // canonical primitive representative
    BasePoint base;
    std::vector<double> t_values;    // fiber orbit values, t_0 at the base phase
    double base_stable_mult = 0;     // signed product of the sigma_i / 5
    double base_unstable_mult = 0;   // signed product of the 5 sigma_i
    double fiber_multiplier = 1;     // product of g' along the fiber orbit
    int stable_index = 2;            // 2 iff |fiber_multiplier| < 1
    bool hyperbolic = true;
    std::string note;
    bool in_K_p = false, in_K_q = false;
};

// Primitive canonical words of each length in [1, n_max], in (length, lex)
// order; the building block of enumerate_periodic and of census tests.
std::vector<Word> primitive_words(int n_max);

// One record per (cyclic word class, fiber root), n_max <= 8 (cost guard).
std::vector<PeriodicOrbitRecord> enumerate_periodic(int n_max, const SkewProductSpec& spec,
                                                    int threads = 0);

enum class Relation { Related, Unknown };

struct RelationWitness {
    Word leaf_word;        // word whose grown leaf realizes the crossing
    double value = 0;      // fiber value of that leaf at the crossing
    double basin_lo = 0, basin_hi = 0;  // adjacent-root interval of the target
    int verify_steps = 0;
    double verify_initial = 0, verify_final = 0;
};

struct RelationResult {
    Relation status = Relation::Unknown;
    RelationWitness a_to_b, b_to_a;  // both directions must carry a witness
};

// Finite-depth homoclinic relation test between same-index orbit records.
// Never answers "not related": absence of a witness at finite depth proves
// nothing, so the alternative to Related is Unknown.
RelationResult homoclinic_related(const PeriodicOrbitRecord& A, const PeriodicOrbitRecord& B,
                                  int depth, const SkewProductSpec& spec);

std::string periodic_records_to_json(const std::vector<PeriodicOrbitRecord>& records);

}  // namespace chainforge
