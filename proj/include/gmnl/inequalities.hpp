#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gmnl/behavior.hpp"

namespace gmnl::inequalities {

// Linear functional S.p <=(model) bound, coefficients in the canonical
// (x,y,z,a,b,c) flattening. Violation means S.p > bound.
struct BellInequality {
    Scenario scenario;
    std::vector<double> coeffs;
    double bound = 0.0;
    std::string model = "L"; // which polytope the bound refers to: L | S2 | NS2
    std::string provenance;  // "catalog:<id>" | "dual" | "planar(theta=...)" | derived tags

    void validate() const; // throws std::invalid_argument
};

double evaluate(const BellInequality& ineq, const Behavior& p);

struct EquivalentsOptions {
    std::size_t cap = 1'000'000; // max group order for materialization
};

// All distinct images under party permutations, per-party input permutations,
// and per-party-per-input output permutations (canonical-hash dedup).
// Throws std::length_error when the group order exceeds the cap; use
// for_each_equivalent to stream (without dedup) in that regime.
std::vector<BellInequality> equivalents(const BellInequality& ineq,
                                        const EquivalentsOptions& opts = {});
void for_each_equivalent(const BellInequality& ineq,
                         const std::function<void(const BellInequality&)>& fn);
std::size_t relabeling_group_order(const Scenario& sc);

// Setting-lifting of an m=2 inequality into a target scenario: one lift per
// ordered pair of settings per party, zero coefficients elsewhere.
std::vector<BellInequality> lift(const BellInequality& src, int target_m);

bool violated_by_any(const std::vector<BellInequality>& family, const Behavior& p,
                     double margin = 1e-9);

// Planar Svetlichny-type family: first angles (alpha1, beta1, gamma1), second
// angles offset by pi/2; correlator coefficients S_xyz = cos(alpha_x + beta_y
// + gamma_z); theta = alpha1 + beta1 + gamma1.
struct PlanarSvetlichnyFamily {
    double alpha1 = 0, beta1 = 0, gamma1 = 0;
    double theta = 0;
    double S[2][2][2] = {};

    // Full-probability form: coeff(x,y,z,a,b,c) = S_xyz * (-1)^(a+b+c),
    // bound = the Svetlichny-type local bound, model tag S2.
    BellInequality to_inequality() const;
};

struct PlanarSvetlichny {
    PlanarSvetlichnyFamily family;
    double local_bound = 0;   // 4 * max(|cos theta|, |sin theta|)
    double quantum_value = 0; // 4 (GHZ with the induced planar settings)
};

PlanarSvetlichny planar_svetlichny(double alpha1, double beta1, double gamma1);

// Catalog text format (UTF-8): per block a header line
//   bell m=<m> d=<d> model=<L|S2|NS2> bound=<real> id=<string>
// followed by exactly d^3 m^3 lines "x y z a b c coeff" in any order;
// blocks separated by blank lines. Round-trips at 17 significant digits.
std::vector<BellInequality> load_catalog(const std::string& path);
void save_catalog(const std::string& path, const std::vector<BellInequality>& ineqs);

} // namespace gmnl::inequalities
