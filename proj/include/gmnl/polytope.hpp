#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gmnl/behavior.hpp"
#include "gmnl/inequalities.hpp"
#include "gmnl/lp.hpp"

namespace gmnl::polytope {

// L: fully local. S2: mixtures over bipartitions of a lone deterministic party
// with an arbitrary (signaling) bipartite block. NS2: same but the block is
// no-signaling. L is contained in NS2 which is contained in S2.
enum class LocalityModel { L, S2, NS2 };

const char* to_string(LocalityModel model);
LocalityModel model_from_string(const std::string& s);

// Bipartitions indexed 0: AB|C, 1: AC|B, 2: BC|A (lone party last).
inline constexpr int kNumBipartitions = 3;
const char* bipartition_name(int bip);

// A response function as base-d digits, e.g. a(0..m-1),b(0..m-1),c(0..m-1)
// for a local strategy or the lone party's outputs for a hybrid one.
struct DeterministicStrategy {
    int d = 2;
    std::vector<int> digits;

    static DeterministicStrategy from_index(std::uint64_t index, int length, int d);
    std::uint64_t to_index() const;
    std::string to_string() const;
};

// All d^(3m) local deterministic behaviors in strategy-index order.
// Throws std::length_error if the count exceeds the cap.
std::vector<Behavior> enumerate_local_deterministic(const Scenario& sc,
                                                    std::size_t cap = 1'000'000);
Behavior local_vertex(const Scenario& sc, const DeterministicStrategy& s);

// Behavior of one hybrid term: lone party of bipartition `bip` answers with
// `lone.digits`, the pair answers with the (normalized, mass one per input
// pair) block table q indexed lexicographically by (s1, s2, r1, r2).
Behavior hybrid_behavior(const Scenario& sc, int bip, const DeterministicStrategy& lone,
                         const std::vector<double>& q);

// Explicit visibility LP (column 0 is v, maximized):
//   sum_k w_k G_k - v (p - p_iso) = p_iso,   total weight 1,  w >= 0.
// L:   one weight column per deterministic strategy; d^3 m^3 behavior rows
//      plus one normalization row.
// S2:  one column per block entry q_e^bip(r1 r2|s1 s2); per block m^2 - 1
//      equal-input-mass rows; normalization carried by the (0,0) input pair.
// NS2: S2 rows plus 2 d m (m-1) per-block no-signaling rows (kept redundant
//      rows included; the solver tolerates the rank deficiency).
lp::LinearProgram build_visibility_lp(const Behavior& p, LocalityModel model);

class ColumnPool;

struct SolveOptions {
    enum class Engine { Auto, Direct, Decomposition };
    Engine engine = Engine::Auto;
    // Verdict-grade early exit for membership sampling: stop as soon as the
    // inside/outside decision is certain. The certificate is marked inexact
    // and v_crit is then only a bound on the true optimum.
    bool early_exit = false;
    double tol = 1e-9;
    int max_rounds = 5000;
    // Optional cross-solve column cache for the decomposition engine (ignored
    // by the direct and dense engines). Repeated membership tests against the
    // same polytope mostly need the same generator columns, so seeding each
    // master from the previous solves collapses the pricing rounds. Not
    // thread-safe; give each worker its own pool.
    ColumnPool* pool = nullptr;
};

struct PrimalTerm {
    std::string label;            // "local a=.. b=.. c=.." or "AB|C e=.. #k"
    double weight = 0.0;
    std::vector<double> behavior; // full canonical-order behavior of the term
};

struct VisibilityCertificate {
    LocalityModel model{};
    Scenario scenario{};
    double v_crit = 1.0;  // LP optimum clipped to [0, 1]
    bool inside = true;   // v_crit >= 1 - 1e-8
    bool exact = true;    // false when early exit stopped at a verdict bound
    std::vector<PrimalTerm> primal;
    std::vector<double> dual_coeffs; // S, canonical full-space order
    double dual_bound = 0.0;         // S0 with S.d_lambda <= S0 for all vertices
    double dual_gap = 0.0;           // max_vertex S.g - S0 at termination
    std::int64_t lp_iterations = 0;
    int rounds = 0;      // column-generation rounds (0 for one-shot solves)
    std::string engine;  // "direct" | "dense-vertex" | "column-generation"
    std::string to_json() const;
};

// Critical visibility of p relative to the model polytope along the isotropic
// mixing line: max v with v p + (1-v) p_iso inside. Certificates are verified
// (decomposition reproduces the mixed behavior, dual is feasible and
// separates when v_crit < 1) before being returned; verification failure
// throws std::runtime_error with solver diagnostics.
VisibilityCertificate critical_visibility(const Behavior& p, LocalityModel model,
                                          const SolveOptions& opts = {});

std::pair<bool, VisibilityCertificate> membership(const Behavior& p, LocalityModel model,
                                                  const SolveOptions& opts = {});

// LP optimum of the visibility program with the v <= 1 cap relaxed (to 64):
// behaviors strictly inside the polytope score above one in proportion to how
// deep they sit on the isotropic line, which turns the v_crit = 1 plateau
// into a usable descent signal when optimizing measurement settings. Uses the
// decomposition engine's pricing; the value is not certificate-verified.
double extended_visibility(const Behavior& p, LocalityModel model, ColumnPool* pool = nullptr);

// Cache of generator columns carried across decomposition solves (both
// extended_visibility and critical_visibility via SolveOptions::pool).
// Seeding one solve's master with the previous ones' columns lets sequences
// of related solves — coordinate-descent steps, membership sampling against a
// fixed polytope — finish in a round or two. Ring-buffer eviction beyond
// `cap`; single-threaded; bound to the first (model, scenario) pair it is
// used with.
class ColumnPool {
public:
    explicit ColumnPool(std::size_t cap = 192) : cap_(cap) {}
    std::size_t size() const { return entries_.size(); }

private:
    friend struct PoolAccess;
    void add(const std::string& label, const std::vector<double>& g);

    std::size_t cap_;
    bool bound_ = false;
    LocalityModel model_{};
    Scenario scenario_{};
    std::size_t head_ = 0;
    std::vector<std::pair<std::string, std::vector<double>>> entries_;
    // dedup by column content (labels name only the generator family)
    std::unordered_map<std::size_t, std::size_t> slots_;
};

// Gauge-fixed separating inequality from a certificate with v_crit < 1:
// shifted so S.p_iso = 0, hence bound = v_crit and S.p = 1 at v = 1.
inequalities::BellInequality extract_dual_inequality(const VisibilityCertificate& cert,
                                                     const Scenario& sc);

} // namespace gmnl::polytope
