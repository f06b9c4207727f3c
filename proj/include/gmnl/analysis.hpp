#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gmnl/behavior.hpp"
#include "gmnl/inequalities.hpp"
#include "gmnl/polytope.hpp"
#include "gmnl/quantum.hpp"

namespace gmnl::analysis {

// How measurement settings are drawn for each Monte Carlo sample.
// UniformRandom: independent Bloch directions (d=2) / Haar bases (d=3).
// TetrahedralRandomRotations: the fixed tetrahedron conjugated by fresh
//   per-party Haar unitaries each sample (requires m=4, d=2).
// PlanarRandomAngles: orthogonal x-y plane pairs at uniform azimuths
//   (requires m=2, d=2).
enum class SettingsSource { UniformRandom, TetrahedralRandomRotations, PlanarRandomAngles };

const char* to_string(SettingsSource s);
SettingsSource settings_source_from_string(const std::string& s);

// Inverse standard normal CDF (Wichura's AS 241 / PPND16, ~1e-15 accurate).
double normal_quantile(double p);

// Two-sided Wilson score interval for n_s successes out of n trials.
std::pair<double, double> wilson_interval(std::uint64_t n_s, std::uint64_t n, double confidence);

struct PvEstimate {
    std::string state;
    Scenario scenario;
    std::string model;          // "L" | "S2" | "NS2", or "<tag>^I" for families
    std::string measure;        // sampling-measure tag
    std::uint64_t seed = 0;
    std::uint64_t trials = 0;   // requested n; failures are excluded below
    std::uint64_t successes = 0;
    std::uint64_t failures = 0; // solver failures, outside both counts
    double p_hat = 0.0;         // successes / (trials - failures)
    double confidence = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::string to_json() const;
};

struct MonteCarloOptions {
    int threads = 1;          // <= 0: all hardware threads
    bool exact_values = false; // full v_crit per sample instead of verdict-grade early exit
};

// P_V: fraction of sampled settings whose behavior falls outside the model
// polytope (v_crit < 1 - 1e-8). Sample i draws from RngStream(seed, i), so
// results are identical for any thread count. Throws std::runtime_error if
// solver failures reach 0.1% of n.
PvEstimate estimate_pv(const quantum::StateSpec& state, const Scenario& sc,
                       polytope::LocalityModel model, std::uint64_t n, double confidence,
                       std::uint64_t seed, SettingsSource source = SettingsSource::UniformRandom,
                       const MonteCarloOptions& mc = {});

// P_V^I: success means some member of the (already lifted/expanded) family is
// violated. Same sampling contract as estimate_pv, so with a shared seed the
// per-sample settings coincide and P_V^I <= P_V holds for a matching model.
PvEstimate estimate_pv_inequality(const quantum::StateSpec& state, const Scenario& sc,
                                  const std::vector<inequalities::BellInequality>& family,
                                  std::uint64_t n, double confidence, std::uint64_t seed,
                                  SettingsSource source = SettingsSource::UniformRandom,
                                  const MonteCarloOptions& mc = {});

// Lift every base inequality to the target scenario and close under
// relabelings, deduplicated by coefficient content. Throws std::length_error
// if the expansion would exceed `cap` members.
std::vector<inequalities::BellInequality> expand_family(
    const std::vector<inequalities::BellInequality>& base, const Scenario& sc,
    std::size_t cap = 1'000'000);

struct RestartTrace {
    int restart = 0;
    double v = 1.0;    // extended objective reached by this restart's descent
    int sweeps = 0;
    std::uint64_t evals = 0;
    bool polished = false;
};

struct StrengthResult {
    double s_max = 0.0;  // 1 - v_crit at `best`, re-solved exactly
    double v_crit = 1.0;
    quantum::MeasurementAssignment best;
    int restarts = 0;
    std::uint64_t evaluations = 0;
    std::vector<RestartTrace> trace;
    std::string to_json() const;
};

// Multi-start derivative-free coordinate descent on the extended visibility
// (qubits: polar/azimuth pair per setting; qutrits: 8 generator coordinates
// around a Haar base per setting). Steps halve once a sweep stops improving;
// a restart ends when the step drops below 1e-4. All restarts run a coarse
// stage; only the best few are polished to full resolution. restarts <= 0
// picks the default (200 for m=2, 50 for m>=3). Deterministic in (seed,
// restarts) for any thread count.
StrengthResult maximize_strength(const quantum::StateSpec& state, const Scenario& sc,
                                 polytope::LocalityModel model, int restarts, std::uint64_t seed,
                                 int threads = 1);

struct StrengthHistogram {
    std::uint64_t trials = 0;
    std::uint64_t violating = 0;
    std::uint64_t failures = 0;
    double bin_width = 0.0;             // bins partition [0, 1)
    std::vector<std::uint64_t> counts;  // S = 1 - v_crit over violating samples
    double mean_s = 0.0;                // over violating samples
    double max_s = 0.0;
    // per-inequality variant, present when a family is supplied: strength of
    // the best family member per sample (1 - bound-crossing visibility)
    std::vector<std::uint64_t> family_counts;
    std::uint64_t family_violating = 0;
    std::string to_json() const;
};

StrengthHistogram strength_distribution(const quantum::StateSpec& state, const Scenario& sc,
                                        polytope::LocalityModel model, std::uint64_t n, int bins,
                                        std::uint64_t seed,
                                        SettingsSource source = SettingsSource::UniformRandom,
                                        const std::vector<inequalities::BellInequality>* family = nullptr,
                                        const MonteCarloOptions& mc = {});

struct AlphaPoint {
    double alpha = 0.0; // radians
    PvEstimate pv;
    double mean_s = 0.0;          // over violating samples
    double max_closed_form_err = 0.0; // planar S2 m=2 only; 0 otherwise
};

// P_V of GHZ(alpha) per grid point, one PvEstimate each, all points sharing
// the seed (common random numbers keep the trend monotone sample-by-sample).
// With planar settings under S2 at m=2 every sample's v_crit is also checked
// against the closed form min(1, 1/((|cos t|+|sin t|) sin 2a)), t the summed
// azimuth; the worst deviation is reported per point.
std::vector<AlphaPoint> sweep_alpha(polytope::LocalityModel model, int m,
                                    const std::vector<double>& alphas, std::uint64_t n,
                                    double confidence, std::uint64_t seed,
                                    SettingsSource source = SettingsSource::UniformRandom,
                                    const MonteCarloOptions& mc = {});

} // namespace gmnl::analysis
