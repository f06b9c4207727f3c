#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmnl/analysis.hpp"
#include "gmnl/behavior.hpp"
#include "gmnl/inequalities.hpp"
#include "gmnl/polytope.hpp"
#include "gmnl/quantum.hpp"
#include "gmnl/rng.hpp"

using namespace gmnl;
using analysis::MonteCarloOptions;
using analysis::SettingsSource;
using polytope::LocalityModel;

namespace {

// standard normal CDF via erfc, the independent check for the quantile code
double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

quantum::StateSpec ghz() { return {quantum::StateFamily::Ghz, 0.0}; }
quantum::StateSpec wstate() { return {quantum::StateFamily::W, 0.0}; }
quantum::StateSpec product() { return {quantum::StateFamily::Product000, 0.0}; }

std::vector<inequalities::BellInequality> planar_family(const Scenario& sc) {
    const auto ps = inequalities::planar_svetlichny(M_PI / 4, 0.0, 0.0);
    return analysis::expand_family({ps.family.to_inequality()}, sc);
}

bool heavy() {
    const char* e = std::getenv("GMNL_HEAVY");
    return e != nullptr && *e != '\0' && *e != '0';
}

} // namespace

TEST_CASE("settings source names round-trip") {
    using analysis::settings_source_from_string;
    for (SettingsSource s : {SettingsSource::UniformRandom, SettingsSource::TetrahedralRandomRotations,
                             SettingsSource::PlanarRandomAngles})
        CHECK(settings_source_from_string(analysis::to_string(s)) == s);
    CHECK(settings_source_from_string("random") == SettingsSource::UniformRandom);
    CHECK(settings_source_from_string("uniform") == SettingsSource::UniformRandom);
    CHECK(settings_source_from_string("tetrahedral") == SettingsSource::TetrahedralRandomRotations);
    CHECK(settings_source_from_string("planar") == SettingsSource::PlanarRandomAngles);
    CHECK_THROWS_AS(settings_source_from_string("isotropic"), std::invalid_argument);
}

TEST_CASE("normal quantile matches the erfc-based CDF") {
    CHECK(analysis::normal_quantile(0.5) == 0.0);
    CHECK(analysis::normal_quantile(0.995) == doctest::Approx(2.5758293035489004).epsilon(1e-13));
    CHECK(analysis::normal_quantile(0.975) == doctest::Approx(1.9599639845400545).epsilon(1e-13));
    for (double p : {1e-10, 1e-6, 0.001, 0.02, 0.1, 0.3, 0.5, 0.7, 0.9, 0.975, 0.995, 0.9999,
                     1.0 - 1e-9}) {
        const double z = analysis::normal_quantile(p);
        CHECK(std::abs(normal_cdf(z) - p) <= 1e-12 * std::min(p, 1.0 - p) + 1e-16);
        // representing 1-p already costs ~ulp(1)/phi(z) in the far tails
        const double sym_eps = std::min(p, 1.0 - p) < 1e-3 ? 1e-6 : 1e-12;
        CHECK(analysis::normal_quantile(1.0 - p) == doctest::Approx(-z).epsilon(sym_eps));
    }
    CHECK_THROWS_AS(analysis::normal_quantile(0.0), std::invalid_argument);
    CHECK_THROWS_AS(analysis::normal_quantile(1.0), std::invalid_argument);
    CHECK_THROWS_AS(analysis::normal_quantile(-0.2), std::invalid_argument);
}

TEST_CASE("wilson interval pins and boundaries") {
    {
        const auto [lo, hi] = analysis::wilson_interval(968400, 1000000, 0.99);
        CHECK(std::llround(lo * 1e4) == 9679);
        CHECK(std::llround(hi * 1e4) == 9688);
    }
    {
        const auto [lo, hi] = analysis::wilson_interval(967200, 1000000, 0.99);
        CHECK(std::llround(lo * 1e4) == 9667);
        CHECK(std::llround(hi * 1e4) == 9677);
    }
    for (std::uint64_t n : {1ULL, 10ULL, 1000ULL}) {
        CHECK(analysis::wilson_interval(0, n, 0.95).first == 0.0);
        CHECK(analysis::wilson_interval(n, n, 0.99).second == 1.0);
    }
    {
        const auto [lo, hi] = analysis::wilson_interval(30, 100, 0.95);
        CHECK(lo > 0.0);
        CHECK(lo < 0.3);
        CHECK(hi > 0.3);
        CHECK(hi < 1.0);
        const auto [lo2, hi2] = analysis::wilson_interval(30, 100, 0.999);
        CHECK(lo2 < lo);
        CHECK(hi2 > hi);
    }
    CHECK_THROWS_AS(analysis::wilson_interval(1, 0, 0.95), std::invalid_argument);
    CHECK_THROWS_AS(analysis::wilson_interval(5, 4, 0.95), std::invalid_argument);
    CHECK_THROWS_AS(analysis::wilson_interval(1, 10, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(analysis::wilson_interval(1, 10, 1.0), std::invalid_argument);
}

TEST_CASE("wilson coverage on synthetic Bernoulli experiments") {
    const double p = 0.3;
    const std::uint64_t n = 1000;
    int covered = 0;
    for (int rep = 0; rep < 1000; ++rep) {
        RngStream rng(424242, static_cast<std::uint64_t>(rep));
        std::uint64_t succ = 0;
        for (std::uint64_t i = 0; i < n; ++i)
            if (rng.uniform() < p) ++succ;
        const auto [lo, hi] = analysis::wilson_interval(succ, n, 0.99);
        if (lo <= p && p <= hi) ++covered;
    }
    CHECK(covered >= 985);
}

TEST_CASE("extended visibility scales along the isotropic line") {
    const auto rho = quantum::make_state(ghz());
    const Behavior p = quantum::behavior_from_quantum(
        rho, quantum::planar_orthogonal_settings(M_PI / 4, 0.0, 0.0));
    for (LocalityModel model : {LocalityModel::L, LocalityModel::S2, LocalityModel::NS2}) {
        const double z = polytope::extended_visibility(p, model);
        const auto cert = polytope::critical_visibility(p, model);
        CHECK(z == doctest::Approx(cert.v_crit).epsilon(1e-7));
        for (double w : {0.5, 0.25}) {
            CHECK(polytope::extended_visibility(mix(p, w), model) ==
                  doctest::Approx(z / w).epsilon(1e-6));
        }
    }
    // interior points score above one, the isotropic point hits the cap
    const Behavior iso = isotropic({2, 2});
    CHECK(polytope::extended_visibility(iso, LocalityModel::L) == doctest::Approx(64.0).epsilon(1e-6));
    const Behavior prod = quantum::behavior_from_quantum(
        quantum::make_state(product()), quantum::planar_orthogonal_settings(0.3, 1.1, 0.6));
    CHECK(polytope::extended_visibility(prod, LocalityModel::L) > 1.0);
}

TEST_CASE("column pool reproduces bare values and enforces its binding") {
    const auto rho = quantum::make_state(ghz());
    polytope::ColumnPool pool;
    RngStream rng(5, 1);
    for (int i = 0; i < 5; ++i) {
        const Behavior p =
            quantum::behavior_from_quantum(rho, quantum::sample_random_settings({2, 2}, rng));
        const double bare = polytope::extended_visibility(p, LocalityModel::NS2);
        const double pooled = polytope::extended_visibility(p, LocalityModel::NS2, &pool);
        CHECK(pooled == doctest::Approx(bare).epsilon(1e-7));
    }
    CHECK(pool.size() > 0);
    const Behavior p =
        quantum::behavior_from_quantum(rho, quantum::sample_random_settings({2, 2}, rng));
    CHECK_THROWS_AS(polytope::extended_visibility(p, LocalityModel::L, &pool), std::logic_error);
}

TEST_CASE("estimate_pv on a product state never succeeds") {
    const auto est = analysis::estimate_pv(product(), {2, 2}, LocalityModel::L, 200, 0.99, 7);
    CHECK(est.successes == 0);
    CHECK(est.failures == 0);
    CHECK(est.p_hat == 0.0);
    CHECK(est.lo == 0.0);
    CHECK(est.trials == 200);
    CHECK(est.model == "L");
    CHECK(est.measure == "uniform-random");
}

TEST_CASE("estimate_pv matches published ballparks at small n") {
    const auto l = analysis::estimate_pv(ghz(), {2, 2}, LocalityModel::L, 1500, 0.999, 21);
    CHECK(l.lo <= 0.7469);
    CHECK(l.hi >= 0.7469);
    const auto ns2 = analysis::estimate_pv(ghz(), {2, 2}, LocalityModel::NS2, 1500, 0.999, 21);
    CHECK(ns2.lo <= 0.1157);
    CHECK(ns2.hi >= 0.1157);
    const auto w = analysis::estimate_pv(wstate(), {2, 2}, LocalityModel::NS2, 1500, 0.999, 22);
    CHECK(w.lo <= 0.0373);
    CHECK(w.hi >= 0.0373);
    // shared seed means shared samples, so counts respect polytope nesting
    const auto s2 = analysis::estimate_pv(ghz(), {2, 2}, LocalityModel::S2, 300, 0.999, 21);
    const auto ns2s = analysis::estimate_pv(ghz(), {2, 2}, LocalityModel::NS2, 300, 0.999, 21);
    const auto ls = analysis::estimate_pv(ghz(), {2, 2}, LocalityModel::L, 300, 0.999, 21);
    CHECK(s2.successes <= ns2s.successes);
    CHECK(ns2s.successes <= ls.successes);
}

TEST_CASE("estimate_pv is deterministic in the seed for any worker count") {
    MonteCarloOptions one;
    one.threads = 1;
    MonteCarloOptions three;
    three.threads = 3;
    const auto a = analysis::estimate_pv(ghz(), {2, 2}, LocalityModel::NS2, 400, 0.99, 99,
                                         SettingsSource::UniformRandom, one);
    const auto b = analysis::estimate_pv(ghz(), {2, 2}, LocalityModel::NS2, 400, 0.99, 99,
                                         SettingsSource::UniformRandom, three);
    CHECK(a.successes == b.successes);
    CHECK(a.failures == b.failures);
    CHECK(a.p_hat == b.p_hat);
    CHECK(a.lo == b.lo);
    CHECK(a.hi == b.hi);
    // early-exit verdicts agree with full solves
    MonteCarloOptions exact;
    exact.exact_values = true;
    const auto c = analysis::estimate_pv(ghz(), {2, 2}, LocalityModel::NS2, 400, 0.99, 99,
                                         SettingsSource::UniformRandom, exact);
    CHECK(a.successes == c.successes);
}

TEST_CASE("estimate_pv validates its inputs") {
    CHECK_THROWS_AS(analysis::estimate_pv(ghz(), {2, 2}, LocalityModel::L, 0, 0.99, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(analysis::estimate_pv(ghz(), {2, 3}, LocalityModel::L, 10, 0.99, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(analysis::estimate_pv(ghz(), {2, 2}, LocalityModel::L, 10, 0.99, 1,
                                          SettingsSource::TetrahedralRandomRotations),
                    std::invalid_argument);
    CHECK_THROWS_AS(analysis::estimate_pv(ghz(), {4, 2}, LocalityModel::L, 10, 0.99, 1,
                                          SettingsSource::PlanarRandomAngles),
                    std::invalid_argument);
}

TEST_CASE("tetrahedral W sampling always leaves NS2") {
    const auto est = analysis::estimate_pv(wstate(), {4, 2}, LocalityModel::NS2, 120, 0.99, 31,
                                           SettingsSource::TetrahedralRandomRotations);
    CHECK(est.successes == 120);
    CHECK(est.failures == 0);
    CHECK(est.measure == "tetrahedral-random-rotations");
}

TEST_CASE("dual-extracted inequality certifies its own behavior") {
    RngStream rng(17, 3);
    const auto rho = quantum::make_state(ghz());
    int outside = 0;
    for (int i = 0; i < 20; ++i) {
        const Behavior p =
            quantum::behavior_from_quantum(rho, quantum::sample_random_settings({2, 2}, rng));
        const auto cert = polytope::critical_visibility(p, LocalityModel::L);
        if (cert.inside) continue;
        ++outside;
        const auto ineq = polytope::extract_dual_inequality(cert, {2, 2});
        CHECK(inequalities::violated_by_any({ineq}, p));
    }
    CHECK(outside > 5);
}

TEST_CASE("inequality-based P_V stays below the LP-based P_V on shared samples") {
    const Scenario sc{2, 2};
    const auto family = planar_family(sc);
    const auto pvi =
        analysis::estimate_pv_inequality(ghz(), sc, family, 400, 0.99, 77);
    const auto pv = analysis::estimate_pv(ghz(), sc, LocalityModel::S2, 400, 0.99, 77);
    CHECK(pvi.model == "S2^I");
    CHECK(pvi.successes <= pv.successes);
    CHECK(pvi.successes > 0);
}

TEST_CASE("planar sampling with the planar family succeeds except on the grid") {
    const Scenario sc{2, 2};
    const auto family = planar_family(sc);
    const auto est = analysis::estimate_pv_inequality(ghz(), sc, family, 150, 0.99, 13,
                                                      SettingsSource::PlanarRandomAngles);
    CHECK(est.successes == est.trials - est.failures);
}

TEST_CASE("estimate_pv_inequality validates the family") {
    inequalities::BellInequality wrong = planar_family({2, 2}).front();
    CHECK_THROWS_AS(
        analysis::estimate_pv_inequality(ghz(), {3, 2}, {wrong}, 10, 0.99, 1),
        std::invalid_argument);
}

TEST_CASE("expand_family lifts, dedups, and honors its cap") {
    const auto base = inequalities::planar_svetlichny(M_PI / 4, 0.0, 0.0).family.to_inequality();
    const Scenario sc22{2, 2};
    const auto fam = analysis::expand_family({base}, sc22);
    CHECK(!fam.empty());
    for (const auto& q : fam) CHECK((q.scenario == sc22));
    // feeding the same base twice changes nothing after dedup
    CHECK(analysis::expand_family({base, base}, sc22).size() == fam.size());
    // lifting to m=3 multiplies the family by the setting-pair choices
    const auto lifted = analysis::expand_family({base}, {3, 2});
    CHECK(lifted.size() > fam.size());
    for (const auto& q : lifted) CHECK((q.scenario == Scenario{3, 2}));
    CHECK_THROWS_AS(analysis::expand_family({base}, sc22, 3), std::length_error);
    inequalities::BellInequality qutrit = base;
    qutrit.scenario = {2, 3};
    qutrit.coeffs.resize(Scenario{2, 3}.num_entries(), 0.0);
    CHECK_THROWS_AS(analysis::expand_family({qutrit}, sc22), std::invalid_argument);
}

TEST_CASE("maximize_strength finds the GHZ Svetlichny optimum") {
    const auto res = analysis::maximize_strength(ghz(), {2, 2}, LocalityModel::S2, 8, 3);
    CHECK(res.s_max == doctest::Approx(0.292893).epsilon(1e-4));
    CHECK(res.restarts == 8);
    CHECK(res.trace.size() == 8);
    CHECK(res.evaluations > 0);
    // the stored settings reproduce the reported strength exactly
    const Behavior p = quantum::behavior_from_quantum(quantum::make_state(ghz()), res.best);
    const auto cert = polytope::critical_visibility(p, LocalityModel::S2);
    CHECK(std::abs((1.0 - cert.v_crit) - res.s_max) <= 1e-9);
    CHECK(res.v_crit == doctest::Approx(cert.v_crit).epsilon(1e-9));
}

TEST_CASE("maximize_strength reproduces the W no-signaling strength") {
    const auto res = analysis::maximize_strength(wstate(), {2, 2}, LocalityModel::NS2, 12, 5);
    CHECK(res.s_max == doctest::Approx(0.199118).epsilon(2e-3));
}

TEST_CASE("maximize_strength on a product state reports zero") {
    const auto res = analysis::maximize_strength(product(), {2, 2}, LocalityModel::L, 4, 2);
    CHECK(res.s_max == 0.0);
    CHECK(res.v_crit == 1.0);
}

TEST_CASE("maximize_strength is deterministic for any worker count") {
    const auto a = analysis::maximize_strength(ghz(), {2, 2}, LocalityModel::L, 5, 9, 1);
    const auto b = analysis::maximize_strength(ghz(), {2, 2}, LocalityModel::L, 5, 9, 2);
    CHECK(a.s_max == b.s_max);
    REQUIRE(a.best.bloch.size() == b.best.bloch.size());
    for (std::size_t p = 0; p < a.best.bloch.size(); ++p)
        for (std::size_t s = 0; s < a.best.bloch[p].size(); ++s)
            CHECK((a.best.bloch[p][s] - b.best.bloch[p][s]).norm() == 0.0);
}

TEST_CASE("strength_distribution accounts for every violating sample") {
    const auto h = analysis::strength_distribution(ghz(), {2, 2}, LocalityModel::L, 200, 10, 41);
    CHECK(h.trials == 200);
    CHECK(std::accumulate(h.counts.begin(), h.counts.end(), std::uint64_t{0}) == h.violating);
    CHECK(h.violating > 100);
    CHECK(h.violating < 200);
    CHECK(h.mean_s > 0.0);
    CHECK(h.max_s <= 1.0);
    CHECK(h.bin_width == doctest::Approx(0.1));
    CHECK(h.family_counts.empty());

    const auto empty = analysis::strength_distribution(product(), {2, 2}, LocalityModel::L, 50, 10, 41);
    CHECK(empty.violating == 0);
    CHECK(std::accumulate(empty.counts.begin(), empty.counts.end(), std::uint64_t{0}) == 0);
    CHECK(empty.max_s == 0.0);

    const auto family = planar_family({2, 2});
    const auto hf =
        analysis::strength_distribution(ghz(), {2, 2}, LocalityModel::S2, 60, 5, 43,
                                        SettingsSource::UniformRandom, &family);
    CHECK(std::accumulate(hf.family_counts.begin(), hf.family_counts.end(), std::uint64_t{0}) ==
          hf.family_violating);
    CHECK(hf.family_violating <= hf.trials);

    CHECK_THROWS_AS(analysis::strength_distribution(ghz(), {2, 2}, LocalityModel::L, 0, 10, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(analysis::strength_distribution(ghz(), {2, 2}, LocalityModel::L, 10, 0, 1),
                    std::invalid_argument);
}

TEST_CASE("sweep_alpha tracks the published trend and the closed form") {
    const double deg = M_PI / 180.0;
    // common random numbers: successes are monotone in alpha sample-by-sample
    const auto pts = analysis::sweep_alpha(LocalityModel::NS2, 2,
                                           {10 * deg, 20 * deg, 30 * deg, 40 * deg, 45 * deg}, 300,
                                           0.99, 55);
    REQUIRE(pts.size() == 5);
    for (std::size_t i = 1; i < pts.size(); ++i)
        CHECK(pts[i - 1].pv.successes <= pts[i].pv.successes);
    CHECK(pts.back().pv.lo <= 0.1157);
    CHECK(pts.back().pv.hi >= 0.1157);
    CHECK(pts.front().pv.p_hat < 0.06);

    const auto zero = analysis::sweep_alpha(LocalityModel::NS2, 2, {0.0}, 60, 0.99, 55);
    CHECK(zero.front().pv.successes == 0);

    MonteCarloOptions exact;
    exact.exact_values = true;
    const auto planar = analysis::sweep_alpha(LocalityModel::S2, 2, {45 * deg}, 40, 0.99, 56,
                                              SettingsSource::PlanarRandomAngles, exact);
    CHECK(planar.front().max_closed_form_err <= 1e-7);
    CHECK(planar.front().pv.successes == 40);
}

TEST_CASE("P_V grows with the setting count for GHZ") {
    const std::uint64_t n = heavy() ? 100000 : 1200;
    const auto m2 = analysis::estimate_pv(ghz(), {2, 2}, LocalityModel::L, n, 0.99, 61);
    const auto m3 = analysis::estimate_pv(ghz(), {3, 2}, LocalityModel::L, n, 0.99, 61);
    CHECK(m2.hi < m3.lo);
    if (heavy()) {
        CHECK(m2.lo <= 0.7469);
        CHECK(m2.hi >= 0.7469);
        CHECK(m3.lo <= 0.9954);
        CHECK(m3.hi >= 0.9954);
    }
}

TEST_CASE("reports serialize to well-formed JSON") {
    const auto est = analysis::estimate_pv(ghz(), {2, 2}, LocalityModel::NS2, 50, 0.99, 3);
    const auto j = nlohmann::json::parse(est.to_json());
    CHECK(j["state"] == "ghz");
    CHECK(j["model"] == "NS2");
    CHECK(j["measure"] == "uniform-random");
    CHECK(j["seed"] == 3);
    CHECK(j["trials"] == 50);
    CHECK(j["successes"] == est.successes);
    CHECK(j["confidence"] == doctest::Approx(0.99));
    CHECK(j["scenario"]["m"] == 2);
    CHECK(j["scenario"]["d"] == 2);

    const auto res = analysis::maximize_strength(product(), {2, 2}, LocalityModel::L, 2, 1);
    const auto js = nlohmann::json::parse(res.to_json());
    CHECK(js["s_max"] == 0.0);
    CHECK(js["restarts"] == 2);
    CHECK(js["trace"].size() == 2);

    const auto h = analysis::strength_distribution(ghz(), {2, 2}, LocalityModel::L, 30, 4, 9);
    const auto jh = nlohmann::json::parse(h.to_json());
    CHECK(jh["trials"] == 30);
    CHECK(jh["counts"].size() == 4);
}
