#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "gmnl/behavior.hpp"
#include "gmnl/inequalities.hpp"
#include "gmnl/polytope.hpp"
#include "gmnl/quantum.hpp"
#include "gmnl/rng.hpp"

using namespace gmnl;
using inequalities::BellInequality;

namespace {

Behavior ghz_planar(double a1, double b1, double g1) {
    const auto rho = quantum::make_state({quantum::StateFamily::Ghz, 0.0});
    return quantum::behavior_from_quantum(rho, quantum::planar_orthogonal_settings(a1, b1, g1));
}

// every deterministic hybrid vertex of the m=2, d=2 Svetlichny polytope:
// 3 bipartitions x 4 lone-party strategies x 256 deterministic pair boxes
std::vector<Behavior> all_hybrid_vertices() {
    const Scenario sc{2, 2};
    std::vector<Behavior> out;
    out.reserve(3072);
    for (int bip = 0; bip < polytope::kNumBipartitions; ++bip)
        for (std::uint64_t e = 0; e < 4; ++e) {
            const auto lone = polytope::DeterministicStrategy::from_index(e, 2, 2);
            for (std::uint64_t box = 0; box < 256; ++box) {
                std::vector<double> q(16, 0.0);
                std::uint64_t rem = box;
                for (int pair = 0; pair < 4; ++pair) {
                    const int r = static_cast<int>(rem % 4);
                    rem /= 4;
                    q[static_cast<std::size_t>((pair * 2 + r / 2) * 2 + r % 2)] = 1.0;
                }
                out.push_back(polytope::hybrid_behavior(sc, bip, lone, q));
            }
        }
    return out;
}

double max_over(const BellInequality& ineq, const std::vector<Behavior>& pts) {
    double best = -1e300;
    for (const auto& p : pts) best = std::max(best, inequalities::evaluate(ineq, p));
    return best;
}

std::vector<double> sorted_local_profile(const BellInequality& ineq,
                                         const std::vector<Behavior>& verts) {
    std::vector<double> vals;
    vals.reserve(verts.size());
    for (const auto& v : verts) vals.push_back(inequalities::evaluate(ineq, v));
    std::sort(vals.begin(), vals.end());
    return vals;
}

} // namespace

TEST_CASE("validation rejects malformed inequalities") {
    BellInequality ok{{2, 2}, std::vector<double>(64, 0.0), 1.0, "L", "test"};
    CHECK_NOTHROW(ok.validate());
    BellInequality bad = ok;
    bad.coeffs.resize(63);
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = ok;
    bad.coeffs[5] = std::nan("");
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = ok;
    bad.model = "NSI";
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("evaluate is the plain inner product") {
    const Scenario sc{2, 2};
    BellInequality ineq{sc, std::vector<double>(64, 0.0), 0.0, "L", "test"};
    Behavior p = isotropic(sc);
    ineq.coeffs[p.index(0, 0, 0, 0, 0, 0)] = 8.0;
    ineq.coeffs[p.index(1, 1, 1, 1, 1, 1)] = -4.0;
    CHECK(inequalities::evaluate(ineq, p) == doctest::Approx(8.0 / 8 - 4.0 / 8));
    CHECK_THROWS_AS(inequalities::evaluate(ineq, isotropic({3, 2})), std::invalid_argument);
}

TEST_CASE("relabeling group orders") {
    CHECK(inequalities::relabeling_group_order({2, 2}) == 3072);
    CHECK(inequalities::relabeling_group_order({3, 2}) == 663552);
    CHECK(inequalities::relabeling_group_order({2, 3}) == 2239488);
}

TEST_CASE("equivalents: orbit structure and relabeling invariance") {
    const auto sv = inequalities::planar_svetlichny(M_PI / 12, M_PI / 12, M_PI / 12);
    const BellInequality ineq = sv.family.to_inequality();
    const auto orbit = inequalities::equivalents(ineq);

    // orbit size divides the group order (orbit-stabilizer)
    CHECK(orbit.size() >= 1);
    CHECK(orbit.size() <= 3072);
    CHECK(3072 % orbit.size() == 0);

    // closure: the orbit of any image is the same set
    auto key_set = [](const std::vector<BellInequality>& v) {
        std::vector<std::vector<double>> keys;
        keys.reserve(v.size());
        for (const auto& q : v) keys.push_back(q.coeffs);
        std::sort(keys.begin(), keys.end());
        return keys;
    };
    const auto orbit2 = inequalities::equivalents(orbit[orbit.size() / 2]);
    CHECK(key_set(orbit) == key_set(orbit2));

    // invariance oracle: relabelings permute the local vertices, so the sorted
    // evaluation profile over all of them is preserved
    const auto verts = polytope::enumerate_local_deterministic({2, 2});
    const auto base_profile = sorted_local_profile(ineq, verts);
    for (const auto& img : orbit) {
        CHECK(img.bound == ineq.bound);
        CHECK(img.model == ineq.model);
        const auto profile = sorted_local_profile(img, verts);
        REQUIRE(profile.size() == base_profile.size());
        double worst = 0.0;
        for (std::size_t i = 0; i < profile.size(); ++i)
            worst = std::max(worst, std::abs(profile[i] - base_profile[i]));
        CHECK(worst < 1e-12); // summation order may differ between images
    }

    // ... and the Svetlichny-polytope maximum is preserved as well
    const auto hybrids = all_hybrid_vertices();
    const double base_max = max_over(ineq, hybrids);
    for (std::size_t k = 0; k < orbit.size(); k += orbit.size() / 7 + 1)
        CHECK(max_over(orbit[k], hybrids) == doctest::Approx(base_max).epsilon(1e-12));
}

TEST_CASE("equivalents enforces the materialization cap") {
    const auto sv = inequalities::planar_svetlichny(0.1, 0.2, 0.3);
    const BellInequality ineq = sv.family.to_inequality();
    inequalities::EquivalentsOptions tiny;
    tiny.cap = 100;
    CHECK_THROWS_AS(inequalities::equivalents(ineq, tiny), std::length_error);

    // m=2, d=3 group order 2239488 exceeds the default cap
    BellInequality big{{2, 3}, std::vector<double>(216, 0.0), 1.0, "L", "test"};
    big.coeffs[0] = 1.0;
    CHECK_THROWS_AS(inequalities::equivalents(big), std::length_error);
}

TEST_CASE("for_each_equivalent streams the whole group") {
    const auto sv = inequalities::planar_svetlichny(0.3, 0.1, 0.2);
    const BellInequality ineq = sv.family.to_inequality();
    std::size_t count = 0;
    inequalities::for_each_equivalent(ineq, [&](const BellInequality& img) {
        if (count == 0) img.validate();
        CHECK(img.bound == ineq.bound);
        ++count;
    });
    CHECK(count == 3072);
}

TEST_CASE("lift maps setting pairs and preserves evaluations") {
    const auto sv = inequalities::planar_svetlichny(M_PI / 12, M_PI / 12, M_PI / 12);
    const BellInequality src = sv.family.to_inequality();

    const auto lifted = inequalities::lift(src, 3);
    CHECK(lifted.size() == 216); // (3*2)^3 ordered setting pairs

    RngStream rng(17, 0);
    const auto rho = quantum::make_state({quantum::StateFamily::Ghz, 0.0});
    const Behavior p3 =
        quantum::behavior_from_quantum(rho, quantum::sample_random_settings({3, 2}, rng));

    // oracle: evaluating a lift on the m=3 behavior equals evaluating the
    // source on the corresponding restriction to two settings per party
    std::vector<double> via_lift, via_restrict;
    for (const auto& q : lifted) {
        CHECK(q.scenario.m == 3);
        CHECK(q.bound == src.bound);
        via_lift.push_back(inequalities::evaluate(q, p3));
    }
    const Scenario sc2{2, 2};
    int maps[6][2];
    int nm = 0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (i != j) { maps[nm][0] = i; maps[nm][1] = j; ++nm; }
    for (int ma = 0; ma < 6; ++ma)
        for (int mb = 0; mb < 6; ++mb)
            for (int mc = 0; mc < 6; ++mc) {
                Behavior r = Behavior::zeros(sc2);
                for (int x = 0; x < 2; ++x)
                    for (int y = 0; y < 2; ++y)
                        for (int z = 0; z < 2; ++z)
                            for (int a = 0; a < 2; ++a)
                                for (int b = 0; b < 2; ++b)
                                    for (int c = 0; c < 2; ++c)
                                        r.at(x, y, z, a, b, c) = p3.at(
                                            maps[ma][x], maps[mb][y], maps[mc][z], a, b, c);
                via_restrict.push_back(inequalities::evaluate(src, r));
            }
    std::sort(via_lift.begin(), via_lift.end());
    std::sort(via_restrict.begin(), via_restrict.end());
    REQUIRE(via_lift.size() == via_restrict.size());
    for (std::size_t i = 0; i < via_lift.size(); ++i)
        CHECK(via_lift[i] == doctest::Approx(via_restrict[i]).epsilon(1e-12));

    // lifting into the same scenario includes the identity relabeling
    const auto self = inequalities::lift(src, 2);
    CHECK(self.size() == 8);
    const Behavior p2 = ghz_planar(0.4, 0.1, 0.2);
    const double direct = inequalities::evaluate(src, p2);
    bool found = false;
    for (const auto& q : self)
        if (std::abs(inequalities::evaluate(q, p2) - direct) < 1e-12) found = true;
    CHECK(found);

    CHECK_THROWS_AS(inequalities::lift(BellInequality{{3, 2}, std::vector<double>(512, 0.0),
                                                      1.0, "L", "t"},
                                       3),
                    std::invalid_argument);
}

TEST_CASE("planar family bound matches brute force over the Svetlichny polytope") {
    const auto hybrids = all_hybrid_vertices();
    for (double theta : {M_PI / 4, 0.3, 0.9, 1.3, 0.05}) {
        const auto sv = inequalities::planar_svetlichny(theta / 3, theta / 3, theta / 3);
        CHECK(sv.family.theta == doctest::Approx(theta).epsilon(1e-12));
        const BellInequality ineq = sv.family.to_inequality();
        CHECK(sv.local_bound ==
              doctest::Approx(4.0 * std::max(std::abs(std::cos(theta)),
                                             std::abs(std::sin(theta)))).epsilon(1e-12));
        CHECK(ineq.bound == sv.local_bound);
        CHECK(ineq.model == "S2");
        // brute-force oracle: maximum over all deterministic hybrid vertices
        CHECK(max_over(ineq, hybrids) == doctest::Approx(sv.local_bound).epsilon(1e-9));
        // random mixtures stay below the bound
        RngStream rng(static_cast<std::uint64_t>(theta * 1e6), 1);
        for (int k = 0; k < 20; ++k) {
            std::vector<double> mixdata(64, 0.0);
            double tot = 0.0;
            double w[5];
            for (double& wi : w) { wi = rng.uniform(); tot += wi; }
            for (int t = 0; t < 5; ++t) {
                const auto& h = hybrids[rng.next_u64() % hybrids.size()];
                for (int i = 0; i < 64; ++i)
                    mixdata[static_cast<std::size_t>(i)] +=
                        w[t] / tot * h.data()[static_cast<std::size_t>(i)];
            }
            const Behavior mixture({2, 2}, std::move(mixdata));
            CHECK(inequalities::evaluate(ineq, mixture) <= sv.local_bound + 1e-9);
        }
    }
}

TEST_CASE("planar family reaches quantum value 4 on the matching GHZ behavior") {
    for (auto [a, b, g] : {std::array<double, 3>{M_PI / 12, M_PI / 12, M_PI / 12},
                           std::array<double, 3>{0.3, 0.05, 0.2},
                           std::array<double, 3>{0.0, 0.0, 0.45}}) {
        const auto sv = inequalities::planar_svetlichny(a, b, g);
        const Behavior p = ghz_planar(a, b, g);
        CHECK(sv.quantum_value == doctest::Approx(4.0).epsilon(1e-12));
        CHECK(inequalities::evaluate(sv.family.to_inequality(), p) ==
              doctest::Approx(4.0).epsilon(1e-9));
    }
}

TEST_CASE("violated_by_any applies the margin") {
    const auto sv = inequalities::planar_svetlichny(M_PI / 12, M_PI / 12, M_PI / 12);
    const Behavior p = ghz_planar(M_PI / 12, M_PI / 12, M_PI / 12);
    const std::vector<BellInequality> family{sv.family.to_inequality()};
    CHECK(inequalities::violated_by_any(family, p));
    CHECK_FALSE(inequalities::violated_by_any(family, p, 2.0)); // 4 - 2*sqrt(2) < 2
    CHECK_FALSE(inequalities::violated_by_any(family, isotropic({2, 2})));
}

TEST_CASE("catalog round-trips exactly and reports parse errors with line numbers") {
    const std::string path = "catalog_roundtrip.txt";
    std::vector<BellInequality> cat;
    cat.push_back(inequalities::planar_svetlichny(M_PI / 12, M_PI / 12, M_PI / 12)
                      .family.to_inequality());
    {
        const Behavior p = ghz_planar(0.2, 0.3, 0.4);
        const auto cert = polytope::critical_visibility(p, polytope::LocalityModel::NS2);
        cat.push_back(polytope::extract_dual_inequality(cert, p.scenario()));
    }
    inequalities::save_catalog(path, cat);
    const auto loaded = inequalities::load_catalog(path);
    REQUIRE(loaded.size() == cat.size());
    for (std::size_t i = 0; i < cat.size(); ++i) {
        CHECK(loaded[i].scenario == cat[i].scenario);
        CHECK(loaded[i].coeffs == cat[i].coeffs); // 17 digits: bitwise
        CHECK(loaded[i].bound == cat[i].bound);
        CHECK(loaded[i].model == cat[i].model);
    }
    std::remove(path.c_str());

    auto expect_fail_at = [](const std::string& text, const std::string& needle) {
        const std::string bad = "catalog_bad.txt";
        std::ofstream(bad) << text;
        bool threw = false;
        try {
            inequalities::load_catalog(bad);
        } catch (const std::runtime_error& ex) {
            threw = true;
            CHECK(std::string(ex.what()).find(needle) != std::string::npos);
        }
        CHECK(threw);
        std::remove(bad.c_str());
    };
    expect_fail_at("bell m=2 d=2 bound=1 id=x\n", ":1");                 // missing model
    expect_fail_at("hello\n", "expected 'bell");
    expect_fail_at("bell m=2 d=2 model=L bound=1 id=x\n0 0 0 0 0 0\n", ":2"); // short line
    expect_fail_at("bell m=2 d=2 model=L bound=1 id=x\n0 0 0 0 0 5 1.0\n", "out of range");
    {
        // duplicate coordinate line
        std::string text = "bell m=2 d=2 model=L bound=1 id=x\n";
        for (int i = 0; i < 2; ++i) text += "0 0 0 0 0 0 1.0\n";
        expect_fail_at(text, "duplicate");
    }
    expect_fail_at("bell m=2 d=2 model=L bound=1 id=x\n0 0 0 0 0 0 1.0\n",
                   "unexpected end of file");
}
