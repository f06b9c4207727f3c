#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "gmnl/behavior.hpp"
#include "gmnl/quantum.hpp"
#include "gmnl/rng.hpp"

using namespace gmnl;
using namespace gmnl::quantum;

namespace {
constexpr double kPi = 3.14159265358979323846;

double correlator(const Behavior& p, int x, int y, int z) {
    double s = 0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c)
                s += ((a + b + c) % 2 ? -1.0 : 1.0) * p.at(x, y, z, a, b, c);
    return s;
}
} // namespace

TEST_CASE("state grammar round trip and validity") {
    const char* names[] = {"ghz",    "w",      "psis",   "qutrit-ghz", "rank2",     "dicke1",
                           "dicke2", "dicke3", "aharonov", "product000", "ghz(alpha=30)"};
    for (const char* s : names) {
        StateSpec spec = StateSpec::parse(s);
        DensityMatrix rho = make_state(spec);
        CHECK_NOTHROW(rho.validate());
        CHECK(StateSpec::parse(spec.to_string()).family == spec.family);
    }
    CHECK(StateSpec::parse("GHZ( alpha = 45 )").alpha == doctest::Approx(kPi / 4));
    CHECK_THROWS_AS(StateSpec::parse("ghz2"), std::invalid_argument);
    CHECK_THROWS_AS(StateSpec::parse("ghz(alpha=x)"), std::invalid_argument);
}

TEST_CASE("white noise mixing commutes with behavior-level mixing") {
    RngStream rng(7, 3);
    DensityMatrix rho = make_state(StateSpec::parse("w"));
    MeasurementAssignment meas = sample_random_settings(Scenario{2, 2}, rng);
    const double v = 0.63;
    Behavior state_level = behavior_from_quantum(mix_with_white_noise(rho, v), meas);
    Behavior behavior_level = mix(behavior_from_quantum(rho, meas), v);
    for (std::size_t i = 0; i < state_level.size(); ++i)
        CHECK(std::abs(state_level.data()[i] - behavior_level.data()[i]) < 1e-12);
}

TEST_CASE("quantum behaviors are normalized and no-signaling") {
    RngStream rng(11, 0);
    for (const char* name : {"ghz", "psis"}) {
        DensityMatrix rho = make_state(StateSpec::parse(name));
        Behavior p = behavior_from_quantum(rho, sample_random_settings(Scenario{3, 2}, rng));
        CHECK(p.max_normalization_error() < 1e-10);
        CHECK(no_signaling_report(p).max_violation < 1e-10);
    }
    for (const char* name : {"qutrit-ghz", "aharonov", "dicke2"}) {
        DensityMatrix rho = make_state(StateSpec::parse(name));
        Behavior p = behavior_from_quantum(rho, sample_random_settings(Scenario{2, 3}, rng));
        CHECK(p.max_normalization_error() < 1e-10);
        CHECK(no_signaling_report(p).max_violation < 1e-10);
    }
}

TEST_CASE("planar GHZ correlators are cos(alpha_i + beta_j + gamma_k)") {
    RngStream rng(2024, 0);
    DensityMatrix ghz = make_state(StateSpec::parse("ghz"));
    for (int trial = 0; trial < 100; ++trial) {
        const double a1 = rng.uniform(0, 2 * kPi);
        const double b1 = rng.uniform(0, 2 * kPi);
        const double g1 = rng.uniform(0, 2 * kPi);
        Behavior p = behavior_from_quantum(ghz, planar_orthogonal_settings(a1, b1, g1));
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k) {
                    const double want =
                        std::cos(a1 + i * kPi / 2 + b1 + j * kPi / 2 + g1 + k * kPi / 2);
                    CHECK(std::abs(correlator(p, i, j, k) - want) < 1e-12);
                }
    }
}

TEST_CASE("planar GHZ(alpha) correlators carry the sin(2 alpha) factor") {
    RngStream rng(5, 5);
    for (int trial = 0; trial < 20; ++trial) {
        const double alpha = rng.uniform(0, kPi / 4);
        DensityMatrix rho = make_state(
            StateSpec{StateFamily::GhzAlpha, alpha});
        const double a1 = rng.uniform(0, 2 * kPi), b1 = rng.uniform(0, 2 * kPi),
                     g1 = rng.uniform(0, 2 * kPi);
        Behavior p = behavior_from_quantum(rho, planar_orthogonal_settings(a1, b1, g1));
        const double want = std::sin(2 * alpha) * std::cos(a1 + b1 + g1);
        CHECK(std::abs(correlator(p, 0, 0, 0) - want) < 1e-12);
    }
}

TEST_CASE("planar settings lie in the x-y plane with a pi/2 offset") {
    MeasurementAssignment meas = planar_orthogonal_settings(0.0, 0.3, 1.1);
    for (int p = 0; p < 3; ++p)
        for (int x = 0; x < 2; ++x) CHECK(meas.bloch[p][x](2) == 0.0);
    CHECK(meas.bloch[0][0].isApprox(Eigen::Vector3d(1, 0, 0), 1e-14));
    CHECK(meas.bloch[0][1].isApprox(Eigen::Vector3d(0, 1, 0), 1e-14));
    // party 1 observables at (0,0,0) are sigma_x and sigma_y
    CHECK(std::abs(meas.bloch[0][1].dot(meas.bloch[0][0])) < 1e-14);
}

TEST_CASE("tetrahedral settings form a regular tetrahedron, rotations preserve it") {
    std::array<CMat, 3> ident = {CMat::Identity(2, 2), CMat::Identity(2, 2),
                                 CMat::Identity(2, 2)};
    MeasurementAssignment meas = tetrahedral_settings(ident);
    CHECK(meas.scenario.m == 4);
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            CHECK(meas.bloch[0][i].dot(meas.bloch[0][j]) == doctest::Approx(-1.0 / 3).epsilon(1e-12));

    RngStream rng(99, 1);
    std::array<CMat, 3> rots = {haar_unitary(2, rng), haar_unitary(2, rng), haar_unitary(2, rng)};
    MeasurementAssignment rotated = tetrahedral_settings(rots);
    CHECK_NOTHROW(rotated.validate());
    for (int p = 0; p < 3; ++p)
        for (int i = 0; i < 4; ++i)
            for (int j = i + 1; j < 4; ++j)
                CHECK(rotated.bloch[p][i].dot(rotated.bloch[p][j]) ==
                      doctest::Approx(-1.0 / 3).epsilon(1e-10));
}

TEST_CASE("haar unitaries are unitary; qutrit sampling validates") {
    RngStream rng(3, 14);
    for (int t = 0; t < 10; ++t) {
        CMat u = haar_unitary(3, rng);
        CHECK((u * u.adjoint() - CMat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
    }
    MeasurementAssignment meas = sample_random_settings(Scenario{2, 3}, rng);
    CHECK_NOTHROW(meas.validate());
}

TEST_CASE("W state has all-minus-one ZZZ correlator") {
    std::vector<std::vector<Eigen::Vector3d>> dirs(3);
    for (auto& party : dirs) party = {Eigen::Vector3d(0, 0, 1), Eigen::Vector3d(1, 0, 0)};
    Behavior p = behavior_from_quantum(make_state(StateSpec::parse("w")),
                                       settings_from_bloch(dirs));
    CHECK(correlator(p, 0, 0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("product000 behavior factorizes over parties") {
    RngStream rng(17, 17);
    Behavior p = behavior_from_quantum(make_state(StateSpec::parse("product000")),
                                       sample_random_settings(Scenario{2, 2}, rng));
    // P(abc|xyz) = P_A(a|x) P_B(b|y) P_C(c|z)
    auto pa = [&](int a, int x) {
        double s = 0;
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) s += p.at(x, 0, 0, a, b, c);
        return s;
    };
    auto pb = [&](int b, int y) {
        double s = 0;
        for (int a = 0; a < 2; ++a)
            for (int c = 0; c < 2; ++c) s += p.at(0, y, 0, a, b, c);
        return s;
    };
    auto pc = [&](int c, int z) {
        double s = 0;
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) s += p.at(0, 0, z, a, b, c);
        return s;
    };
    for (int x = 0; x < 2; ++x)
        for (int y = 0; y < 2; ++y)
            for (int z = 0; z < 2; ++z)
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b)
                        for (int c = 0; c < 2; ++c)
                            CHECK(std::abs(p.at(x, y, z, a, b, c) -
                                           pa(a, x) * pb(b, y) * pc(c, z)) < 1e-12);
}

TEST_CASE("aharonov state: equal outcomes never occur in a shared basis") {
    RngStream rng(23, 8);
    CMat u = haar_unitary(3, rng);
    std::vector<std::vector<CMat>> bases(3, std::vector<CMat>{u, u});
    Behavior p = behavior_from_quantum(make_state(StateSpec::parse("aharonov")),
                                       settings_from_unitaries(bases));
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 3; ++c) {
                const bool distinct = a != b && b != c && a != c;
                if (!distinct)
                    CHECK(p.at(0, 0, 0, a, b, c) < 1e-12);
                else
                    CHECK(p.at(0, 0, 0, a, b, c) == doctest::Approx(1.0 / 6).epsilon(1e-10));
            }
}

TEST_CASE("measurement json round trip") {
    RngStream rng(31, 2);
    MeasurementAssignment meas = sample_random_settings(Scenario{2, 2}, rng);
    MeasurementAssignment back =
        MeasurementAssignment::from_json(meas.to_json(), Scenario{2, 2});
    Behavior p1 = behavior_from_quantum(make_state(StateSpec::parse("ghz")), meas);
    Behavior p2 = behavior_from_quantum(make_state(StateSpec::parse("ghz")), back);
    for (std::size_t i = 0; i < p1.size(); ++i)
        CHECK(std::abs(p1.data()[i] - p2.data()[i]) < 1e-12);

    MeasurementAssignment meas3 = sample_random_settings(Scenario{2, 3}, rng);
    MeasurementAssignment back3 =
        MeasurementAssignment::from_json(meas3.to_json(), Scenario{2, 3});
    Behavior q1 = behavior_from_quantum(make_state(StateSpec::parse("qutrit-ghz")), meas3);
    Behavior q2 = behavior_from_quantum(make_state(StateSpec::parse("qutrit-ghz")), back3);
    for (std::size_t i = 0; i < q1.size(); ++i)
        CHECK(std::abs(q1.data()[i] - q2.data()[i]) < 1e-10);
}
