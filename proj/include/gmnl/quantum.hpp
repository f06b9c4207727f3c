#pragma once

#include <array>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gmnl/behavior.hpp"
#include "gmnl/rng.hpp"

namespace gmnl::quantum {

using Cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;

// Tripartite density matrix, dim = local_dim^3 (8 or 27).
class DensityMatrix {
public:
    DensityMatrix() = default;
    DensityMatrix(int local_dim, CMat rho);

    int local_dim() const { return local_dim_; }
    int dim() const { return static_cast<int>(rho_.rows()); }
    const CMat& matrix() const { return rho_; }

    // Hermitian within 1e-12, unit trace within 1e-12, min eigenvalue >= -1e-10.
    void validate() const;

private:
    int local_dim_ = 2;
    CMat rho_;
};

enum class StateFamily {
    Ghz,
    W,
    PsiS,
    GhzAlpha,
    QutritGhz,
    Rank2,
    Dicke1,
    Dicke2,
    Dicke3,
    Aharonov,
    Product000,
};

struct StateSpec {
    StateFamily family = StateFamily::Ghz;
    double alpha = 0.0; // radians, GhzAlpha only

    int local_dim() const;
    std::string to_string() const;
    // Grammar: ghz | w | psis | ghz(alpha=<deg>) | qutrit-ghz | rank2 |
    //          dicke1 | dicke2 | dicke3 | aharonov | product000
    static StateSpec parse(const std::string& text);
};

// Per party and setting, an ordered set of d rank-1 projectors. For qubits
// the defining Bloch directions are kept alongside (outcome 0 projects onto
// the +1 eigenstate of n.sigma).
struct MeasurementAssignment {
    Scenario scenario;
    // proj[party][setting][outcome], each local_dim x local_dim
    std::vector<std::vector<std::vector<CMat>>> proj;
    // bloch[party][setting], populated only when scenario.d == 2
    std::vector<std::vector<Eigen::Vector3d>> bloch;

    void validate() const;
    std::string to_json() const;
    static MeasurementAssignment from_json(const std::string& text, Scenario sc);
};

DensityMatrix make_state(const StateSpec& spec);
DensityMatrix mix_with_white_noise(const DensityMatrix& rho, double v);
Behavior behavior_from_quantum(const DensityMatrix& rho, const MeasurementAssignment& meas);

// d=2: independent uniform directions on the Bloch sphere.
// d=3: independent Haar-random measurement eigenbases.
MeasurementAssignment sample_random_settings(Scenario sc, RngStream& rng);

// Four directions forming a regular tetrahedron, per-party rotated by the
// given 2x2 unitaries (m=4, d=2).
MeasurementAssignment tetrahedral_settings(const std::array<CMat, 3>& rotations);

// Two orthogonal settings per party in the x-y plane at the given azimuths
// (m=2, d=2). Second setting sits at azimuth + pi/2.
MeasurementAssignment planar_orthogonal_settings(double alpha1, double beta1, double gamma1);

// Measurement built from explicit Bloch directions / eigenbasis unitaries.
MeasurementAssignment settings_from_bloch(
    const std::vector<std::vector<Eigen::Vector3d>>& dirs);
MeasurementAssignment settings_from_unitaries(
    const std::vector<std::vector<CMat>>& bases);

// Haar-distributed n x n unitary (Ginibre + QR with phase fixing).
CMat haar_unitary(int n, RngStream& rng);

} // namespace gmnl::quantum
