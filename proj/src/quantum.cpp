#include "gmnl/quantum.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gmnl::quantum {

namespace {

constexpr double kPi = 3.14159265358979323846;

const CMat& pauli(int a) {
    static const CMat sx = [] {
        CMat M(2, 2);
        M << 0, 1, 1, 0;
        return M;
    }();
    static const CMat sy = [] {
        CMat M(2, 2);
        M << Cplx(0, 0), Cplx(0, -1), Cplx(0, 1), Cplx(0, 0);
        return M;
    }();
    static const CMat sz = [] {
        CMat M(2, 2);
        M << 1, 0, 0, -1;
        return M;
    }();
    switch (a) {
        case 0: return sx;
        case 1: return sy;
        default: return sz;
    }
}

std::vector<CMat> bloch_projectors(const Eigen::Vector3d& n) {
    CMat ns = n(0) * pauli(0) + n(1) * pauli(1) + n(2) * pauli(2);
    CMat id = CMat::Identity(2, 2);
    return {0.5 * (id + ns), 0.5 * (id - ns)};
}

std::vector<CMat> basis_projectors(const CMat& u) {
    const int n = static_cast<int>(u.rows());
    std::vector<CMat> out;
    out.reserve(n);
    for (int a = 0; a < n; ++a) {
        CVec col = u.col(a);
        out.push_back(col * col.adjoint());
    }
    return out;
}

int ket_index(int d, int i, int j, int k) { return (i * d + j) * d + k; }

CVec qubit_amplitudes(const StateSpec& spec) {
    CVec psi = CVec::Zero(8);
    const double s2 = std::sqrt(2.0), s3 = std::sqrt(3.0), s6 = std::sqrt(6.0);
    switch (spec.family) {
        case StateFamily::Ghz:
            psi(ket_index(2, 0, 0, 0)) = 1.0 / s2;
            psi(ket_index(2, 1, 1, 1)) = 1.0 / s2;
            break;
        case StateFamily::W:
            psi(ket_index(2, 1, 0, 0)) = 1.0 / s3;
            psi(ket_index(2, 0, 1, 0)) = 1.0 / s3;
            psi(ket_index(2, 0, 0, 1)) = 1.0 / s3;
            break;
        case StateFamily::PsiS:
            psi(ket_index(2, 0, 0, 1)) = 1.0 / s6;
            psi(ket_index(2, 0, 1, 0)) = 1.0 / s6;
            psi(ket_index(2, 1, 0, 0)) = -1.0 / s6;
            psi(ket_index(2, 1, 1, 1)) = 1.0 / s2;
            break;
        case StateFamily::GhzAlpha:
            psi(ket_index(2, 0, 0, 0)) = std::cos(spec.alpha);
            psi(ket_index(2, 1, 1, 1)) = std::sin(spec.alpha);
            break;
        case StateFamily::Product000:
            psi(ket_index(2, 0, 0, 0)) = 1.0;
            break;
        default:
            throw std::logic_error("not a qubit family");
    }
    return psi;
}

CVec qutrit_amplitudes(const StateSpec& spec) {
    CVec psi = CVec::Zero(27);
    auto put = [&](int i, int j, int k, double amp) { psi(ket_index(3, i, j, k)) = amp; };
    switch (spec.family) {
        case StateFamily::QutritGhz:
            put(0, 0, 0, 1.0 / std::sqrt(3.0));
            put(1, 1, 1, 1.0 / std::sqrt(3.0));
            put(2, 2, 2, 1.0 / std::sqrt(3.0));
            break;
        case StateFamily::Rank2:
            put(0, 0, 0, 1.0 / std::sqrt(2.0));
            put(1, 1, 1, 1.0 / std::sqrt(2.0));
            break;
        case StateFamily::Dicke1:
            put(0, 0, 1, 1.0 / std::sqrt(3.0));
            put(0, 1, 0, 1.0 / std::sqrt(3.0));
            put(1, 0, 0, 1.0 / std::sqrt(3.0));
            break;
        case StateFamily::Dicke2: {
            const double c = 1.0 / std::sqrt(15.0);
            put(0, 0, 2, c);
            put(0, 2, 0, c);
            put(2, 0, 0, c);
            put(0, 1, 1, 2.0 * c);
            put(1, 0, 1, 2.0 * c);
            put(1, 1, 0, 2.0 * c);
            break;
        }
        case StateFamily::Dicke3: {
            const double c = 1.0 / std::sqrt(10.0);
            put(0, 1, 2, c);
            put(0, 2, 1, c);
            put(1, 0, 2, c);
            put(1, 2, 0, c);
            put(2, 0, 1, c);
            put(2, 1, 0, c);
            put(1, 1, 1, 2.0 * c);
            break;
        }
        case StateFamily::Aharonov: {
            const double c = 1.0 / std::sqrt(6.0);
            put(0, 1, 2, c);
            put(0, 2, 1, -c);
            put(1, 0, 2, -c);
            put(1, 2, 0, c);
            put(2, 0, 1, c);
            put(2, 1, 0, -c);
            break;
        }
        default:
            throw std::logic_error("not a qutrit family");
    }
    return psi;
}

} // namespace

DensityMatrix::DensityMatrix(int local_dim, CMat rho) : local_dim_(local_dim), rho_(std::move(rho)) {
    const int want = local_dim_ * local_dim_ * local_dim_;
    if (rho_.rows() != want || rho_.cols() != want)
        throw std::invalid_argument("density matrix has wrong dimension");
}

void DensityMatrix::validate() const {
    if ((rho_ - rho_.adjoint()).cwiseAbs().maxCoeff() > 1e-12)
        throw std::runtime_error("density matrix not Hermitian");
    if (std::abs(rho_.trace().real() - 1.0) > 1e-12 || std::abs(rho_.trace().imag()) > 1e-12)
        throw std::runtime_error("density matrix trace != 1");
    Eigen::SelfAdjointEigenSolver<CMat> es(rho_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10)
        throw std::runtime_error("density matrix not positive semidefinite");
}

int StateSpec::local_dim() const {
    switch (family) {
        case StateFamily::Ghz:
        case StateFamily::W:
        case StateFamily::PsiS:
        case StateFamily::GhzAlpha:
        case StateFamily::Product000:
            return 2;
        default:
            return 3;
    }
}

std::string StateSpec::to_string() const {
    switch (family) {
        case StateFamily::Ghz: return "ghz";
        case StateFamily::W: return "w";
        case StateFamily::PsiS: return "psis";
        case StateFamily::GhzAlpha: {
            std::ostringstream os;
            os << "ghz(alpha=" << alpha * 180.0 / kPi << ")";
            return os.str();
        }
        case StateFamily::QutritGhz: return "qutrit-ghz";
        case StateFamily::Rank2: return "rank2";
        case StateFamily::Dicke1: return "dicke1";
        case StateFamily::Dicke2: return "dicke2";
        case StateFamily::Dicke3: return "dicke3";
        case StateFamily::Aharonov: return "aharonov";
        case StateFamily::Product000: return "product000";
    }
    throw std::logic_error("unreachable");
}

StateSpec StateSpec::parse(const std::string& text) {
    std::string s;
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) s += static_cast<char>(std::tolower(c));
    StateSpec spec;
    if (s == "ghz") { spec.family = StateFamily::Ghz; return spec; }
    if (s == "w") { spec.family = StateFamily::W; return spec; }
    if (s == "psis") { spec.family = StateFamily::PsiS; return spec; }
    if (s == "qutrit-ghz") { spec.family = StateFamily::QutritGhz; return spec; }
    if (s == "rank2") { spec.family = StateFamily::Rank2; return spec; }
    if (s == "dicke1") { spec.family = StateFamily::Dicke1; return spec; }
    if (s == "dicke2") { spec.family = StateFamily::Dicke2; return spec; }
    if (s == "dicke3") { spec.family = StateFamily::Dicke3; return spec; }
    if (s == "aharonov") { spec.family = StateFamily::Aharonov; return spec; }
    if (s == "product000") { spec.family = StateFamily::Product000; return spec; }
    const std::string pre = "ghz(alpha=";
    if (s.rfind(pre, 0) == 0 && s.back() == ')') {
        std::string num = s.substr(pre.size(), s.size() - pre.size() - 1);
        size_t pos = 0;
        double deg = std::stod(num, &pos);
        if (pos != num.size()) throw std::invalid_argument("bad alpha in state spec: " + text);
        spec.family = StateFamily::GhzAlpha;
        spec.alpha = deg * kPi / 180.0;
        return spec;
    }
    throw std::invalid_argument("unknown state spec: " + text);
}

void MeasurementAssignment::validate() const {
    scenario.validate();
    const int m = scenario.m, d = scenario.d;
    if (proj.size() != 3) throw std::runtime_error("measurement: need 3 parties");
    for (int p = 0; p < 3; ++p) {
        if (static_cast<int>(proj[p].size()) != m)
            throw std::runtime_error("measurement: wrong setting count");
        for (int x = 0; x < m; ++x) {
            const auto& set = proj[p][x];
            if (static_cast<int>(set.size()) != d)
                throw std::runtime_error("measurement: wrong outcome count");
            CMat sum = CMat::Zero(d, d);
            for (int a = 0; a < d; ++a) {
                const CMat& P = set[a];
                if (P.rows() != d || P.cols() != d)
                    throw std::runtime_error("measurement: projector has wrong shape");
                if ((P - P.adjoint()).cwiseAbs().maxCoeff() > 1e-10)
                    throw std::runtime_error("measurement: projector not Hermitian");
                if ((P * P - P).cwiseAbs().maxCoeff() > 1e-10)
                    throw std::runtime_error("measurement: projector not idempotent");
                sum += P;
            }
            if ((sum - CMat::Identity(d, d)).cwiseAbs().maxCoeff() > 1e-10)
                throw std::runtime_error("measurement: projectors do not sum to identity");
        }
    }
    if (scenario.d == 2) {
        if (bloch.size() != 3) throw std::runtime_error("measurement: missing Bloch data");
        for (const auto& party : bloch)
            for (const auto& n : party)
                if (std::abs(n.norm() - 1.0) > 1e-9)
                    throw std::runtime_error("measurement: Bloch vector not unit");
    }
}

std::string MeasurementAssignment::to_json() const {
    nlohmann::json j;
    j["m"] = scenario.m;
    j["d"] = scenario.d;
    nlohmann::json parties = nlohmann::json::array();
    for (int p = 0; p < 3; ++p) {
        nlohmann::json settings = nlohmann::json::array();
        for (int x = 0; x < scenario.m; ++x) {
            nlohmann::json s;
            if (scenario.d == 2) {
                s["bloch"] = {bloch[p][x](0), bloch[p][x](1), bloch[p][x](2)};
            } else {
                // eigenbasis as rows of [re, im] pairs; column a = outcome a
                nlohmann::json rows = nlohmann::json::array();
                CMat u(scenario.d, scenario.d);
                for (int a = 0; a < scenario.d; ++a) {
                    // recover basis vector from projector: dominant eigenvector
                    Eigen::SelfAdjointEigenSolver<CMat> es(proj[p][x][a]);
                    u.col(a) = es.eigenvectors().col(scenario.d - 1);
                }
                for (int r = 0; r < scenario.d; ++r) {
                    nlohmann::json row = nlohmann::json::array();
                    for (int c = 0; c < scenario.d; ++c)
                        row.push_back({u(r, c).real(), u(r, c).imag()});
                    rows.push_back(row);
                }
                s["basis"] = rows;
            }
            settings.push_back(s);
        }
        parties.push_back({{"settings", settings}});
    }
    j["parties"] = parties;
    return j.dump(2);
}

MeasurementAssignment MeasurementAssignment::from_json(const std::string& text, Scenario sc) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.contains("m")) sc.m = j["m"].get<int>();
    if (j.contains("d")) sc.d = j["d"].get<int>();
    sc.validate();
    const auto& parties = j.at("parties");
    if (parties.size() != 3) throw std::invalid_argument("settings file: need 3 parties");
    if (sc.d == 2) {
        std::vector<std::vector<Eigen::Vector3d>> dirs(3);
        for (int p = 0; p < 3; ++p) {
            const auto& settings = parties[p].at("settings");
            if (static_cast<int>(settings.size()) != sc.m)
                throw std::invalid_argument("settings file: wrong setting count");
            for (const auto& s : settings) {
                const auto& b = s.at("bloch");
                dirs[p].emplace_back(b.at(0).get<double>(), b.at(1).get<double>(),
                                     b.at(2).get<double>());
            }
        }
        return settings_from_bloch(dirs);
    }
    std::vector<std::vector<CMat>> bases(3);
    for (int p = 0; p < 3; ++p) {
        const auto& settings = parties[p].at("settings");
        if (static_cast<int>(settings.size()) != sc.m)
            throw std::invalid_argument("settings file: wrong setting count");
        for (const auto& s : settings) {
            const auto& rows = s.at("basis");
            CMat u(sc.d, sc.d);
            for (int r = 0; r < sc.d; ++r)
                for (int c = 0; c < sc.d; ++c) {
                    const auto& e = rows.at(r).at(c);
                    u(r, c) = Cplx(e.at(0).get<double>(), e.at(1).get<double>());
                }
            bases[p].push_back(u);
        }
    }
    return settings_from_unitaries(bases);
}

DensityMatrix make_state(const StateSpec& spec) {
    const int d = spec.local_dim();
    CVec psi = (d == 2) ? qubit_amplitudes(spec) : qutrit_amplitudes(spec);
    CMat rho = psi * psi.adjoint();
    return DensityMatrix(d, std::move(rho));
}

DensityMatrix mix_with_white_noise(const DensityMatrix& rho, double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("visibility must be in [0,1]");
    const int dim = rho.dim();
    CMat mixed = v * rho.matrix() + ((1.0 - v) / dim) * CMat::Identity(dim, dim);
    return DensityMatrix(rho.local_dim(), std::move(mixed));
}

Behavior behavior_from_quantum(const DensityMatrix& rho, const MeasurementAssignment& meas) {
    meas.validate();
    const Scenario sc = meas.scenario;
    if (rho.local_dim() != sc.d)
        throw std::invalid_argument("state and measurement dimensions differ");
    const int m = sc.m, d = sc.d;
    const CMat& R = rho.matrix();
    Behavior p = Behavior::zeros(sc);
    for (int x = 0; x < m; ++x)
        for (int y = 0; y < m; ++y)
            for (int z = 0; z < m; ++z)
                for (int a = 0; a < d; ++a)
                    for (int b = 0; b < d; ++b)
                        for (int c = 0; c < d; ++c) {
                            const CMat& A = meas.proj[0][x][a];
                            const CMat& B = meas.proj[1][y][b];
                            const CMat& C = meas.proj[2][z][c];
                            // Tr((A(x)B(x)C) rho) without forming the Kronecker product
                            Cplx tr = 0.0;
                            for (int i1 = 0; i1 < d; ++i1)
                                for (int j1 = 0; j1 < d; ++j1) {
                                    const Cplx af = A(i1, j1);
                                    if (af == Cplx(0.0)) continue;
                                    for (int i2 = 0; i2 < d; ++i2)
                                        for (int j2 = 0; j2 < d; ++j2) {
                                            const Cplx bf = af * B(i2, j2);
                                            if (bf == Cplx(0.0)) continue;
                                            for (int i3 = 0; i3 < d; ++i3)
                                                for (int j3 = 0; j3 < d; ++j3)
                                                    tr += bf * C(i3, j3) *
                                                          R(ket_index(d, j1, j2, j3),
                                                            ket_index(d, i1, i2, i3));
                                        }
                                }
                            p.at(x, y, z, a, b, c) = tr.real();
                        }
    p.validate();
    return p;
}

MeasurementAssignment sample_random_settings(Scenario sc, RngStream& rng) {
    sc.validate();
    MeasurementAssignment meas;
    meas.scenario = sc;
    meas.proj.resize(3);
    if (sc.d == 2) {
        meas.bloch.resize(3);
        for (int p = 0; p < 3; ++p)
            for (int x = 0; x < sc.m; ++x) {
                double n[3];
                rng.unit_sphere(n);
                Eigen::Vector3d dir(n[0], n[1], n[2]);
                meas.bloch[p].push_back(dir);
                meas.proj[p].push_back(bloch_projectors(dir));
            }
    } else {
        for (int p = 0; p < 3; ++p)
            for (int x = 0; x < sc.m; ++x)
                meas.proj[p].push_back(basis_projectors(haar_unitary(sc.d, rng)));
    }
    return meas;
}

MeasurementAssignment tetrahedral_settings(const std::array<CMat, 3>& rotations) {
    const double a = std::sqrt(8.0 / 9.0), b = std::sqrt(2.0 / 9.0), c = std::sqrt(2.0 / 3.0);
    const Eigen::Vector3d tet[4] = {
        {a, 0.0, -1.0 / 3.0}, {-b, c, -1.0 / 3.0}, {-b, -c, -1.0 / 3.0}, {0.0, 0.0, 1.0}};
    std::vector<std::vector<Eigen::Vector3d>> dirs(3);
    for (int p = 0; p < 3; ++p) {
        const CMat& U = rotations[p];
        if (U.rows() != 2 || U.cols() != 2) throw std::invalid_argument("rotation must be 2x2");
        if ((U * U.adjoint() - CMat::Identity(2, 2)).cwiseAbs().maxCoeff() > 1e-9)
            throw std::invalid_argument("rotation not unitary");
        Eigen::Matrix3d R;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                R(i, j) = 0.5 * (pauli(i) * U * pauli(j) * U.adjoint()).trace().real();
        for (int x = 0; x < 4; ++x) dirs[p].push_back(R * tet[x]);
    }
    return settings_from_bloch(dirs);
}

MeasurementAssignment planar_orthogonal_settings(double alpha1, double beta1, double gamma1) {
    const double az[3] = {alpha1, beta1, gamma1};
    std::vector<std::vector<Eigen::Vector3d>> dirs(3);
    for (int p = 0; p < 3; ++p)
        for (int x = 0; x < 2; ++x) {
            double phi = az[p] + x * kPi / 2.0;
            dirs[p].emplace_back(std::cos(phi), std::sin(phi), 0.0);
        }
    return settings_from_bloch(dirs);
}

MeasurementAssignment settings_from_bloch(const std::vector<std::vector<Eigen::Vector3d>>& dirs) {
    if (dirs.size() != 3) throw std::invalid_argument("need directions for 3 parties");
    const int m = static_cast<int>(dirs[0].size());
    for (const auto& party : dirs)
        if (static_cast<int>(party.size()) != m)
            throw std::invalid_argument("parties must have equal setting counts");
    MeasurementAssignment meas;
    meas.scenario = Scenario{m, 2};
    meas.scenario.validate();
    meas.proj.resize(3);
    meas.bloch.resize(3);
    for (int p = 0; p < 3; ++p)
        for (const auto& raw : dirs[p]) {
            if (std::abs(raw.norm() - 1.0) > 1e-6)
                throw std::invalid_argument("Bloch direction not unit length");
            Eigen::Vector3d n = raw / raw.norm();
            meas.bloch[p].push_back(n);
            meas.proj[p].push_back(bloch_projectors(n));
        }
    return meas;
}

MeasurementAssignment settings_from_unitaries(const std::vector<std::vector<CMat>>& bases) {
    if (bases.size() != 3) throw std::invalid_argument("need bases for 3 parties");
    const int m = static_cast<int>(bases[0].size());
    for (const auto& party : bases)
        if (static_cast<int>(party.size()) != m)
            throw std::invalid_argument("parties must have equal setting counts");
    const int d = static_cast<int>(bases[0][0].rows());
    MeasurementAssignment meas;
    meas.scenario = Scenario{m, d};
    meas.scenario.validate();
    meas.proj.resize(3);
    for (int p = 0; p < 3; ++p)
        for (const auto& u : bases[p]) {
            if (u.rows() != d || u.cols() != d)
                throw std::invalid_argument("basis matrix has wrong shape");
            if ((u * u.adjoint() - CMat::Identity(d, d)).cwiseAbs().maxCoeff() > 1e-9)
                throw std::invalid_argument("basis matrix not unitary");
            meas.proj[p].push_back(basis_projectors(u));
        }
    return meas;
}

CMat haar_unitary(int n, RngStream& rng) {
    CMat z(n, n);
    const double s = 1.0 / std::sqrt(2.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double re = rng.normal();
            double im = rng.normal();
            z(i, j) = Cplx(re * s, im * s);
        }
    Eigen::HouseholderQR<CMat> qr(z);
    CMat q = qr.householderQ() * CMat::Identity(n, n);
    CMat r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < n; ++j) {
        Cplx rjj = r(j, j);
        Cplx phase = (std::abs(rjj) > 0) ? rjj / std::abs(rjj) : Cplx(1.0, 0.0);
        q.col(j) *= phase;
    }
    return q;
}

} // namespace gmnl::quantum
