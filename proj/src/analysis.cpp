#include "gmnl/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string_view>
#include <thread>
#include <unordered_map>

#include <json.hpp>

namespace gmnl::analysis {

namespace {

int log_level() {
    static const int lvl = [] {
        const char* e = std::getenv("GMNL_LOG");
        return e != nullptr ? std::atoi(e) : 0;
    }();
    return lvl;
}

std::mutex& log_mutex() {
    static std::mutex mu;
    return mu;
}

int resolve_threads(int threads, std::uint64_t n) {
    int t = threads <= 0 ? static_cast<int>(std::thread::hardware_concurrency()) : threads;
    if (t < 1) t = 1;
    if (static_cast<std::uint64_t>(t) > n) t = static_cast<int>(n > 0 ? n : 1);
    return t;
}

// per-worker column caches for membership sampling; the cap must comfortably
// exceed the union of optimal supports across samples or the ring evicts
// columns that the very next sample would have reused
std::vector<polytope::ColumnPool> make_pools(int t, const Scenario& sc) {
    const std::size_t cap = std::max<std::size_t>(192, 6 * sc.num_entries());
    std::vector<polytope::ColumnPool> pools;
    pools.reserve(static_cast<std::size_t>(t));
    for (int w = 0; w < t; ++w) pools.emplace_back(cap);
    return pools;
}

// worker w handles indices w, w+t, w+2t, ...; per-index work depends only on
// the index, so the partition never affects results
template <class Body>
void run_partitioned(std::uint64_t n, int t, const Body& body) {
    if (t <= 1) {
        for (std::uint64_t i = 0; i < n; ++i) body(0, i);
        return;
    }
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex mu;
    for (int w = 0; w < t; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::uint64_t i = static_cast<std::uint64_t>(w); i < n;
                     i += static_cast<std::uint64_t>(t))
                    body(w, i);
            } catch (...) {
                std::lock_guard<std::mutex> g(mu);
                if (!err) err = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

quantum::MeasurementAssignment draw_settings(const Scenario& sc, SettingsSource source,
                                             RngStream& rng) {
    switch (source) {
        case SettingsSource::UniformRandom:
            return quantum::sample_random_settings(sc, rng);
        case SettingsSource::TetrahedralRandomRotations: {
            if (sc.m != 4 || sc.d != 2)
                throw std::invalid_argument(
                    "tetrahedral-random-rotations requires m=4, d=2 (got m=" +
                    std::to_string(sc.m) + ", d=" + std::to_string(sc.d) + ")");
            std::array<quantum::CMat, 3> rot;
            for (auto& u : rot) u = quantum::haar_unitary(2, rng);
            return quantum::tetrahedral_settings(rot);
        }
        case SettingsSource::PlanarRandomAngles: {
            if (sc.m != 2 || sc.d != 2)
                throw std::invalid_argument(
                    "planar-random-angles requires m=2, d=2 (got m=" + std::to_string(sc.m) +
                    ", d=" + std::to_string(sc.d) + ")");
            const double a = rng.uniform(0.0, 2.0 * M_PI);
            const double b = rng.uniform(0.0, 2.0 * M_PI);
            const double g = rng.uniform(0.0, 2.0 * M_PI);
            return quantum::planar_orthogonal_settings(a, b, g);
        }
    }
    throw std::invalid_argument("unknown settings source");
}

struct SampleCounts {
    std::uint64_t succ = 0;
    std::uint64_t fail = 0;
    std::string first_error;

    void note_failure(const std::exception& e) {
        ++fail;
        if (first_error.empty()) first_error = e.what();
    }
};

void check_failure_rate(const std::vector<SampleCounts>& acc, std::uint64_t n) {
    std::uint64_t fail = 0;
    std::string first;
    for (const auto& a : acc) {
        fail += a.fail;
        if (first.empty()) first = a.first_error;
    }
    if (fail * 1000 >= n && fail > 0) {
        std::ostringstream os;
        os << "estimate_pv: " << fail << " solver failures out of " << n
           << " samples (>= 0.1%); first: " << first;
        throw std::runtime_error(os.str());
    }
}

PvEstimate assemble(const std::string& state, const Scenario& sc, std::string model,
                    SettingsSource source, std::uint64_t seed, std::uint64_t n,
                    const std::vector<SampleCounts>& acc, double confidence) {
    PvEstimate est;
    est.state = state;
    est.scenario = sc;
    est.model = std::move(model);
    est.measure = to_string(source);
    est.seed = seed;
    est.trials = n;
    for (const auto& a : acc) {
        est.successes += a.succ;
        est.failures += a.fail;
    }
    const std::uint64_t eff = n - est.failures;
    est.p_hat = eff > 0 ? static_cast<double>(est.successes) / static_cast<double>(eff) : 0.0;
    est.confidence = confidence;
    std::tie(est.lo, est.hi) = wilson_interval(est.successes, eff, confidence);
    return est;
}

void log_borderline(std::uint64_t index, double v) {
    if (log_level() < 1) return;
    std::lock_guard<std::mutex> g(log_mutex());
    std::clog << "gmnl: sample " << index << " borderline (v_crit = " << v << ")\n";
}

// --- settings parameterizations for the optimizer ---------------------------

const std::array<Eigen::Matrix3cd, 8>& gell_mann() {
    static const std::array<Eigen::Matrix3cd, 8> lam = [] {
        using namespace std::complex_literals;
        std::array<Eigen::Matrix3cd, 8> l;
        for (auto& g : l) g.setZero();
        l[0](0, 1) = 1.0, l[0](1, 0) = 1.0;
        l[1](0, 1) = -1.0i, l[1](1, 0) = 1.0i;
        l[2](0, 0) = 1.0, l[2](1, 1) = -1.0;
        l[3](0, 2) = 1.0, l[3](2, 0) = 1.0;
        l[4](0, 2) = -1.0i, l[4](2, 0) = 1.0i;
        l[5](1, 2) = 1.0, l[5](2, 1) = 1.0;
        l[6](1, 2) = -1.0i, l[6](2, 1) = 1.0i;
        const double s = 1.0 / std::sqrt(3.0);
        l[7](0, 0) = s, l[7](1, 1) = s, l[7](2, 2) = -2.0 * s;
        return l;
    }();
    return lam;
}

// qubit: (polar, azimuth) per party/setting; qutrit: 8 Gell-Mann coordinates
// around a per-restart Haar base
struct ParamSpace {
    Scenario sc;
    int per_setting = 2;
    std::vector<std::vector<quantum::CMat>> base; // qutrit only

    std::size_t size() const { return static_cast<std::size_t>(3 * sc.m * per_setting); }

    static ParamSpace make(const Scenario& sc, RngStream& rng) {
        ParamSpace ps;
        ps.sc = sc;
        ps.per_setting = sc.d == 2 ? 2 : 8;
        if (sc.d == 3) {
            ps.base.assign(3, std::vector<quantum::CMat>(static_cast<std::size_t>(sc.m)));
            for (auto& party : ps.base)
                for (auto& u : party) u = quantum::haar_unitary(3, rng);
        }
        return ps;
    }

    // start portfolio: mostly independent uniform directions, with every
    // fourth start coplanar in a random plane and every eighth equatorial —
    // thin violation regions (Svetlichny-type optima) tend to sit on coplanar
    // configurations that isotropic starts practically never descend into
    std::vector<double> random_start(RngStream& rng, std::uint64_t restart) const {
        std::vector<double> t(size());
        if (sc.d != 2) return t; // qutrit starts sit at the Haar base itself
        if (restart % 8 == 3) {
            for (std::size_t k = 0; k < t.size(); k += 2) {
                t[k] = M_PI / 2;
                t[k + 1] = rng.uniform(0.0, 2.0 * M_PI);
            }
            return t;
        }
        if (restart % 4 == 1) {
            double nraw[3];
            rng.unit_sphere(nraw);
            const Eigen::Vector3d nrm(nraw[0], nraw[1], nraw[2]);
            const Eigen::Vector3d seed =
                std::abs(nrm.z()) < 0.9 ? Eigen::Vector3d::UnitZ() : Eigen::Vector3d::UnitX();
            const Eigen::Vector3d e1 = nrm.cross(seed).normalized();
            const Eigen::Vector3d e2 = nrm.cross(e1);
            for (std::size_t k = 0; k < t.size(); k += 2) {
                const double u = rng.uniform(0.0, 2.0 * M_PI);
                const Eigen::Vector3d dir = std::cos(u) * e1 + std::sin(u) * e2;
                t[k] = std::acos(std::clamp(dir.z(), -1.0, 1.0));
                t[k + 1] = std::atan2(dir.y(), dir.x());
            }
            return t;
        }
        for (std::size_t k = 0; k < t.size(); k += 2) {
            t[k] = std::acos(rng.uniform(-1.0, 1.0));
            t[k + 1] = rng.uniform(0.0, 2.0 * M_PI);
        }
        return t;
    }

    quantum::MeasurementAssignment build(const std::vector<double>& t) const {
        if (sc.d == 2) {
            std::vector<std::vector<Eigen::Vector3d>> dirs(
                3, std::vector<Eigen::Vector3d>(static_cast<std::size_t>(sc.m)));
            std::size_t k = 0;
            for (int p = 0; p < 3; ++p)
                for (int s = 0; s < sc.m; ++s, k += 2) {
                    const double th = t[k], ph = t[k + 1];
                    dirs[static_cast<std::size_t>(p)][static_cast<std::size_t>(s)] =
                        Eigen::Vector3d(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph),
                                        std::cos(th));
                }
            return quantum::settings_from_bloch(dirs);
        }
        const auto& lam = gell_mann();
        std::vector<std::vector<quantum::CMat>> bases(
            3, std::vector<quantum::CMat>(static_cast<std::size_t>(sc.m)));
        std::size_t k = 0;
        for (int p = 0; p < 3; ++p)
            for (int s = 0; s < sc.m; ++s, k += 8) {
                Eigen::Matrix3cd h = Eigen::Matrix3cd::Zero();
                for (int j = 0; j < 8; ++j) h += t[k + static_cast<std::size_t>(j)] * lam[static_cast<std::size_t>(j)];
                Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> es(h);
                Eigen::Vector3d ev = es.eigenvalues();
                Eigen::Matrix3cd phases = Eigen::Matrix3cd::Zero();
                for (int j = 0; j < 3; ++j)
                    phases(j, j) = std::exp(std::complex<double>(0.0, ev(j)));
                const Eigen::Matrix3cd rot = es.eigenvectors() * phases * es.eigenvectors().adjoint();
                bases[static_cast<std::size_t>(p)][static_cast<std::size_t>(s)] =
                    base[static_cast<std::size_t>(p)][static_cast<std::size_t>(s)] * rot;
            }
        return quantum::settings_from_unitaries(bases);
    }
};

constexpr double kBadEval = 1e30;

struct Objective {
    const quantum::DensityMatrix& rho;
    polytope::LocalityModel model;
    const ParamSpace& ps;
    polytope::ColumnPool& pool;
    std::uint64_t evals = 0;

    double operator()(const std::vector<double>& t) {
        ++evals;
        try {
            Behavior p = quantum::behavior_from_quantum(rho, ps.build(t));
            return polytope::extended_visibility(p, model, &pool);
        } catch (const std::exception&) {
            return kBadEval; // treat numerically hostile corners as bad points
        }
    }
};

struct DescentOut {
    double f = kBadEval;
    int sweeps = 0;
};

// opportunistic coordinate descent with per-coordinate sign memory; halves
// the step when a full sweep fails to improve
DescentOut descend(Objective& obj, std::vector<double>& t, double f0, double step0,
                   double min_step, int max_sweeps) {
    DescentOut out;
    out.f = f0;
    std::vector<int> pref(t.size(), 1);
    double step = step0;
    while (step >= min_step && out.sweeps < max_sweeps) {
        ++out.sweeps;
        bool improved = false;
        for (std::size_t c = 0; c < t.size(); ++c) {
            for (int attempt = 0; attempt < 2; ++attempt) {
                const int sgn = attempt == 0 ? pref[c] : -pref[c];
                t[c] += sgn * step;
                const double f2 = obj(t);
                if (f2 < out.f - 1e-12) {
                    out.f = f2;
                    pref[c] = sgn;
                    improved = true;
                    break;
                }
                t[c] -= sgn * step;
            }
        }
        if (!improved) step *= 0.5;
    }
    return out;
}

// random-direction line probes: coordinate descent zigzag-stalls in narrow
// diagonal valleys, which a handful of isotropic kicks walks straight down
double kick(Objective& obj, RngStream& rng, std::vector<double>& t, double f) {
    double step = 0.03;
    int since = 0;
    std::vector<double> dir(t.size()), cand(t.size());
    for (int it = 0; it < 400 && step > 2e-4; ++it) {
        double norm = 0.0;
        for (double& x : dir) {
            x = rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        bool accepted = false;
        for (int sgn : {1, -1}) {
            for (std::size_t k = 0; k < t.size(); ++k) cand[k] = t[k] + sgn * step * dir[k] / norm;
            const double f2 = obj(cand);
            if (f2 < f - 1e-12) {
                f = f2;
                t = cand;
                accepted = true;
                break;
            }
        }
        if (accepted) {
            since = 0;
        } else if (++since >= 20) {
            step *= 0.6;
            since = 0;
        }
    }
    return f;
}

double ghz_alpha_closed_form(const quantum::MeasurementAssignment& meas, double alpha) {
    double theta = 0.0;
    for (int p = 0; p < 3; ++p) {
        const Eigen::Vector3d& b = meas.bloch[static_cast<std::size_t>(p)][0];
        theta += std::atan2(b.y(), b.x());
    }
    const double denom = (std::abs(std::cos(theta)) + std::abs(std::sin(theta))) *
                         std::sin(2.0 * alpha);
    if (denom <= 1.0) return 1.0;
    return 1.0 / denom;
}

// visibility at which the mix line crosses the inequality bound, as strength
double family_strength(const std::vector<inequalities::BellInequality>& family,
                       const Behavior& p, const std::vector<double>& piso) {
    double best = -1.0;
    for (const auto& q : family) {
        double vp = 0.0, vi = 0.0;
        for (std::size_t i = 0; i < q.coeffs.size(); ++i) {
            vp += q.coeffs[i] * p.data()[i];
            vi += q.coeffs[i] * piso[i];
        }
        const double den = vp - vi;
        const double num = q.bound - vi;
        if (den <= num + 1e-9) continue; // not violated at v = 1
        const double s = 1.0 - num / den;
        if (s > best) best = s;
    }
    return best; // negative: no member violated
}

} // namespace

const char* to_string(SettingsSource s) {
    switch (s) {
        case SettingsSource::UniformRandom: return "uniform-random";
        case SettingsSource::TetrahedralRandomRotations: return "tetrahedral-random-rotations";
        case SettingsSource::PlanarRandomAngles: return "planar-random-angles";
    }
    return "?";
}

SettingsSource settings_source_from_string(const std::string& s) {
    if (s == "uniform-random" || s == "random" || s == "uniform")
        return SettingsSource::UniformRandom;
    if (s == "tetrahedral-random-rotations" || s == "tetrahedral")
        return SettingsSource::TetrahedralRandomRotations;
    if (s == "planar-random-angles" || s == "planar")
        return SettingsSource::PlanarRandomAngles;
    throw std::invalid_argument("unknown settings source '" + s + "'");
}

double normal_quantile(double p) {
    // Wichura, Applied Statistics 37 (1988), algorithm AS 241 (PPND16)
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                     6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
                   1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
                 1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
               (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                     3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
                   5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
                 4.2313330701600911252e1) * r + 1.0);
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                    2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
                  3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
                4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
              (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                    1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                  6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
                2.05319162663775882187e0) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                    1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                  2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
                5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
              (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                    1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                  1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                5.99832206555887937690e-1) * r + 1.0);
    }
    return q < 0.0 ? -val : val;
}

std::pair<double, double> wilson_interval(std::uint64_t n_s, std::uint64_t n, double confidence) {
    if (n == 0) throw std::invalid_argument("wilson_interval: n must be >= 1");
    if (n_s > n) throw std::invalid_argument("wilson_interval: n_s exceeds n");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw std::invalid_argument("wilson_interval: confidence must be in (0,1)");
    const double z = normal_quantile(0.5 + 0.5 * confidence);
    const double nn = static_cast<double>(n);
    const double ph = static_cast<double>(n_s) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double center = ph + z2 / (2.0 * nn);
    const double rad = z * std::sqrt(ph * (1.0 - ph) / nn + z2 / (4.0 * nn * nn));
    const double lo = n_s == 0 ? 0.0 : std::clamp((center - rad) / denom, 0.0, 1.0);
    const double hi = n_s == n ? 1.0 : std::clamp((center + rad) / denom, 0.0, 1.0);
    return {lo, hi};
}

PvEstimate estimate_pv(const quantum::StateSpec& state, const Scenario& sc,
                       polytope::LocalityModel model, std::uint64_t n, double confidence,
                       std::uint64_t seed, SettingsSource source, const MonteCarloOptions& mc) {
    if (n == 0) throw std::invalid_argument("estimate_pv: n must be >= 1");
    sc.validate();
    if (state.local_dim() != sc.d)
        throw std::invalid_argument("estimate_pv: state dimension does not match scenario");
    const quantum::DensityMatrix rho = quantum::make_state(state);
    const int t = resolve_threads(mc.threads, n);
    std::vector<SampleCounts> acc(static_cast<std::size_t>(t));
    std::vector<polytope::ColumnPool> pools = make_pools(t, sc);

    run_partitioned(n, t, [&](int w, std::uint64_t i) {
        SampleCounts& a = acc[static_cast<std::size_t>(w)];
        RngStream rng(seed, i);
        const quantum::MeasurementAssignment meas = draw_settings(sc, source, rng);
        const Behavior p = quantum::behavior_from_quantum(rho, meas);
        polytope::SolveOptions so;
        so.early_exit = !mc.exact_values;
        so.pool = &pools[static_cast<std::size_t>(w)];
        try {
            const polytope::VisibilityCertificate cert = polytope::critical_visibility(p, model, so);
            if (!cert.inside) ++a.succ;
            if (cert.exact && std::abs(cert.v_crit - (1.0 - 1e-8)) < 1e-9)
                log_borderline(i, cert.v_crit);
        } catch (const std::exception& e) {
            a.note_failure(e);
        }
    });

    check_failure_rate(acc, n);
    return assemble(state.to_string(), sc, polytope::to_string(model), source, seed, n, acc,
                    confidence);
}

PvEstimate estimate_pv_inequality(const quantum::StateSpec& state, const Scenario& sc,
                                  const std::vector<inequalities::BellInequality>& family,
                                  std::uint64_t n, double confidence, std::uint64_t seed,
                                  SettingsSource source, const MonteCarloOptions& mc) {
    if (n == 0) throw std::invalid_argument("estimate_pv_inequality: n must be >= 1");
    if (family.empty()) throw std::invalid_argument("estimate_pv_inequality: empty family");
    sc.validate();
    if (state.local_dim() != sc.d)
        throw std::invalid_argument("estimate_pv_inequality: state dimension mismatch");
    std::string tag;
    for (const auto& q : family) {
        q.validate();
        if (!(q.scenario == sc))
            throw std::invalid_argument(
                "estimate_pv_inequality: family member not in target scenario (lift first)");
        if (tag.empty())
            tag = q.model;
        else if (tag != q.model)
            tag = "mixed";
    }
    const quantum::DensityMatrix rho = quantum::make_state(state);
    const int t = resolve_threads(mc.threads, n);
    std::vector<SampleCounts> acc(static_cast<std::size_t>(t));

    run_partitioned(n, t, [&](int w, std::uint64_t i) {
        SampleCounts& a = acc[static_cast<std::size_t>(w)];
        RngStream rng(seed, i);
        const quantum::MeasurementAssignment meas = draw_settings(sc, source, rng);
        const Behavior p = quantum::behavior_from_quantum(rho, meas);
        if (inequalities::violated_by_any(family, p)) ++a.succ;
    });

    return assemble(state.to_string(), sc, tag + "^I", source, seed, n, acc, confidence);
}

std::vector<inequalities::BellInequality> expand_family(
    const std::vector<inequalities::BellInequality>& base, const Scenario& sc, std::size_t cap) {
    sc.validate();
    std::vector<inequalities::BellInequality> out;
    std::unordered_map<std::size_t, std::vector<std::size_t>> seen;
    auto push_unique = [&](inequalities::BellInequality&& q) {
        const std::size_t key = std::hash<std::string_view>{}(std::string_view(
            reinterpret_cast<const char*>(q.coeffs.data()), q.coeffs.size() * sizeof(double)));
        std::vector<std::size_t>& slot = seen[key];
        for (std::size_t idx : slot)
            if (out[idx].coeffs == q.coeffs && out[idx].bound == q.bound) return;
        if (out.size() >= cap)
            throw std::length_error("expand_family: expansion exceeds cap of " +
                                    std::to_string(cap));
        slot.push_back(out.size());
        out.push_back(std::move(q));
    };

    for (const auto& b : base) {
        b.validate();
        std::vector<inequalities::BellInequality> images;
        if (b.scenario == sc) {
            images.push_back(b);
        } else if (b.scenario.d == sc.d && b.scenario.m < sc.m) {
            images = inequalities::lift(b, sc.m);
        } else {
            throw std::invalid_argument("expand_family: cannot map inequality from (m=" +
                                        std::to_string(b.scenario.m) + ",d=" +
                                        std::to_string(b.scenario.d) + ") to (m=" +
                                        std::to_string(sc.m) + ",d=" + std::to_string(sc.d) + ")");
        }
        inequalities::EquivalentsOptions eo;
        eo.cap = cap;
        for (auto& img : images)
            for (auto& eq : inequalities::equivalents(img, eo)) push_unique(std::move(eq));
    }
    return out;
}

StrengthResult maximize_strength(const quantum::StateSpec& state, const Scenario& sc,
                                 polytope::LocalityModel model, int restarts, std::uint64_t seed,
                                 int threads) {
    sc.validate();
    if (state.local_dim() != sc.d)
        throw std::invalid_argument("maximize_strength: state dimension mismatch");
    const int R = restarts > 0 ? restarts : (sc.m == 2 ? 200 : 50);
    const quantum::DensityMatrix rho = quantum::make_state(state);

    struct Slot {
        ParamSpace ps;
        std::vector<double> t;
        double f = kBadEval;
    };
    std::vector<Slot> slots(static_cast<std::size_t>(R));
    StrengthResult res;
    res.restarts = R;
    res.trace.assign(static_cast<std::size_t>(R), {});

    const int t_workers = resolve_threads(threads, static_cast<std::uint64_t>(R));
    std::vector<std::uint64_t> worker_evals(static_cast<std::size_t>(t_workers), 0);

    const auto t0 = std::chrono::steady_clock::now();
    auto stage_done = [&](const char* stage) {
        if (log_level() < 2) return;
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const std::uint64_t evals =
            std::accumulate(worker_evals.begin(), worker_evals.end(), std::uint64_t{0});
        std::lock_guard<std::mutex> g(log_mutex());
        std::cerr << "gmnl: maximize_strength " << stage << " done at " << secs << "s, " << evals
                  << " evals\n";
    };

    // coarse stage: every restart descends until the step drops below 0.05
    {
        std::vector<polytope::ColumnPool> pools(static_cast<std::size_t>(t_workers));
        run_partitioned(static_cast<std::uint64_t>(R), t_workers, [&](int w, std::uint64_t r) {
            Slot& sl = slots[static_cast<std::size_t>(r)];
            RngStream rng(seed, r);
            sl.ps = ParamSpace::make(sc, rng);
            sl.t = sl.ps.random_start(rng, r);
            Objective obj{rho, model, sl.ps, pools[static_cast<std::size_t>(w)]};
            const double f0 = obj(sl.t);
            const DescentOut d = descend(obj, sl.t, f0, 0.6, 0.05, 200);
            sl.f = d.f;
            RestartTrace& tr = res.trace[static_cast<std::size_t>(r)];
            tr.restart = static_cast<int>(r);
            tr.v = d.f;
            tr.sweeps = d.sweeps;
            tr.evals = obj.evals;
            worker_evals[static_cast<std::size_t>(w)] += obj.evals;
        });
    }
    stage_done("coarse");

    // polish stage: the most promising coarse results continue to step < 1e-4
    std::vector<int> order(static_cast<std::size_t>(R));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return slots[static_cast<std::size_t>(a)].f < slots[static_cast<std::size_t>(b)].f;
    });
    const int K = std::min(R, 12);
    {
        std::vector<polytope::ColumnPool> pools(static_cast<std::size_t>(t_workers));
        run_partitioned(static_cast<std::uint64_t>(K), t_workers, [&](int w, std::uint64_t k) {
            const int r = order[static_cast<std::size_t>(k)];
            Slot& sl = slots[static_cast<std::size_t>(r)];
            Objective obj{rho, model, sl.ps, pools[static_cast<std::size_t>(w)]};
            DescentOut d = descend(obj, sl.t, sl.f, 0.1, 1e-4, 500);
            // kick streams live past the restart indices, so they never
            // collide with the start draws
            RngStream krng(seed, static_cast<std::uint64_t>(R) + static_cast<std::uint64_t>(r));
            const double fk = kick(obj, krng, sl.t, d.f);
            if (fk < d.f) d = descend(obj, sl.t, fk, 0.01, 1e-4, 200);
            sl.f = d.f;
            RestartTrace& tr = res.trace[static_cast<std::size_t>(r)];
            tr.v = d.f;
            tr.sweeps += d.sweeps;
            tr.evals += obj.evals;
            tr.polished = true;
            worker_evals[static_cast<std::size_t>(w)] += obj.evals;
        });
    }
    stage_done("polish");
    for (std::uint64_t e : worker_evals) res.evaluations += e;

    int best = order[0];
    for (int k = 1; k < K; ++k) {
        const int r = order[static_cast<std::size_t>(k)];
        if (slots[static_cast<std::size_t>(r)].f < slots[static_cast<std::size_t>(best)].f)
            best = r;
    }

    // basin-hop stage: descent cannot cross the ridge between adjacent basins,
    // so perturb the winner at radii around 0.3 and re-descend; adopt and
    // repeat while the hops keep finding deeper basins
    if (slots[static_cast<std::size_t>(best)].f < kBadEval) {
        Slot& sl = slots[static_cast<std::size_t>(best)];
        polytope::ColumnPool pool;
        Objective obj{rho, model, sl.ps, pool};
        // the hop stream sits past both the start draws [0, R) and the kick
        // streams [R, 2R)
        RngStream hrng(seed, 2ULL * static_cast<std::uint64_t>(R));
        static constexpr double kRadii[4] = {0.3, 0.2, 0.35, 0.25};
        bool improved = true;
        for (int round = 0; round < 3 && improved; ++round) {
            improved = false;
            std::vector<double> tb;
            double fb = sl.f;
            for (int h = 0; h < 16; ++h) {
                std::vector<double> t2 = sl.t;
                const double radius = kRadii[h % 4];
                for (double& x : t2) x += radius * hrng.normal();
                const DescentOut d = descend(obj, t2, obj(t2), radius * 0.6, 1.5e-3, 70);
                if (d.f < fb - 1e-9) {
                    fb = d.f;
                    tb = std::move(t2);
                }
            }
            if (!tb.empty()) {
                const DescentOut d = descend(obj, tb, fb, 0.02, 1e-4, 300);
                if (d.f < sl.f - 1e-12) {
                    sl.f = d.f;
                    sl.t = std::move(tb);
                    improved = true;
                }
            }
        }
        RestartTrace& tr = res.trace[static_cast<std::size_t>(best)];
        tr.v = sl.f;
        tr.evals += obj.evals;
        res.evaluations += obj.evals;
        worker_evals[0] += obj.evals;
    }
    stage_done("hops");

    const Slot& win = slots[static_cast<std::size_t>(best)];
    if (win.f >= kBadEval)
        throw std::runtime_error("maximize_strength: every restart failed to evaluate");
    res.best = win.ps.build(win.t);
    const Behavior p = quantum::behavior_from_quantum(rho, res.best);
    const polytope::VisibilityCertificate cert = polytope::critical_visibility(p, model);
    res.v_crit = cert.v_crit;
    res.s_max = 1.0 - cert.v_crit;
    return res;
}

StrengthHistogram strength_distribution(const quantum::StateSpec& state, const Scenario& sc,
                                        polytope::LocalityModel model, std::uint64_t n, int bins,
                                        std::uint64_t seed, SettingsSource source,
                                        const std::vector<inequalities::BellInequality>* family,
                                        const MonteCarloOptions& mc) {
    if (n == 0) throw std::invalid_argument("strength_distribution: n must be >= 1");
    if (bins < 1) throw std::invalid_argument("strength_distribution: bins must be >= 1");
    sc.validate();
    if (state.local_dim() != sc.d)
        throw std::invalid_argument("strength_distribution: state dimension mismatch");
    if (family != nullptr)
        for (const auto& q : *family) {
            q.validate();
            if (!(q.scenario == sc))
                throw std::invalid_argument("strength_distribution: family member not in scenario");
        }
    const quantum::DensityMatrix rho = quantum::make_state(state);
    const std::vector<double> piso = isotropic(sc).data();
    const int t = resolve_threads(mc.threads, n);
    const double width = 1.0 / bins;

    struct HistAcc {
        SampleCounts counts;
        std::vector<std::uint64_t> bins_, fbins_;
        std::uint64_t viol = 0, fviol = 0;
        double ssum = 0.0, smax = 0.0;
    };
    std::vector<HistAcc> acc(static_cast<std::size_t>(t));
    for (auto& a : acc) {
        a.bins_.assign(static_cast<std::size_t>(bins), 0);
        a.fbins_.assign(static_cast<std::size_t>(bins), 0);
    }
    auto bin_of = [&](double s) {
        const int b = static_cast<int>(s / width);
        return static_cast<std::size_t>(std::clamp(b, 0, bins - 1));
    };

    std::vector<polytope::ColumnPool> pools = make_pools(t, sc);
    run_partitioned(n, t, [&](int w, std::uint64_t i) {
        HistAcc& a = acc[static_cast<std::size_t>(w)];
        RngStream rng(seed, i);
        const quantum::MeasurementAssignment meas = draw_settings(sc, source, rng);
        const Behavior p = quantum::behavior_from_quantum(rho, meas);
        polytope::SolveOptions so;
        so.pool = &pools[static_cast<std::size_t>(w)];
        try {
            // full-accuracy solves: the histogram is over values, not verdicts
            const polytope::VisibilityCertificate cert = polytope::critical_visibility(p, model, so);
            if (!cert.inside) {
                ++a.counts.succ;
                ++a.viol;
                const double s = 1.0 - cert.v_crit;
                ++a.bins_[bin_of(s)];
                a.ssum += s;
                a.smax = std::max(a.smax, s);
            }
        } catch (const std::exception& e) {
            a.counts.note_failure(e);
            return;
        }
        if (family != nullptr) {
            const double fs = family_strength(*family, p, piso);
            if (fs >= 0.0) {
                ++a.fviol;
                ++a.fbins_[bin_of(fs)];
            }
        }
    });

    std::vector<SampleCounts> plain;
    for (const auto& a : acc) plain.push_back(a.counts);
    check_failure_rate(plain, n);

    StrengthHistogram h;
    h.trials = n;
    h.bin_width = width;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    if (family != nullptr) h.family_counts.assign(static_cast<std::size_t>(bins), 0);
    double ssum = 0.0;
    for (const auto& a : acc) {
        h.violating += a.viol;
        h.failures += a.counts.fail;
        h.family_violating += a.fviol;
        ssum += a.ssum;
        h.max_s = std::max(h.max_s, a.smax);
        for (int b = 0; b < bins; ++b) {
            h.counts[static_cast<std::size_t>(b)] += a.bins_[static_cast<std::size_t>(b)];
            if (family != nullptr)
                h.family_counts[static_cast<std::size_t>(b)] += a.fbins_[static_cast<std::size_t>(b)];
        }
    }
    h.mean_s = h.violating > 0 ? ssum / static_cast<double>(h.violating) : 0.0;
    return h;
}

std::vector<AlphaPoint> sweep_alpha(polytope::LocalityModel model, int m,
                                    const std::vector<double>& alphas, std::uint64_t n,
                                    double confidence, std::uint64_t seed, SettingsSource source,
                                    const MonteCarloOptions& mc) {
    if (alphas.empty()) throw std::invalid_argument("sweep_alpha: empty alpha grid");
    if (n == 0) throw std::invalid_argument("sweep_alpha: n must be >= 1");
    const Scenario sc{m, 2};
    sc.validate();
    const int t = resolve_threads(mc.threads, n);
    const bool planar_check = mc.exact_values && source == SettingsSource::PlanarRandomAngles &&
                              model == polytope::LocalityModel::S2 && m == 2;

    std::vector<AlphaPoint> table;
    table.reserve(alphas.size());
    // one pool per worker across the whole grid: every point samples the same
    // polytope
    std::vector<polytope::ColumnPool> pools = make_pools(t, sc);
    for (const double alpha : alphas) {
        quantum::StateSpec spec;
        spec.family = quantum::StateFamily::GhzAlpha;
        spec.alpha = alpha;
        const quantum::DensityMatrix rho = quantum::make_state(spec);

        struct PointAcc {
            SampleCounts counts;
            double ssum = 0.0, cferr = 0.0;
            std::uint64_t viol = 0;
        };
        std::vector<PointAcc> acc(static_cast<std::size_t>(t));
        run_partitioned(n, t, [&](int w, std::uint64_t i) {
            PointAcc& a = acc[static_cast<std::size_t>(w)];
            RngStream rng(seed, i);
            const quantum::MeasurementAssignment meas = draw_settings(sc, source, rng);
            const Behavior p = quantum::behavior_from_quantum(rho, meas);
            polytope::SolveOptions so;
            so.early_exit = !mc.exact_values;
            so.pool = &pools[static_cast<std::size_t>(w)];
            try {
                const polytope::VisibilityCertificate cert =
                    polytope::critical_visibility(p, model, so);
                if (!cert.inside) {
                    ++a.counts.succ;
                    ++a.viol;
                    a.ssum += 1.0 - cert.v_crit;
                }
                if (planar_check)
                    a.cferr = std::max(
                        a.cferr, std::abs(cert.v_crit - ghz_alpha_closed_form(meas, alpha)));
            } catch (const std::exception& e) {
                a.counts.note_failure(e);
            }
        });

        std::vector<SampleCounts> plain;
        for (const auto& a : acc) plain.push_back(a.counts);
        check_failure_rate(plain, n);

        AlphaPoint pt;
        pt.alpha = alpha;
        pt.pv = assemble(spec.to_string(), sc, polytope::to_string(model), source, seed, n, plain,
                         confidence);
        std::uint64_t viol = 0;
        double ssum = 0.0;
        for (const auto& a : acc) {
            viol += a.viol;
            ssum += a.ssum;
            pt.max_closed_form_err = std::max(pt.max_closed_form_err, a.cferr);
        }
        pt.mean_s = viol > 0 ? ssum / static_cast<double>(viol) : 0.0;
        table.push_back(std::move(pt));
    }
    return table;
}

std::string PvEstimate::to_json() const {
    nlohmann::json j;
    j["state"] = state;
    j["scenario"] = {{"m", scenario.m}, {"d", scenario.d}};
    j["model"] = model;
    j["measure"] = measure;
    j["seed"] = seed;
    j["trials"] = trials;
    j["successes"] = successes;
    j["failures"] = failures;
    j["p_hat"] = p_hat;
    j["confidence"] = confidence;
    j["wilson"] = {{"lo", lo}, {"hi", hi}};
    return j.dump(2);
}

std::string StrengthResult::to_json() const {
    nlohmann::json j;
    j["s_max"] = s_max;
    j["v_crit"] = v_crit;
    j["restarts"] = restarts;
    j["evaluations"] = evaluations;
    j["best_settings"] = nlohmann::json::parse(best.to_json());
    nlohmann::json tr = nlohmann::json::array();
    for (const auto& e : trace)
        tr.push_back({{"restart", e.restart},
                      {"v", e.v},
                      {"sweeps", e.sweeps},
                      {"evals", e.evals},
                      {"polished", e.polished}});
    j["trace"] = tr;
    return j.dump(2);
}

std::string StrengthHistogram::to_json() const {
    nlohmann::json j;
    j["trials"] = trials;
    j["violating"] = violating;
    j["failures"] = failures;
    j["bin_width"] = bin_width;
    j["counts"] = counts;
    j["mean_s"] = mean_s;
    j["max_s"] = max_s;
    if (!family_counts.empty()) {
        j["family_counts"] = family_counts;
        j["family_violating"] = family_violating;
    }
    return j.dump(2);
}

} // namespace gmnl::analysis
