#include "gmnl/behavior.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace gmnl {

void Scenario::validate() const {
    if (m < 1) throw std::invalid_argument("Scenario: m must be >= 1");
    if (d != 2 && d != 3) throw std::invalid_argument("Scenario: d must be 2 or 3");
}

Behavior::Behavior(Scenario sc, std::vector<double> data) : sc_(sc), p_(std::move(data)) {
    sc_.validate();
    if (p_.size() != sc_.num_entries())
        throw std::invalid_argument("Behavior: data size does not match scenario");
    validate();
}

Behavior Behavior::zeros(Scenario sc) {
    sc.validate();
    Behavior b;
    b.sc_ = sc;
    b.p_.assign(sc.num_entries(), 0.0);
    return b;
}

void Behavior::validate() {
    bool warned = false;
    for (double& v : p_) {
        if (v < 0.0) {
            if (v < -kAlgebraTol)
                throw std::invalid_argument("Behavior: entry below -1e-12");
            if (!warned && std::getenv("GMNL_LOG")) {
                std::fprintf(stderr, "[gmnl] warning: clamping %.3e to 0\n", v);
                warned = true;
            }
            v = 0.0;
        }
    }
    if (max_normalization_error() > kStructTol)
        throw std::invalid_argument("Behavior: input slice not normalized within 1e-10");
}

double Behavior::max_normalization_error() const {
    const std::size_t nOut = sc_.num_outcomes();
    double worst = 0.0;
    for (std::size_t base = 0; base < p_.size(); base += nOut) {
        double s = 0.0;
        for (std::size_t k = 0; k < nOut; ++k) s += p_[base + k];
        worst = std::max(worst, std::abs(s - 1.0));
    }
    return worst;
}

std::string Behavior::to_json() const {
    nlohmann::json j;
    j["scenario"] = {{"m", sc_.m}, {"d", sc_.d}};
    j["order"] = "xyzabc-lex";
    j["data"] = p_;
    return j.dump();
}

Behavior Behavior::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.value("order", "xyzabc-lex") != std::string("xyzabc-lex"))
        throw std::invalid_argument("Behavior: unsupported flattening order");
    Scenario sc{j.at("scenario").at("m").get<int>(), j.at("scenario").at("d").get<int>()};
    return Behavior(sc, j.at("data").get<std::vector<double>>());
}

Behavior isotropic(Scenario sc) {
    sc.validate();
    Behavior b = Behavior::zeros(sc);
    const double val = 1.0 / static_cast<double>(sc.num_outcomes());
    for (double& v : b.data()) v = val;
    return b;
}

Behavior mix(const Behavior& p, double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("mix: v must be in [0,1]");
    Behavior out = p;
    const double iso = 1.0 / static_cast<double>(p.scenario().num_outcomes());
    for (double& e : out.data()) e = v * e + (1.0 - v) * iso;
    return out;
}

NoSignalingReport no_signaling_report(const Behavior& p) {
    const Scenario sc = p.scenario();
    const int m = sc.m, d = sc.d;
    NoSignalingReport rep;

    // Party A: sum_a P(abc|xyz) must not depend on x.
    for (int y = 0; y < m; ++y)
        for (int z = 0; z < m; ++z)
            for (int b = 0; b < d; ++b)
                for (int c = 0; c < d; ++c) {
                    double ref = 0.0;
                    for (int a = 0; a < d; ++a) ref += p.at(0, y, z, a, b, c);
                    for (int x = 1; x < m; ++x) {
                        double s = 0.0;
                        for (int a = 0; a < d; ++a) s += p.at(x, y, z, a, b, c);
                        rep.max_violation_party[0] =
                            std::max(rep.max_violation_party[0], std::abs(s - ref));
                    }
                }
    // Party B.
    for (int x = 0; x < m; ++x)
        for (int z = 0; z < m; ++z)
            for (int a = 0; a < d; ++a)
                for (int c = 0; c < d; ++c) {
                    double ref = 0.0;
                    for (int b = 0; b < d; ++b) ref += p.at(x, 0, z, a, b, c);
                    for (int y = 1; y < m; ++y) {
                        double s = 0.0;
                        for (int b = 0; b < d; ++b) s += p.at(x, y, z, a, b, c);
                        rep.max_violation_party[1] =
                            std::max(rep.max_violation_party[1], std::abs(s - ref));
                    }
                }
    // Party C.
    for (int x = 0; x < m; ++x)
        for (int y = 0; y < m; ++y)
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) {
                    double ref = 0.0;
                    for (int c = 0; c < d; ++c) ref += p.at(x, y, 0, a, b, c);
                    for (int z = 1; z < m; ++z) {
                        double s = 0.0;
                        for (int c = 0; c < d; ++c) s += p.at(x, y, z, a, b, c);
                        rep.max_violation_party[2] =
                            std::max(rep.max_violation_party[2], std::abs(s - ref));
                    }
                }

    rep.max_violation = std::max({rep.max_violation_party[0], rep.max_violation_party[1],
                                  rep.max_violation_party[2]});
    rep.signaling = rep.max_violation > 1e-8;
    return rep;
}

std::string NoSignalingReport::to_string() const {
    std::ostringstream os;
    os << "no-signaling check: max violation " << max_violation << " (A " << max_violation_party[0]
       << ", B " << max_violation_party[1] << ", C " << max_violation_party[2] << ") -> "
       << (signaling ? "SIGNALING" : "ok");
    return os.str();
}

} // namespace gmnl
