#include "gmnl/inequalities.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace gmnl::inequalities {

namespace {

std::size_t sat_mul(std::size_t a, std::size_t b) {
    if (a == 0 || b == 0) return 0;
    if (a > std::numeric_limits<std::size_t>::max() / b)
        return std::numeric_limits<std::size_t>::max();
    return a * b;
}

std::vector<std::vector<int>> all_permutations(int n) {
    std::vector<int> id(n);
    std::iota(id.begin(), id.end(), 0);
    std::vector<std::vector<int>> out;
    do {
        out.push_back(id);
    } while (std::next_permutation(id.begin(), id.end()));
    return out;
}

// One relabeling of a single party: an input permutation plus an output
// permutation attached to each (old) input.
struct PartyRelabel {
    const std::vector<int>* input;               // size m, old input -> new input
    std::vector<const std::vector<int>*> output; // per old input, old outcome -> new outcome
};

std::vector<PartyRelabel> party_relabels(const Scenario& sc,
                                         const std::vector<std::vector<int>>& input_perms,
                                         const std::vector<std::vector<int>>& output_perms) {
    std::vector<PartyRelabel> out;
    const std::size_t k = output_perms.size();
    std::size_t combos = 1;
    for (int i = 0; i < sc.m; ++i) combos = sat_mul(combos, k);
    out.reserve(input_perms.size() * combos);
    std::vector<std::size_t> odo(static_cast<std::size_t>(sc.m), 0);
    for (const auto& ip : input_perms) {
        std::fill(odo.begin(), odo.end(), 0);
        for (;;) {
            PartyRelabel r;
            r.input = &ip;
            r.output.resize(static_cast<std::size_t>(sc.m));
            for (int u = 0; u < sc.m; ++u) r.output[static_cast<std::size_t>(u)] = &output_perms[odo[static_cast<std::size_t>(u)]];
            out.push_back(std::move(r));
            int pos = sc.m - 1;
            while (pos >= 0) {
                if (++odo[static_cast<std::size_t>(pos)] < k) break;
                odo[static_cast<std::size_t>(pos)] = 0;
                --pos;
            }
            if (pos < 0) break;
        }
    }
    return out;
}

// Image of `in` under party permutation sigma (old slot j -> new slot
// sigma[j]) and per-party relabels. Writes into `out` (resized).
void transform(const BellInequality& in, const std::vector<int>& sigma,
               const PartyRelabel& ra, const PartyRelabel& rb, const PartyRelabel& rc,
               std::vector<double>& out) {
    const Scenario sc = in.scenario;
    const int m = sc.m, d = sc.d;
    out.assign(in.coeffs.size(), 0.0);
    const PartyRelabel* rel[3] = {&ra, &rb, &rc};
    int u[3], o[3], nu[3], no[3];
    std::size_t idx = 0;
    for (u[0] = 0; u[0] < m; ++u[0])
        for (u[1] = 0; u[1] < m; ++u[1])
            for (u[2] = 0; u[2] < m; ++u[2])
                for (o[0] = 0; o[0] < d; ++o[0])
                    for (o[1] = 0; o[1] < d; ++o[1])
                        for (o[2] = 0; o[2] < d; ++o[2], ++idx) {
                            for (int j = 0; j < 3; ++j) {
                                const int s = sigma[static_cast<std::size_t>(j)];
                                nu[s] = (*rel[j]->input)[static_cast<std::size_t>(u[j])];
                                no[s] = (*rel[j]->output[static_cast<std::size_t>(u[j])])[static_cast<std::size_t>(o[j])];
                            }
                            const std::size_t nidx =
                                ((((static_cast<std::size_t>(nu[0]) * m + nu[1]) * m + nu[2]) * d + no[0]) * d + no[1]) * d + no[2];
                            out[nidx] = in.coeffs[idx];
                        }
}

std::string coeff_key(const std::vector<double>& c) {
    std::string key(c.size() * sizeof(double), '\0');
    std::memcpy(key.data(), c.data(), key.size());
    return key;
}

template <typename Fn>
void enumerate_images(const BellInequality& ineq, Fn&& fn) {
    const Scenario sc = ineq.scenario;
    const auto input_perms = all_permutations(sc.m);
    const auto output_perms = all_permutations(sc.d);
    const auto party_perms = all_permutations(3);
    const auto rel = party_relabels(sc, input_perms, output_perms);
    std::vector<double> img;
    for (const auto& sigma : party_perms)
        for (const auto& ra : rel)
            for (const auto& rb : rel)
                for (const auto& rc : rel) {
                    transform(ineq, sigma, ra, rb, rc, img);
                    fn(img);
                }
}

} // namespace

void BellInequality::validate() const {
    scenario.validate();
    if (coeffs.size() != scenario.num_entries())
        throw std::invalid_argument("BellInequality: coefficient count does not match scenario");
    for (double c : coeffs)
        if (!std::isfinite(c)) throw std::invalid_argument("BellInequality: non-finite coefficient");
    if (!std::isfinite(bound)) throw std::invalid_argument("BellInequality: non-finite bound");
    if (model != "L" && model != "S2" && model != "NS2")
        throw std::invalid_argument("BellInequality: unknown model tag '" + model + "'");
}

double evaluate(const BellInequality& ineq, const Behavior& p) {
    if (!(ineq.scenario == p.scenario()))
        throw std::invalid_argument("evaluate: inequality/behavior scenario mismatch");
    return std::inner_product(ineq.coeffs.begin(), ineq.coeffs.end(), p.data().begin(), 0.0);
}

std::size_t relabeling_group_order(const Scenario& sc) {
    auto fact = [](int n) {
        std::size_t f = 1;
        for (int i = 2; i <= n; ++i) f *= static_cast<std::size_t>(i);
        return f;
    };
    std::size_t per_party = fact(sc.m);
    for (int i = 0; i < sc.m; ++i) per_party = sat_mul(per_party, fact(sc.d));
    std::size_t total = 6;
    for (int i = 0; i < 3; ++i) total = sat_mul(total, per_party);
    return total;
}

std::vector<BellInequality> equivalents(const BellInequality& ineq, const EquivalentsOptions& opts) {
    ineq.validate();
    const std::size_t order = relabeling_group_order(ineq.scenario);
    if (order > opts.cap)
        throw std::length_error("equivalents: relabeling group order " + std::to_string(order) +
                                " exceeds cap " + std::to_string(opts.cap) +
                                "; use for_each_equivalent to stream");
    std::vector<BellInequality> out;
    std::unordered_set<std::string> seen;
    enumerate_images(ineq, [&](const std::vector<double>& img) {
        if (!seen.insert(coeff_key(img)).second) return;
        BellInequality e = ineq;
        e.coeffs = img;
        out.push_back(std::move(e));
    });
    return out;
}

void for_each_equivalent(const BellInequality& ineq,
                         const std::function<void(const BellInequality&)>& fn) {
    ineq.validate();
    BellInequality e = ineq;
    enumerate_images(ineq, [&](const std::vector<double>& img) {
        e.coeffs = img;
        fn(e);
    });
}

std::vector<BellInequality> lift(const BellInequality& src, int target_m) {
    src.validate();
    if (src.scenario.m != 2)
        throw std::invalid_argument("lift: source inequality must have m = 2");
    if (target_m < 2) throw std::invalid_argument("lift: target_m must be >= 2");
    const Scenario tsc{target_m, src.scenario.d};
    tsc.validate();
    const int d = src.scenario.d;

    // Ordered setting pairs per party.
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < target_m; ++i)
        for (int j = 0; j < target_m; ++j)
            if (i != j) pairs.emplace_back(i, j);

    std::vector<BellInequality> out;
    out.reserve(pairs.size() * pairs.size() * pairs.size());
    for (const auto& pa : pairs)
        for (const auto& pb : pairs)
            for (const auto& pc : pairs) {
                BellInequality e;
                e.scenario = tsc;
                e.coeffs.assign(tsc.num_entries(), 0.0);
                e.bound = src.bound;
                e.model = src.model;
                std::ostringstream tag;
                tag << src.provenance << ";lift(" << pa.first << pa.second << "|" << pb.first
                    << pb.second << "|" << pc.first << pc.second << ")";
                e.provenance = tag.str();
                const int mapx[2] = {pa.first, pa.second};
                const int mapy[2] = {pb.first, pb.second};
                const int mapz[2] = {pc.first, pc.second};
                std::size_t idx = 0;
                for (int x = 0; x < 2; ++x)
                    for (int y = 0; y < 2; ++y)
                        for (int z = 0; z < 2; ++z)
                            for (int a = 0; a < d; ++a)
                                for (int b = 0; b < d; ++b)
                                    for (int c = 0; c < d; ++c, ++idx) {
                                        const std::size_t nidx =
                                            ((((static_cast<std::size_t>(mapx[x]) * target_m + mapy[y]) * target_m +
                                               mapz[z]) * d + a) * d + b) * d + c;
                                        e.coeffs[nidx] = src.coeffs[idx];
                                    }
                out.push_back(std::move(e));
            }
    return out;
}

bool violated_by_any(const std::vector<BellInequality>& family, const Behavior& p, double margin) {
    for (const auto& ineq : family)
        if (evaluate(ineq, p) > ineq.bound + margin) return true;
    return false;
}

BellInequality PlanarSvetlichnyFamily::to_inequality() const {
    BellInequality e;
    e.scenario = Scenario{2, 2};
    e.coeffs.assign(e.scenario.num_entries(), 0.0);
    e.bound = 4.0 * std::max(std::abs(std::cos(theta)), std::abs(std::sin(theta)));
    e.model = "S2";
    std::ostringstream tag;
    tag << "planar(theta=" << theta << ")";
    e.provenance = tag.str();
    std::size_t idx = 0;
    for (int x = 0; x < 2; ++x)
        for (int y = 0; y < 2; ++y)
            for (int z = 0; z < 2; ++z)
                for (int a = 0; a < 2; ++a)
                    for (int b = 0; b < 2; ++b)
                        for (int c = 0; c < 2; ++c, ++idx)
                            e.coeffs[idx] = S[x][y][z] * (((a + b + c) & 1) ? -1.0 : 1.0);
    return e;
}

PlanarSvetlichny planar_svetlichny(double alpha1, double beta1, double gamma1) {
    PlanarSvetlichny out;
    auto& f = out.family;
    f.alpha1 = alpha1;
    f.beta1 = beta1;
    f.gamma1 = gamma1;
    f.theta = alpha1 + beta1 + gamma1;
    const double ang[3][2] = {{alpha1, alpha1 + M_PI / 2},
                              {beta1, beta1 + M_PI / 2},
                              {gamma1, gamma1 + M_PI / 2}};
    for (int x = 0; x < 2; ++x)
        for (int y = 0; y < 2; ++y)
            for (int z = 0; z < 2; ++z)
                f.S[x][y][z] = std::cos(ang[0][x] + ang[1][y] + ang[2][z]);
    out.local_bound = 4.0 * std::max(std::abs(std::cos(f.theta)), std::abs(std::sin(f.theta)));
    out.quantum_value = 4.0;
    return out;
}

namespace {

std::string sanitize_id(const std::string& s) {
    if (s.empty()) return "anon";
    std::string out = s;
    for (char& c : out)
        if (std::isspace(static_cast<unsigned char>(c))) c = '_';
    return out;
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t line, const std::string& what) {
    throw std::runtime_error("catalog " + path + ":" + std::to_string(line) + ": " + what);
}

} // namespace

std::vector<BellInequality> load_catalog(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("catalog: cannot open " + path);
    std::vector<BellInequality> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string trimmed = line;
        trimmed.erase(0, trimmed.find_first_not_of(" \t\r"));
        if (trimmed.empty()) continue;

        std::istringstream hs(trimmed);
        std::string word;
        hs >> word;
        if (word != "bell") parse_fail(path, lineno, "expected 'bell ...' header, got '" + line + "'");
        int m = 0, d = 0;
        std::string model, id;
        double bound = std::numeric_limits<double>::quiet_NaN();
        bool have_bound = false;
        while (hs >> word) {
            const auto eq = word.find('=');
            if (eq == std::string::npos) parse_fail(path, lineno, "malformed token '" + word + "'");
            const std::string key = word.substr(0, eq);
            const std::string val = word.substr(eq + 1);
            try {
                if (key == "m") m = std::stoi(val);
                else if (key == "d") d = std::stoi(val);
                else if (key == "model") model = val;
                else if (key == "bound") { bound = std::stod(val); have_bound = true; }
                else if (key == "id") id = val;
                else parse_fail(path, lineno, "unknown header key '" + key + "'");
            } catch (const std::invalid_argument&) {
                parse_fail(path, lineno, "bad value for '" + key + "'");
            }
        }
        if (m <= 0 || d <= 0 || model.empty() || !have_bound)
            parse_fail(path, lineno, "header missing one of m/d/model/bound");

        BellInequality e;
        e.scenario = Scenario{m, d};
        try {
            e.scenario.validate();
        } catch (const std::exception& ex) {
            parse_fail(path, lineno, ex.what());
        }
        e.coeffs.assign(e.scenario.num_entries(), 0.0);
        e.bound = bound;
        e.model = model;
        e.provenance = "catalog:" + (id.empty() ? std::string("anon") : id);

        std::vector<char> seen(e.coeffs.size(), 0);
        for (std::size_t k = 0; k < e.coeffs.size(); ++k) {
            if (!std::getline(in, line)) parse_fail(path, lineno, "unexpected end of file inside block");
            ++lineno;
            std::istringstream cs(line);
            int x, y, z, a, b, c;
            double v;
            if (!(cs >> x >> y >> z >> a >> b >> c >> v))
                parse_fail(path, lineno, "expected 'x y z a b c coeff'");
            if (x < 0 || x >= m || y < 0 || y >= m || z < 0 || z >= m || a < 0 || a >= d ||
                b < 0 || b >= d || c < 0 || c >= d)
                parse_fail(path, lineno, "index out of range");
            const std::size_t idx =
                ((((static_cast<std::size_t>(x) * m + y) * m + z) * d + a) * d + b) * d + c;
            if (seen[idx]) parse_fail(path, lineno, "duplicate entry");
            seen[idx] = 1;
            e.coeffs[idx] = v;
        }
        try {
            e.validate();
        } catch (const std::exception& ex) {
            parse_fail(path, lineno, ex.what());
        }
        out.push_back(std::move(e));
    }
    return out;
}

void save_catalog(const std::string& path, const std::vector<BellInequality>& ineqs) {
    std::ofstream outf(path);
    if (!outf) throw std::runtime_error("catalog: cannot write " + path);
    char buf[64];
    bool first = true;
    for (const auto& e : ineqs) {
        e.validate();
        if (!first) outf << "\n";
        first = false;
        std::string id = e.provenance;
        if (id.rfind("catalog:", 0) == 0) id = id.substr(8);
        std::snprintf(buf, sizeof(buf), "%.17g", e.bound);
        outf << "bell m=" << e.scenario.m << " d=" << e.scenario.d << " model=" << e.model
             << " bound=" << buf << " id=" << sanitize_id(id) << "\n";
        const int m = e.scenario.m, d = e.scenario.d;
        std::size_t idx = 0;
        for (int x = 0; x < m; ++x)
            for (int y = 0; y < m; ++y)
                for (int z = 0; z < m; ++z)
                    for (int a = 0; a < d; ++a)
                        for (int b = 0; b < d; ++b)
                            for (int c = 0; c < d; ++c, ++idx) {
                                std::snprintf(buf, sizeof(buf), "%.17g", e.coeffs[idx]);
                                outf << x << " " << y << " " << z << " " << a << " " << b << " "
                                     << c << " " << buf << "\n";
                            }
    }
    if (!outf) throw std::runtime_error("catalog: write failed for " + path);
}

} // namespace gmnl::inequalities
