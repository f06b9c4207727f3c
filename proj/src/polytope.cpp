#include "gmnl/polytope.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string_view>

#include <json.hpp>

namespace gmnl::polytope {

// internal bridge: the engines sit in this file's unnamed namespace, so the
// pool grants them access through one named friend
struct PoolAccess {
    static void bind(ColumnPool& pool, LocalityModel model, const Scenario& sc, const char* who) {
        if (!pool.bound_) {
            pool.bound_ = true;
            pool.model_ = model;
            pool.scenario_ = sc;
            return;
        }
        if (pool.model_ != model || !(pool.scenario_ == sc))
            throw std::logic_error(std::string(who) + ": column pool bound to a different problem");
    }
    static const std::vector<std::pair<std::string, std::vector<double>>>& entries(
        const ColumnPool& pool) {
        return pool.entries_;
    }
    static void add(ColumnPool& pool, const std::string& label, const std::vector<double>& g) {
        pool.add(label, g);
    }
};

namespace {

using lp::kInf;

struct Bip {
    int p1, p2, lone;
};
constexpr Bip kBip[kNumBipartitions] = {{0, 1, 2}, {0, 2, 1}, {1, 2, 0}};
constexpr const char* kBipName[kNumBipartitions] = {"AB|C", "AC|B", "BC|A"};

std::uint64_t ipow(std::uint64_t base, int exp) {
    std::uint64_t r = 1;
    while (exp-- > 0) r *= base;
    return r;
}

std::size_t entry_index(const Scenario& sc, const int u[3], const int o[3]) {
    const std::size_t m = static_cast<std::size_t>(sc.m);
    const std::size_t d = static_cast<std::size_t>(sc.d);
    return ((static_cast<std::size_t>(u[0]) * m + u[1]) * m + u[2]) * (d * d * d) +
           (static_cast<std::size_t>(o[0]) * d + o[1]) * d + o[2];
}

std::size_t block_entry_index(const Scenario& sc, int bip, int s1, int s2, int r1, int r2,
                              int t, int rt) {
    int u[3], o[3];
    const Bip& b = kBip[bip];
    u[b.p1] = s1;
    u[b.p2] = s2;
    u[b.lone] = t;
    o[b.p1] = r1;
    o[b.p2] = r2;
    o[b.lone] = rt;
    return entry_index(sc, u, o);
}

// Block table index, lexicographic (s1, s2, r1, r2).
inline std::size_t qidx(const Scenario& sc, int s1, int s2, int r1, int r2) {
    return ((static_cast<std::size_t>(s1) * sc.m + s2) * sc.d + r1) * sc.d + r2;
}

std::string digit_string(const std::vector<int>& digits, int from, int count) {
    std::string s(static_cast<std::size_t>(count), '0');
    for (int i = 0; i < count; ++i) s[static_cast<std::size_t>(i)] = static_cast<char>('0' + digits[static_cast<std::size_t>(from + i)]);
    return s;
}

std::vector<int> index_digits(std::uint64_t index, int length, int d) {
    std::vector<int> out(static_cast<std::size_t>(length));
    for (int i = 0; i < length; ++i) {
        out[static_cast<std::size_t>(i)] = static_cast<int>(index % static_cast<std::uint64_t>(d));
        index /= static_cast<std::uint64_t>(d);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Collins-Gisin coordinates: marginals over outcome indices < d-1 plus the
// full joint, inputs of omitted parties fixed to 0. Two no-signaling
// behaviors with equal coordinates are equal, so for the L and NS2 masters
// the d^3 m^3 matching rows compress to these D rows (plus normalization).
// ---------------------------------------------------------------------------
struct CgMap {
    int dim = 0;
    std::vector<std::vector<std::size_t>> terms; // summed full-space indices, per row
    std::vector<char> zero_input;                // row uses only all-zero inputs
};

CgMap build_cg(const Scenario& sc) {
    CgMap map;
    const int m = sc.m, d = sc.d;
    auto add_row = [&](std::vector<std::size_t> t, bool zi) {
        map.terms.push_back(std::move(t));
        map.zero_input.push_back(zi ? 1 : 0);
    };
    // single-party marginals
    for (int party = 0; party < 3; ++party) {
        const int q1 = (party + 1) % 3, q2 = (party + 2) % 3;
        for (int a = 0; a < d - 1; ++a)
            for (int x = 0; x < m; ++x) {
                std::vector<std::size_t> t;
                int u[3] = {0, 0, 0}, o[3] = {0, 0, 0};
                u[party] = x;
                o[party] = a;
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j) {
                        o[q1] = i;
                        o[q2] = j;
                        t.push_back(entry_index(sc, u, o));
                    }
                add_row(std::move(t), x == 0);
            }
    }
    // pair marginals
    for (int pi = 0; pi < kNumBipartitions; ++pi) {
        const Bip& b = kBip[pi];
        for (int a = 0; a < d - 1; ++a)
            for (int bo = 0; bo < d - 1; ++bo)
                for (int x = 0; x < m; ++x)
                    for (int y = 0; y < m; ++y) {
                        std::vector<std::size_t> t;
                        int u[3] = {0, 0, 0}, o[3] = {0, 0, 0};
                        u[b.p1] = x;
                        u[b.p2] = y;
                        o[b.p1] = a;
                        o[b.p2] = bo;
                        for (int k = 0; k < d; ++k) {
                            o[b.lone] = k;
                            t.push_back(entry_index(sc, u, o));
                        }
                        add_row(std::move(t), x == 0 && y == 0);
                    }
    }
    // full joint
    for (int a = 0; a < d - 1; ++a)
        for (int bo = 0; bo < d - 1; ++bo)
            for (int c = 0; c < d - 1; ++c)
                for (int x = 0; x < m; ++x)
                    for (int y = 0; y < m; ++y)
                        for (int z = 0; z < m; ++z) {
                            int u[3] = {x, y, z}, o[3] = {a, bo, c};
                            add_row({entry_index(sc, u, o)}, x == 0 && y == 0 && z == 0);
                        }
    map.dim = static_cast<int>(map.terms.size());
    return map;
}

std::vector<double> cg_project(const CgMap& map, const std::vector<double>& full) {
    std::vector<double> out(static_cast<std::size_t>(map.dim));
    for (int r = 0; r < map.dim; ++r) {
        double s = 0.0;
        for (std::size_t idx : map.terms[static_cast<std::size_t>(r)]) s += full[idx];
        out[static_cast<std::size_t>(r)] = s;
    }
    return out;
}

// Raw (unvalidated) behavior vectors used for generated columns.
std::vector<double> local_vertex_raw(const Scenario& sc, const std::vector<int>& digits) {
    std::vector<double> g(sc.num_entries(), 0.0);
    const int m = sc.m;
    for (int x = 0; x < m; ++x)
        for (int y = 0; y < m; ++y)
            for (int z = 0; z < m; ++z) {
                int u[3] = {x, y, z};
                int o[3] = {digits[static_cast<std::size_t>(x)], digits[static_cast<std::size_t>(m + y)],
                            digits[static_cast<std::size_t>(2 * m + z)]};
                g[entry_index(sc, u, o)] = 1.0;
            }
    return g;
}

std::vector<double> hybrid_raw(const Scenario& sc, int bip, const std::vector<int>& edigits,
                               const std::vector<double>& q) {
    std::vector<double> g(sc.num_entries(), 0.0);
    const int m = sc.m, d = sc.d;
    for (int s1 = 0; s1 < m; ++s1)
        for (int s2 = 0; s2 < m; ++s2)
            for (int r1 = 0; r1 < d; ++r1)
                for (int r2 = 0; r2 < d; ++r2) {
                    const double v = std::max(q[qidx(sc, s1, s2, r1, r2)], 0.0);
                    if (v == 0.0) continue;
                    for (int t = 0; t < m; ++t)
                        g[block_entry_index(sc, bip, s1, s2, r1, r2, t,
                                            edigits[static_cast<std::size_t>(t)])] += v;
                }
    return g;
}

std::string local_label(const Scenario& sc, const std::vector<int>& digits) {
    return "local a=" + digit_string(digits, 0, sc.m) + " b=" + digit_string(digits, sc.m, sc.m) +
           " c=" + digit_string(digits, 2 * sc.m, sc.m);
}

std::string hybrid_label(int bip, const std::vector<int>& edigits) {
    return std::string(kBipName[bip]) + " e=" + digit_string(edigits, 0, static_cast<int>(edigits.size()));
}

// ---------------------------------------------------------------------------
// pricing
// ---------------------------------------------------------------------------
struct Candidate {
    double value = 0.0; // w . g
    std::string label;
    std::vector<double> g;
};

void keep_top(std::vector<Candidate>& v, std::size_t k) {
    std::stable_sort(v.begin(), v.end(),
                     [](const Candidate& a, const Candidate& b) { return a.value > b.value; });
    if (v.size() > k) v.resize(k);
}

// max_strategy w . d_lambda over local deterministic strategies; candidates
// above the cutoff are materialized (at most maxc after sorting).
double price_local(const Scenario& sc, const std::vector<double>& w, double cutoff, int maxc,
                   std::vector<Candidate>& out) {
    const int m = sc.m, d = sc.d;
    const std::uint64_t nfun = ipow(static_cast<std::uint64_t>(d), m);
    double best = -kInf;
    struct Rec {
        double val;
        std::vector<int> digits; // a then b then c
    };
    std::vector<Rec> recs;
    std::vector<int> av, bv, cv(static_cast<std::size_t>(m));
    for (std::uint64_t ai = 0; ai < nfun; ++ai) {
        av = index_digits(ai, m, d);
        for (std::uint64_t bi = 0; bi < nfun; ++bi) {
            bv = index_digits(bi, m, d);
            double tot = 0.0;
            for (int z = 0; z < m; ++z) {
                double mx = -kInf;
                int argc = 0;
                for (int c = 0; c < d; ++c) {
                    double s = 0.0;
                    for (int x = 0; x < m; ++x)
                        for (int y = 0; y < m; ++y) {
                            int u[3] = {x, y, z};
                            int o[3] = {av[static_cast<std::size_t>(x)], bv[static_cast<std::size_t>(y)], c};
                            s += w[entry_index(sc, u, o)];
                        }
                    if (s > mx) {
                        mx = s;
                        argc = c;
                    }
                }
                cv[static_cast<std::size_t>(z)] = argc;
                tot += mx;
            }
            if (tot > best) best = tot;
            if (tot > cutoff && maxc > 0) {
                Rec r;
                r.val = tot;
                r.digits = av;
                r.digits.insert(r.digits.end(), bv.begin(), bv.end());
                r.digits.insert(r.digits.end(), cv.begin(), cv.end());
                recs.push_back(std::move(r));
            }
        }
    }
    std::stable_sort(recs.begin(), recs.end(), [](const Rec& a, const Rec& b) { return a.val > b.val; });
    if (recs.size() > static_cast<std::size_t>(maxc)) recs.resize(static_cast<std::size_t>(maxc));
    for (auto& r : recs) {
        Candidate c;
        c.value = r.val;
        c.label = local_label(sc, r.digits);
        c.g = local_vertex_raw(sc, r.digits);
        out.push_back(std::move(c));
    }
    return best;
}

// Per-block pair table W_e(s1,s2,r1,r2) = sum_t w(block entry with lone
// outcome e(t)); its unconstrained-box maximum sum_pairs max_r W_e is both
// the S2 pricing value and the NS2 screening bound.
void compute_W(const Scenario& sc, const std::vector<double>& w, int bip,
               const std::vector<int>& edigits, std::vector<double>& W) {
    const int m = sc.m, d = sc.d;
    W.assign(static_cast<std::size_t>(m) * m * d * d, 0.0);
    for (int s1 = 0; s1 < m; ++s1)
        for (int s2 = 0; s2 < m; ++s2)
            for (int r1 = 0; r1 < d; ++r1)
                for (int r2 = 0; r2 < d; ++r2) {
                    double s = 0.0;
                    for (int t = 0; t < m; ++t)
                        s += w[block_entry_index(sc, bip, s1, s2, r1, r2, t,
                                                 edigits[static_cast<std::size_t>(t)])];
                    W[qidx(sc, s1, s2, r1, r2)] = s;
                }
}

double signaling_box_max(const Scenario& sc, const std::vector<double>& W, std::vector<int>* box) {
    const int m = sc.m, d = sc.d;
    if (box) box->assign(static_cast<std::size_t>(m) * m, 0);
    double tot = 0.0;
    for (int s1 = 0; s1 < m; ++s1)
        for (int s2 = 0; s2 < m; ++s2) {
            double mx = -kInf;
            int arg = 0;
            for (int r = 0; r < d * d; ++r) {
                const double v = W[qidx(sc, s1, s2, r / d, r % d)];
                if (v > mx) {
                    mx = v;
                    arg = r;
                }
            }
            if (box) (*box)[static_cast<std::size_t>(s1 * m + s2)] = arg;
            tot += mx;
        }
    return tot;
}

double price_s2(const Scenario& sc, const std::vector<double>& w, double ynorm, double tol,
                int maxc, std::vector<Candidate>& out) {
    const int m = sc.m, d = sc.d;
    const std::uint64_t ne = ipow(static_cast<std::uint64_t>(d), m);
    double best = -kInf;
    std::vector<double> W;
    std::vector<int> box;
    for (int bip = 0; bip < kNumBipartitions; ++bip)
        for (std::uint64_t ei = 0; ei < ne; ++ei) {
            const std::vector<int> edigits = index_digits(ei, m, d);
            compute_W(sc, w, bip, edigits, W);
            const double val = signaling_box_max(sc, W, &box);
            if (val > best) best = val;
            if (val - ynorm > tol && maxc > 0) {
                std::vector<double> q(static_cast<std::size_t>(m) * m * d * d, 0.0);
                for (int s1 = 0; s1 < m; ++s1)
                    for (int s2 = 0; s2 < m; ++s2) {
                        const int r = box[static_cast<std::size_t>(s1 * m + s2)];
                        q[qidx(sc, s1, s2, r / d, r % d)] = 1.0;
                    }
                Candidate c;
                c.value = val;
                c.label = hybrid_label(bip, edigits);
                c.g = hybrid_raw(sc, bip, edigits, q);
                out.push_back(std::move(c));
            }
        }
    keep_top(out, static_cast<std::size_t>(maxc));
    return best - ynorm;
}

// Feasible set of one normalized no-signaling block (shared by every block of
// a scenario): per-pair normalization rows plus reduced marginal-equality
// rows (outcome d-1 dropped as implied). Objective swapped per block.
lp::LinearProgram block_polytope_lp(const Scenario& sc) {
    const int m = sc.m, d = sc.d;
    lp::LinearProgram prob;
    const int ns_per_party = (d - 1) * m * (m - 1);
    prob.rows = m * m + 2 * ns_per_party;
    prob.rhs.assign(static_cast<std::size_t>(prob.rows), 0.0);
    for (int i = 0; i < m * m; ++i) prob.rhs[static_cast<std::size_t>(i)] = 1.0;
    const int base1 = m * m;
    const int base2 = base1 + ns_per_party;
    for (int s1 = 0; s1 < m; ++s1)
        for (int s2 = 0; s2 < m; ++s2)
            for (int r1 = 0; r1 < d; ++r1)
                for (int r2 = 0; r2 < d; ++r2) {
                    std::vector<std::pair<int, double>> col;
                    col.emplace_back(s1 * m + s2, 1.0);
                    if (r1 < d - 1) {
                        const int row0 = base1 + (r1 * m + s1) * (m - 1);
                        if (s2 >= 1)
                            col.emplace_back(row0 + s2 - 1, 1.0);
                        else
                            for (int k = 1; k < m; ++k) col.emplace_back(row0 + k - 1, -1.0);
                    }
                    if (r2 < d - 1) {
                        const int row0 = base2 + (r2 * m + s2) * (m - 1);
                        if (s1 >= 1)
                            col.emplace_back(row0 + s1 - 1, 1.0);
                        else
                            for (int k = 1; k < m; ++k) col.emplace_back(row0 + k - 1, -1.0);
                    }
                    prob.add_column(0.0, 0.0, 1.0, std::move(col));
                }
    return prob;
}

[[noreturn]] void solver_fail(const std::string& where, const lp::Solution& sol, const Scenario& sc,
                              LocalityModel model) {
    std::ostringstream os;
    os << "critical_visibility: " << where << ": status=" << lp::to_string(sol.status) << " msg='"
       << sol.message << "' primal_res=" << sol.primal_residual << " dual_res=" << sol.dual_residual
       << " gap=" << sol.duality_gap << " iters=" << sol.iterations << " (m=" << sc.m
       << " d=" << sc.d << " model=" << to_string(model) << ")";
    throw std::runtime_error(os.str());
}

// max over e-strategies/bipartitions of the block-LP optimum, screened by the
// signaling bound. Solved blocks above the cutoff yield candidate columns.
double price_ns2(const Scenario& sc, const std::vector<double>& w, double ynorm, double tol,
                 std::optional<lp::SimplexSolver>& blocksolver, int max_solves, int maxc,
                 std::vector<Candidate>& out) {
    const int m = sc.m, d = sc.d;
    const std::uint64_t ne = ipow(static_cast<std::uint64_t>(d), m);
    struct Item {
        int bip;
        std::uint64_t ei;
        double s2;
    };
    std::vector<Item> items;
    items.reserve(static_cast<std::size_t>(kNumBipartitions) * ne);
    std::vector<double> W;
    for (int bip = 0; bip < kNumBipartitions; ++bip)
        for (std::uint64_t ei = 0; ei < ne; ++ei) {
            compute_W(sc, w, bip, index_digits(ei, m, d), W);
            items.push_back({bip, ei, signaling_box_max(sc, W, nullptr)});
        }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        if (a.s2 != b.s2) return a.s2 > b.s2;
        if (a.bip != b.bip) return a.bip < b.bip;
        return a.ei < b.ei;
    });

    double delta = -kInf;
    int solved = 0;
    for (const Item& it : items) {
        const double screen_rc = it.s2 - ynorm;
        if (screen_rc <= tol || (solved >= max_solves && !out.empty())) {
            // items are sorted, so this bounds every remaining block
            if (screen_rc > delta) delta = screen_rc;
            break;
        }
        const std::vector<int> edigits = index_digits(it.ei, m, d);
        compute_W(sc, w, it.bip, edigits, W);
        if (!blocksolver) blocksolver.emplace(block_polytope_lp(sc));
        blocksolver->set_objective(W);
        lp::Solution bs = blocksolver->solve();
        if (!bs.certified()) {
            bs = blocksolver->solve(); // cold retry
            if (!bs.certified()) solver_fail("block pricing LP", bs, sc, LocalityModel::NS2);
        }
        ++solved;
        const double rc = bs.objective - ynorm;
        if (rc > delta) delta = rc;
        if (rc > tol && maxc > 0) {
            Candidate c;
            c.value = bs.objective;
            c.label = hybrid_label(it.bip, edigits);
            c.g = hybrid_raw(sc, it.bip, edigits, bs.x);
            out.push_back(std::move(c));
        }
    }
    keep_top(out, static_cast<std::size_t>(maxc));
    return delta == -kInf ? -kInf : delta;
}

// ---------------------------------------------------------------------------
// master problem
// ---------------------------------------------------------------------------
struct MasterState {
    Scenario sc;
    bool use_cg = false;
    CgMap cg;
    std::size_t E = 0;
    int base = 0; // matching rows; the normalization row is `base`
    std::vector<double> piso;
    lp::LinearProgram prob;
    std::vector<int> crash;
    // column metadata, parallel to structural columns ([0] = v, empty)
    std::vector<std::string> labels;
    std::vector<std::vector<double>> gvecs;

    std::vector<std::pair<int, double>> project_col(const std::vector<double>& g) const {
        std::vector<std::pair<int, double>> col;
        if (use_cg) {
            for (int r = 0; r < cg.dim; ++r) {
                double s = 0.0;
                for (std::size_t idx : cg.terms[static_cast<std::size_t>(r)]) s += g[idx];
                if (s != 0.0) col.emplace_back(r, s);
            }
        } else {
            for (std::size_t idx = 0; idx < E; ++idx)
                if (g[idx] != 0.0) col.emplace_back(static_cast<int>(idx), g[idx]);
        }
        col.emplace_back(base, 1.0);
        return col;
    }
};

MasterState make_master(const Behavior& p, bool use_cg, double vcap = 1.0 + 1e-6) {
    MasterState ms;
    ms.sc = p.scenario();
    ms.use_cg = use_cg;
    ms.E = ms.sc.num_entries();
    ms.piso = isotropic(ms.sc).data();
    if (use_cg) ms.cg = build_cg(ms.sc);
    ms.base = use_cg ? ms.cg.dim : static_cast<int>(ms.E);

    ms.prob.rows = ms.base + 1;
    if (use_cg) {
        ms.prob.rhs = cg_project(ms.cg, ms.piso);
        ms.prob.rhs.push_back(1.0);
    } else {
        ms.prob.rhs = ms.piso;
        ms.prob.rhs.push_back(1.0);
    }

    // v column
    std::vector<double> diff(ms.E);
    for (std::size_t i = 0; i < ms.E; ++i) diff[i] = p.data()[i] - ms.piso[i];
    std::vector<std::pair<int, double>> vcol;
    if (use_cg) {
        const std::vector<double> pd = cg_project(ms.cg, diff);
        for (int r = 0; r < ms.base; ++r)
            if (pd[static_cast<std::size_t>(r)] != 0.0) vcol.emplace_back(r, -pd[static_cast<std::size_t>(r)]);
    } else {
        for (std::size_t i = 0; i < ms.E; ++i)
            if (diff[i] != 0.0) vcol.emplace_back(static_cast<int>(i), -diff[i]);
    }
    ms.prob.add_column(1.0, 0.0, vcap, std::move(vcol));
    ms.labels.emplace_back();
    ms.gvecs.emplace_back();

    // seed columns: the d^3 constant local strategies (p_iso is their uniform
    // mixture, so the crash basis below is feasible from the start)
    const int m = ms.sc.m, d = ms.sc.d;
    std::vector<int> const_ids;
    for (int k1 = 0; k1 < d; ++k1)
        for (int k2 = 0; k2 < d; ++k2)
            for (int k3 = 0; k3 < d; ++k3) {
                std::vector<int> digits(static_cast<std::size_t>(3 * m));
                for (int i = 0; i < m; ++i) {
                    digits[static_cast<std::size_t>(i)] = k1;
                    digits[static_cast<std::size_t>(m + i)] = k2;
                    digits[static_cast<std::size_t>(2 * m + i)] = k3;
                }
                std::vector<double> g = local_vertex_raw(ms.sc, digits);
                const int id = ms.prob.add_column(0.0, 0.0, kInf, ms.project_col(g));
                const_ids.push_back(id);
                ms.labels.push_back(local_label(ms.sc, digits));
                ms.gvecs.push_back(std::move(g));
            }

    // crash basis: the d^3 constant columns cover exactly the all-zero-input
    // rows (raw rows: the first d^3 entries; compressed rows: the zero-input
    // coordinates plus normalization); artificials stay pinned on the rest
    ms.crash = const_ids;
    for (int r = 0; r < ms.prob.rows; ++r) {
        bool covered;
        if (use_cg)
            covered = r == ms.base || ms.cg.zero_input[static_cast<std::size_t>(r)] != 0;
        else
            covered = static_cast<std::size_t>(r) < static_cast<std::size_t>(d) * d * d;
        if (!covered) ms.crash.push_back(-1 - r);
    }
    return ms;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// bitwise content hash; generator entries are exact small rationals
std::size_t column_key(const std::vector<double>& g) {
    return std::hash<std::string_view>{}(std::string_view(
        reinterpret_cast<const char*>(g.data()), g.size() * sizeof(double)));
}

std::vector<double> dual_to_S(const MasterState& ms, const std::vector<double>& y) {
    std::vector<double> S(ms.E, 0.0);
    if (ms.use_cg) {
        for (int r = 0; r < ms.cg.dim; ++r) {
            const double yr = y[static_cast<std::size_t>(r)];
            if (yr == 0.0) continue;
            for (std::size_t idx : ms.cg.terms[static_cast<std::size_t>(r)]) S[idx] -= yr;
        }
    } else {
        for (std::size_t i = 0; i < ms.E; ++i) S[i] = -y[i];
    }
    return S;
}

// Assembles and verifies a certificate. `colvec` must return the full-space
// behavior of structural column j >= 1; `vstar` is the unclipped optimum.
VisibilityCertificate finalize_certificate(
    const Behavior& p, LocalityModel model, double vreport, double vstar,
    const lp::Solution& sol, std::vector<double> S, double S0, double delta, bool exact,
    std::int64_t iters, int rounds, const char* engine,
    const std::function<std::string(int)>& collabel,
    const std::function<const std::vector<double>&(int)>& colvec) {
    const Scenario sc = p.scenario();
    const std::size_t E = sc.num_entries();
    VisibilityCertificate cert;
    cert.model = model;
    cert.scenario = sc;
    cert.v_crit = std::min(std::max(vreport, 0.0), 1.0);
    cert.inside = cert.v_crit >= 1.0 - 1e-8;
    cert.exact = exact;
    cert.dual_coeffs = std::move(S);
    cert.dual_bound = S0;
    cert.dual_gap = delta;
    cert.lp_iterations = iters;
    cert.rounds = rounds;
    cert.engine = engine;

    // primal terms + verification that they reproduce the mixed behavior
    const std::vector<double> piso = isotropic(sc).data();
    std::vector<double> acc(E, 0.0);
    double wsum = 0.0;
    for (int j = 1; j < static_cast<int>(sol.x.size()); ++j) {
        const double wgt = sol.x[static_cast<std::size_t>(j)];
        wsum += wgt;
        if (wgt <= 1e-14) continue;
        const std::vector<double>& g = colvec(j);
        for (std::size_t i = 0; i < E; ++i) acc[i] += wgt * g[i];
        if (wgt > 1e-12) {
            PrimalTerm term;
            term.label = collabel(j);
            term.weight = wgt;
            term.behavior = g;
            cert.primal.push_back(std::move(term));
        }
    }
    std::ostringstream diag;
    if (std::abs(wsum - 1.0) > 1e-8)
        diag << "decomposition weights sum to " << wsum << "; ";
    double experr = 0.0;
    for (std::size_t i = 0; i < E; ++i) {
        const double target = vstar * (p.data()[i] - piso[i]) + piso[i];
        experr = std::max(experr, std::abs(acc[i] - target));
    }
    if (experr > 1e-8) diag << "decomposition reproduces p_v only to " << experr << "; ";
    if (delta > 1e-8) diag << "dual infeasible by " << delta << "; ";
    if (!cert.inside && cert.exact) {
        const double viol = dot(cert.dual_coeffs, p.data()) - cert.dual_bound;
        if (!(viol > 0.0)) diag << "dual fails to separate (S.p - S0 = " << viol << "); ";
    }
    if (!diag.str().empty()) {
        std::ostringstream os;
        os << "critical_visibility: certificate verification failed: " << diag.str() << "(m=" << sc.m
           << " d=" << sc.d << " model=" << to_string(model) << " engine=" << engine
           << " v=" << vreport << ")";
        throw std::runtime_error(os.str());
    }
    return cert;
}

lp::Options master_lp_options() {
    lp::Options o;
    return o;
}

// ---------------------------------------------------------------------------
// engines
// ---------------------------------------------------------------------------
VisibilityCertificate run_dw(const Behavior& p, LocalityModel model, const SolveOptions& opts,
                             bool use_cg) {
    const Scenario sc = p.scenario();
    MasterState ms = make_master(p, use_cg);

    // warm columns from earlier solves against the same polytope; duplicates
    // are culled by content (labels only name the generator family)
    std::unordered_map<std::size_t, std::vector<std::size_t>> known;
    std::size_t seeded = ms.labels.size();
    auto append = [&](const std::string& label, const std::vector<double>& g) {
        std::vector<std::size_t>& slot = known[column_key(g)];
        for (std::size_t idx : slot)
            if (ms.gvecs[idx] == g) return false;
        slot.push_back(ms.gvecs.size());
        ms.prob.add_column(0.0, 0.0, kInf, ms.project_col(g));
        ms.labels.push_back(label);
        ms.gvecs.push_back(g);
        return true;
    };
    if (opts.pool != nullptr) {
        PoolAccess::bind(*opts.pool, model, sc, "critical_visibility");
        for (std::size_t j = 1; j < ms.gvecs.size(); ++j)
            known[column_key(ms.gvecs[j])].push_back(j);
        for (const auto& [label, g] : PoolAccess::entries(*opts.pool)) append(label, g);
        seeded = ms.labels.size();
    }

    lp::SimplexSolver master(ms.prob, master_lp_options());
    master.set_warm_basis(ms.crash);

    std::optional<lp::SimplexSolver> blocksolver;
    std::vector<double> S;
    double S0 = 0.0;
    double delta = 0.0;
    std::int64_t iters = 0;
    int round = 0;
    bool inside_short = false;
    bool exact = true;
    double outside_bound = -1.0;
    lp::Solution sol;

    for (;; ++round) {
        sol = master.solve();
        iters += sol.iterations;
        if (!sol.certified()) {
            sol = master.solve(); // failure dropped the basis; cold restart
            iters += sol.iterations;
            if (!sol.certified()) solver_fail("master LP", sol, sc, model);
        }
        const double z = sol.objective;
        if (z >= 1.0 || (opts.early_exit && z >= 1.0 - 1e-8)) {
            inside_short = true;
            exact = z >= 1.0;
            break;
        }
        S = dual_to_S(ms, sol.y);
        S0 = sol.y[static_cast<std::size_t>(ms.base)];
        std::vector<Candidate> cands;
        // generous candidate batches: round count, not master size, dominates
        switch (model) {
            case LocalityModel::L:
                delta = price_local(sc, S, S0 + opts.tol, 24, cands) - S0;
                break;
            case LocalityModel::S2:
                delta = price_s2(sc, S, S0, opts.tol, 24, cands);
                break;
            case LocalityModel::NS2:
                delta = price_ns2(sc, S, S0, opts.tol, blocksolver, 24, 12, cands);
                break;
        }
        if (delta <= opts.tol) break; // optimal: dual already feasible
        if (opts.early_exit && z + delta < 1.0 - 1e-8) {
            exact = false;
            outside_bound = z + delta;
            S0 += delta; // restores dual feasibility for the certificate
            delta = 0.0;
            break;
        }
        if (round >= opts.max_rounds) solver_fail("column generation stalled", sol, sc, model);
        bool grew = false;
        for (Candidate& c : cands) {
            if (opts.pool != nullptr) {
                const std::size_t before = ms.gvecs.size();
                if (!append(c.label, c.g)) continue;
                master.add_column(0.0, 0.0, kInf, ms.project_col(ms.gvecs[before]));
                grew = true;
            } else {
                master.add_column(0.0, 0.0, kInf, ms.project_col(c.g));
                ms.labels.push_back(std::move(c.label));
                ms.gvecs.push_back(std::move(c.g));
                grew = true;
            }
        }
        // every candidate already in the master: optimum and pricing bound
        // disagree only within certification slack; keep the current solution
        if (!grew) break;
    }

    if (opts.pool != nullptr)
        for (std::size_t j = seeded; j < ms.labels.size(); ++j)
            PoolAccess::add(*opts.pool, ms.labels[j], ms.gvecs[j]);

    if (inside_short) {
        S.assign(ms.E, 0.0);
        S0 = 0.0;
        delta = 0.0;
    }
    const double vreport = outside_bound >= 0.0 ? outside_bound : std::min(sol.objective, 1.0);
    return finalize_certificate(
        p, model, vreport, sol.x[0], sol, std::move(S), S0, delta, exact, iters, round,
        "column-generation", [&](int j) { return ms.labels[static_cast<std::size_t>(j)]; },
        [&](int j) -> const std::vector<double>& { return ms.gvecs[static_cast<std::size_t>(j)]; });
}

// All local vertices as explicit columns over compressed rows; no pricing
// loop. Used for L whenever the vertex count is small.
VisibilityCertificate run_dense_local(const Behavior& p, const SolveOptions& opts, bool use_cg) {
    const Scenario sc = p.scenario();
    const int m = sc.m, d = sc.d;
    const std::uint64_t nvert = ipow(static_cast<std::uint64_t>(d), 3 * m);

    MasterState ms = make_master(p, use_cg); // seeds the d^3 constant columns
    // remaining vertices, in strategy-index order
    std::vector<std::uint64_t> col_to_strat(static_cast<std::size_t>(ms.prob.num_cols()), 0);
    std::vector<char> present(static_cast<std::size_t>(nvert), 0);
    for (int j = 1; j < ms.prob.num_cols(); ++j) {
        DeterministicStrategy s;
        s.d = d;
        // reconstruct the seed's index from its stored behavior label order
        // (seeds are the constant strategies, added k3 fastest)
        const int k = j - 1;
        const int k3 = k % d, k2 = (k / d) % d, k1 = k / (d * d);
        std::vector<int> digits(static_cast<std::size_t>(3 * m));
        for (int i = 0; i < m; ++i) {
            digits[static_cast<std::size_t>(i)] = k1;
            digits[static_cast<std::size_t>(m + i)] = k2;
            digits[static_cast<std::size_t>(2 * m + i)] = k3;
        }
        s.digits = digits;
        col_to_strat[static_cast<std::size_t>(j)] = s.to_index();
        present[static_cast<std::size_t>(s.to_index())] = 1;
    }
    for (std::uint64_t lam = 0; lam < nvert; ++lam) {
        if (present[static_cast<std::size_t>(lam)]) continue;
        const std::vector<int> digits = index_digits(lam, 3 * m, d);
        ms.prob.add_column(0.0, 0.0, kInf, ms.project_col(local_vertex_raw(sc, digits)));
        col_to_strat.push_back(lam);
    }
    (void)opts;

    lp::SimplexSolver master(ms.prob, master_lp_options());
    master.set_warm_basis(ms.crash);
    lp::Solution sol = master.solve();
    if (!sol.certified()) {
        sol = master.solve();
        if (!sol.certified()) solver_fail("dense local LP", sol, sc, LocalityModel::L);
    }

    std::vector<double> S = dual_to_S(ms, sol.y);
    const double S0 = sol.y[static_cast<std::size_t>(ms.base)];
    std::vector<Candidate> none;
    const double delta = price_local(sc, S, kInf, 0, none) - S0;

    std::vector<double> tmp;
    auto colvec = [&](int j) -> const std::vector<double>& {
        tmp = local_vertex_raw(sc, index_digits(col_to_strat[static_cast<std::size_t>(j)], 3 * m, d));
        return tmp;
    };
    auto collabel = [&](int j) {
        return local_label(sc, index_digits(col_to_strat[static_cast<std::size_t>(j)], 3 * m, d));
    };
    return finalize_certificate(p, LocalityModel::L, std::min(sol.objective, 1.0), sol.x[0], sol,
                                std::move(S), S0, delta, true, sol.iterations, 0, "dense-vertex",
                                collabel, colvec);
}

VisibilityCertificate run_direct(const Behavior& p, LocalityModel model, const SolveOptions& opts) {
    const Scenario sc = p.scenario();
    const int m = sc.m, d = sc.d;
    const std::size_t E = sc.num_entries();
    lp::LinearProgram prob = build_visibility_lp(p, model);
    lp::Solution sol = lp::solve(prob);
    if (!sol.certified()) {
        // retained redundant rows make these instances heavily degenerate; a
        // rerun with a fresher inverse clears sporadic stalls
        lp::Options stubborn;
        stubborn.refactor_every = 25;
        stubborn.degeneracy_threshold = 64;
        sol = lp::solve(prob, stubborn);
    }
    if (!sol.certified()) solver_fail("direct LP", sol, sc, model);

    std::vector<double> S(E);
    for (std::size_t i = 0; i < E; ++i) S[i] = -sol.y[i];
    double S0 = sol.y[E];

    // fold the explicit block columns into one aggregated term per block
    std::vector<std::string> labels;
    std::vector<std::vector<double>> gvecs;
    std::vector<double> weights;
    if (model == LocalityModel::L) {
        const std::uint64_t nvert = ipow(static_cast<std::uint64_t>(d), 3 * m);
        for (std::uint64_t lam = 0; lam < nvert; ++lam) {
            const double wgt = sol.x[static_cast<std::size_t>(1 + lam)];
            if (wgt <= 1e-14) continue;
            const std::vector<int> digits = index_digits(lam, 3 * m, d);
            labels.push_back(local_label(sc, digits));
            gvecs.push_back(local_vertex_raw(sc, digits));
            weights.push_back(wgt);
        }
    } else {
        const std::uint64_t ne = ipow(static_cast<std::uint64_t>(d), m);
        const std::size_t qn = static_cast<std::size_t>(m) * m * d * d;
        std::size_t colbase = 1;
        for (int bip = 0; bip < kNumBipartitions; ++bip)
            for (std::uint64_t ei = 0; ei < ne; ++ei, colbase += qn) {
                double mass = 0.0;
                for (int r = 0; r < d * d; ++r)
                    mass += std::max(sol.x[colbase + static_cast<std::size_t>(qidx(sc, 0, 0, r / d, r % d))], 0.0);
                if (mass <= 1e-14) continue;
                std::vector<double> q(qn);
                for (std::size_t k = 0; k < qn; ++k)
                    q[k] = std::max(sol.x[colbase + k], 0.0) / mass;
                const std::vector<int> edigits = index_digits(ei, m, d);
                labels.push_back(hybrid_label(bip, edigits));
                gvecs.push_back(hybrid_raw(sc, bip, edigits, q));
                weights.push_back(mass);
            }
    }

    // dual feasibility over the whole generator family
    std::vector<Candidate> none;
    double delta = 0.0;
    switch (model) {
        case LocalityModel::L:
            delta = price_local(sc, S, kInf, 0, none) - S0;
            break;
        case LocalityModel::S2:
            delta = price_s2(sc, S, S0, opts.tol, 0, none);
            break;
        case LocalityModel::NS2: {
            // tol 0 solves exactly the blocks whose screening bound exceeds
            // S0; screened-out blocks cannot raise delta above the threshold
            std::optional<lp::SimplexSolver> blocksolver;
            delta = price_ns2(sc, S, S0, 0.0, blocksolver, std::numeric_limits<int>::max(), 0, none);
            break;
        }
    }
    if (delta > 1e-8) {
        if (delta > 1e-6) solver_fail("direct LP dual accuracy", sol, sc, model);
        S0 += delta; // absorb roundoff so the certificate stays feasible
        delta = 0.0;
    }

    // repackage the aggregated primal through a synthetic solution vector
    lp::Solution agg;
    agg.x.assign(1 + weights.size(), 0.0);
    agg.x[0] = sol.x[0];
    for (std::size_t i = 0; i < weights.size(); ++i) agg.x[1 + i] = weights[i];
    return finalize_certificate(
        p, model, std::min(sol.objective, 1.0), sol.x[0], agg, std::move(S), S0, delta, true,
        sol.iterations, 0, "direct", [&](int j) { return labels[static_cast<std::size_t>(j - 1)]; },
        [&](int j) -> const std::vector<double>& { return gvecs[static_cast<std::size_t>(j - 1)]; });
}

} // namespace

const char* to_string(LocalityModel model) {
    switch (model) {
        case LocalityModel::L: return "L";
        case LocalityModel::S2: return "S2";
        case LocalityModel::NS2: return "NS2";
    }
    return "?";
}

LocalityModel model_from_string(const std::string& s) {
    if (s == "L" || s == "l") return LocalityModel::L;
    if (s == "S2" || s == "s2") return LocalityModel::S2;
    if (s == "NS2" || s == "ns2") return LocalityModel::NS2;
    throw std::invalid_argument("unknown locality model '" + s + "' (expected L, S2 or NS2)");
}

const char* bipartition_name(int bip) {
    if (bip < 0 || bip >= kNumBipartitions) throw std::invalid_argument("bipartition_name: bad index");
    return kBipName[bip];
}

DeterministicStrategy DeterministicStrategy::from_index(std::uint64_t index, int length, int d) {
    if (d < 2) throw std::invalid_argument("DeterministicStrategy: d must be >= 2");
    if (length < 0) throw std::invalid_argument("DeterministicStrategy: negative length");
    DeterministicStrategy s;
    s.d = d;
    s.digits = index_digits(index, length, d);
    if (index >= ipow(static_cast<std::uint64_t>(d), length))
        throw std::invalid_argument("DeterministicStrategy: index out of range");
    return s;
}

std::uint64_t DeterministicStrategy::to_index() const {
    std::uint64_t idx = 0, mul = 1;
    for (int dig : digits) {
        if (dig < 0 || dig >= d) throw std::invalid_argument("DeterministicStrategy: digit out of range");
        idx += static_cast<std::uint64_t>(dig) * mul;
        mul *= static_cast<std::uint64_t>(d);
    }
    return idx;
}

std::string DeterministicStrategy::to_string() const {
    std::string s;
    s.reserve(digits.size());
    for (int dig : digits) s.push_back(static_cast<char>('0' + dig));
    return s;
}

std::vector<Behavior> enumerate_local_deterministic(const Scenario& sc, std::size_t cap) {
    sc.validate();
    const std::uint64_t count = ipow(static_cast<std::uint64_t>(sc.d), 3 * sc.m);
    if (count > cap)
        throw std::length_error("enumerate_local_deterministic: " + std::to_string(count) +
                                " strategies exceed cap " + std::to_string(cap));
    std::vector<Behavior> out;
    out.reserve(static_cast<std::size_t>(count));
    for (std::uint64_t lam = 0; lam < count; ++lam)
        out.push_back(local_vertex(sc, DeterministicStrategy::from_index(lam, 3 * sc.m, sc.d)));
    return out;
}

Behavior local_vertex(const Scenario& sc, const DeterministicStrategy& s) {
    sc.validate();
    if (s.d != sc.d || s.digits.size() != static_cast<std::size_t>(3 * sc.m))
        throw std::invalid_argument("local_vertex: strategy does not match scenario");
    for (int dig : s.digits)
        if (dig < 0 || dig >= sc.d) throw std::invalid_argument("local_vertex: digit out of range");
    Behavior p = Behavior::zeros(sc);
    p.data() = local_vertex_raw(sc, s.digits);
    return p;
}

Behavior hybrid_behavior(const Scenario& sc, int bip, const DeterministicStrategy& lone,
                         const std::vector<double>& q) {
    sc.validate();
    if (bip < 0 || bip >= kNumBipartitions) throw std::invalid_argument("hybrid_behavior: bad bipartition");
    if (lone.d != sc.d || lone.digits.size() != static_cast<std::size_t>(sc.m))
        throw std::invalid_argument("hybrid_behavior: lone strategy does not match scenario");
    const std::size_t qn = static_cast<std::size_t>(sc.m) * sc.m * sc.d * sc.d;
    if (q.size() != qn) throw std::invalid_argument("hybrid_behavior: block table has wrong size");
    Behavior g = Behavior::zeros(sc);
    g.data() = hybrid_raw(sc, bip, lone.digits, q);
    g.validate();
    return g;
}

lp::LinearProgram build_visibility_lp(const Behavior& p, LocalityModel model) {
    const Scenario sc = p.scenario();
    if (p.size() != sc.num_entries()) throw std::invalid_argument("build_visibility_lp: empty behavior");
    const int m = sc.m, d = sc.d;
    const std::size_t E = sc.num_entries();
    const std::vector<double> piso = isotropic(sc).data();

    const bool ns = model == LocalityModel::NS2;
    const int eq_rows = m * m - 1;
    const int ns_rows = ns ? 2 * d * m * (m - 1) : 0;
    const int per_block = model == LocalityModel::L ? 0 : eq_rows + ns_rows;
    const std::uint64_t nblocks =
        model == LocalityModel::L ? 0 : kNumBipartitions * ipow(static_cast<std::uint64_t>(d), m);

    lp::LinearProgram prob;
    prob.rows = static_cast<int>(E) + 1 + static_cast<int>(nblocks) * per_block;
    prob.rhs.assign(static_cast<std::size_t>(prob.rows), 0.0);
    for (std::size_t i = 0; i < E; ++i) prob.rhs[i] = piso[i];
    prob.rhs[E] = 1.0;

    std::vector<std::pair<int, double>> vcol;
    for (std::size_t i = 0; i < E; ++i) {
        const double diff = p.data()[i] - piso[i];
        if (diff != 0.0) vcol.emplace_back(static_cast<int>(i), -diff);
    }
    prob.add_column(1.0, 0.0, 1.0 + 1e-6, std::move(vcol));

    if (model == LocalityModel::L) {
        const std::uint64_t nvert = ipow(static_cast<std::uint64_t>(d), 3 * m);
        if (nvert > 1'000'000)
            throw std::length_error("build_visibility_lp: too many local strategies for the explicit form");
        for (std::uint64_t lam = 0; lam < nvert; ++lam) {
            const std::vector<int> digits = index_digits(lam, 3 * m, d);
            std::vector<std::pair<int, double>> col;
            for (int x = 0; x < m; ++x)
                for (int y = 0; y < m; ++y)
                    for (int z = 0; z < m; ++z) {
                        int u[3] = {x, y, z};
                        int o[3] = {digits[static_cast<std::size_t>(x)],
                                    digits[static_cast<std::size_t>(m + y)],
                                    digits[static_cast<std::size_t>(2 * m + z)]};
                        col.emplace_back(static_cast<int>(entry_index(sc, u, o)), 1.0);
                    }
            col.emplace_back(static_cast<int>(E), 1.0);
            prob.add_column(0.0, 0.0, kInf, std::move(col));
        }
        return prob;
    }

    const std::uint64_t ne = ipow(static_cast<std::uint64_t>(d), m);
    std::uint64_t block_ord = 0;
    for (int bip = 0; bip < kNumBipartitions; ++bip)
        for (std::uint64_t ei = 0; ei < ne; ++ei, ++block_ord) {
            const std::vector<int> edigits = index_digits(ei, m, d);
            const int base = static_cast<int>(E) + 1 + static_cast<int>(block_ord) * per_block;
            const int nsbase1 = base + eq_rows;
            const int nsbase2 = nsbase1 + d * m * (m - 1);
            for (int s1 = 0; s1 < m; ++s1)
                for (int s2 = 0; s2 < m; ++s2)
                    for (int r1 = 0; r1 < d; ++r1)
                        for (int r2 = 0; r2 < d; ++r2) {
                            std::vector<std::pair<int, double>> col;
                            for (int t = 0; t < m; ++t)
                                col.emplace_back(static_cast<int>(block_entry_index(
                                                     sc, bip, s1, s2, r1, r2, t,
                                                     edigits[static_cast<std::size_t>(t)])),
                                                 1.0);
                            const int pair = s1 * m + s2;
                            if (pair == 0) {
                                for (int k = 1; k < m * m; ++k) col.emplace_back(base + k - 1, -1.0);
                                col.emplace_back(static_cast<int>(E), 1.0);
                            } else {
                                col.emplace_back(base + pair - 1, 1.0);
                            }
                            if (ns) {
                                const int row1 = nsbase1 + (r1 * m + s1) * (m - 1);
                                if (s2 >= 1)
                                    col.emplace_back(row1 + s2 - 1, 1.0);
                                else
                                    for (int k = 1; k < m; ++k) col.emplace_back(row1 + k - 1, -1.0);
                                const int row2 = nsbase2 + (r2 * m + s2) * (m - 1);
                                if (s1 >= 1)
                                    col.emplace_back(row2 + s1 - 1, 1.0);
                                else
                                    for (int k = 1; k < m; ++k) col.emplace_back(row2 + k - 1, -1.0);
                            }
                            prob.add_column(0.0, 0.0, kInf, std::move(col));
                        }
        }
    return prob;
}

VisibilityCertificate critical_visibility(const Behavior& p, LocalityModel model,
                                          const SolveOptions& opts) {
    const Scenario sc = p.scenario();
    sc.validate();
    if (p.size() != sc.num_entries())
        throw std::invalid_argument("critical_visibility: behavior/scenario size mismatch");
    // Compressed (Collins-Gisin) rows are only equivalent to the full
    // matching rows when everything in sight is no-signaling.
    const bool sig = no_signaling_report(p).signaling;
    const bool cg_ok = model != LocalityModel::S2 && !sig;
    switch (opts.engine) {
        case SolveOptions::Engine::Direct:
            return run_direct(p, model, opts);
        case SolveOptions::Engine::Decomposition:
            return run_dw(p, model, opts, cg_ok);
        case SolveOptions::Engine::Auto:
        default:
            if (model == LocalityModel::L && ipow(static_cast<std::uint64_t>(sc.d), 3 * sc.m) <= 4096)
                return run_dense_local(p, opts, cg_ok);
            return run_dw(p, model, opts, cg_ok);
    }
}

std::pair<bool, VisibilityCertificate> membership(const Behavior& p, LocalityModel model,
                                                  const SolveOptions& opts) {
    VisibilityCertificate cert = critical_visibility(p, model, opts);
    return {cert.inside, std::move(cert)};
}

void ColumnPool::add(const std::string& label, const std::vector<double>& g) {
    const std::size_t key = column_key(g);
    if (cap_ == 0 || slots_.count(key)) return;
    if (entries_.size() < cap_) {
        slots_[key] = entries_.size();
        entries_.emplace_back(label, g);
    } else {
        slots_.erase(column_key(entries_[head_].second));
        entries_[head_] = {label, g};
        slots_[key] = head_;
        head_ = (head_ + 1) % cap_;
    }
}

double extended_visibility(const Behavior& p, LocalityModel model, ColumnPool* pool) {
    const Scenario sc = p.scenario();
    sc.validate();
    if (p.size() != sc.num_entries())
        throw std::invalid_argument("extended_visibility: behavior/scenario size mismatch");
    const bool cg_ok = model != LocalityModel::S2 && !no_signaling_report(p).signaling;
    if (pool) PoolAccess::bind(*pool, model, sc, "extended_visibility");

    MasterState ms = make_master(p, cg_ok, 64.0);
    std::unordered_map<std::size_t, std::vector<std::size_t>> known;
    for (std::size_t j = 1; j < ms.gvecs.size(); ++j)
        known[column_key(ms.gvecs[j])].push_back(j);
    const std::size_t seeded = ms.labels.size();
    auto append = [&](std::string label, std::vector<double> g) {
        std::vector<std::size_t>& slot = known[column_key(g)];
        for (std::size_t idx : slot)
            if (ms.gvecs[idx] == g) return false;
        slot.push_back(ms.gvecs.size());
        ms.prob.add_column(0.0, 0.0, kInf, ms.project_col(g));
        ms.labels.push_back(std::move(label));
        ms.gvecs.push_back(std::move(g));
        return true;
    };
    if (pool)
        for (const auto& [label, g] : PoolAccess::entries(*pool)) append(label, g);

    // ms.prob stays in sync with the solver so a failed solve can be retried
    // on a freshly built master under degeneracy-hardened options
    lp::SimplexSolver master(ms.prob, master_lp_options());
    master.set_warm_basis(ms.crash);
    std::optional<lp::SimplexSolver> blocksolver;
    const double tol = 1e-9;
    lp::Solution sol;
    for (int round = 0;; ++round) {
        sol = master.solve();
        if (!sol.certified()) {
            lp::Options stubborn;
            stubborn.refactor_every = 25;
            stubborn.degeneracy_threshold = 64;
            master = lp::SimplexSolver(ms.prob, stubborn);
            master.set_warm_basis(ms.crash);
            sol = master.solve();
            if (!sol.certified()) solver_fail("extended master LP", sol, sc, model);
        }
        std::vector<double> S = dual_to_S(ms, sol.y);
        const double S0 = sol.y[static_cast<std::size_t>(ms.base)];
        std::vector<Candidate> cands;
        double delta = 0.0;
        // generous candidate batches: round count, not master size, dominates
        // the cost of these solves
        switch (model) {
            case LocalityModel::L:
                delta = price_local(sc, S, S0 + tol, 24, cands) - S0;
                break;
            case LocalityModel::S2:
                delta = price_s2(sc, S, S0, tol, 24, cands);
                break;
            case LocalityModel::NS2:
                delta = price_ns2(sc, S, S0, tol, blocksolver, 24, 12, cands);
                break;
        }
        if (delta <= tol) break;
        if (round >= 5000) solver_fail("extended column generation stalled", sol, sc, model);
        bool grew = false;
        for (Candidate& c : cands) {
            const std::size_t before = ms.labels.size();
            if (append(std::move(c.label), std::move(c.g))) {
                master.add_column(0.0, 0.0, kInf,
                                  ms.project_col(ms.gvecs[before]));
                grew = true;
            }
        }
        // every candidate already present: the master optimum and the pricing
        // bound disagree only within certification slack; take the value
        if (!grew) break;
    }
    if (pool)
        for (std::size_t j = seeded; j < ms.labels.size(); ++j)
            PoolAccess::add(*pool, ms.labels[j], ms.gvecs[j]);
    return sol.objective;
}

inequalities::BellInequality extract_dual_inequality(const VisibilityCertificate& cert,
                                                     const Scenario& sc) {
    if (!(sc == cert.scenario))
        throw std::invalid_argument("extract_dual_inequality: scenario mismatch");
    if (cert.inside)
        throw std::invalid_argument("extract_dual_inequality: behavior is inside; nothing to certify");
    if (cert.dual_coeffs.size() != sc.num_entries())
        throw std::invalid_argument("extract_dual_inequality: certificate carries no dual");

    const std::size_t E = sc.num_entries();
    const double d3 = std::pow(static_cast<double>(sc.d), 3);
    const double m3 = std::pow(static_cast<double>(sc.m), 3);
    double s_iso = 0.0;
    for (std::size_t i = 0; i < E; ++i) s_iso += cert.dual_coeffs[i] / d3;
    const double shift = -s_iso / m3;

    inequalities::BellInequality ineq;
    ineq.scenario = sc;
    ineq.coeffs.resize(E);
    for (std::size_t i = 0; i < E; ++i) ineq.coeffs[i] = cert.dual_coeffs[i] + shift;
    ineq.bound = cert.dual_bound + shift * m3; // = -S.p_iso + S0, i.e. v_crit
    ineq.model = to_string(cert.model);
    ineq.provenance = "dual";
    ineq.validate();
    return ineq;
}

std::string VisibilityCertificate::to_json() const {
    nlohmann::json j;
    j["model"] = polytope::to_string(model);
    j["scenario"] = {{"m", scenario.m}, {"d", scenario.d}};
    j["v_crit"] = v_crit;
    j["inside"] = inside;
    j["exact"] = exact;
    j["engine"] = engine;
    j["rounds"] = rounds;
    j["lp_iterations"] = lp_iterations;
    j["dual"] = {{"bound", dual_bound}, {"gap", dual_gap}, {"coeffs", dual_coeffs}};
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& t : primal)
        terms.push_back({{"label", t.label}, {"weight", t.weight}, {"behavior", t.behavior}});
    j["primal"] = terms;
    return j.dump(2);
}

} // namespace gmnl::polytope
