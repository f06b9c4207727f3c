#include "gmnl/lp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

namespace gmnl::lp {

const char* to_string(Status s) {
    switch (s) {
        case Status::Optimal: return "optimal";
        case Status::Infeasible: return "infeasible";
        case Status::Unbounded: return "unbounded";
        case Status::Numerical: return "numerical";
    }
    return "?";
}

int LinearProgram::add_column(double c, double lb, double ub,
                              std::vector<std::pair<int, double>> entries) {
    obj.push_back(c);
    lo.push_back(lb);
    up.push_back(ub);
    cols.push_back(std::move(entries));
    return num_cols() - 1;
}

void LinearProgram::validate() const {
    if (rows < 0) throw std::invalid_argument("lp: negative row count");
    if (static_cast<int>(rhs.size()) != rows) throw std::invalid_argument("lp: rhs size mismatch");
    const std::size_t n = obj.size();
    if (lo.size() != n || up.size() != n || cols.size() != n)
        throw std::invalid_argument("lp: column array size mismatch");
    for (double b : rhs)
        if (!std::isfinite(b)) throw std::invalid_argument("lp: non-finite rhs");
    for (std::size_t j = 0; j < n; ++j) {
        if (!std::isfinite(obj[j])) throw std::invalid_argument("lp: non-finite objective");
        if (std::isnan(lo[j]) || std::isnan(up[j]) || lo[j] > up[j] + 1e-15)
            throw std::invalid_argument("lp: bad bounds");
        for (const auto& [r, v] : cols[j]) {
            if (r < 0 || r >= rows) throw std::invalid_argument("lp: entry row out of range");
            if (!std::isfinite(v)) throw std::invalid_argument("lp: non-finite entry");
        }
    }
}

namespace {
void put_num(std::ostringstream& os, double v) {
    if (v == kInf)
        os << "inf";
    else if (v == -kInf)
        os << "-inf";
    else
        os << v;
}
} // namespace

std::string LinearProgram::dump() const {
    std::ostringstream os;
    os.precision(17);
    os << "lp rows=" << rows << " cols=" << num_cols() << " sense=max\n";
    os << "obj";
    for (double c : obj) { os << ' '; put_num(os, c); }
    os << "\nrhs";
    for (double b : rhs) { os << ' '; put_num(os, b); }
    os << '\n';
    for (int j = 0; j < num_cols(); ++j) {
        os << "col " << j << " lo=";
        put_num(os, lo[j]);
        os << " up=";
        put_num(os, up[j]);
        os << " :";
        for (const auto& [r, v] : cols[j]) os << ' ' << r << ':' << v;
        os << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Bounded-variable two-phase revised simplex with an explicitly maintained
// basis inverse. Variable ids: j >= 0 structural, j < 0 artificial for row
// (-1 - j). Artificials never re-enter once nonbasic; in phase 2 they are
// fixed to zero (a basic artificial pinned at zero marks a redundant row).
// ---------------------------------------------------------------------------

struct SimplexSolver::Impl {
    enum class VS : unsigned char { Basic, Lower, Upper, Free };
    enum class LoopExit { PhaseDone, Unbounded, IterLimit, Stuck };

    LinearProgram prob;
    Options opts;
    int m = 0;

    bool have_basis = false;
    int phase = 2;
    std::vector<int> basis;       // size m
    std::vector<VS> sstat;        // per structural column
    std::vector<VS> astat;        // per row's artificial
    std::vector<double> art_sign; // per row, +-1
    std::vector<double> xs;       // structural values
    std::vector<double> xa;       // artificial values
    Eigen::MatrixXd binv;
    int since_refactor = 0;
    std::int64_t iters = 0;
    bool bland = false;
    int degen_run = 0;

    explicit Impl(LinearProgram lp_, Options o) : prob(std::move(lp_)), opts(o) {
        prob.validate();
        m = prob.rows;
        sstat.assign(prob.num_cols(), VS::Lower);
        xs.assign(prob.num_cols(), 0.0);
        astat.assign(m, VS::Lower);
        art_sign.assign(m, 1.0);
        xa.assign(m, 0.0);
        binv.resize(m, m);
    }

    // --- variable helpers ---------------------------------------------------
    bool is_art(int j) const { return j < 0; }
    int art_row(int j) const { return -1 - j; }

    double vlo(int j) const { return is_art(j) ? 0.0 : prob.lo[j]; }
    double vup(int j) const {
        if (is_art(j)) return phase == 1 ? kInf : 0.0;
        return prob.up[j];
    }
    double vcost(int j) const {
        if (phase == 1) return is_art(j) ? -1.0 : 0.0;
        return is_art(j) ? 0.0 : prob.obj[j];
    }
    double vval(int j) const { return is_art(j) ? xa[art_row(j)] : xs[j]; }
    void set_vval(int j, double v) {
        if (is_art(j))
            xa[art_row(j)] = v;
        else
            xs[j] = v;
    }
    VS vstat(int j) const { return is_art(j) ? astat[art_row(j)] : sstat[j]; }
    void set_vstat(int j, VS s) {
        if (is_art(j))
            astat[art_row(j)] = s;
        else
            sstat[j] = s;
    }
    // Bland ordering: structural columns first, artificials after.
    std::int64_t bland_key(int j) const {
        return is_art(j) ? static_cast<std::int64_t>(prob.num_cols()) + art_row(j) : j;
    }

    template <typename F> void for_entries(int j, F&& f) const {
        if (is_art(j)) {
            f(art_row(j), art_sign[art_row(j)]);
        } else {
            for (const auto& [r, v] : prob.cols[j]) f(r, v);
        }
    }

    Eigen::VectorXd ftran(int j) const {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(m);
        for_entries(j, [&](int r, double v) { w += v * binv.col(r); });
        return w;
    }

    double nonbasic_value(int j) const {
        switch (vstat(j)) {
            case VS::Lower: return vlo(j);
            case VS::Upper: return vup(j);
            default: return 0.0; // Free
        }
    }

    // --- factorization ------------------------------------------------------
    bool refactorize() {
        if (m == 0) return true;
        Eigen::MatrixXd B = Eigen::MatrixXd::Zero(m, m);
        for (int i = 0; i < m; ++i)
            for_entries(basis[i], [&](int r, double v) { B(r, i) += v; });
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
        binv = lu.inverse();
        since_refactor = 0;
        // cheap sanity probe: B * binv applied to the all-ones vector
        Eigen::VectorXd probe = B * (binv * Eigen::VectorXd::Ones(m));
        return (probe - Eigen::VectorXd::Ones(m)).cwiseAbs().maxCoeff() < 1e-6;
    }

    void recompute_basics() {
        if (m == 0) return;
        Eigen::VectorXd r = Eigen::Map<const Eigen::VectorXd>(prob.rhs.data(), m);
        for (int j = 0; j < prob.num_cols(); ++j) {
            if (sstat[j] == VS::Basic) continue;
            const double v = nonbasic_value(j);
            xs[j] = v;
            if (v != 0.0)
                for (const auto& [row, a] : prob.cols[j]) r(row) -= a * v;
        }
        for (int i = 0; i < m; ++i)
            if (astat[i] != VS::Basic) xa[i] = 0.0;
        Eigen::VectorXd xb = binv * r;
        for (int i = 0; i < m; ++i) set_vval(basis[i], xb(i));
    }

    bool basis_feasible(double tol) const {
        for (int i = 0; i < m; ++i) {
            const int j = basis[i];
            const double v = vval(j);
            if (v < vlo(j) - tol || v > vup(j) + tol) return false;
        }
        return true;
    }

    // --- cold start ----------------------------------------------------------
    void cold_start() {
        phase = 1;
        bland = false;
        degen_run = 0;
        for (int j = 0; j < prob.num_cols(); ++j) {
            if (prob.lo[j] > -kInf)
                sstat[j] = VS::Lower;
            else if (prob.up[j] < kInf)
                sstat[j] = VS::Upper;
            else
                sstat[j] = VS::Free;
            xs[j] = nonbasic_value(j);
        }
        Eigen::VectorXd r(m);
        for (int i = 0; i < m; ++i) r(i) = prob.rhs[i];
        for (int j = 0; j < prob.num_cols(); ++j)
            if (xs[j] != 0.0)
                for (const auto& [row, a] : prob.cols[j]) r(row) -= a * xs[j];
        basis.resize(m);
        binv.setZero(m, m);
        for (int i = 0; i < m; ++i) {
            art_sign[i] = (r(i) >= 0.0) ? 1.0 : -1.0;
            basis[i] = -1 - i;
            astat[i] = VS::Basic;
            xa[i] = std::abs(r(i));
            binv(i, i) = art_sign[i];
        }
        since_refactor = 0;
    }

    // --- core loop ------------------------------------------------------------
    LoopExit run_phase() {
        int tiny_pivot_retries = 0;
        int unbounded_retries = 0;
        for (;;) {
            if (iters >= opts.max_iters) return LoopExit::IterLimit;
            if (since_refactor >= opts.refactor_every) {
                if (!refactorize()) return LoopExit::Stuck;
                recompute_basics();
            }
            ++iters;

            // duals for the current phase cost
            Eigen::VectorXd cb(m);
            for (int i = 0; i < m; ++i) cb(i) = vcost(basis[i]);
            Eigen::VectorXd y = binv.transpose() * cb;

            // pricing over structural nonbasic columns
            int enter = -1;
            int dir = 0;
            double best = opts.opt_tol;
            for (int j = 0; j < prob.num_cols(); ++j) {
                const VS st = sstat[j];
                if (st == VS::Basic) continue;
                if (prob.up[j] - prob.lo[j] <= 0.0) continue; // fixed
                double d = prob.obj[j];
                if (phase == 1) d = 0.0;
                for (const auto& [r, v] : prob.cols[j]) d -= y(r) * v;
                int cand_dir = 0;
                if ((st == VS::Lower || st == VS::Free) && d > opts.opt_tol)
                    cand_dir = +1;
                else if ((st == VS::Upper || st == VS::Free) && d < -opts.opt_tol)
                    cand_dir = -1;
                if (cand_dir == 0) continue;
                if (bland) { // first eligible by index
                    enter = j;
                    dir = cand_dir;
                    break;
                }
                if (std::abs(d) > best) {
                    best = std::abs(d);
                    enter = j;
                    dir = cand_dir;
                }
            }
            if (enter < 0) return LoopExit::PhaseDone;

            Eigen::VectorXd w = ftran(enter);

            // ratio test: entering moves by dir * t, t >= 0
            const double range = vup(enter) - vlo(enter);
            double t = range; // bound-flip distance (may be inf)
            int leave = -1;
            double leave_piv = 0.0;
            int leave_target = 0; // -1 lower, +1 upper
            for (int i = 0; i < m; ++i) {
                const double rate = -dir * w(i);
                const int bj = basis[i];
                // Basic artificials only remain on redundant (or crash-pinned)
                // rows, where any feasible-space column has an exactly-zero
                // component; sub-1e-8 entries there are factorization noise
                // and would otherwise breed zero-ratio ties with tiny pivots.
                if (is_art(bj) && std::abs(rate) < 1e-8) continue;
                double ti;
                int tgt;
                if (rate > 1e-11) {
                    const double cap = vup(bj);
                    if (cap == kInf) continue;
                    ti = (cap - vval(bj)) / rate;
                    tgt = +1;
                } else if (rate < -1e-11) {
                    const double cap = vlo(bj);
                    if (cap == -kInf) continue;
                    ti = (vval(bj) - cap) / (-rate);
                    tgt = -1;
                } else {
                    continue;
                }
                if (ti < 0.0) ti = 0.0;
                bool better;
                if (ti < t - 1e-12) {
                    better = true;
                } else if (ti <= t + 1e-12 && leave >= 0) {
                    better = bland ? bland_key(bj) < bland_key(basis[leave])
                                   : std::abs(w(i)) > std::abs(leave_piv);
                } else {
                    better = false;
                }
                if (better) {
                    t = ti;
                    leave = i;
                    leave_piv = w(i);
                    leave_target = tgt;
                }
            }

            if (leave < 0) {
                if (t == kInf) {
                    // often a phantom: a numerically dependent column priced
                    // off a drifted inverse; refresh and reprice first
                    if (unbounded_retries++ < 3 && since_refactor > 0) {
                        if (!refactorize()) return LoopExit::Stuck;
                        recompute_basics();
                        --iters;
                        continue;
                    }
                    return phase == 1 ? LoopExit::Stuck : LoopExit::Unbounded;
                }
                // bound flip: entering jumps to its other bound
                const double step = dir * t;
                for (int i = 0; i < m; ++i)
                    if (w(i) != 0.0) set_vval(basis[i], vval(basis[i]) - w(i) * step);
                sstat[enter] = (dir > 0) ? VS::Upper : VS::Lower;
                xs[enter] = nonbasic_value(enter);
                degen_run = 0;
                continue;
            }

            if (std::abs(leave_piv) < 1e-8) {
                // unreliable pivot: refresh the inverse once and retry
                if (tiny_pivot_retries++ < 3 && since_refactor > 0) {
                    if (!refactorize()) return LoopExit::Stuck;
                    recompute_basics();
                    --iters;
                    continue;
                }
                if (std::abs(leave_piv) < 1e-10) return LoopExit::Stuck;
            }
            tiny_pivot_retries = 0;
            unbounded_retries = 0;

            // pivot
            const double step = dir * t;
            const double enter_val = vval(enter) + step;
            for (int i = 0; i < m; ++i)
                if (i != leave && w(i) != 0.0) set_vval(basis[i], vval(basis[i]) - w(i) * step);
            const int out = basis[leave];
            set_vval(out, leave_target > 0 ? vup(out) : vlo(out));
            set_vstat(out, leave_target > 0 ? VS::Upper : VS::Lower);
            basis[leave] = enter;
            sstat[enter] = VS::Basic;
            set_vval(enter, enter_val);

            binv.row(leave) /= leave_piv;
            for (int i = 0; i < m; ++i)
                if (i != leave && w(i) != 0.0) binv.row(i) -= w(i) * binv.row(leave);
            ++since_refactor;

            if (t <= 1e-12) {
                if (++degen_run > opts.degeneracy_threshold) bland = true;
            } else {
                degen_run = 0;
                bland = false;
            }
        }
    }

    // Pivot basic artificials out after phase 1 (or pin redundant rows).
    void drive_out_artificials() {
        for (int i = 0; i < m; ++i) {
            if (!is_art(basis[i])) continue;
            int found = -1;
            double piv = 0.0;
            for (int j = 0; j < prob.num_cols() && found < 0; ++j) {
                if (sstat[j] == VS::Basic) continue;
                double wi = 0.0;
                for (const auto& [r, v] : prob.cols[j]) wi += binv(i, r) * v;
                if (std::abs(wi) > 1e-7) {
                    found = j;
                    piv = wi;
                }
            }
            if (found < 0) continue; // redundant row; artificial stays basic at 0
            Eigen::VectorXd w = ftran(found);
            const int out = basis[i];
            set_vval(out, 0.0);
            set_vstat(out, VS::Lower);
            basis[i] = found;
            sstat[found] = VS::Basic;
            // zero-step pivot: values unchanged, only the inverse moves
            binv.row(i) /= piv;
            for (int k = 0; k < m; ++k)
                if (k != i && w(k) != 0.0) binv.row(k) -= w(k) * binv.row(i);
            ++since_refactor;
        }
    }

    Solution certify(Status status, std::string message) {
        Solution sol;
        sol.status = status;
        sol.iterations = iters;
        sol.message = std::move(message);
        sol.x.assign(prob.num_cols(), 0.0);
        sol.y.assign(m, 0.0);
        if (status != Status::Optimal && status != Status::Unbounded &&
            status != Status::Infeasible)
            return sol;
        if (!basis.empty()) {
            refactorize();
            recompute_basics();
        }
        for (int j = 0; j < prob.num_cols(); ++j) sol.x[j] = xs[j];

        if (m > 0) {
            Eigen::VectorXd cb(m);
            for (int i = 0; i < m; ++i) cb(i) = vcost(basis[i]);
            Eigen::VectorXd y = binv.transpose() * cb;
            for (int i = 0; i < m; ++i) sol.y[i] = y(i);
        }

        if (status != Status::Optimal) return sol;

        double z = 0.0;
        for (int j = 0; j < prob.num_cols(); ++j) z += prob.obj[j] * xs[j];
        sol.objective = z;

        // primal residual on the original data (basic artificials count)
        Eigen::VectorXd ax = Eigen::VectorXd::Zero(m);
        for (int j = 0; j < prob.num_cols(); ++j)
            if (xs[j] != 0.0)
                for (const auto& [r, v] : prob.cols[j]) ax(r) += v * xs[j];
        for (int i = 0; i < m; ++i)
            if (astat[i] == VS::Basic) ax(i) += art_sign[i] * xa[i];
        double pres = 0.0;
        for (int i = 0; i < m; ++i) pres = std::max(pres, std::abs(ax(i) - prob.rhs[i]));
        for (int j = 0; j < prob.num_cols(); ++j) {
            pres = std::max(pres, prob.lo[j] - xs[j]);
            pres = std::max(pres, xs[j] - prob.up[j]);
        }
        sol.primal_residual = pres;

        // dual residual + dual objective
        double dres = 0.0;
        double zdual = 0.0;
        for (int i = 0; i < m; ++i) zdual += sol.y[i] * prob.rhs[i];
        for (int j = 0; j < prob.num_cols(); ++j) {
            double d = prob.obj[j];
            for (const auto& [r, v] : prob.cols[j]) d -= sol.y[r] * v;
            switch (sstat[j]) {
                case VS::Basic: dres = std::max(dres, std::abs(d)); break;
                case VS::Lower: dres = std::max(dres, d); break;
                case VS::Upper: dres = std::max(dres, -d); break;
                case VS::Free: dres = std::max(dres, std::abs(d)); break;
            }
            if (d > opts.opt_tol) {
                if (prob.up[j] < kInf)
                    zdual += d * prob.up[j];
                else
                    dres = std::max(dres, d);
            } else if (d < -opts.opt_tol) {
                if (prob.lo[j] > -kInf)
                    zdual += d * prob.lo[j];
                else
                    dres = std::max(dres, -d);
            }
        }
        sol.dual_residual = dres;
        sol.duality_gap = std::abs(z - zdual) / (1.0 + std::abs(z));
        if (!sol.certified())
            sol.status = Status::Numerical;
        return sol;
    }

    Solution run() {
        bool warm = have_basis && static_cast<int>(basis.size()) == m;
        if (warm) {
            phase = 2;
            if (!refactorize())
                warm = false;
            else {
                recompute_basics();
                if (!basis_feasible(1e-7)) warm = false;
            }
        }
        if (!warm) {
            cold_start();
            LoopExit e = run_phase();
            if (e == LoopExit::IterLimit)
                return certify(Status::Numerical, "iteration cap exceeded in phase 1");
            if (e == LoopExit::Stuck || e == LoopExit::Unbounded)
                return certify(Status::Numerical, "phase 1 numerical failure");
            double art_sum = 0.0;
            for (int i = 0; i < m; ++i)
                if (astat[i] == VS::Basic) art_sum += std::abs(xa[i]);
            for (int i = 0; i < m; ++i)
                if (astat[i] != VS::Basic && xa[i] != 0.0) art_sum += std::abs(xa[i]);
            if (art_sum > 1e-7) {
                have_basis = false;
                return certify(Status::Infeasible, "phase 1 optimum > 0");
            }
            drive_out_artificials();
            phase = 2;
            recompute_basics();
        }
        bland = false;
        degen_run = 0;
        LoopExit e = run_phase();
        have_basis = true;
        switch (e) {
            case LoopExit::PhaseDone: return certify(Status::Optimal, "");
            case LoopExit::Unbounded: {
                have_basis = false;
                Solution s = certify(Status::Unbounded, "objective unbounded above");
                return s;
            }
            case LoopExit::IterLimit: {
                have_basis = false;
                return certify(Status::Numerical, "iteration cap exceeded");
            }
            default: {
                have_basis = false;
                return certify(Status::Numerical, "numerical failure (degenerate pivot)");
            }
        }
    }
};

SimplexSolver::SimplexSolver(LinearProgram lp, Options opts)
    : impl_(std::make_unique<Impl>(std::move(lp), opts)) {}
SimplexSolver::~SimplexSolver() = default;
SimplexSolver::SimplexSolver(SimplexSolver&&) noexcept = default;
SimplexSolver& SimplexSolver::operator=(SimplexSolver&&) noexcept = default;

int SimplexSolver::add_column(double c, double lb, double ub,
                              std::vector<std::pair<int, double>> entries) {
    for (const auto& [r, v] : entries)
        if (r < 0 || r >= impl_->prob.rows) throw std::invalid_argument("add_column: bad row");
    int j = impl_->prob.add_column(c, lb, ub, std::move(entries));
    Impl::VS st;
    if (lb > -kInf)
        st = Impl::VS::Lower;
    else if (ub < kInf)
        st = Impl::VS::Upper;
    else
        st = Impl::VS::Free;
    impl_->sstat.push_back(st);
    impl_->xs.push_back(0.0);
    impl_->xs[j] = impl_->nonbasic_value(j);
    return j;
}

void SimplexSolver::set_objective(std::vector<double> c) {
    if (static_cast<int>(c.size()) != impl_->prob.num_cols())
        throw std::invalid_argument("set_objective: size mismatch");
    impl_->prob.obj = std::move(c);
}

void SimplexSolver::set_warm_basis(const std::vector<int>& basis_vars) {
    Impl& im = *impl_;
    if (static_cast<int>(basis_vars.size()) != im.m)
        throw std::invalid_argument("set_warm_basis: need exactly one variable per row");
    std::vector<char> used_art(static_cast<std::size_t>(im.m), 0);
    std::vector<char> used_str(static_cast<std::size_t>(im.prob.num_cols()), 0);
    for (int j : basis_vars) {
        if (j < 0) {
            const int r = im.art_row(j);
            if (r >= im.m || used_art[static_cast<std::size_t>(r)])
                throw std::invalid_argument("set_warm_basis: bad or repeated artificial");
            used_art[static_cast<std::size_t>(r)] = 1;
        } else {
            if (j >= im.prob.num_cols() || used_str[static_cast<std::size_t>(j)])
                throw std::invalid_argument("set_warm_basis: bad or repeated column");
            used_str[static_cast<std::size_t>(j)] = 1;
        }
    }
    for (int j = 0; j < im.prob.num_cols(); ++j) {
        if (im.prob.lo[j] > -kInf)
            im.sstat[j] = Impl::VS::Lower;
        else if (im.prob.up[j] < kInf)
            im.sstat[j] = Impl::VS::Upper;
        else
            im.sstat[j] = Impl::VS::Free;
    }
    for (int i = 0; i < im.m; ++i) {
        im.astat[i] = Impl::VS::Lower;
        im.art_sign[i] = 1.0;
        im.xa[i] = 0.0;
    }
    im.basis.assign(basis_vars.begin(), basis_vars.end());
    for (int j : basis_vars) im.set_vstat(j, Impl::VS::Basic);
    im.have_basis = true; // validated (refactorized + feasibility-checked) inside run()
}

const LinearProgram& SimplexSolver::lp() const { return impl_->prob; }

Solution SimplexSolver::solve() { return impl_->run(); }

Solution solve(const LinearProgram& lp, const Options& opts) {
    SimplexSolver s(lp, opts);
    return s.solve();
}

double snap_dyadic(double x, int bits) {
    const double scale = std::ldexp(1.0, bits);
    return std::round(x * scale) / scale;
}

} // namespace gmnl::lp
