#include "gmnl/lp.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include <gmpxx.h>

// Exact rational mirror of the floating solver: bounded-variable two-phase
// simplex with a dense maintained inverse, Bland's rule throughout (finite
// termination), exact zero tests. Test oracle only; not performance-tuned.

namespace gmnl::lp {

namespace {

struct Bound {
    bool inf = false;  // true: unbounded on this side
    mpq_class v = 0;
};

struct ExactSimplex {
    int m, n;                // rows, structural columns
    std::vector<std::vector<std::pair<int, mpq_class>>> cols;
    std::vector<mpq_class> rhs, obj;
    std::vector<Bound> lo, up;

    int phase = 1;
    std::vector<int> basis;  // j >= 0 structural, j < 0 artificial for row -1-j
    enum class VS : unsigned char { Basic, Lower, Upper, Free };
    std::vector<VS> sstat, astat;
    std::vector<mpq_class> xs, xa;
    std::vector<int> art_sign;
    std::vector<std::vector<mpq_class>> binv; // m x m

    explicit ExactSimplex(const LinearProgram& lp) {
        m = lp.rows;
        n = lp.num_cols();
        cols.resize(n);
        for (int j = 0; j < n; ++j)
            for (auto& [r, v] : lp.cols[j]) cols[j].emplace_back(r, mpq_class(v));
        rhs.reserve(m);
        for (double b : lp.rhs) rhs.emplace_back(b);
        obj.reserve(n);
        for (double c : lp.obj) obj.emplace_back(c);
        lo.resize(n);
        up.resize(n);
        for (int j = 0; j < n; ++j) {
            if (lp.lo[j] == -kInf)
                lo[j].inf = true;
            else
                lo[j].v = mpq_class(lp.lo[j]);
            if (lp.up[j] == kInf)
                up[j].inf = true;
            else
                up[j].v = mpq_class(lp.up[j]);
        }
        sstat.assign(n, VS::Lower);
        astat.assign(m, VS::Basic);
        xs.assign(n, 0);
        xa.assign(m, 0);
        art_sign.assign(m, 1);
    }

    bool is_art(int j) const { return j < 0; }
    int art_row(int j) const { return -1 - j; }

    Bound vlo(int j) const { return is_art(j) ? Bound{false, 0} : lo[j]; }
    Bound vup(int j) const {
        if (is_art(j)) return phase == 1 ? Bound{true, 0} : Bound{false, 0};
        return up[j];
    }
    mpq_class vcost(int j) const {
        if (phase == 1) return is_art(j) ? mpq_class(-1) : mpq_class(0);
        return is_art(j) ? mpq_class(0) : obj[j];
    }
    mpq_class vval(int j) const { return is_art(j) ? xa[art_row(j)] : xs[j]; }
    void set_vval(int j, const mpq_class& v) {
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
    long bland_key(int j) const { return is_art(j) ? n + art_row(j) : j; }

    std::vector<mpq_class> ftran(int j) const {
        std::vector<mpq_class> w(m, 0);
        if (is_art(j)) {
            const int r = art_row(j);
            for (int i = 0; i < m; ++i) w[i] = art_sign[r] * binv[i][r];
        } else {
            for (const auto& [r, v] : cols[j])
                for (int i = 0; i < m; ++i) w[i] += v * binv[i][r];
        }
        return w;
    }

    mpq_class nonbasic_value(int j) const {
        switch (vstat(j)) {
            case VS::Lower: return vlo(j).v;
            case VS::Upper: return vup(j).v;
            default: return 0;
        }
    }

    void cold_start() {
        for (int j = 0; j < n; ++j) {
            if (!lo[j].inf)
                sstat[j] = VS::Lower;
            else if (!up[j].inf)
                sstat[j] = VS::Upper;
            else
                sstat[j] = VS::Free;
            xs[j] = nonbasic_value(j);
        }
        std::vector<mpq_class> r = rhs;
        for (int j = 0; j < n; ++j)
            if (xs[j] != 0)
                for (const auto& [row, a] : cols[j]) r[row] -= a * xs[j];
        basis.resize(m);
        binv.assign(m, std::vector<mpq_class>(m, 0));
        for (int i = 0; i < m; ++i) {
            art_sign[i] = (r[i] >= 0) ? 1 : -1;
            basis[i] = -1 - i;
            astat[i] = VS::Basic;
            xa[i] = art_sign[i] * r[i];
            binv[i][i] = art_sign[i];
        }
    }

    // returns: 0 phase done, 1 unbounded, 2 iteration cap
    int run_phase() {
        for (long iter = 0; iter < 10'000'000; ++iter) {
            std::vector<mpq_class> y(m, 0);
            for (int i = 0; i < m; ++i) {
                const mpq_class cb = vcost(basis[i]);
                if (cb != 0)
                    for (int r = 0; r < m; ++r) y[r] += cb * binv[i][r];
            }
            int enter = -1, dir = 0;
            for (int j = 0; j < n; ++j) { // Bland: first eligible
                const VS st = sstat[j];
                if (st == VS::Basic) continue;
                if (!lo[j].inf && !up[j].inf && lo[j].v == up[j].v) continue;
                mpq_class d = (phase == 1) ? mpq_class(0) : obj[j];
                for (const auto& [r, v] : cols[j]) d -= y[r] * v;
                if ((st == VS::Lower || st == VS::Free) && d > 0) {
                    enter = j;
                    dir = +1;
                    break;
                }
                if ((st == VS::Upper || st == VS::Free) && d < 0) {
                    enter = j;
                    dir = -1;
                    break;
                }
            }
            if (enter < 0) return 0;

            std::vector<mpq_class> w = ftran(enter);

            bool t_inf = true;
            mpq_class t = 0;
            const Bound elo = vlo(enter), eup = vup(enter);
            if (!elo.inf && !eup.inf) {
                t = eup.v - elo.v;
                t_inf = false;
            }
            int leave = -1, leave_target = 0;
            for (int i = 0; i < m; ++i) {
                if (w[i] == 0) continue;
                const mpq_class rate = -dir * w[i];
                const int bj = basis[i];
                mpq_class ti;
                int tgt;
                if (rate > 0) {
                    const Bound cap = vup(bj);
                    if (cap.inf) continue;
                    ti = (cap.v - vval(bj)) / rate;
                    tgt = +1;
                } else {
                    const Bound cap = vlo(bj);
                    if (cap.inf) continue;
                    ti = (vval(bj) - cap.v) / (-rate);
                    tgt = -1;
                }
                if (ti < 0) ti = 0;
                bool better = t_inf || ti < t ||
                              (ti == t && leave >= 0 &&
                               bland_key(bj) < bland_key(basis[leave]));
                if (better) {
                    t_inf = false;
                    t = ti;
                    leave = i;
                    leave_target = tgt;
                }
            }
            if (t_inf) return phase == 1 ? 2 : 1;

            const mpq_class step = dir * t;
            if (leave < 0) { // bound flip
                for (int i = 0; i < m; ++i)
                    if (w[i] != 0) set_vval(basis[i], vval(basis[i]) - w[i] * step);
                sstat[enter] = (dir > 0) ? VS::Upper : VS::Lower;
                xs[enter] = nonbasic_value(enter);
                continue;
            }

            const mpq_class enter_val = vval(enter) + step;
            for (int i = 0; i < m; ++i)
                if (i != leave && w[i] != 0) set_vval(basis[i], vval(basis[i]) - w[i] * step);
            const int out = basis[leave];
            set_vval(out, leave_target > 0 ? vup(out).v : vlo(out).v);
            set_vstat(out, leave_target > 0 ? VS::Upper : VS::Lower);
            basis[leave] = enter;
            sstat[enter] = VS::Basic;
            set_vval(enter, enter_val);

            const mpq_class piv = w[leave];
            for (int r = 0; r < m; ++r) binv[leave][r] /= piv;
            for (int i = 0; i < m; ++i) {
                if (i == leave || w[i] == 0) continue;
                for (int r = 0; r < m; ++r) binv[i][r] -= w[i] * binv[leave][r];
            }
        }
        return 2;
    }

    void drive_out_artificials() {
        for (int i = 0; i < m; ++i) {
            if (!is_art(basis[i])) continue;
            int found = -1;
            for (int j = 0; j < n && found < 0; ++j) {
                if (sstat[j] == VS::Basic) continue;
                mpq_class wi = 0;
                for (const auto& [r, v] : cols[j]) wi += binv[i][r] * v;
                if (wi != 0) found = j;
            }
            if (found < 0) continue;
            std::vector<mpq_class> w = ftran(found);
            set_vstat(basis[i], VS::Lower);
            set_vval(basis[i], 0);
            basis[i] = found;
            sstat[found] = VS::Basic;
            const mpq_class piv = w[i];
            for (int r = 0; r < m; ++r) binv[i][r] /= piv;
            for (int k = 0; k < m; ++k) {
                if (k == i || w[k] == 0) continue;
                for (int r = 0; r < m; ++r) binv[k][r] -= w[k] * binv[i][r];
            }
        }
    }

    Solution run() {
        Solution sol;
        cold_start();
        phase = 1;
        int e = run_phase();
        if (e != 0) {
            sol.status = Status::Numerical;
            sol.message = "exact phase 1 failed";
            return sol;
        }
        mpq_class art_sum = 0;
        for (int i = 0; i < m; ++i)
            if (astat[i] == VS::Basic) art_sum += xa[i];
        if (art_sum != 0) {
            sol.status = Status::Infeasible;
            sol.message = "exact: phase 1 optimum > 0";
            return sol;
        }
        drive_out_artificials();
        phase = 2;
        e = run_phase();
        if (e == 1) {
            sol.status = Status::Unbounded;
            sol.message = "exact: unbounded";
            return sol;
        }
        if (e != 0) {
            sol.status = Status::Numerical;
            sol.message = "exact: iteration cap";
            return sol;
        }
        mpq_class z = 0;
        for (int j = 0; j < n; ++j) z += obj[j] * xs[j];
        sol.status = Status::Optimal;
        sol.objective = z.get_d();
        sol.x.resize(n);
        for (int j = 0; j < n; ++j) sol.x[j] = xs[j].get_d();
        std::vector<mpq_class> y(m, 0);
        for (int i = 0; i < m; ++i) {
            const mpq_class cb = vcost(basis[i]);
            if (cb != 0)
                for (int r = 0; r < m; ++r) y[r] += cb * binv[i][r];
        }
        sol.y.resize(m);
        for (int i = 0; i < m; ++i) sol.y[i] = y[i].get_d();
        sol.message = "exact objective = " + z.get_str();
        return sol;
    }
};

} // namespace

Solution solve_exact_small(const LinearProgram& lp) {
    lp.validate();
    if (lp.num_cols() > 2000 || lp.rows > 2000)
        throw std::invalid_argument("solve_exact_small: size exceeds 2000");
    ExactSimplex ex(lp);
    return ex.run();
}

} // namespace gmnl::lp
