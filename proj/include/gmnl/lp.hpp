#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace gmnl::lp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Status { Optimal, Infeasible, Unbounded, Numerical };
const char* to_string(Status s);

struct Options {
    double feas_tol = 1e-9;
    double opt_tol = 1e-9;
    std::int64_t max_iters = 200000;
    int refactor_every = 100;       // pivots between inverse refactorizations
    int degeneracy_threshold = 256; // consecutive degenerate pivots before Bland's rule
};

// maximize obj.x  subject to  A x = rhs,  lo <= x <= up.
// A is stored by sparse columns; equality rows only (inequalities are
// modeled by the caller with explicit slack columns).
struct LinearProgram {
    int rows = 0;
    std::vector<double> rhs;                                 // size rows
    std::vector<double> obj, lo, up;                         // per column
    std::vector<std::vector<std::pair<int, double>>> cols;   // (row, value)

    int num_cols() const { return static_cast<int>(obj.size()); }
    // Returns the new column's index.
    int add_column(double c, double lb, double ub, std::vector<std::pair<int, double>> entries);
    void validate() const; // throws std::invalid_argument
    // Plain-text standard-form listing (for bug reports):
    //   line 1: "lp rows=<m> cols=<n> sense=max"
    //   line 2: "obj <c_0> ... <c_{n-1}>"
    //   line 3: "rhs <b_0> ... <b_{m-1}>"
    //   then per column j: "col <j> lo=<lo> up=<up> :" followed by
    //   space-separated "<row>:<value>" sparse entries. "inf"/"-inf" allowed.
    std::string dump() const;
};

struct Solution {
    Status status = Status::Numerical;
    double objective = 0.0;
    std::vector<double> x; // primal, one per column
    std::vector<double> y; // dual, one per equality row (d_j = c_j - y.A_j)
    double primal_residual = 0.0; // max |Ax - b|
    double dual_residual = 0.0;   // max reduced-cost sign violation vs variable status
    double duality_gap = 0.0;     // |primal - dual objective| / (1 + |primal|)
    std::int64_t iterations = 0;
    std::string message;

    bool certified(double primal_tol = 1e-8, double dual_tol = 1e-8,
                   double gap_tol = 1e-7) const {
        return status == Status::Optimal && primal_residual < primal_tol &&
               dual_residual < dual_tol && duality_gap < gap_tol;
    }
};

// One-shot solve with the bundled bounded-variable revised simplex
// (two-phase, Dantzig pricing, Bland fallback, explicit maintained inverse
// with periodic refactorization). Deterministic for fixed input and options.
Solution solve(const LinearProgram& lp, const Options& opts = {});

// Incremental interface: supports appending columns, swapping the objective,
// and warm-starting from the previous optimal basis. A solver instance is
// single-use (not shared across threads); independent instances run freely
// in parallel.
class SimplexSolver {
public:
    explicit SimplexSolver(LinearProgram lp, Options opts = {});
    ~SimplexSolver();
    SimplexSolver(SimplexSolver&&) noexcept;
    SimplexSolver& operator=(SimplexSolver&&) noexcept;

    int add_column(double c, double lb, double ub, std::vector<std::pair<int, double>> entries);
    void set_objective(std::vector<double> c); // size must equal num_cols()
    // Optimistic starting-basis hint: one entry per row, either a structural
    // column index (>= 0) or -1-row for that row's artificial. Malformed
    // proposals throw; singular or infeasible ones are simply discarded at
    // the next solve(), which then falls back to the usual cold start.
    void set_warm_basis(const std::vector<int>& basis_vars);
    const LinearProgram& lp() const;

    Solution solve(); // warm-starts whenever the previous basis is still feasible

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// Exact rational-arithmetic simplex (GMP), test oracle only. Requires
// rows + cols <= 2000 and finite rational data (use rationalize() to snap
// doubles to dyadic rationals first). The returned objective/x/y are exact
// values rounded once to double; message carries the exact objective.
Solution solve_exact_small(const LinearProgram& lp);

// Nearest rational with denominator 2^bits (default error <= 2^-41 < 1e-12),
// returned as an exactly-representable double pair via numerator string.
// Exposed for tests that need to rationalize LP data deterministically.
double snap_dyadic(double x, int bits = 40);

} // namespace gmnl::lp
