#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace gmnl {

// Structural tolerance (normalization, orthogonality) and algebraic
// tolerance (exact identities in double precision), used project-wide.
inline constexpr double kStructTol = 1e-10;
inline constexpr double kAlgebraTol = 1e-12;

// Tripartite Bell scenario: 3 parties, m settings each, d outcomes each.
struct Scenario {
    int m = 2;
    int d = 2;

    bool operator==(const Scenario&) const = default;

    std::size_t num_entries() const {
        const std::size_t mm = static_cast<std::size_t>(m);
        const std::size_t dd = static_cast<std::size_t>(d);
        return mm * mm * mm * dd * dd * dd;
    }
    std::size_t num_inputs() const {
        const std::size_t mm = static_cast<std::size_t>(m);
        return mm * mm * mm;
    }
    std::size_t num_outcomes() const {
        const std::size_t dd = static_cast<std::size_t>(d);
        return dd * dd * dd;
    }
    void validate() const; // throws std::invalid_argument
};

// Full conditional-probability table P(a,b,c|x,y,z), stored flat in
// lexicographic (x,y,z,a,b,c) order with x slowest. This is the canonical
// column order used for LP data and inequality coefficients.
class Behavior {
public:
    Behavior() = default;
    Behavior(Scenario sc, std::vector<double> data);
    static Behavior zeros(Scenario sc);

    const Scenario& scenario() const { return sc_; }
    const std::vector<double>& data() const { return p_; }
    std::vector<double>& data() { return p_; }
    std::size_t size() const { return p_.size(); }

    std::size_t index(int x, int y, int z, int a, int b, int c) const {
        const std::size_t m = static_cast<std::size_t>(sc_.m);
        const std::size_t d = static_cast<std::size_t>(sc_.d);
        return (((static_cast<std::size_t>(x) * m + y) * m + z) * d * d * d) +
               (static_cast<std::size_t>(a) * d + b) * d + c;
    }
    double at(int x, int y, int z, int a, int b, int c) const {
        return p_[index(x, y, z, a, b, c)];
    }
    double& at(int x, int y, int z, int a, int b, int c) {
        return p_[index(x, y, z, a, b, c)];
    }

    // Clamps negatives in [-1e-12, 0) to zero; throws on anything below,
    // or if some (x,y,z) slice is not normalized within 1e-10.
    void validate();

    // Max |slice sum - 1| over inputs, without modifying anything.
    double max_normalization_error() const;

    std::string to_json() const;
    static Behavior from_json(const std::string& text);

private:
    Scenario sc_;
    std::vector<double> p_;
};

// Uniform behavior: every entry 1/d^3.
Behavior isotropic(Scenario sc);

// Pointwise convex mixture v*p + (1-v)*isotropic. v must be in [0,1].
Behavior mix(const Behavior& p, double v);

// Marginal-consistency diagnostics. For each party, the maximum absolute
// difference of its co-marginal when that party's input changes.
struct NoSignalingReport {
    double max_violation_party[3] = {0, 0, 0};
    double max_violation = 0;
    bool signaling = false; // max_violation > 1e-8

    std::string to_string() const;
};

NoSignalingReport no_signaling_report(const Behavior& p);

} // namespace gmnl
