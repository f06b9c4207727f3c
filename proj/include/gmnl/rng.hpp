#pragma once

#include <cmath>
#include <cstdint>

namespace gmnl {

// Deterministic per-sample random stream. Streams are derived from a base
// seed and a stream index (sample counter), so a run partitioned across any
// number of workers visits exactly the same random sequence per sample.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id) {
        // SplitMix64 over (seed, stream_id) to decorrelate nearby ids.
        state_ = mix(seed + 0x9e3779b97f4a7c15ULL * (stream_id + 1));
        state_ = mix(state_ ^ (stream_id + 0xbf58476d1ce4e5b9ULL));
        if (state_ == 0) state_ = 0x4d595df4d0f33173ULL;
    }

    std::uint64_t next_u64() {
        // xorshift64* on a SplitMix64-initialized state
        std::uint64_t x = state_;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        state_ = x;
        return x * 0x2545f4914f6cdd1dULL;
    }

    // uniform in [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal, Marsaglia polar method
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

    // uniform direction on the unit 2-sphere
    void unit_sphere(double out[3]) {
        const double z = 2.0 * uniform() - 1.0;
        const double phi = 2.0 * M_PI * uniform();
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        out[0] = r * std::cos(phi);
        out[1] = r * std::sin(phi);
        out[2] = z;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

} // namespace gmnl
