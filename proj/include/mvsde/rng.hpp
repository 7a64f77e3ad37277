#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace mvsde {

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based random stream. A stream is fully determined by (seed, stream id),
/// so replica i can own RngStream(seed, i) and results do not depend on scheduling.
/// Draws are reproducible bit-for-bit across platforms; no std:: distributions are
/// used because their algorithms are implementation-defined.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
        : state_(mix64(mix64(seed ^ 0x8c95d3a1f0b4e672ULL) ^ mix64(stream))) {}

    /// Derive an independent child stream, e.g. one per replica index.
    RngStream split(std::uint64_t index) const {
        RngStream r(0, 0);
        r.state_ = mix64(state_ ^ mix64(index ^ 0xa02cbe8f6a93d417ULL));
        return r;
    }

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform on the open interval (0,1); never returns 0 or 1, safe under log().
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; the paired draw is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Poisson count, exact in law: Knuth's product method for small means,
    /// recursive halving (sum of independent Poissons) above it so the
    /// exp(-mean) factor never underflows.
    long poisson(double mean) {
        if (!(mean > 0.0)) return 0;
        if (!(mean < 1e9)) throw std::invalid_argument("poisson: mean out of range");
        if (mean > 60.0) return poisson(mean * 0.5) + poisson(mean * 0.5);
        const double limit = std::exp(-mean);
        double prod = 1.0;
        long k = -1;
        do {
            ++k;
            prod *= uniform();
        } while (prod > limit);
        return k;
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace mvsde
