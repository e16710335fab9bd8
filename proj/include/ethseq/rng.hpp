#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ethseq {

// mt19937_64 with explicit value mappings. The std engine output sequence is
// pinned by the standard; the std distributions are not, so draws are mapped
// here to keep outputs identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Rejection sampling, exact.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller; caches the second value.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = u01();
        } while (u1 <= 0.0);
        u2 = u01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Normal(0, sigma) redrawn until |x| <= clip_sigmas * sigma.
    double trunc_normal(double sigma, double clip_sigmas = 2.0) {
        double x;
        do {
            x = normal() * sigma;
        } while (std::fabs(x) > clip_sigmas * sigma);
        return x;
    }

    bool bernoulli(double p) { return u01() < p; }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace ethseq
