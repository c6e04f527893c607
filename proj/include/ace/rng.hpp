#pragma once

#include <cstdint>
#include <random>

namespace ace {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seeded stream: rng for (seed, stream) pairs so batch generation is
// reproducible regardless of how work is split across threads.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0)
        : gen_(splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1))) {}

    std::mt19937_64& gen() { return gen_; }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
    double normal(double mu = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mu, sd)(gen_); }
    double exponential(double rate = 1.0) { return std::exponential_distribution<double>(rate)(gen_); }
    // uniform integer in [lo, hi] inclusive
    int64_t uniform_int(int64_t lo, int64_t hi) { return std::uniform_int_distribution<int64_t>(lo, hi)(gen_); }
    int64_t poisson(double mean) { return std::poisson_distribution<int64_t>(mean)(gen_); }
    int64_t binomial(int64_t n, double p) { return std::binomial_distribution<int64_t>(n, p)(gen_); }
    int64_t geometric_ge1(double q) {
        // number of trials to first success, support {1,2,...}
        return std::geometric_distribution<int64_t>(q)(gen_) + 1;
    }

    Rng split(uint64_t stream) {
        return Rng(gen_(), stream);
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace ace
