#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ace/rng.hpp"

namespace ace {

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
double normal_icdf(double p);  // inverse standard normal CDF

// 1D Gaussian mixture emitted per continuous target slot.
struct GaussianMixture1D {
    std::vector<double> w;      // simplex
    std::vector<double> mu;
    std::vector<double> sigma;  // > 0

    size_t k() const { return w.size(); }
    void validate() const;

    double log_prob(double z) const;      // log-sum-exp over components
    double pdf(double z) const { return std::exp(log_prob(z)); }
    double cdf(double z) const;
    double mean() const;
    double variance() const;

    double sample(Rng& rng) const;
    // sample conditioned on value <= tau; per-component mass renormalized,
    // value drawn by inverse CDF of the truncated normal
    double truncated_sample(Rng& rng, double tau) const;
    double truncated_mass(double tau) const;

    // -int p log p by trapezoid rule on a uniform grid spanning
    // [min_k(mu_k - 6 sigma_k), max_k(mu_k + 6 sigma_k)]
    double entropy_numeric(int grid_points = 512) const;
};

// softmax categorical over discrete values
struct Categorical1D {
    std::vector<double> p;

    void validate() const;
    double log_prob(int64_t id) const;
    int64_t sample(Rng& rng) const;
};

// Normalized probability vector over a fixed uniform grid for one latent.
struct PriorHistogram {
    double lo = 0.0, hi = 1.0;
    std::vector<double> probs;  // kPriorBins entries summing to 1

    static constexpr int kPriorBins = 100;

    void validate() const;
    double bin_width() const { return (hi - lo) / static_cast<double>(probs.size()); }
    double bin_center(size_t b) const { return lo + (static_cast<double>(b) + 0.5) * bin_width(); }
    // piecewise-constant density
    double pdf(double x) const;
    double sample(Rng& rng) const;
    double mean() const;

    static PriorHistogram uniform(double lo, double hi);
    // bin a Gaussian mixture by CDF differences at bin edges, then renormalize
    static PriorHistogram from_gaussian_mixture(double lo, double hi, const std::vector<double>& w,
                                                const std::vector<double>& mu,
                                                const std::vector<double>& sigma);
    // p = w_unif * uniform + (1 - w_unif) * this
    PriorHistogram mixed_with_uniform(double w_unif) const;
};

}  // namespace ace
