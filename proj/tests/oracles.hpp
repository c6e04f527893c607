#pragma once

// Independent reference computations used by the unit and acceptance suites.
// Everything here is deliberately brute-force.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "ace/distributions.hpp"

namespace ace::testing {

inline double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double var_of(const std::vector<double>& v) {
    double m = mean_of(v), s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

// two-sided KS statistic of samples against a CDF
inline double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
    std::sort(samples.begin(), samples.end());
    double n = static_cast<double>(samples.size());
    double d = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
        double f = cdf(samples[i]);
        d = std::max(d, std::abs(f - static_cast<double>(i) / n));
        d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
    }
    return d;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = mean_of(a), mb = mean_of(b);
    double num = 0, da = 0, db = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma) * (a[i] - ma);
        db += (b[i] - mb) * (b[i] - mb);
    }
    return num / std::sqrt(da * db);
}

inline std::vector<double> ranks_of(const std::vector<double>& v) {
    std::vector<size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t i, size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (size_t k = 0; k < idx.size(); ++k) r[idx[k]] = static_cast<double>(k);
    return r;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    return pearson(ranks_of(a), ranks_of(b));
}

// Exact grid posterior for the 1D Gaussian toy problem:
// p(mu, sigma | D) ∝ prior_mu(mu) prior_sigma(sigma) prod_i N(y_i; mu, sigma^2)
// evaluated on the 100 x 100 grid of the two prior histograms.
struct GridPosterior {
    std::vector<double> mu_centers, sigma_centers;
    std::vector<double> joint;  // row-major over (mu, sigma), sums to 1
    double mu_mean = 0, mu_sd = 0, sigma_mean = 0, sigma_sd = 0;
};

inline GridPosterior toy_grid_posterior(const std::vector<double>& data,
                                        const ace::PriorHistogram& prior_mu,
                                        const ace::PriorHistogram& prior_sigma) {
    const size_t nb = prior_mu.probs.size();
    GridPosterior out;
    out.mu_centers.resize(nb);
    out.sigma_centers.resize(nb);
    for (size_t b = 0; b < nb; ++b) {
        out.mu_centers[b] = prior_mu.bin_center(b);
        out.sigma_centers[b] = prior_sigma.bin_center(b);
    }
    out.joint.assign(nb * nb, 0.0);
    std::vector<double> logpost(nb * nb, 0.0);
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < nb; ++i) {
        double mu = out.mu_centers[i];
        double lp_mu = std::log(prior_mu.probs[i] + 1e-300);
        for (size_t j = 0; j < nb; ++j) {
            double sd = out.sigma_centers[j];
            double lp = lp_mu + std::log(prior_sigma.probs[j] + 1e-300);
            double inv2 = 1.0 / (2.0 * sd * sd);
            for (double y : data) lp += -(y - mu) * (y - mu) * inv2 - std::log(sd);
            lp -= 0.5 * std::log(2.0 * M_PI) * static_cast<double>(data.size());
            logpost[i * nb + j] = lp;
            mx = std::max(mx, lp);
        }
    }
    double z = 0;
    for (size_t k = 0; k < logpost.size(); ++k) {
        out.joint[k] = std::exp(logpost[k] - mx);
        z += out.joint[k];
    }
    for (double& v : out.joint) v /= z;
    double m1 = 0, m2 = 0, s1 = 0, s2 = 0;
    for (size_t i = 0; i < nb; ++i)
        for (size_t j = 0; j < nb; ++j) {
            double p = out.joint[i * nb + j];
            m1 += p * out.mu_centers[i];
            s1 += p * out.sigma_centers[j];
        }
    for (size_t i = 0; i < nb; ++i)
        for (size_t j = 0; j < nb; ++j) {
            double p = out.joint[i * nb + j];
            m2 += p * (out.mu_centers[i] - m1) * (out.mu_centers[i] - m1);
            s2 += p * (out.sigma_centers[j] - s1) * (out.sigma_centers[j] - s1);
        }
    out.mu_mean = m1;
    out.sigma_mean = s1;
    out.mu_sd = std::sqrt(m2);
    out.sigma_sd = std::sqrt(s2);
    return out;
}

// marginal over mu (sums the joint across sigma)
inline std::vector<double> toy_mu_marginal(const GridPosterior& gp) {
    size_t nb = gp.mu_centers.size();
    std::vector<double> m(nb, 0.0);
    for (size_t i = 0; i < nb; ++i)
        for (size_t j = 0; j < nb; ++j) m[i] += gp.joint[i * nb + j];
    return m;
}

}  // namespace ace::testing
