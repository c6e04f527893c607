#include "ace/distributions.hpp"

#include <algorithm>
#include <numeric>

namespace ace {

// Acklam's rational approximation with one Halley refinement step;
// absolute error below 1e-13 over (0, 1).
double normal_icdf(double p) {
    if (p <= 0.0 || p >= 1.0) throw std::runtime_error("normal_icdf: p must be in (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01,  -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double e = normal_cdf(x) - p;
    double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

void GaussianMixture1D::validate() const {
    if (w.size() != mu.size() || w.size() != sigma.size() || w.empty())
        throw std::runtime_error("mixture component arrays disagree");
    double s = 0;
    for (size_t i = 0; i < w.size(); ++i) {
        if (!(w[i] >= 0) || !(sigma[i] > 0) || !std::isfinite(mu[i]))
            throw std::runtime_error("invalid mixture component");
        s += w[i];
    }
    if (std::abs(s - 1.0) > 1e-6) throw std::runtime_error("mixture weights do not sum to 1");
}

double GaussianMixture1D::log_prob(double z) const {
    double mx = -std::numeric_limits<double>::infinity();
    std::vector<double> lp(w.size());
    for (size_t i = 0; i < w.size(); ++i) {
        double t = (z - mu[i]) / sigma[i];
        lp[i] = std::log(w[i] + 1e-300) - 0.5 * t * t - std::log(sigma[i]) - 0.5 * std::log(2.0 * M_PI);
        mx = std::max(mx, lp[i]);
    }
    double s = 0;
    for (double v : lp) s += std::exp(v - mx);
    return mx + std::log(s);
}

double GaussianMixture1D::cdf(double z) const {
    double s = 0;
    for (size_t i = 0; i < w.size(); ++i) s += w[i] * normal_cdf((z - mu[i]) / sigma[i]);
    return s;
}

double GaussianMixture1D::mean() const {
    double s = 0;
    for (size_t i = 0; i < w.size(); ++i) s += w[i] * mu[i];
    return s;
}

double GaussianMixture1D::variance() const {
    double m = mean(), s = 0;
    for (size_t i = 0; i < w.size(); ++i) s += w[i] * (sigma[i] * sigma[i] + (mu[i] - m) * (mu[i] - m));
    return s;
}

double GaussianMixture1D::sample(Rng& rng) const {
    double u = rng.uniform(), acc = 0;
    size_t pick = w.size() - 1;
    for (size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        if (u <= acc) {
            pick = i;
            break;
        }
    }
    return rng.normal(mu[pick], sigma[pick]);
}

double GaussianMixture1D::truncated_mass(double tau) const {
    double s = 0;
    for (size_t i = 0; i < w.size(); ++i) s += w[i] * normal_cdf((tau - mu[i]) / sigma[i]);
    return s;
}

double GaussianMixture1D::truncated_sample(Rng& rng, double tau) const {
    if (std::isinf(tau) && tau > 0) return sample(rng);
    std::vector<double> mass(w.size());
    double total = 0;
    for (size_t i = 0; i < w.size(); ++i) {
        mass[i] = w[i] * normal_cdf((tau - mu[i]) / sigma[i]);
        total += mass[i];
    }
    if (total < 1e-12) throw std::runtime_error("truncation removes all mass");
    double u = rng.uniform() * total, acc = 0;
    size_t pick = w.size() - 1;
    for (size_t i = 0; i < w.size(); ++i) {
        acc += mass[i];
        if (u <= acc) {
            pick = i;
            break;
        }
    }
    double alpha = normal_cdf((tau - mu[pick]) / sigma[pick]);
    double q = rng.uniform() * alpha;
    q = std::clamp(q, 1e-300, 1.0 - 1e-16);
    return mu[pick] + sigma[pick] * normal_icdf(q);
}

double GaussianMixture1D::entropy_numeric(int grid_points) const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < w.size(); ++i) {
        lo = std::min(lo, mu[i] - 6.0 * sigma[i]);
        hi = std::max(hi, mu[i] + 6.0 * sigma[i]);
    }
    double h = (hi - lo) / static_cast<double>(grid_points - 1);
    double acc = 0;
    for (int i = 0; i < grid_points; ++i) {
        double x = lo + h * i;
        double p = pdf(x);
        double f = p > 0 ? -p * std::log(p) : 0.0;
        acc += (i == 0 || i == grid_points - 1) ? 0.5 * f : f;
    }
    return acc * h;
}

void Categorical1D::validate() const {
    if (p.empty()) throw std::runtime_error("empty categorical");
    double s = 0;
    for (double v : p) {
        if (!(v >= 0)) throw std::runtime_error("negative categorical probability");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-6) throw std::runtime_error("categorical does not sum to 1");
}

double Categorical1D::log_prob(int64_t id) const {
    if (id < 0 || id >= static_cast<int64_t>(p.size()))
        throw std::runtime_error("categorical id out of range");
    return std::log(p[static_cast<size_t>(id)] + 1e-300);
}

int64_t Categorical1D::sample(Rng& rng) const {
    double u = rng.uniform(), acc = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u <= acc) return static_cast<int64_t>(i);
    }
    return static_cast<int64_t>(p.size()) - 1;
}

void PriorHistogram::validate() const {
    if (!(lo < hi)) throw std::runtime_error("prior histogram needs lo < hi");
    if (probs.size() != kPriorBins) throw std::runtime_error("prior histogram must have 100 bins");
    double s = 0;
    for (double v : probs) {
        if (!(v >= 0)) throw std::runtime_error("negative prior bin");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw std::runtime_error("prior histogram does not sum to 1");
}

double PriorHistogram::pdf(double x) const {
    if (x < lo || x >= hi) return 0.0;
    size_t b = static_cast<size_t>((x - lo) / bin_width());
    b = std::min(b, probs.size() - 1);
    return probs[b] / bin_width();
}

double PriorHistogram::sample(Rng& rng) const {
    double u = rng.uniform(), acc = 0;
    size_t pick = probs.size() - 1;
    for (size_t b = 0; b < probs.size(); ++b) {
        acc += probs[b];
        if (u <= acc) {
            pick = b;
            break;
        }
    }
    double w = bin_width();
    return lo + (static_cast<double>(pick) + rng.uniform()) * w;
}

double PriorHistogram::mean() const {
    double s = 0;
    for (size_t b = 0; b < probs.size(); ++b) s += probs[b] * bin_center(b);
    return s;
}

PriorHistogram PriorHistogram::uniform(double lo, double hi) {
    PriorHistogram p;
    p.lo = lo;
    p.hi = hi;
    p.probs.assign(kPriorBins, 1.0 / kPriorBins);
    return p;
}

PriorHistogram PriorHistogram::from_gaussian_mixture(double lo, double hi, const std::vector<double>& w,
                                                     const std::vector<double>& mu,
                                                     const std::vector<double>& sigma) {
    PriorHistogram p;
    p.lo = lo;
    p.hi = hi;
    p.probs.assign(kPriorBins, 0.0);
    double bw = (hi - lo) / kPriorBins;
    for (size_t c = 0; c < w.size(); ++c) {
        double prev = normal_cdf((lo - mu[c]) / sigma[c]);
        for (int b = 0; b < kPriorBins; ++b) {
            double edge = lo + bw * (b + 1);
            double cur = normal_cdf((edge - mu[c]) / sigma[c]);
            p.probs[static_cast<size_t>(b)] += w[c] * (cur - prev);
            prev = cur;
        }
    }
    double s = std::accumulate(p.probs.begin(), p.probs.end(), 0.0);
    if (s <= 0) return uniform(lo, hi);  // all mass outside the grid
    for (double& v : p.probs) v /= s;
    return p;
}

PriorHistogram PriorHistogram::mixed_with_uniform(double w_unif) const {
    PriorHistogram out = *this;
    double u = w_unif / static_cast<double>(probs.size());
    for (double& v : out.probs) v = u + (1.0 - w_unif) * v;
    return out;
}

}  // namespace ace
