#include "ace/tasks.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace ace::tasks {

const char* kernel_name(KernelType k) {
    switch (k) {
        case KernelType::kRBF: return "rbf";
        case KernelType::kMatern12: return "matern12";
        case KernelType::kMatern32: return "matern32";
        case KernelType::kMatern52: return "matern52";
    }
    return "?";
}

double gp_kernel(const double* x, const double* xp, int dim, const GPHyper& h) {
    if (static_cast<int>(h.lengthscales.size()) != dim)
        throw std::runtime_error("gp_kernel: lengthscale count does not match dimension");
    double r2 = 0;
    for (int k = 0; k < dim; ++k) {
        double d = (x[k] - xp[k]) / h.lengthscales[static_cast<size_t>(k)];
        r2 += d * d;
    }
    double s2 = h.sigma_f * h.sigma_f;
    double r = std::sqrt(r2);
    switch (h.kernel) {
        case KernelType::kRBF: return s2 * std::exp(-0.5 * r2);
        case KernelType::kMatern12: return s2 * std::exp(-r);
        case KernelType::kMatern32: {
            double a = std::sqrt(3.0) * r;
            return s2 * (1.0 + a) * std::exp(-a);
        }
        case KernelType::kMatern52: {
            double a = std::sqrt(5.0) * r;
            return s2 * (1.0 + a + 5.0 * r2 / 3.0) * std::exp(-a);
        }
    }
    return 0;
}

namespace {

double sample_trunc_lengthscale(Rng& rng) {
    // N(1/3, 0.75) truncated to [0.05, 2]; rejection keeps the draw exact
    for (int i = 0; i < 10000; ++i) {
        double l = rng.normal(1.0 / 3.0, 0.75);
        if (l >= 0.05 && l <= 2.0) return l;
    }
    return 1.0 / 3.0;  // unreachable at ~50% acceptance
}

}  // namespace

GPHyper sample_gp_hyper(Rng& rng, int dim, HyperMode mode) {
    GPHyper h;
    if (mode == HyperMode::kGp) {
        h.kernel = static_cast<KernelType>(rng.uniform_int(0, kNumKernels - 1));
        h.isotropic = false;
    } else {
        static const double w[] = {0.35, 0.1, 0.2, 0.35};  // rbf, m12, m32, m52
        double u = rng.uniform(), acc = 0;
        h.kernel = KernelType::kMatern52;
        for (int i = 0; i < 4; ++i) {
            acc += w[i];
            if (u <= acc) {
                h.kernel = static_cast<KernelType>(i);
                break;
            }
        }
        h.isotropic = rng.uniform() < 0.5;
    }
    h.sigma_f = rng.uniform(0.1, 1.0);
    h.lengthscales.resize(static_cast<size_t>(dim));
    if (h.isotropic) {
        double l = sample_trunc_lengthscale(rng);
        std::fill(h.lengthscales.begin(), h.lengthscales.end(), l);
    } else {
        for (auto& l : h.lengthscales) l = sample_trunc_lengthscale(rng);
    }
    return h;
}

double min_value_cdf(double t, double sigma_f, int64_t n_eff) {
    double phi = normal_cdf(t / sigma_f);
    return 1.0 - std::pow(1.0 - phi, static_cast<double>(n_eff));
}

double min_value_sample(Rng& rng, double sigma_f, int64_t n_eff) {
    double u = std::clamp(rng.uniform(), 1e-12, 1.0 - 1e-12);
    double lo = -12.0 * sigma_f, hi = 12.0 * sigma_f;
    while (hi - lo > 1e-10) {
        double mid = 0.5 * (lo + hi);
        if (min_value_cdf(mid, sigma_f, n_eff) < u)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

int64_t min_value_n_eff(const GPHyper& h) {
    double prod = 1.0;
    for (double l : h.lengthscales) prod *= 2.0 / l;
    return std::clamp<int64_t>(static_cast<int64_t>(std::llround(prod)), 1, 10000);
}

// ---------------------------------------------------------------------------
// dense GP machinery (generation side, double precision)
// ---------------------------------------------------------------------------

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mat gram(const std::vector<double>& x, int dim, const GPHyper& h) {
    int64_t n = static_cast<int64_t>(x.size()) / dim;
    Mat K(n, n);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j <= i; ++j) {
            double v = gp_kernel(x.data() + i * dim, x.data() + j * dim, dim, h);
            K(i, j) = v;
            K(j, i) = v;
        }
    return K;
}

Mat cross_gram(const std::vector<double>& xa, const std::vector<double>& xb, int dim,
               const GPHyper& h) {
    int64_t na = static_cast<int64_t>(xa.size()) / dim;
    int64_t nb = static_cast<int64_t>(xb.size()) / dim;
    Mat K(na, nb);
    for (int64_t i = 0; i < na; ++i)
        for (int64_t j = 0; j < nb; ++j)
            K(i, j) = gp_kernel(xa.data() + i * dim, xb.data() + j * dim, dim, h);
    return K;
}

// jitter escalates 1e-8 -> 1e-4; failure reported to the caller for resampling
bool cholesky_jittered(const Mat& K, Eigen::LLT<Mat>& llt) {
    for (double jitter = 1e-8; jitter <= 1.0001e-4; jitter *= 10.0) {
        Mat Kj = K + jitter * Mat::Identity(K.rows(), K.cols());
        llt.compute(Kj);
        if (llt.info() == Eigen::Success) return true;
    }
    return false;
}

Vec joint_gp_draw(const Eigen::LLT<Mat>& llt, const Vec& mean, Rng& rng) {
    Vec z(mean.size());
    for (int64_t i = 0; i < mean.size(); ++i) z(i) = rng.normal();
    return mean + llt.matrixL() * z;
}

std::vector<double> uniform_box_points(Rng& rng, int64_t n, int dim) {
    std::vector<double> x(static_cast<size_t>(n * dim));
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    return x;
}

}  // namespace

// ---------------------------------------------------------------------------
// prior generative process
// ---------------------------------------------------------------------------

namespace {

PriorHistogram sample_mog_histogram(Rng& rng, double lo, double hi) {
    int64_t k = rng.geometric_ge1(0.5);
    double width = hi - lo;
    std::vector<double> mu(static_cast<size_t>(k)), sd(static_cast<size_t>(k));
    std::vector<double> w(static_cast<size_t>(k));
    auto draw_mu = [&] { return rng.uniform(lo, hi); };
    auto draw_sd = [&] { return rng.uniform(0.01 * width, 0.25 * width); };
    if (k == 1) {
        mu[0] = draw_mu();
        sd[0] = draw_sd();
    } else {
        int cfg = static_cast<int>(rng.uniform_int(0, 2));
        if (cfg == 0) {  // same means, different stds
            double m = draw_mu();
            for (auto& v : mu) v = m;
            for (auto& v : sd) v = draw_sd();
        } else if (cfg == 1) {  // different means, same stds
            double s = draw_sd();
            for (auto& v : mu) v = draw_mu();
            for (auto& v : sd) v = s;
        } else {  // all different
            for (auto& v : mu) v = draw_mu();
            for (auto& v : sd) v = draw_sd();
        }
    }
    // Dirichlet(alpha0 = 1) == normalized Exp(1) draws
    double sum = 0;
    for (auto& wi : w) {
        wi = rng.exponential(1.0);
        sum += wi;
    }
    for (auto& wi : w) wi /= sum;
    return PriorHistogram::from_gaussian_mixture(lo, hi, w, mu, sd);
}

}  // namespace

PriorHistogram sample_prior_histogram(Rng& rng, double lo, double hi) {
    if (!(lo < hi)) throw std::runtime_error("prior range needs lo < hi");
    if (rng.uniform() < 0.8) return sample_mog_histogram(rng, lo, hi);
    return PriorHistogram::uniform(lo, hi);
}

PriorHistogram sample_bo_prior_histogram(Rng& rng, double lo, double hi) {
    if (!(lo < hi)) throw std::runtime_error("prior range needs lo < hi");
    PriorHistogram base =
        rng.uniform() < 0.8 ? sample_mog_histogram(rng, lo, hi) : PriorHistogram::uniform(lo, hi);
    if (rng.uniform() < 0.5) {
        double w_unif = rng.uniform(0.0, 0.2);
        return base.mixed_with_uniform(w_unif);
    }
    return base;
}

PriorHistogram make_test_prior(Rng& rng, double center, double lo, double hi, double sd_frac) {
    double sd = sd_frac * (hi - lo);
    double mean = rng.normal(center, sd);
    auto g = PriorHistogram::from_gaussian_mixture(lo, hi, {1.0}, {mean}, {sd});
    return g.mixed_with_uniform(0.1);
}

// ---------------------------------------------------------------------------
// GP task generator
// ---------------------------------------------------------------------------

GpTaskGen::GpTaskGen(int dim, int64_t n_total, int64_t min_ctx, int64_t max_ctx, double noise_var)
    : dim_(dim), n_total_(n_total), min_ctx_(min_ctx), max_ctx_(max_ctx), noise_var_(noise_var) {
    latents_.push_back({"kernel", true, kNumKernels, 0, 0});
    latents_.push_back({"sigma_f", false, 0, 0.1, 1.0});
    for (int d = 0; d < dim; ++d)
        latents_.push_back({"lengthscale" + std::to_string(d), false, 0, 0.05, 2.0});
}

TaskInstance GpTaskGen::sample(Rng& rng, int64_t n_ctx) const {
    if (n_ctx < 1 || n_ctx >= n_total_) throw std::runtime_error("gp task: bad context size");
    GPHyper h = sample_gp_hyper(rng, dim_, HyperMode::kGp);
    int64_t m = n_total_ - n_ctx;
    TaskInstance inst;
    inst.dim = dim_;
    inst.n_ctx = n_ctx;
    for (int attempt = 0; attempt < 64; ++attempt) {
        std::vector<double> xc = uniform_box_points(rng, n_ctx, dim_);
        Mat k_ctx = gram(xc, dim_, h);
        k_ctx += noise_var_ * Mat::Identity(n_ctx, n_ctx);
        Eigen::LLT<Mat> llt;
        if (!cholesky_jittered(k_ctx, llt)) continue;  // resample inputs
        Vec yc = joint_gp_draw(llt, Vec::Zero(n_ctx), rng);

        // targets independently from the posterior given the context
        std::vector<double> xt = uniform_box_points(rng, m, dim_);
        Mat kct = cross_gram(xc, xt, dim_, h);
        Mat alpha = llt.solve(kct);
        Vec beta = llt.solve(yc);
        inst.x = xc;
        inst.x.insert(inst.x.end(), xt.begin(), xt.end());
        inst.y.assign(static_cast<size_t>(n_total_), 0.0);
        for (int64_t i = 0; i < n_ctx; ++i) inst.y[static_cast<size_t>(i)] = yc(i);
        for (int64_t j = 0; j < m; ++j) {
            double mean = kct.col(j).dot(beta);
            double var = gp_kernel(xt.data() + j * dim_, xt.data() + j * dim_, dim_, h) -
                         kct.col(j).dot(alpha.col(j)) + noise_var_;
            var = std::max(var, 1e-12);
            inst.y[static_cast<size_t>(n_ctx + j)] = rng.normal(mean, std::sqrt(var));
        }
        inst.latents.resize(latents_.size());
        inst.latents[0].id = static_cast<int64_t>(h.kernel);
        inst.latents[1].value = h.sigma_f;
        for (int d = 0; d < dim_; ++d)
            inst.latents[static_cast<size_t>(2 + d)].value = h.lengthscales[static_cast<size_t>(d)];
        inst.placement.assign(latents_.size(), Placement::kTarget);
        inst.gp = h;
        return inst;
    }
    throw std::runtime_error("gp task: Cholesky kept failing after input resampling");
}

// ---------------------------------------------------------------------------
// BO task generator
// ---------------------------------------------------------------------------

BoTaskGen::BoTaskGen(int dim, int64_t n_total, int64_t min_ctx, int64_t max_ctx, bool use_priors)
    : dim_(dim), n_total_(n_total), min_ctx_(min_ctx), max_ctx_(max_ctx), use_priors_(use_priors) {
    for (int d = 0; d < dim; ++d)
        latents_.push_back({"xopt" + std::to_string(d), false, 0, -1.0, 1.0});
    latents_.push_back({"yopt", false, 0, -5.0, 5.0});
}

TaskInstance BoTaskGen::sample(Rng& rng, int64_t n_ctx) const {
    if (n_ctx < 1 || n_ctx >= n_total_) throw std::runtime_error("bo task: bad context size");
    GPHyper h = sample_gp_hyper(rng, dim_, HyperMode::kBo);

    TaskInstance inst;
    inst.dim = dim_;
    inst.n_ctx = n_ctx;
    inst.latents.resize(latents_.size());

    // optimum location, optionally drawn from a runtime prior
    std::vector<double> xopt(static_cast<size_t>(dim_));
    for (int d = 0; d < dim_; ++d) {
        auto& ld = inst.latents[static_cast<size_t>(d)];
        if (use_priors_) {
            ld.prior = sample_bo_prior_histogram(rng, -1.0, 1.0);
            ld.value = ld.prior->sample(rng);
        } else {
            ld.value = rng.uniform(-1.0, 1.0);
        }
        xopt[static_cast<size_t>(d)] = ld.value;
    }

    // optimum value from the min-value distribution, occasionally pushed lower
    double yopt_pin = min_value_sample(rng, h.sigma_f, min_value_n_eff(h));
    if (rng.uniform() < 0.1) yopt_pin -= rng.exponential(1.0);

    int64_t m = n_total_ - n_ctx;
    for (int attempt = 0; attempt < 64; ++attempt) {
        // context jointly from the GP conditioned on the pinned observation
        std::vector<double> xc = uniform_box_points(rng, n_ctx, dim_);
        double k_oo = gp_kernel(xopt.data(), xopt.data(), dim_, h) + 1e-8;
        Mat k_co = cross_gram(xc, xopt, dim_, h);  // n_ctx x 1
        Mat cov_cc = gram(xc, dim_, h) - k_co * k_co.transpose() / k_oo;
        Vec mean_c = k_co * (yopt_pin / k_oo);
        Eigen::LLT<Mat> llt;
        if (!cholesky_jittered(cov_cc, llt)) continue;
        Vec yc = joint_gp_draw(llt, mean_c, rng);

        // targets independently given context + pinned observation
        std::vector<double> xt = uniform_box_points(rng, m, dim_);
        std::vector<double> x_aug = xc;
        x_aug.insert(x_aug.end(), xopt.begin(), xopt.end());
        Vec y_aug(n_ctx + 1);
        y_aug.head(n_ctx) = yc;
        y_aug(n_ctx) = yopt_pin;
        Eigen::LLT<Mat> llt_aug;
        if (!cholesky_jittered(gram(x_aug, dim_, h), llt_aug)) continue;
        Mat k_at = cross_gram(x_aug, xt, dim_, h);
        Mat alpha = llt_aug.solve(k_at);
        Vec beta = llt_aug.solve(y_aug);

        inst.x = xc;
        inst.x.insert(inst.x.end(), xt.begin(), xt.end());
        inst.y.assign(static_cast<size_t>(n_total_), 0.0);
        for (int64_t i = 0; i < n_ctx; ++i) inst.y[static_cast<size_t>(i)] = yc(i);
        for (int64_t j = 0; j < m; ++j) {
            double mean = k_at.col(j).dot(beta);
            double var = gp_kernel(xt.data() + j * dim_, xt.data() + j * dim_, dim_, h) -
                         k_at.col(j).dot(alpha.col(j));
            var = std::max(var, 1e-12);
            inst.y[static_cast<size_t>(n_ctx + j)] = rng.normal(mean, std::sqrt(var));
        }

        // fold about the pinned optimum plus a quadratic envelope; the fresh
        // U(-5,5) offset becomes the optimum value exactly
        double y_opt_new = rng.uniform(-5.0, 5.0);
        for (int64_t i = 0; i < n_total_; ++i) {
            double d2 = 0;
            for (int d = 0; d < dim_; ++d) {
                double dd = inst.x[static_cast<size_t>(i * dim_ + d)] - xopt[static_cast<size_t>(d)];
                d2 += dd * dd;
            }
            inst.y[static_cast<size_t>(i)] =
                bo_envelope(inst.y[static_cast<size_t>(i)] - yopt_pin, d2) + y_opt_new;
        }
        inst.latents[static_cast<size_t>(dim_)].value = y_opt_new;
        inst.placement.assign(latents_.size(), Placement::kTarget);
        inst.gp = h;
        return inst;
    }
    throw std::runtime_error("bo task: Cholesky kept failing after input resampling");
}

// ---------------------------------------------------------------------------
// Gaussian toy generator
// ---------------------------------------------------------------------------

GaussianToyGen::GaussianToyGen(int64_t n_data, int64_t min_ctx, int64_t max_ctx, bool use_priors)
    : n_data_(n_data), min_ctx_(min_ctx), max_ctx_(max_ctx), use_priors_(use_priors) {
    latents_.push_back({"mu", false, 0, kMuLo, kMuHi});
    latents_.push_back({"sigma", false, 0, kSigmaLo, kSigmaHi});
}

TaskInstance GaussianToyGen::sample(Rng& rng, int64_t n_ctx) const {
    TaskInstance inst;
    inst.dim = 1;
    inst.n_ctx = n_ctx;
    inst.latents.resize(2);
    double mu, sigma;
    if (use_priors_) {
        inst.latents[0].prior = sample_prior_histogram(rng, kMuLo, kMuHi);
        inst.latents[1].prior = sample_prior_histogram(rng, kSigmaLo, kSigmaHi);
        mu = inst.latents[0].prior->sample(rng);
        sigma = inst.latents[1].prior->sample(rng);
    } else {
        mu = rng.uniform(kMuLo, kMuHi);
        sigma = rng.uniform(kSigmaLo, kSigmaHi);
    }
    inst.latents[0].value = mu;
    inst.latents[1].value = sigma;
    inst.x.assign(static_cast<size_t>(n_data_), 0.0);  // dummy covariate
    inst.y.resize(static_cast<size_t>(n_data_));
    for (auto& v : inst.y) v = rng.normal(mu, sigma);
    inst.placement.assign(2, Placement::kTarget);
    return inst;
}

// ---------------------------------------------------------------------------
// simulators
// ---------------------------------------------------------------------------

SimOutput simulate_oup(double theta1, double theta2, Rng& rng, double noise_scale) {
    constexpr int64_t kT = 25;
    constexpr double kDt = 0.2;
    SimOutput out;
    out.theta = {theta1, theta2};
    out.t.resize(kT);
    out.y.resize(kT);
    double y = 10.0;
    double target = std::exp(theta2);
    for (int64_t t = 0; t < kT; ++t) {
        double w = rng.normal(0.0, std::sqrt(kDt));
        y = y + theta1 * (target - y) * kDt + noise_scale * w;
        out.t[static_cast<size_t>(t)] = static_cast<double>(t + 1);
        out.y[static_cast<size_t>(t)] = y;
    }
    return out;
}

SirPath sir_path(double beta, double gamma, double i0_frac, int64_t t_end) {
    SirPath p;
    p.s.resize(static_cast<size_t>(t_end + 1));
    p.i.resize(static_cast<size_t>(t_end + 1));
    p.r.resize(static_cast<size_t>(t_end + 1));
    double s = 1.0 - i0_frac, i = i0_frac, r = 0.0;
    p.s[0] = s;
    p.i[0] = i;
    p.r[0] = r;
    for (int64_t t = 1; t <= t_end; ++t) {
        // explicit Euler with dt = 1; flows capped by the source compartment
        double new_inf = std::min(beta * i * s, s);
        double new_rec = std::min(gamma * i, i);
        s -= new_inf;
        i += new_inf - new_rec;
        r += new_rec;
        p.s[static_cast<size_t>(t)] = s;
        p.i[static_cast<size_t>(t)] = i;
        p.r[static_cast<size_t>(t)] = r;
    }
    return p;
}

SimOutput simulate_sir(const std::vector<double>& theta, Rng& rng, SirVariant variant) {
    SimOutput out;
    out.theta = theta;
    if (variant == SirVariant::kMain) {
        if (theta.size() != 2) throw std::runtime_error("sir main variant takes (beta, gamma)");
        constexpr double kN = 1e6;
        constexpr int64_t kT = 160;
        constexpr int64_t kObs = 10;
        SirPath p = sir_path(theta[0], theta[1], 1.0 / kN, kT);
        for (int64_t k = 1; k <= kObs; ++k) {
            int64_t t = k * kT / kObs;
            double frac = std::clamp(p.i[static_cast<size_t>(t)], 0.0, 1.0);
            out.t.push_back(static_cast<double>(t));
            out.y.push_back(static_cast<double>(rng.binomial(1000, frac)));
        }
    } else {
        if (theta.size() != 4)
            throw std::runtime_error("sir extended variant takes (beta, gamma, phi, i0_frac)");
        constexpr int64_t kT = 250;
        constexpr int64_t kObs = 25;
        SirPath p = sir_path(theta[0], theta[1], theta[3], kT);
        for (int64_t k = 1; k <= kObs; ++k) {
            int64_t t = k * kT / kObs;
            double rate = std::max(theta[2] * p.i[static_cast<size_t>(t)], 0.0);
            out.t.push_back(static_cast<double>(t));
            out.y.push_back(static_cast<double>(rng.poisson(rate)));
        }
    }
    return out;
}

TurinRaw simulate_turin_raw(double g0, double t_rev, double nu, double sigma2_w, Rng& rng) {
    constexpr int64_t ns = kTurinNs;
    constexpr double bw = kTurinBandwidth;
    const double df = bw / static_cast<double>(ns - 1);
    const double tau_max = static_cast<double>(ns) / bw;  // unaliased delay span

    int64_t n_points = rng.poisson(nu * tau_max);
    std::vector<double> tau(static_cast<size_t>(n_points));
    for (auto& t : tau) t = rng.uniform(0.0, tau_max);

    TurinRaw raw;
    raw.n_paths = n_points;
    raw.y_re.assign(ns, 0.0);
    raw.y_im.assign(ns, 0.0);
    for (int64_t l = 0; l < n_points; ++l) {
        double var = g0 * std::exp(-tau[static_cast<size_t>(l)] / t_rev) / nu;
        double a_re = rng.normal(0.0, std::sqrt(var / 2.0));
        double a_im = rng.normal(0.0, std::sqrt(var / 2.0));
        for (int64_t k = 0; k < ns; ++k) {
            double phase = -2.0 * M_PI * df * static_cast<double>(k) * tau[static_cast<size_t>(l)];
            double c = std::cos(phase), s = std::sin(phase);
            raw.y_re[static_cast<size_t>(k)] += a_re * c - a_im * s;
            raw.y_im[static_cast<size_t>(k)] += a_re * s + a_im * c;
        }
    }
    for (int64_t k = 0; k < ns; ++k) {
        raw.y_re[static_cast<size_t>(k)] += rng.normal(0.0, std::sqrt(sigma2_w / 2.0));
        raw.y_im[static_cast<size_t>(k)] += rng.normal(0.0, std::sqrt(sigma2_w / 2.0));
    }

    // inverse DFT: y_n = (1/Ns) sum_k Y_k exp(j 2 pi k n / Ns)
    raw.ytime_re.assign(ns, 0.0);
    raw.ytime_im.assign(ns, 0.0);
    raw.out.assign(ns, 0.0);
    for (int64_t n = 0; n < ns; ++n) {
        double acc_re = 0, acc_im = 0;
        for (int64_t k = 0; k < ns; ++k) {
            double phase =
                2.0 * M_PI * static_cast<double>(k) * static_cast<double>(n) / static_cast<double>(ns);
            double c = std::cos(phase), s = std::sin(phase);
            acc_re += raw.y_re[static_cast<size_t>(k)] * c - raw.y_im[static_cast<size_t>(k)] * s;
            acc_im += raw.y_re[static_cast<size_t>(k)] * s + raw.y_im[static_cast<size_t>(k)] * c;
        }
        acc_re /= static_cast<double>(ns);
        acc_im /= static_cast<double>(ns);
        raw.ytime_re[static_cast<size_t>(n)] = acc_re;
        raw.ytime_im[static_cast<size_t>(n)] = acc_im;
        double p = acc_re * acc_re + acc_im * acc_im;
        raw.out[static_cast<size_t>(n)] = 10.0 * std::log10(std::max(p, 1e-300));
    }
    return raw;
}

SimOutput simulate_turin(double g0, double t_rev, double nu, double sigma2_w, Rng& rng) {
    TurinRaw raw = simulate_turin_raw(g0, t_rev, nu, sigma2_w, rng);
    SimOutput out;
    out.theta = {g0, t_rev, nu, sigma2_w};
    out.t.resize(raw.out.size());
    out.y = raw.out;
    for (size_t n = 0; n < raw.out.size(); ++n) out.t[n] = static_cast<double>(n);
    return out;
}

// ---------------------------------------------------------------------------
// simulator-backed task generators
// ---------------------------------------------------------------------------

namespace {

struct SimSpec {
    int64_t n_points, min_ctx, max_ctx;
    std::vector<Latent> latents;  // grid in raw units
    double t_scale;               // covariate normalization
};

SimSpec sim_spec(SimTaskGen::Kind kind) {
    using K = SimTaskGen::Kind;
    switch (kind) {
        case K::kOup:
            return {25, 10, 24, {{"theta1", false, 0, 0.0, 2.0}, {"theta2", false, 0, -2.0, 2.0}}, 25.0};
        case K::kSir:
            return {10, 5, 9, {{"beta", false, 0, 0.01, 1.5}, {"gamma", false, 0, 0.02, 0.25}}, 160.0};
        case K::kTurin:
            return {kTurinNs,
                    50,
                    kTurinNs - 1,
                    {{"g0", false, 0, 1e-9, 1e-8},
                     {"t", false, 0, 1e-9, 1e-8},
                     {"nu", false, 0, 1e7, 5e9},
                     {"sigma2w", false, 0, 1e-10, 1e-9}},
                    static_cast<double>(kTurinNs)};
    }
    throw std::runtime_error("unknown simulator kind");
}

}  // namespace

SimTaskGen::SimTaskGen(Kind kind, bool use_priors) : kind_(kind), use_priors_(use_priors) {
    SimSpec spec = sim_spec(kind);
    n_points_ = spec.n_points;
    min_ctx_ = spec.min_ctx;
    max_ctx_ = spec.max_ctx;
    // the model always sees latents on a normalized [0, 1] grid
    for (auto& l : spec.latents) latents_.push_back({l.name, false, 0, 0.0, 1.0});
    raw_latents_ = spec.latents;
}

std::string SimTaskGen::id() const {
    switch (kind_) {
        case Kind::kOup: return use_priors_ ? "oup-prior" : "oup";
        case Kind::kSir: return use_priors_ ? "sir-prior" : "sir";
        case Kind::kTurin: return use_priors_ ? "turin-prior" : "turin";
    }
    return "?";
}

double SimTaskGen::norm_value(double raw) const {
    switch (kind_) {
        case Kind::kOup: return raw / 10.0;
        case Kind::kSir: return raw / 1000.0;
        case Kind::kTurin: return (raw + 100.0) / 20.0;
    }
    return raw;
}

double SimTaskGen::raw_value(double normed) const {
    switch (kind_) {
        case Kind::kOup: return normed * 10.0;
        case Kind::kSir: return normed * 1000.0;
        case Kind::kTurin: return normed * 20.0 - 100.0;
    }
    return normed;
}

double SimTaskGen::norm_theta(size_t l, double raw) const {
    const Latent& rl = raw_latents_.at(l);
    return (raw - rl.lo) / (rl.hi - rl.lo);
}

double SimTaskGen::raw_theta(size_t l, double normed) const {
    const Latent& rl = raw_latents_.at(l);
    return rl.lo + normed * (rl.hi - rl.lo);
}

TaskInstance SimTaskGen::make_task(const std::vector<double>& raw_theta_vals, Rng& rng,
                                   int64_t n_ctx) const {
    if (raw_theta_vals.size() != raw_latents_.size())
        throw std::runtime_error("simulator parameter count mismatch");
    SimOutput sim;
    switch (kind_) {
        case Kind::kOup: sim = simulate_oup(raw_theta_vals[0], raw_theta_vals[1], rng); break;
        case Kind::kSir: sim = simulate_sir(raw_theta_vals, rng, SirVariant::kMain); break;
        case Kind::kTurin:
            sim = simulate_turin(raw_theta_vals[0], raw_theta_vals[1], raw_theta_vals[2],
                                 raw_theta_vals[3], rng);
            break;
    }
    SimSpec spec = sim_spec(kind_);
    TaskInstance inst;
    inst.dim = 1;
    inst.n_ctx = n_ctx;
    inst.x.resize(sim.y.size());
    inst.y.resize(sim.y.size());
    // random subset as context, remaining points as targets
    std::vector<int64_t> order(sim.y.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.gen());
    for (size_t i = 0; i < order.size(); ++i) {
        int64_t src = order[i];
        inst.x[i] = sim.t[static_cast<size_t>(src)] / spec.t_scale;
        inst.y[i] = norm_value(sim.y[static_cast<size_t>(src)]);
    }
    inst.latents.resize(raw_latents_.size());
    for (size_t l = 0; l < raw_latents_.size(); ++l)
        inst.latents[l].value = norm_theta(l, raw_theta_vals[l]);
    inst.placement.assign(inst.latents.size(), Placement::kTarget);
    return inst;
}

TaskInstance SimTaskGen::sample(Rng& rng, int64_t n_ctx) const {
    std::vector<double> raw(raw_latents_.size());
    std::vector<std::optional<PriorHistogram>> priors(raw_latents_.size());
    for (size_t l = 0; l < raw_latents_.size(); ++l) {
        if (use_priors_) {
            PriorHistogram p = sample_prior_histogram(rng, 0.0, 1.0);
            priors[l] = p;
            raw[l] = raw_theta(l, p.sample(rng));
        } else {
            raw[l] = rng.uniform(raw_latents_[l].lo, raw_latents_[l].hi);
        }
    }
    TaskInstance inst = make_task(raw, rng, n_ctx);
    for (size_t l = 0; l < priors.size(); ++l) inst.latents[l].prior = priors[l];
    return inst;
}

GpPrediction gp_predict(const std::vector<double>& x_ctx, const std::vector<double>& y_ctx, int dim,
                        const double* x_query, const GPHyper& h, double noise_var) {
    int64_t n = static_cast<int64_t>(y_ctx.size());
    Mat k_ctx = gram(x_ctx, dim, h);
    k_ctx += noise_var * Mat::Identity(n, n);
    Eigen::LLT<Mat> llt;
    if (!cholesky_jittered(k_ctx, llt))
        throw std::runtime_error("gp_predict: Cholesky failed after jitter escalation");
    Vec y(n);
    for (int64_t i = 0; i < n; ++i) y(i) = y_ctx[static_cast<size_t>(i)];
    Vec ks(n);
    for (int64_t i = 0; i < n; ++i)
        ks(i) = gp_kernel(x_ctx.data() + i * dim, x_query, dim, h);
    Vec alpha = llt.solve(y);
    Vec v = llt.solve(ks);
    GpPrediction out;
    out.mean = ks.dot(alpha);
    out.var = std::max(gp_kernel(x_query, x_query, dim, h) - ks.dot(v) + noise_var, 1e-12);
    return out;
}

// ---------------------------------------------------------------------------
// batch construction
// ---------------------------------------------------------------------------

void assign_latent_placement(TaskInstance& inst, bool carry_priors, Rng& rng) {
    size_t n_lat = inst.latents.size();
    inst.placement.assign(n_lat, Placement::kTarget);
    if (n_lat > 0 && rng.uniform() < 0.5) {
        int64_t n_in_ctx = rng.uniform_int(1, static_cast<int64_t>(n_lat));
        std::vector<size_t> order(n_lat);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng.gen());
        for (int64_t i = 0; i < n_in_ctx; ++i)
            inst.placement[order[static_cast<size_t>(i)]] = Placement::kContextValue;
    }
    if (carry_priors) {
        // every latent not given as a value keeps its histogram in context
        // while its true value sits in the target set
        for (size_t l = 0; l < n_lat; ++l)
            if (inst.placement[l] == Placement::kTarget && inst.latents[l].prior.has_value())
                inst.placement[l] = Placement::kContextPrior;
    }
}

namespace {

int64_t count_targets(const TaskInstance& inst) {
    int64_t n = inst.n_points() - inst.n_ctx;
    for (size_t l = 0; l < inst.latents.size(); ++l)
        if (inst.placement[l] != Placement::kContextValue) ++n;
    return n;
}

}  // namespace

Batch build_batch(const TaskGenerator& gen, const BatchConfig& cfg) {
    Batch batch;
    Rng size_rng(cfg.seed, static_cast<uint64_t>(cfg.step) * 0x10001u + 0xaceu);
    batch.n_ctx = size_rng.uniform_int(gen.min_ctx(), std::min(gen.max_ctx(), gen.total_points() - 1));
    batch.instances.reserve(static_cast<size_t>(cfg.batch_size));
    for (int64_t b = 0; b < cfg.batch_size; ++b) {
        Rng rng(cfg.seed, (static_cast<uint64_t>(cfg.step) + 1) * 0x100000ull +
                              static_cast<uint64_t>(b) + 1);
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            TaskInstance inst = gen.sample(rng, batch.n_ctx);
            assign_latent_placement(inst, gen.latents_carry_priors(), rng);
            if (count_targets(inst) > 0) {
                batch.instances.push_back(std::move(inst));
                ok = true;
            }
        }
        if (!ok) throw std::runtime_error("build_batch: could not draw an element with targets");
    }
    return batch;
}

// ---------------------------------------------------------------------------
// debug dump
// ---------------------------------------------------------------------------

void dump_task_csv(const TaskInstance& inst, const std::string& main_path,
                   const std::string& prior_path) {
    std::ofstream os(main_path);
    if (!os) throw std::runtime_error("cannot write " + main_path);
    os << "role,kind,index";
    for (int d = 0; d < inst.dim; ++d) os << ",x" << (d + 1);
    os << ",value_or_prior_id\n";
    for (int64_t i = 0; i < inst.n_points(); ++i) {
        os << (i < inst.n_ctx ? "context" : "target") << ",data," << i;
        for (int d = 0; d < inst.dim; ++d) os << "," << inst.x[static_cast<size_t>(i * inst.dim + d)];
        os << "," << inst.y[static_cast<size_t>(i)] << "\n";
    }
    std::ofstream ps(prior_path);
    if (!ps) throw std::runtime_error("cannot write " + prior_path);
    int64_t prior_id = 0;
    for (size_t l = 0; l < inst.latents.size(); ++l) {
        bool as_prior = inst.placement[l] == Placement::kContextPrior;
        const char* role = inst.placement[l] == Placement::kTarget ? "target" : "context";
        os << role << "," << (as_prior ? "prior" : "latent") << "," << l;
        for (int d = 0; d < inst.dim; ++d) os << ",";
        if (as_prior) {
            os << prior_id << "\n";
            const auto& pr = *inst.latents[l].prior;
            for (size_t b = 0; b < pr.probs.size(); ++b) ps << (b ? "," : "") << pr.probs[b];
            ps << "\n";
            ++prior_id;
        } else {
            os << inst.latents[l].value << "\n";
        }
    }
}

}  // namespace ace::tasks
