#include "ace/bo.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace ace::bo {

using model::Token;

std::vector<Token> BOState::context_tokens() const {
    std::vector<Token> ctx;
    ctx.reserve(ys.size());
    for (int64_t i = 0; i < n(); ++i)
        ctx.push_back(Token::context_data(
            std::vector<double>(xs.begin() + i * dim, xs.begin() + (i + 1) * dim), ys[static_cast<size_t>(i)]));
    return ctx;
}

double ts_threshold(const BOState& s, double alpha) {
    return s.y_min - alpha * std::max(1.0, s.y_max - s.y_min);
}

namespace {

// context for a partially sampled optimum: observed data, histogram priors
// for dims not yet pinned, plain value tokens for pinned dims
std::vector<Token> ts_context(const BOState& s, const std::vector<PriorHistogram>* priors,
                              const std::vector<std::pair<int64_t, double>>& pinned_dims,
                              const double* y_opt) {
    std::vector<Token> ctx = s.context_tokens();
    std::vector<bool> is_pinned(static_cast<size_t>(s.dim), false);
    for (auto [d, v] : pinned_dims) {
        ctx.push_back(Token::context_latent(d, v));
        is_pinned[static_cast<size_t>(d)] = true;
    }
    if (priors) {
        if (static_cast<int>(priors->size()) != s.dim)
            throw std::runtime_error("one optimum-location prior per dimension required");
        for (int64_t d = 0; d < s.dim; ++d)
            if (!is_pinned[static_cast<size_t>(d)])
                ctx.push_back(Token::context_prior(d, (*priors)[static_cast<size_t>(d)]));
    }
    if (y_opt) ctx.push_back(Token::context_latent(s.dim, *y_opt));
    return ctx;
}

GaussianMixture1D marginal_of(const model::Model& m, const std::vector<Token>& ctx, int64_t latent) {
    std::vector<Token> tgt = {Token::target_latent(latent)};
    auto dists = engine::predict_marginals(m, ctx, tgt);
    return std::get<GaussianMixture1D>(dists[0]);
}

}  // namespace

std::vector<double> ace_ts_propose(const BOState& s, const model::Model& m, Rng& rng, double alpha,
                                   bool condition_on_yopt,
                                   const std::vector<PriorHistogram>* xopt_priors) {
    if (s.n() < 1) throw std::runtime_error("ace_ts_propose needs at least one observation");
    if (m.cfg.n_latents() != s.dim + 1)
        throw std::runtime_error("model latents do not look like (x_opt dims, y_opt)");

    double y_opt = 0;
    bool have_y = false;
    if (condition_on_yopt) {
        double tau = ts_threshold(s, alpha);
        auto y_marginal = marginal_of(m, ts_context(s, xopt_priors, {}, nullptr), s.dim);
        y_opt = y_marginal.truncated_sample(rng, tau);
        have_y = true;
    }

    // random dimension order keeps the autoregressive chain unbiased
    std::vector<int64_t> order(static_cast<size_t>(s.dim));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.gen());

    std::vector<std::pair<int64_t, double>> pinned;
    std::vector<double> x(static_cast<size_t>(s.dim), 0.0);
    for (int64_t d : order) {
        auto ctx = ts_context(s, xopt_priors, pinned, have_y ? &y_opt : nullptr);
        auto marg = marginal_of(m, ctx, d);
        double v = std::clamp(marg.sample(rng), -1.0, 1.0);
        x[static_cast<size_t>(d)] = v;
        pinned.emplace_back(d, v);
    }
    return x;
}

std::vector<double> acep_ts_propose(const BOState& s, const model::Model& m,
                                    const std::vector<PriorHistogram>& xopt_priors, Rng& rng,
                                    double alpha) {
    return ace_ts_propose(s, m, rng, alpha, true, &xopt_priors);
}

double mes_score(const BOState& s, const model::Model& m, const double* x, Rng& rng, int n_mc,
                 const std::vector<PriorHistogram>* xopt_priors) {
    auto base_ctx = ts_context(s, xopt_priors, {}, nullptr);
    std::vector<Token> one = {Token::target_data(std::vector<double>(x, x + s.dim))};
    auto d0 = engine::predict_marginals(m, base_ctx, one);
    double h0 = std::get<GaussianMixture1D>(d0[0]).entropy_numeric();
    auto y_marginal = marginal_of(m, base_ctx, s.dim);
    double h_cond = 0;
    for (int j = 0; j < n_mc; ++j) {
        double y_opt = y_marginal.sample(rng);
        auto ctx = ts_context(s, xopt_priors, {}, &y_opt);
        auto d = engine::predict_marginals(m, ctx, one);
        h_cond += std::get<GaussianMixture1D>(d[0]).entropy_numeric();
    }
    return h0 - h_cond / static_cast<double>(n_mc);
}

std::vector<double> ace_mes_propose(const BOState& s, const model::Model& m, Rng& rng, int n_cand,
                                    double ts_ratio, int n_mc, double alpha,
                                    const std::vector<PriorHistogram>* xopt_priors,
                                    size_t* picked_index) {
    if (s.n() < 1) throw std::runtime_error("ace_mes_propose needs at least one observation");
    int n_cond = static_cast<int>(std::lround(n_cand * ts_ratio));
    std::vector<std::vector<double>> cands;
    cands.reserve(static_cast<size_t>(n_cand));
    for (int i = 0; i < n_cand; ++i)
        cands.push_back(ace_ts_propose(s, m, rng, alpha, i < n_cond, xopt_priors));

    // H[p(y*|x*, D)] for all candidates in one pass
    auto base_ctx = ts_context(s, xopt_priors, {}, nullptr);
    std::vector<Token> tgts;
    for (const auto& c : cands) tgts.push_back(Token::target_data(c));
    auto base_dists = engine::predict_marginals(m, base_ctx, tgts);

    auto y_marginal = marginal_of(m, base_ctx, s.dim);
    std::vector<double> scores(cands.size(), 0.0);
    for (size_t i = 0; i < cands.size(); ++i) {
        double h0 = std::get<GaussianMixture1D>(base_dists[i]).entropy_numeric();
        double h_cond = 0;
        for (int j = 0; j < n_mc; ++j) {
            double y_opt = y_marginal.sample(rng);
            auto ctx = ts_context(s, xopt_priors, {}, &y_opt);
            std::vector<Token> one = {Token::target_data(cands[i])};
            auto d = engine::predict_marginals(m, ctx, one);
            h_cond += std::get<GaussianMixture1D>(d[0]).entropy_numeric();
        }
        scores[i] = h0 - h_cond / static_cast<double>(n_mc);
    }
    size_t best = 0;
    for (size_t i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;  // ties keep the lowest index
    if (picked_index) *picked_index = best;
    return cands[best];
}

// ---------------------------------------------------------------------------
// GP baseline
// ---------------------------------------------------------------------------

namespace {
using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mat gram_of(const std::vector<double>& xs, int dim, const tasks::GPHyper& h, double jitter) {
    int64_t n = static_cast<int64_t>(xs.size()) / dim;
    Mat K(n, n);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j <= i; ++j) {
            double v = tasks::gp_kernel(xs.data() + i * dim, xs.data() + j * dim, dim, h);
            K(i, j) = v;
            K(j, i) = v;
        }
    K += jitter * Mat::Identity(n, n);
    return K;
}
}  // namespace

struct GpPosterior::Impl {
    Eigen::LLT<Mat> llt;
    Vec alpha;  // K^-1 (y - mean)
};

GpPosterior::GpPosterior(const BOState& s, const tasks::GPHyper& hyper)
    : dim_(s.dim), hyper_(hyper), xs_(s.xs), impl_(std::make_shared<Impl>()) {
    int64_t n = s.n();
    if (n > 0) {
        y_mean_ = std::accumulate(s.ys.begin(), s.ys.end(), 0.0) / static_cast<double>(n);
        y_centered_.resize(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) y_centered_[static_cast<size_t>(i)] = s.ys[static_cast<size_t>(i)] - y_mean_;
        impl_->llt.compute(gram_of(xs_, dim_, hyper_, 1e-6));
        if (impl_->llt.info() != Eigen::Success)
            throw std::runtime_error("GP posterior: Cholesky failed");
        impl_->alpha = impl_->llt.solve(Eigen::Map<const Vec>(y_centered_.data(), n));
    }
}

tasks::GpPrediction GpPosterior::predict(const double* x) const {
    int64_t n = static_cast<int64_t>(y_centered_.size());
    tasks::GpPrediction out;
    if (n == 0) {
        out.mean = 0.0;
        out.var = hyper_.sigma_f * hyper_.sigma_f;
        return out;
    }
    Vec k(n);
    for (int64_t i = 0; i < n; ++i) k(i) = tasks::gp_kernel(xs_.data() + i * dim_, x, dim_, hyper_);
    out.mean = y_mean_ + k.dot(impl_->alpha);
    out.var = std::max(tasks::gp_kernel(x, x, dim_, hyper_) - k.dot(impl_->llt.solve(k)), 1e-12);
    return out;
}

std::vector<double> GpPosterior::joint_sample(const std::vector<double>& cand, Rng& rng) const {
    int64_t nc = static_cast<int64_t>(cand.size()) / dim_;
    int64_t n = static_cast<int64_t>(y_centered_.size());
    Mat prior = gram_of(cand, dim_, hyper_, 1e-8);
    Vec mean = Vec::Zero(nc);
    Mat cov = prior;
    if (n > 0) {
        Mat kxc(n, nc);
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < nc; ++j)
                kxc(i, j) = tasks::gp_kernel(xs_.data() + i * dim_, cand.data() + j * dim_, dim_, hyper_);
        mean = kxc.transpose() * impl_->alpha;
        mean.array() += y_mean_;
        cov = prior - kxc.transpose() * impl_->llt.solve(kxc);
    }
    cov += 1e-8 * Mat::Identity(nc, nc);
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success) {
        cov += 1e-4 * Mat::Identity(nc, nc);
        llt.compute(cov);
        if (llt.info() != Eigen::Success) throw std::runtime_error("joint_sample: Cholesky failed");
    }
    Vec z(nc);
    for (int64_t i = 0; i < nc; ++i) z(i) = rng.normal();
    Vec draw = mean + llt.matrixL() * z;
    return std::vector<double>(draw.data(), draw.data() + nc);
}

double gp_log_marginal(const std::vector<double>& xs, const std::vector<double>& ys, int dim,
                       const tasks::GPHyper& hyper, double jitter) {
    int64_t n = static_cast<int64_t>(ys.size());
    Mat K = gram_of(xs, dim, hyper, jitter);
    Eigen::LLT<Mat> llt(K);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    Vec y = Eigen::Map<const Vec>(ys.data(), n);
    double quad = y.dot(llt.solve(y));
    double logdet = 0;
    for (int64_t i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    return -0.5 * quad - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
}

tasks::GPHyper gp_fit_ml(const BOState& s) {
    if (s.n() < 1) throw std::runtime_error("gp_fit_ml needs observations");
    double y_mean = std::accumulate(s.ys.begin(), s.ys.end(), 0.0) / static_cast<double>(s.n());
    std::vector<double> yc(s.ys);
    for (double& v : yc) v -= y_mean;

    tasks::GPHyper best;
    double best_ml = -std::numeric_limits<double>::infinity();
    for (auto kernel : {tasks::KernelType::kRBF, tasks::KernelType::kMatern52}) {
        for (int li = 0; li < 8; ++li) {
            double ls = 0.05 * std::pow(2.0 / 0.05, li / 7.0);  // log-spaced [0.05, 2]
            for (int si = 0; si < 4; ++si) {
                double sf = 0.1 + (1.0 - 0.1) * si / 3.0;
                tasks::GPHyper h{kernel, sf, std::vector<double>(static_cast<size_t>(s.dim), ls), true};
                double ml = gp_log_marginal(s.xs, yc, s.dim, h);
                if (ml > best_ml) {
                    best_ml = ml;
                    best = h;
                }
            }
        }
    }
    return best;
}

std::vector<double> gp_ts_propose(const BOState& s, Rng& rng, int n_candidates) {
    GpPosterior post(s, gp_fit_ml(s));
    std::vector<double> cand(static_cast<size_t>(n_candidates) * s.dim);
    for (auto& v : cand) v = rng.uniform(-1.0, 1.0);
    auto draw = post.joint_sample(cand, rng);
    size_t best = 0;
    for (size_t i = 1; i < draw.size(); ++i)
        if (draw[i] < draw[best]) best = i;
    return std::vector<double>(cand.begin() + static_cast<int64_t>(best) * s.dim,
                               cand.begin() + static_cast<int64_t>(best + 1) * s.dim);
}

size_t pibo_resample(const std::vector<std::vector<double>>& cands,
                     const std::function<double(const double*)>& pi, double beta_over_n, Rng& rng) {
    std::vector<double> w(cands.size());
    double total = 0;
    for (size_t i = 0; i < cands.size(); ++i) {
        w[i] = std::pow(std::max(pi(cands[i].data()), 1e-300), beta_over_n);
        total += w[i];
    }
    double u = rng.uniform() * total, acc = 0;
    for (size_t i = 0; i < w.size(); ++i) {
        acc += w[i];
        if (u <= acc) return i;
    }
    return w.size() - 1;
}

std::vector<double> pibo_ts_propose(const BOState& s, const std::function<double(const double*)>& pi,
                                    double beta, Rng& rng, int n_ts, int n_candidates) {
    GpPosterior post(s, gp_fit_ml(s));
    std::vector<double> cand(static_cast<size_t>(n_candidates) * s.dim);
    for (auto& v : cand) v = rng.uniform(-1.0, 1.0);
    // one Cholesky serves all TS draws
    std::vector<std::vector<double>> picks;
    picks.reserve(static_cast<size_t>(n_ts));
    for (int t = 0; t < n_ts; ++t) {
        auto draw = post.joint_sample(cand, rng);
        size_t best = 0;
        for (size_t i = 1; i < draw.size(); ++i)
            if (draw[i] < draw[best]) best = i;
        picks.emplace_back(cand.begin() + static_cast<int64_t>(best) * s.dim,
                           cand.begin() + static_cast<int64_t>(best + 1) * s.dim);
    }
    double beta_over_n = beta / std::max<double>(1.0, static_cast<double>(s.n()));
    return picks[pibo_resample(picks, pi, beta_over_n, rng)];
}

// ---------------------------------------------------------------------------
// shotgun optimizer
// ---------------------------------------------------------------------------

namespace {

double halton(int64_t index, int base) {
    double f = 1.0, r = 0.0;
    for (int64_t i = index; i > 0; i /= base) {
        f /= base;
        r += f * static_cast<double>(i % base);
    }
    return r;
}

}  // namespace

std::vector<double> shotgun_optimize(const std::function<double(const double*)>& score, int dim,
                                     Rng& rng, int n_coarse, int n_local, int rounds) {
    static const int bases[] = {2, 3, 5, 7, 11, 13};
    if (dim > 6) throw std::runtime_error("shotgun_optimize supports up to 6 dimensions");
    // Cranley-Patterson rotation scrambles the sequence
    std::vector<double> shift(static_cast<size_t>(dim));
    for (auto& v : shift) v = rng.uniform();

    std::vector<double> pts(static_cast<size_t>(n_coarse) * dim);
    for (int i = 0; i < n_coarse; ++i)
        for (int d = 0; d < dim; ++d) {
            double u = halton(i + 1, bases[d]) + shift[static_cast<size_t>(d)];
            u -= std::floor(u);
            pts[static_cast<size_t>(i * dim + d)] = 2.0 * u - 1.0;
        }

    std::vector<double> best_x(static_cast<size_t>(dim));
    double best_score = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_coarse; ++i) {
        double v = score(pts.data() + static_cast<int64_t>(i) * dim);
        if (v > best_score) {
            best_score = v;
            std::copy_n(pts.data() + static_cast<int64_t>(i) * dim, dim, best_x.data());
        }
    }

    // initial spread: median pairwise distance of a coarse-point sample
    std::vector<double> dists;
    for (int rep = 0; rep < 2000; ++rep) {
        int64_t a = rng.uniform_int(0, n_coarse - 1), b = rng.uniform_int(0, n_coarse - 1);
        double d2 = 0;
        for (int d = 0; d < dim; ++d) {
            double dd = pts[static_cast<size_t>(a * dim + d)] - pts[static_cast<size_t>(b * dim + d)];
            d2 += dd * dd;
        }
        dists.push_back(std::sqrt(d2));
    }
    std::nth_element(dists.begin(), dists.begin() + static_cast<int64_t>(dists.size() / 2), dists.end());
    double sigma = dists[dists.size() / 2];

    std::vector<double> x(static_cast<size_t>(dim));
    for (int round = 0; round < rounds; ++round) {
        for (int i = 0; i < n_local; ++i) {
            for (int d = 0; d < dim; ++d)
                x[static_cast<size_t>(d)] =
                    std::clamp(best_x[static_cast<size_t>(d)] + rng.normal(0.0, sigma), -1.0, 1.0);
            double v = score(x.data());
            if (v > best_score) {
                best_score = v;
                best_x = x;
            }
        }
        sigma /= 5.0;
    }
    return best_x;
}

// ---------------------------------------------------------------------------
// benchmarks
// ---------------------------------------------------------------------------

double BenchmarkFn::eval_unit(const double* u) const {
    std::vector<double> x(static_cast<size_t>(dim));
    for (int d = 0; d < dim; ++d) {
        double t = 0.5 * (u[d] + 1.0);
        x[static_cast<size_t>(d)] = lo[static_cast<size_t>(d)] +
                                    t * (hi[static_cast<size_t>(d)] - lo[static_cast<size_t>(d)]);
    }
    double v = raw(x.data());
    if (!std::isfinite(v)) throw std::runtime_error("benchmark " + name + " produced a non-finite value");
    return v;
}

namespace {

std::vector<BenchmarkFn> make_benchmarks() {
    std::vector<BenchmarkFn> out;

    BenchmarkFn gl;
    gl.name = "gramacy-lee";
    gl.dim = 1;
    gl.lo = {0.5};
    gl.hi = {2.5};
    gl.raw = [](const double* x) {
        return std::sin(10.0 * M_PI * x[0]) / (2.0 * x[0]) + std::pow(x[0] - 1.0, 4.0);
    };
    gl.y_opt = -0.86901113499;
    gl.x_opt_unit = {(0.5485634445 - 0.5) - 1.0};
    out.push_back(std::move(gl));

    auto ackley = [](int dim) {
        BenchmarkFn f;
        f.name = "ackley" + std::to_string(dim) + "d";
        f.dim = dim;
        f.lo.assign(static_cast<size_t>(dim), -32.768);
        f.hi.assign(static_cast<size_t>(dim), 32.768);
        f.raw = [dim](const double* x) {
            double sq = 0, cs = 0;
            for (int d = 0; d < dim; ++d) {
                sq += x[d] * x[d];
                cs += std::cos(2.0 * M_PI * x[d]);
            }
            return -20.0 * std::exp(-0.2 * std::sqrt(sq / dim)) - std::exp(cs / dim) + 20.0 +
                   std::exp(1.0);
        };
        f.y_opt = 0.0;
        f.x_opt_unit.assign(static_cast<size_t>(dim), 0.0);
        return f;
    };
    out.push_back(ackley(1));
    out.push_back(ackley(2));

    BenchmarkFn br;
    br.name = "branin";
    br.dim = 2;
    br.lo = {-5.0, 0.0};
    br.hi = {10.0, 15.0};
    br.raw = [](const double* x) {
        double a = 1.0, b = 5.1 / (4.0 * M_PI * M_PI), c = 5.0 / M_PI, r = 6.0, s = 10.0,
               t = 1.0 / (8.0 * M_PI);
        double u = x[1] - b * x[0] * x[0] + c * x[0] - r;
        return a * u * u + s * (1.0 - t) * std::cos(x[0]) + s;
    };
    br.y_opt = 0.3978873577;
    br.x_opt_unit = {(M_PI - (-5.0)) / 15.0 * 2.0 - 1.0, 2.275 / 15.0 * 2.0 - 1.0};
    out.push_back(std::move(br));

    BenchmarkFn h3;
    h3.name = "hartmann3";
    h3.dim = 3;
    h3.lo = {0.0, 0.0, 0.0};
    h3.hi = {1.0, 1.0, 1.0};
    h3.raw = [](const double* x) {
        static const double A[4][3] = {{3, 10, 30}, {0.1, 10, 35}, {3, 10, 30}, {0.1, 10, 35}};
        static const double P[4][3] = {{0.3689, 0.1170, 0.2673},
                                       {0.4699, 0.4387, 0.7470},
                                       {0.1091, 0.8732, 0.5547},
                                       {0.0381, 0.5743, 0.8828}};
        static const double alpha[4] = {1.0, 1.2, 3.0, 3.2};
        double acc = 0;
        for (int i = 0; i < 4; ++i) {
            double e = 0;
            for (int d = 0; d < 3; ++d) e += A[i][d] * (x[d] - P[i][d]) * (x[d] - P[i][d]);
            acc += alpha[i] * std::exp(-e);
        }
        return -acc;
    };
    h3.y_opt = -3.8627797873;
    h3.x_opt_unit = {0.11458889 * 2 - 1, 0.55564890 * 2 - 1, 0.85254699 * 2 - 1};
    out.push_back(std::move(h3));

    return out;
}

const std::vector<BenchmarkFn>& registry() {
    static const std::vector<BenchmarkFn> fns = make_benchmarks();
    return fns;
}

}  // namespace

const BenchmarkFn& benchmark(const std::string& name) {
    for (const auto& f : registry())
        if (f.name == name) return f;
    std::string names;
    for (const auto& f : registry()) names += (names.empty() ? "" : ", ") + f.name;
    throw std::runtime_error("unknown benchmark " + name + " (available: " + names + ")");
}

std::vector<std::string> benchmark_names() {
    std::vector<std::string> out;
    for (const auto& f : registry()) out.push_back(f.name);
    return out;
}

// ---------------------------------------------------------------------------
// loop
// ---------------------------------------------------------------------------

std::vector<double> random_propose(const BOState& s, Rng& rng) {
    std::vector<double> x(static_cast<size_t>(s.dim));
    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
    return x;
}

std::vector<RegretRow> run_bo(const BenchmarkFn& fn, const Proposer& propose, int iters, int n_init,
                              uint64_t seed) {
    Rng rng(seed, 0xb0);
    BOState s;
    s.dim = fn.dim;
    for (int i = 0; i < n_init; ++i) {
        auto x = random_propose(s, rng);
        s.add(x.data(), fn.eval_unit(x.data()));
    }
    std::vector<RegretRow> rows;
    rows.reserve(static_cast<size_t>(iters));
    for (int it = 0; it < iters; ++it) {
        auto x = propose(s, rng);
        for (double v : x)
            if (v < -1.0 || v > 1.0) throw std::runtime_error("proposal left the unit box");
        double y = fn.eval_unit(x.data());
        s.add(x.data(), y);
        RegretRow row;
        row.seed = seed;
        row.iter = it;
        row.x = x;
        row.y = y;
        row.best_y = s.y_min;
        row.regret = s.y_min - fn.y_opt;
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_regret_csv(const std::string& path, const std::vector<RegretRow>& rows, int dim,
                      bool append) {
    std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path);
    if (!append) {
        os << "seed,iter";
        for (int d = 0; d < dim; ++d) os << ",x" << (d + 1);
        os << ",y,best_y,regret\n";
    }
    os.precision(10);
    for (const auto& r : rows) {
        os << r.seed << "," << r.iter;
        for (double v : r.x) os << "," << v;
        os << "," << r.y << "," << r.best_y << "," << r.regret << "\n";
    }
}

}  // namespace ace::bo
