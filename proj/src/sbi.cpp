#include "ace/sbi.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ace::sbi {

double rmse_metric(const std::vector<std::vector<double>>& truths,
                   const std::vector<std::vector<std::vector<double>>>& samples) {
    if (truths.size() != samples.size() || truths.empty())
        throw std::runtime_error("rmse_metric: one sample set per observation required");
    double acc = 0;
    for (size_t i = 0; i < truths.size(); ++i) {
        size_t L = truths[i].size();
        size_t n_post = samples[i].size();
        if (n_post == 0) throw std::runtime_error("rmse_metric: empty sample set");
        double sq = 0;
        for (size_t j = 0; j < n_post; ++j) {
            if (samples[i][j].size() != L) throw std::runtime_error("rmse_metric: latent count mismatch");
            for (size_t l = 0; l < L; ++l) {
                double d = truths[i][l] - samples[i][j][l];
                sq += d * d;
            }
        }
        acc += std::sqrt(sq / (static_cast<double>(L) * static_cast<double>(n_post)));
    }
    return acc / static_cast<double>(truths.size());
}

namespace {

double sq_dist(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0;
    for (size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return s;
}

double rbf1(const std::vector<double>& x, const std::vector<double>& y) {
    return std::exp(-0.5 * sq_dist(x, y));
}

}  // namespace

double mmd_metric(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    size_t m = a.size(), n = b.size();
    if (m < 2 || n < 2) throw std::runtime_error("mmd_metric needs at least two samples per side");
    double kaa = 0, kbb = 0, kab = 0;
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < m; ++j)
            if (i != j) kaa += rbf1(a[i], a[j]);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            if (i != j) kbb += rbf1(b[i], b[j]);
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) kab += rbf1(a[i], b[j]);
    double mmd2 = kaa / (static_cast<double>(m) * (m - 1)) + kbb / (static_cast<double>(n) * (n - 1)) -
                  2.0 * kab / (static_cast<double>(m) * n);
    return std::sqrt(std::max(0.0, mmd2));
}

double empirical_quantile(std::vector<double> values, double p) {
    if (values.empty()) throw std::runtime_error("empirical_quantile: empty input");
    p = std::clamp(p, 0.0, 1.0);
    double pos = p * static_cast<double>(values.size() - 1);
    size_t lo = static_cast<size_t>(std::floor(pos));
    size_t hi = std::min(lo + 1, values.size() - 1);
    std::nth_element(values.begin(), values.begin() + static_cast<int64_t>(lo), values.end());
    double vlo = values[lo];
    std::nth_element(values.begin(), values.begin() + static_cast<int64_t>(hi), values.end());
    double vhi = values[hi];
    double frac = pos - static_cast<double>(lo);
    return vlo + frac * (vhi - vlo);
}

std::vector<double> coverage_metric(const std::vector<std::vector<double>>& truths,
                                    const std::vector<std::vector<std::vector<double>>>& samples,
                                    double level) {
    if (truths.empty() || truths.size() != samples.size())
        throw std::runtime_error("coverage_metric: truths/samples mismatch");
    size_t L = truths[0].size();
    std::vector<double> hits(L, 0.0);
    double tail = (1.0 - level) / 2.0;
    for (size_t i = 0; i < truths.size(); ++i) {
        for (size_t l = 0; l < L; ++l) {
            std::vector<double> vals(samples[i].size());
            for (size_t j = 0; j < vals.size(); ++j) vals[j] = samples[i][j][l];
            double qlo = empirical_quantile(vals, tail);
            double qhi = empirical_quantile(vals, 1.0 - tail);
            if (truths[i][l] >= qlo && truths[i][l] <= qhi) hits[l] += 1.0;
        }
    }
    for (double& h : hits) h /= static_cast<double>(truths.size());
    return hits;
}

SbcResult sbc_from_ranks(const std::vector<std::vector<double>>& fractional_ranks) {
    SbcResult out;
    out.fractional_ranks = fractional_ranks;
    for (const auto& ranks : fractional_ranks) {
        std::vector<double> sorted = ranks;
        std::sort(sorted.begin(), sorted.end());
        double n = static_cast<double>(sorted.size());
        double mx = 0, avg = 0;
        for (size_t i = 0; i < sorted.size(); ++i) {
            // ECDF evaluated at each sorted rank against the uniform CDF
            double ecdf = (static_cast<double>(i) + 1.0) / n;
            double dev = std::abs(ecdf - sorted[i]);
            mx = std::max(mx, dev);
            avg += dev;
        }
        out.max_dev.push_back(mx);
        out.avg_dev.push_back(avg / n);
    }
    out.avg_dev_all = std::accumulate(out.avg_dev.begin(), out.avg_dev.end(), 0.0) /
                      static_cast<double>(out.avg_dev.size());
    return out;
}

SbcResult sbc_run(const tasks::SimTaskGen& gen, const PriorDraw& prior, const PosteriorSampler& post,
                  int64_t n_sims, Rng& rng) {
    size_t L = gen.raw_latent_info().size();
    std::vector<std::vector<double>> ranks(L);
    for (int64_t s = 0; s < n_sims; ++s) {
        std::vector<double> theta = prior(rng);
        int64_t n_ctx = rng.uniform_int(gen.min_ctx(), gen.max_ctx());
        tasks::TaskInstance inst = gen.make_task(theta, rng, n_ctx);
        auto draws = post(inst, rng);  // n_post x L, normalized units
        for (size_t l = 0; l < L; ++l) {
            double truth = inst.latents[l].value;
            int64_t below = 0;
            for (const auto& d : draws)
                if (d[l] < truth) ++below;
            ranks[l].push_back((static_cast<double>(below) + 0.5) / static_cast<double>(draws.size()));
        }
    }
    return sbc_from_ranks(ranks);
}

BootstrapVerdict bootstrap_compare(const std::vector<double>& a, const std::vector<double>& b,
                                   int64_t n_boot, double alpha, uint64_t seed) {
    if (a.empty() || b.empty()) throw std::runtime_error("bootstrap_compare: empty run set");
    Rng rng(seed, 0xb007);
    int64_t wins = 0;
    for (int64_t it = 0; it < n_boot; ++it) {
        double ma = 0, mb = 0;
        for (size_t i = 0; i < a.size(); ++i)
            ma += a[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(a.size()) - 1))];
        for (size_t i = 0; i < b.size(); ++i)
            mb += b[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(b.size()) - 1))];
        ma /= static_cast<double>(a.size());
        mb /= static_cast<double>(b.size());
        if (mb > ma) ++wins;
    }
    BootstrapVerdict v;
    v.p_b_beats_a = static_cast<double>(wins) / static_cast<double>(n_boot);
    v.indistinguishable = v.p_b_beats_a > alpha;
    return v;
}

// ---------------------------------------------------------------------------
// model-driven harnesses
// ---------------------------------------------------------------------------

std::vector<std::vector<double>> sample_posterior_marginals(const model::Model& m,
                                                            const tasks::TaskInstance& inst,
                                                            int64_t n_post, Rng& rng) {
    auto tk = model::tokenize(inst, m.cfg);
    std::vector<model::Token> latent_targets;
    for (const auto& t : tk.tgt)
        if (t.kind == model::Token::Kind::kLatent) latent_targets.push_back(t);
    auto dists = engine::predict_marginals(m, tk.ctx, latent_targets);
    std::vector<std::vector<double>> out(static_cast<size_t>(n_post),
                                         std::vector<double>(latent_targets.size()));
    for (size_t l = 0; l < dists.size(); ++l) {
        const auto& gm = std::get<GaussianMixture1D>(dists[l]);
        for (int64_t j = 0; j < n_post; ++j) out[static_cast<size_t>(j)][l] = gm.sample(rng);
    }
    return out;
}

double posterior_logprob(const model::Model& m, const std::vector<tasks::TaskInstance>& tests,
                         int n_perm, Rng& rng) {
    double acc = 0;
    for (const auto& inst : tests) {
        auto tk = model::tokenize(inst, m.cfg);
        std::vector<model::Token> latent_targets;
        std::vector<double> values;
        for (size_t i = 0; i < tk.tgt.size(); ++i)
            if (tk.tgt[i].kind == model::Token::Kind::kLatent) {
                latent_targets.push_back(tk.tgt[i]);
                values.push_back(tk.cont_values[i]);
            }
        acc += engine::ar_joint_logprob(m, tk.ctx, latent_targets, values, n_perm, rng);
    }
    return acc / static_cast<double>(tests.size());
}

double data_mmd(const model::Model& m, const tasks::SimTaskGen& gen,
                const std::vector<std::vector<double>>& raw_thetas, int64_t n_draws, Rng& rng) {
    double acc = 0;
    for (const auto& theta : raw_thetas) {
        // half the series observed, the rest predicted
        int64_t n_ctx = gen.total_points() / 2;
        tasks::TaskInstance inst = gen.make_task(theta, rng, n_ctx);
        auto tk = model::tokenize(inst, m.cfg);
        std::vector<model::Token> data_targets;
        for (const auto& t : tk.tgt)
            if (t.kind == model::Token::Kind::kData) data_targets.push_back(t);

        std::vector<std::vector<double>> model_draws, sim_draws;
        for (int64_t d = 0; d < n_draws; ++d) {
            auto js = engine::ar_joint_sample(m, tk.ctx, data_targets, 1, rng);
            model_draws.push_back(js.values);
            // simulator re-draw under the same parameters and observation mask
            tasks::TaskInstance re = gen.make_task(theta, rng, n_ctx);
            std::vector<double> redraw;
            // match target positions by covariate (the series is a fixed grid)
            for (const auto& t : data_targets) {
                double best = 0, best_d = 1e18;
                for (int64_t i = 0; i < re.n_points(); ++i) {
                    double dd = std::abs(re.x[static_cast<size_t>(i)] - t.x[0]);
                    if (dd < best_d) {
                        best_d = dd;
                        best = re.y[static_cast<size_t>(i)];
                    }
                }
                redraw.push_back(best);
            }
            sim_draws.push_back(std::move(redraw));
        }
        acc += mmd_metric(sim_draws, model_draws);
    }
    return acc / static_cast<double>(raw_thetas.size());
}

}  // namespace ace::sbi
