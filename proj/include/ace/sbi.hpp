#pragma once

#include <functional>

#include "ace/engine.hpp"
#include "ace/tasks.hpp"

namespace ace::sbi {

// RMSE = (1/N_obs) sum_i sqrt( (1/(L N_post)) sum_l sum_j (theta_il - hat_theta_ilj)^2 )
// truths: n_obs x L; samples: n_obs x n_post x L
double rmse_metric(const std::vector<std::vector<double>>& truths,
                   const std::vector<std::vector<std::vector<double>>>& samples);

// sqrt(max(0, unbiased MMD^2)) with the exponentiated quadratic kernel at
// lengthscale 1
double mmd_metric(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b);

// linear-interpolated empirical quantile (independent sorted-array reference
// lives in the tests)
double empirical_quantile(std::vector<double> values, double p);

// fraction of sets whose true value falls inside the central interval of the
// posterior samples, per latent
std::vector<double> coverage_metric(const std::vector<std::vector<double>>& truths,
                                    const std::vector<std::vector<std::vector<double>>>& samples,
                                    double level = 0.95);

struct SbcResult {
    std::vector<std::vector<double>> fractional_ranks;  // per latent
    std::vector<double> max_dev, avg_dev;               // per latent ECDF deviations
    double avg_dev_all = 0;
};

// fractional rank of each true value within its posterior sample set,
// compared against the uniform ECDF
SbcResult sbc_from_ranks(const std::vector<std::vector<double>>& fractional_ranks);

// full simulation-based calibration loop: draw theta from the prior sampler,
// simulate a task, rank the truth within posterior samples
using PriorDraw = std::function<std::vector<double>(Rng&)>;                       // raw theta
using PosteriorSampler =
    std::function<std::vector<std::vector<double>>(const tasks::TaskInstance&, Rng&)>;  // n_post x L
SbcResult sbc_run(const tasks::SimTaskGen& gen, const PriorDraw& prior, const PosteriorSampler& post,
                  int64_t n_sims, Rng& rng);

struct BootstrapVerdict {
    double p_b_beats_a = 0;  // proportion of bootstrap means where B > A
    bool indistinguishable = false;
};
// A is the better-mean run set by convention of the caller
BootstrapVerdict bootstrap_compare(const std::vector<double>& a, const std::vector<double>& b,
                                   int64_t n_boot = 100000, double alpha = 0.05, uint64_t seed = 0);

// ---------------------------------------------------------------------------
// model-driven evaluation harnesses
// ---------------------------------------------------------------------------

// marginal posterior draws for every latent given the task's context
std::vector<std::vector<double>> sample_posterior_marginals(const model::Model& m,
                                                            const tasks::TaskInstance& inst,
                                                            int64_t n_post, Rng& rng);

// mean AR joint log-probability of the true latent values over test tasks
double posterior_logprob(const model::Model& m, const std::vector<tasks::TaskInstance>& tests,
                         int n_perm, Rng& rng);

// data-prediction check: joint AR draws of the missing half vs simulator
// re-draws sharing the same parameters, averaged per-set MMD
double data_mmd(const model::Model& m, const tasks::SimTaskGen& gen,
                const std::vector<std::vector<double>>& raw_thetas, int64_t n_draws, Rng& rng);

}  // namespace ace::sbi
