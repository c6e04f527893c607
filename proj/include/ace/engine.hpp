#pragma once

#include <variant>

#include "ace/model.hpp"

namespace ace::engine {

using PredDist = std::variant<GaussianMixture1D, Categorical1D>;

// One marginal predictive distribution per target, in request order.
// Prior histograms are allowed only on latent context tokens; a latent
// already given as a context value cannot be requested again.
std::vector<PredDist> predict_marginals(const model::Model& m, std::span<const model::Token> context,
                                        std::span<const model::Token> targets);

struct JointSample {
    std::vector<double> values;  // per target; discrete targets hold the id
    double log_prob = 0.0;
};

// Autoregressive joint draw: targets are sampled one at a time along a random
// permutation, each sampled value re-entering the context as a plain value
// token. The log-probability averages per-permutation products in probability
// space (all permutations enumerated when M <= 4, n_perm Monte Carlo draws
// otherwise).
JointSample ar_joint_sample(const model::Model& m, std::vector<model::Token> context,
                            const std::vector<model::Token>& targets, int n_perm, Rng& rng);

// log of the permutation-averaged joint density of the given target values
double ar_joint_logprob(const model::Model& m, const std::vector<model::Token>& context,
                        const std::vector<model::Token>& targets, const std::vector<double>& values,
                        int n_perm, Rng& rng);

constexpr int kDefaultPermutations = 8;

// helper: context token holding a sampled target value
model::Token as_context_value(const model::Token& target, const model::ModelConfig& cfg, double value);

}  // namespace ace::engine
