#pragma once

#include <string>

#include "ace/model.hpp"
#include "ace/tasks.hpp"

namespace ace::train {

struct TrainConfig {
    int64_t steps = 1000;     // total schedule horizon
    int64_t run_steps = 0;    // execute at most this many steps now (0: to the end)
    int64_t batch_size = 32;
    double lr0 = 5e-4;
    uint64_t seed = 0;
    double t_w = 0.0;              // latent-weight exponent, in [0, 1]
    int64_t eval_every = 100;      // metrics cadence
    int64_t checkpoint_every = 0;  // 0: final checkpoint only
    bool fixed_data = false;       // reuse the step-0 batch (overfit mode)
    double grad_clip = 1.0;        // 0 disables clipping
    int threads = 1;

    void validate() const;
};

// ((n_total - (max_ctx + min_ctx)/2) / n_latent) ^ t_w
double latent_weight(int64_t n_total, int64_t min_ctx, int64_t max_ctx, int64_t n_latent, double t_w);

template <typename T>
struct BatchLossOut {
    typename Graph<T>::Id loss;  // scalar, mean over batch elements
    double data_nll = 0;         // summed target NLLs, for the metrics log
    double latent_nll = 0;
    int64_t n_data_targets = 0;
    int64_t n_latent_targets = 0;
};

// Eq. 4: mean over the batch of the weighted per-target negative
// log-likelihoods (data weight 1, latent weight w_latent).
template <typename T>
BatchLossOut<T> batch_loss(Graph<T>& g, model::ParamBinder<T>& binder, const model::ModelConfig& cfg,
                           const tasks::Batch& batch, double w_latent);

struct StepMetrics {
    int64_t step;
    double lr, loss, data_nll, latent_nll, wall_ms;
};

struct TrainResult {
    double first_loss = 0;
    double final_loss = 0;
    std::vector<StepMetrics> log;
};

// Online generation, Adam with cosine annealing, periodic metrics and
// checkpoints under out_dir. Deterministic for a fixed seed.
TrainResult train(model::Model& m, const tasks::TaskGenerator& gen, const TrainConfig& cfg,
                  const std::string& out_dir);

extern template BatchLossOut<float> batch_loss<float>(Graph<float>&, model::ParamBinder<float>&,
                                                      const model::ModelConfig&, const tasks::Batch&,
                                                      double);
extern template BatchLossOut<double> batch_loss<double>(Graph<double>&, model::ParamBinder<double>&,
                                                        const model::ModelConfig&, const tasks::Batch&,
                                                        double);

}  // namespace ace::train
