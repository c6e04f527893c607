#include "ace/train.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>

namespace ace::train {

void TrainConfig::validate() const {
    if (steps < 1) throw std::runtime_error("train config: steps must be >= 1");
    if (batch_size < 1) throw std::runtime_error("train config: batch_size must be >= 1");
    if (!(lr0 > 0)) throw std::runtime_error("train config: lr0 must be positive");
    if (t_w < 0 || t_w > 1) throw std::runtime_error("train config: t_w must be in [0, 1]");
    if (eval_every < 1) throw std::runtime_error("train config: eval_every must be >= 1");
}

double latent_weight(int64_t n_total, int64_t min_ctx, int64_t max_ctx, int64_t n_latent, double t_w) {
    if (n_latent <= 0) return 1.0;
    double base = (static_cast<double>(n_total) -
                   0.5 * static_cast<double>(max_ctx + min_ctx)) /
                  static_cast<double>(n_latent);
    return std::pow(base, t_w);
}

namespace {

template <typename T>
using Id = typename Graph<T>::Id;

// log q(z | mixture) assembled from raw head outputs in the log domain
template <typename T>
Id<T> mixture_nll_rows(Graph<T>& g, const model::GmmRows<T>& gmm, Id<T> logits,
                       const std::vector<double>& z) {
    int64_t m = static_cast<int64_t>(z.size());
    Tensor<T> zt({m, 1});
    for (int64_t i = 0; i < m; ++i) zt.v[static_cast<size_t>(i)] = static_cast<T>(z[static_cast<size_t>(i)]);
    auto zin = g.input(std::move(zt));
    auto logw = g.sub(logits, g.logsumexp_last(logits));
    auto diff = g.sub(gmm.mu, zin);
    auto tt = g.div(diff, gmm.sigma);
    auto comp = g.add_const(g.sub(g.scale(g.mul(tt, tt), T(-0.5)), g.log(gmm.sigma)),
                            T(-0.91893853320467274178));
    return g.scale(g.logsumexp_last(g.add(logw, comp)), T(-1));
}

template <typename T>
Id<T> categorical_nll_rows(Graph<T>& g, Id<T> logits, const std::vector<int64_t>& ids) {
    return g.sub(g.logsumexp_last(logits), g.take_last(logits, ids));
}

}  // namespace

template <typename T>
BatchLossOut<T> batch_loss(Graph<T>& g, model::ParamBinder<T>& binder, const model::ModelConfig& cfg,
                           const tasks::Batch& batch, double w_latent) {
    BatchLossOut<T> out;
    std::vector<Id<T>> element_losses;
    for (size_t e = 0; e < batch.instances.size(); ++e) {
        const auto& inst = batch.instances[e];
        model::TokenizedTask tk = model::tokenize(inst, cfg);
        if (tk.tgt.empty()) throw std::runtime_error("batch element " + std::to_string(e) + " has no targets");
        auto feats = model::ace_forward(g, binder, cfg, tk.ctx, tk.tgt);

        std::vector<Id<T>> parts;
        int64_t n_cont = static_cast<int64_t>(tk.cont_values.size());
        if (n_cont > 0) {
            auto cont_feats = n_cont == static_cast<int64_t>(tk.tgt.size())
                                  ? feats
                                  : g.slice_rows(feats, 0, n_cont);
            auto gl = model::gmm_head(g, binder, cfg, cont_feats);
            auto nll = mixture_nll_rows(g, gl, gl.logits, tk.cont_values);
            // weights: 1 for data rows, w_latent for latent rows
            Tensor<T> w({n_cont, 1});
            for (int64_t i = 0; i < n_cont; ++i)
                w.v[static_cast<size_t>(i)] = i < tk.n_data_targets ? T(1) : static_cast<T>(w_latent);
            parts.push_back(g.sum_all(g.mul(nll, g.input(std::move(w)))));

            const auto& nll_vals = g.val(nll);
            for (int64_t i = 0; i < n_cont; ++i) {
                double v = static_cast<double>(nll_vals.v[static_cast<size_t>(i)]);
                if (!std::isfinite(v))
                    throw std::runtime_error("non-finite NLL from the mixture head at batch element " +
                                             std::to_string(e) + ", target row " + std::to_string(i));
                if (i < tk.n_data_targets) {
                    out.data_nll += v;
                    ++out.n_data_targets;
                } else {
                    out.latent_nll += v;
                    ++out.n_latent_targets;
                }
            }
        }
        // discrete latent targets, one categorical head per latent row
        for (size_t d = 0; d < tk.disc_latents.size(); ++d) {
            int64_t row = n_cont + static_cast<int64_t>(d);
            auto frow = g.slice_rows(feats, row, row + 1);
            auto logits = model::cat_head(g, binder, cfg, frow, tk.disc_latents[d]);
            auto nll = categorical_nll_rows(g, logits, {tk.disc_ids[d]});
            parts.push_back(g.scale(g.sum_all(nll), static_cast<T>(w_latent)));
            double v = static_cast<double>(g.val(nll).v[0]);
            if (!std::isfinite(v))
                throw std::runtime_error("non-finite NLL from the categorical head at batch element " +
                                         std::to_string(e) + " latent " +
                                         std::to_string(tk.disc_latents[d]));
            out.latent_nll += v;
            ++out.n_latent_targets;
        }
        Id<T> el = parts[0];
        for (size_t i = 1; i < parts.size(); ++i) el = g.add(el, parts[i]);
        element_losses.push_back(el);
    }
    Id<T> total = element_losses[0];
    for (size_t i = 1; i < element_losses.size(); ++i) total = g.add(total, element_losses[i]);
    out.loss = g.scale(total, T(1.0 / static_cast<double>(batch.instances.size())));
    return out;
}

TrainResult train(model::Model& m, const tasks::TaskGenerator& gen, const TrainConfig& cfg,
                  const std::string& out_dir) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ofstream metrics(fs::path(out_dir) / "metrics.csv");
    if (!metrics) throw IoError("cannot write metrics.csv in " + out_dir);
    metrics << "step,lr,loss,data_nll,latent_nll,wall_ms\n";
    metrics.precision(10);

    double w_latent = latent_weight(gen.total_points(), gen.min_ctx(), gen.max_ctx(),
                                    static_cast<int64_t>(gen.latent_info().size()), cfg.t_w);

    TrainResult result;
    tasks::Batch fixed;
    if (cfg.fixed_data)
        fixed = tasks::build_batch(gen, {cfg.batch_size, cfg.seed, 0});

    auto t0 = std::chrono::steady_clock::now();
    int64_t start_step = m.store.step();
    int64_t end_step = cfg.steps;
    if (cfg.run_steps > 0) end_step = std::min(end_step, start_step + cfg.run_steps);
    // batches are keyed by (seed, step, element), so prefetching on a worker
    // thread cannot change the data stream
    bool prefetch = cfg.threads > 1 && !cfg.fixed_data;
    std::future<tasks::Batch> next;
    auto fetch = [&](int64_t step) {
        return tasks::build_batch(gen, {cfg.batch_size, cfg.seed, step});
    };
    if (prefetch && start_step < end_step) next = std::async(std::launch::async, fetch, start_step);
    for (int64_t step = start_step; step < end_step; ++step) {
        tasks::Batch batch;
        if (cfg.fixed_data) {
            batch = fixed;
        } else if (prefetch) {
            batch = next.get();
            if (step + 1 < end_step) next = std::async(std::launch::async, fetch, step + 1);
        } else {
            batch = fetch(step);
        }
        Graph<float> g;
        model::ParamBinder<float> binder(g, m.store);
        auto bl = batch_loss(g, binder, m.cfg, batch, w_latent);
        double loss = static_cast<double>(g.val(bl.loss).v[0]);
        if (!std::isfinite(loss)) throw std::runtime_error("training loss became non-finite; aborting");
        g.backward(bl.loss);
        binder.export_grads();
        if (cfg.grad_clip > 0) m.store.clip_grad_norm(cfg.grad_clip);
        double lr = cosine_lr(step, cfg.steps, cfg.lr0);
        m.store.adam_step(lr);

        if (step == start_step) result.first_loss = loss;
        result.final_loss = loss;
        if (step % cfg.eval_every == 0 || step == end_step - 1) {
            double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                            .count();
            StepMetrics sm{step, lr, loss,
                           bl.n_data_targets ? bl.data_nll / bl.n_data_targets : 0.0,
                           bl.n_latent_targets ? bl.latent_nll / bl.n_latent_targets : 0.0, ms};
            result.log.push_back(sm);
            metrics << sm.step << "," << sm.lr << "," << sm.loss << "," << sm.data_nll << ","
                    << sm.latent_nll << "," << sm.wall_ms << "\n";
            metrics.flush();
        }
        if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) m.save(out_dir);
    }
    m.save(out_dir);
    return result;
}

template BatchLossOut<float> batch_loss<float>(Graph<float>&, model::ParamBinder<float>&,
                                               const model::ModelConfig&, const tasks::Batch&, double);
template BatchLossOut<double> batch_loss<double>(Graph<double>&, model::ParamBinder<double>&,
                                                 const model::ModelConfig&, const tasks::Batch&,
                                                 double);

}  // namespace ace::train
