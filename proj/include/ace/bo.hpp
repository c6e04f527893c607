#pragma once

#include <functional>

#include "ace/engine.hpp"
#include "ace/model.hpp"
#include "ace/tasks.hpp"

namespace ace::bo {

// Observations so far; running min/max maintained incrementally.
struct BOState {
    int dim = 1;
    std::vector<double> xs;  // n * dim
    std::vector<double> ys;
    double y_min = std::numeric_limits<double>::infinity();
    double y_max = -std::numeric_limits<double>::infinity();

    void add(const double* x, double y) {
        xs.insert(xs.end(), x, x + dim);
        ys.push_back(y);
        y_min = std::min(y_min, y);
        y_max = std::max(y_max, y);
    }
    int64_t n() const { return static_cast<int64_t>(ys.size()); }
    std::vector<model::Token> context_tokens() const;
};

// tau = y_min - alpha * max(1, y_max - y_min)
double ts_threshold(const BOState& s, double alpha = 0.01);

// Thompson sampling through the latent optimum: optionally draw y_opt from
// the tau-truncated predictive mixture, then sample the location dimension
// by dimension in random order, each draw conditioning the next. Optional
// histogram priors ride along in the context for the not-yet-sampled dims.
std::vector<double> ace_ts_propose(const BOState& s, const model::Model& m, Rng& rng,
                                   double alpha = 0.01, bool condition_on_yopt = true,
                                   const std::vector<PriorHistogram>* xopt_priors = nullptr);

// prior-informed variant; priors are required here
std::vector<double> acep_ts_propose(const BOState& s, const model::Model& m,
                                    const std::vector<PriorHistogram>& xopt_priors, Rng& rng,
                                    double alpha = 0.01);

// Max-value entropy search: candidates from conditional (80%) and plain
// (20%) Thompson sampling, scored by the entropy drop of p(y*|x*) after
// conditioning on sampled optimum values; ties break to the lowest index.
std::vector<double> ace_mes_propose(const BOState& s, const model::Model& m, Rng& rng,
                                    int n_cand = 20, double ts_ratio = 0.8, int n_mc = 20,
                                    double alpha = 0.01,
                                    const std::vector<PriorHistogram>* xopt_priors = nullptr,
                                    size_t* picked_index = nullptr);

// expected information gain of one candidate (first term minus the Monte
// Carlo average of the conditional entropies)
double mes_score(const BOState& s, const model::Model& m, const double* x, Rng& rng, int n_mc = 20,
                 const std::vector<PriorHistogram>* xopt_priors = nullptr);

// ---------------------------------------------------------------------------
// GP baseline
// ---------------------------------------------------------------------------

// exact noiseless GP regression on mean-centered observations, jitter 1e-6
class GpPosterior {
public:
    GpPosterior(const BOState& s, const tasks::GPHyper& hyper);
    tasks::GpPrediction predict(const double* x) const;
    // one joint posterior draw over the candidate rows, returned per point
    std::vector<double> joint_sample(const std::vector<double>& cand, Rng& rng) const;

    const tasks::GPHyper& hyper() const { return hyper_; }

private:
    int dim_;
    tasks::GPHyper hyper_;
    std::vector<double> xs_;
    std::vector<double> y_centered_;
    double y_mean_ = 0;
    struct Impl;
    std::shared_ptr<Impl> impl_;
};

// log N(y; 0, K + jitter I) for mean-centered observations
double gp_log_marginal(const std::vector<double>& xs, const std::vector<double>& ys, int dim,
                       const tasks::GPHyper& hyper, double jitter = 1e-6);

// maximum marginal likelihood over the fixed hyper grid:
// 8 log-spaced lengthscales in [0.05, 2] x 4 output scales in [0.1, 1]
// x {RBF, Matern-5/2}, isotropic
tasks::GPHyper gp_fit_ml(const BOState& s);

// one TS draw: argmin of a joint posterior sample over uniform candidates
// (the reference setup used 5000 candidates; the default here keeps the
// baseline tractable on one core and is configurable)
std::vector<double> gp_ts_propose(const BOState& s, Rng& rng, int n_candidates = 512);

// importance resampling over TS draws with weight pi(x)^(beta/n)
size_t pibo_resample(const std::vector<std::vector<double>>& cands,
                     const std::function<double(const double*)>& pi, double beta_over_n, Rng& rng);
std::vector<double> pibo_ts_propose(const BOState& s, const std::function<double(const double*)>& pi,
                                    double beta, Rng& rng, int n_ts = 100, int n_candidates = 512);

// ---------------------------------------------------------------------------
// acquisition optimizer and benchmarks
// ---------------------------------------------------------------------------

// coarse scrambled low-discrepancy scan, then shrinking Gaussian rounds
std::vector<double> shotgun_optimize(const std::function<double(const double*)>& score, int dim,
                                     Rng& rng, int n_coarse = 10000, int n_local = 1000,
                                     int rounds = 3);

struct BenchmarkFn {
    std::string name;
    int dim = 1;
    std::vector<double> lo, hi;       // native box, mapped to [-1,1]^D
    std::function<double(const double*)> raw;  // native coordinates
    double y_opt = 0;                  // reference optimum value
    std::vector<double> x_opt_unit;    // argmin in [-1,1]^D coordinates

    double eval_unit(const double* u) const;  // evaluate at [-1,1]^D coords
};

const BenchmarkFn& benchmark(const std::string& name);
std::vector<std::string> benchmark_names();

// ---------------------------------------------------------------------------
// driving loop
// ---------------------------------------------------------------------------

using Proposer = std::function<std::vector<double>(const BOState&, Rng&)>;

struct RegretRow {
    uint64_t seed;
    int64_t iter;
    std::vector<double> x;
    double y, best_y, regret;
};

// n_init uniform points, then `iters` proposals; regret is the running best
// minus the true optimum (non-negative, non-increasing)
std::vector<RegretRow> run_bo(const BenchmarkFn& fn, const Proposer& propose, int iters, int n_init,
                              uint64_t seed);

void write_regret_csv(const std::string& path, const std::vector<RegretRow>& rows, int dim,
                      bool append = false);

std::vector<double> random_propose(const BOState& s, Rng& rng);

}  // namespace ace::bo
