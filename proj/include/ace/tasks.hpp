#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ace/distributions.hpp"
#include "ace/rng.hpp"

namespace ace::tasks {

// ---------------------------------------------------------------------------
// GP hyperparameters and kernels
// ---------------------------------------------------------------------------

enum class KernelType : int64_t { kRBF = 0, kMatern12 = 1, kMatern32 = 2, kMatern52 = 3 };
constexpr int64_t kNumKernels = 4;
const char* kernel_name(KernelType k);

struct GPHyper {
    KernelType kernel = KernelType::kRBF;
    double sigma_f = 1.0;                // output scale, in [0.1, 1]
    std::vector<double> lengthscales;    // per input dim, each in [0.05, 2]
    bool isotropic = false;
};

// sigma_f^2 * kappa(r) with r^2 = sum_k ((x_k - x'_k) / l_k)^2
double gp_kernel(const double* x, const double* xp, int dim, const GPHyper& h);

enum class HyperMode { kGp, kBo };  // kGp: kernels uniform; kBo: weighted + isotropy coin
GPHyper sample_gp_hyper(Rng& rng, int dim, HyperMode mode = HyperMode::kGp);

// inverse-CDF draw from the minimum of n_eff iid N(0, sigma_f^2) samples,
// bisection to 1e-10
double min_value_sample(Rng& rng, double sigma_f, int64_t n_eff);
double min_value_cdf(double t, double sigma_f, int64_t n_eff);
int64_t min_value_n_eff(const GPHyper& h);  // clamp(round(prod_k 2/l_k), 1, 1e4)

// exact GP regression with the jitter policy of the generators; noise_var
// adds a homoskedastic observation-noise floor to the Gram diagonal and the
// predictive variance
struct GpPrediction {
    double mean = 0.0, var = 0.0;
};
GpPrediction gp_predict(const std::vector<double>& x_ctx, const std::vector<double>& y_ctx, int dim,
                        const double* x_query, const GPHyper& h, double noise_var = 0.0);

// fold about the pinned optimum plus the quadratic envelope; y_shifted is
// the GP value minus the pinned optimum value
inline double bo_envelope(double y_shifted, double dist2) {
    return std::abs(y_shifted) + 0.2 * dist2;
}

// ---------------------------------------------------------------------------
// Task instances
// ---------------------------------------------------------------------------

struct Latent {
    std::string name;
    bool discrete = false;
    int64_t cardinality = 0;  // discrete only
    double lo = 0.0, hi = 1.0;  // value grid for priors (continuous only)
};

struct LatentDraw {
    double value = 0.0;   // continuous value
    int64_t id = 0;       // discrete id
    std::optional<PriorHistogram> prior;
};

enum class Placement { kContextValue, kContextPrior, kTarget };

// One sampled problem. The first n_ctx data points form the context set;
// latent placement is assigned during batch construction.
struct TaskInstance {
    int dim = 1;
    std::vector<double> x;  // n_pts * dim, row-major
    std::vector<double> y;  // n_pts
    int64_t n_ctx = 0;
    std::vector<LatentDraw> latents;
    std::vector<Placement> placement;
    std::optional<GPHyper> gp;  // generation metadata, used by evaluation oracles

    int64_t n_points() const { return static_cast<int64_t>(y.size()); }
    const double* point(int64_t i) const { return x.data() + i * dim; }
};

class TaskGenerator {
public:
    virtual ~TaskGenerator() = default;
    virtual TaskInstance sample(Rng& rng, int64_t n_ctx) const = 0;
    virtual const std::vector<Latent>& latent_info() const = 0;
    virtual int dim() const = 0;
    virtual int64_t total_points() const = 0;
    virtual int64_t min_ctx() const = 0;
    virtual int64_t max_ctx() const = 0;
    virtual bool latents_carry_priors() const = 0;
    virtual std::string id() const = 0;
};

// ---------------------------------------------------------------------------
// Prior generative process
// ---------------------------------------------------------------------------

// Hierarchical prior sampler: 80% mixture of Gaussians (K ~ Geometric(0.5),
// three equal-probability configurations when K > 1, Dirichlet(1) weights,
// binned by CDF differences), 20% uniform.
PriorHistogram sample_prior_histogram(Rng& rng, double lo, double hi);

// Same process with a 50% chance of mixing in a uniform component with
// weight w_unif ~ U(0, 0.2).
PriorHistogram sample_bo_prior_histogram(Rng& rng, double lo, double hi);

// Gaussian test prior centered near a known value: sd = sd_frac * (hi - lo),
// mean ~ N(center, sd), plus a uniform component of weight 0.1.
PriorHistogram make_test_prior(Rng& rng, double center, double lo, double hi, double sd_frac);

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

// GP functions on [-1, 1]^D: context jointly from the GP prior, targets
// independently from the posterior given the context.
class GpTaskGen final : public TaskGenerator {
public:
    GpTaskGen(int dim, int64_t n_total, int64_t min_ctx, int64_t max_ctx, double noise_var = 0.0);
    TaskInstance sample(Rng& rng, int64_t n_ctx) const override;
    const std::vector<Latent>& latent_info() const override { return latents_; }
    int dim() const override { return dim_; }
    int64_t total_points() const override { return n_total_; }
    int64_t min_ctx() const override { return min_ctx_; }
    int64_t max_ctx() const override { return max_ctx_; }
    bool latents_carry_priors() const override { return false; }
    std::string id() const override { return "gp"; }

private:
    int dim_;
    int64_t n_total_, min_ctx_, max_ctx_;
    double noise_var_;
    std::vector<Latent> latents_;
};

// BO functions with a planted optimum: GP conditioned on (x_opt, y_opt),
// folded about y_opt plus a quadratic envelope, then a U(-5,5) offset that
// becomes the new optimum value.
class BoTaskGen final : public TaskGenerator {
public:
    BoTaskGen(int dim, int64_t n_total, int64_t min_ctx, int64_t max_ctx, bool use_priors);
    TaskInstance sample(Rng& rng, int64_t n_ctx) const override;
    const std::vector<Latent>& latent_info() const override { return latents_; }
    int dim() const override { return dim_; }
    int64_t total_points() const override { return n_total_; }
    int64_t min_ctx() const override { return min_ctx_; }
    int64_t max_ctx() const override { return max_ctx_; }
    bool latents_carry_priors() const override { return use_priors_; }
    std::string id() const override { return use_priors_ ? "bo-prior" : "bo"; }

private:
    int dim_;
    int64_t n_total_, min_ctx_, max_ctx_;
    bool use_priors_;
    std::vector<Latent> latents_;
};

// 1D Gaussian with latent mean and standard deviation, both drawn from
// per-task histogram priors; data are iid draws with a dummy covariate.
class GaussianToyGen final : public TaskGenerator {
public:
    GaussianToyGen(int64_t n_data, int64_t min_ctx, int64_t max_ctx, bool use_priors = true);
    TaskInstance sample(Rng& rng, int64_t n_ctx) const override;
    const std::vector<Latent>& latent_info() const override { return latents_; }
    int dim() const override { return 1; }
    int64_t total_points() const override { return n_data_; }
    int64_t min_ctx() const override { return min_ctx_; }
    int64_t max_ctx() const override { return max_ctx_; }
    bool latents_carry_priors() const override { return use_priors_; }
    std::string id() const override { return "gaussian-toy"; }

    static constexpr double kMuLo = -1.0, kMuHi = 1.0;
    static constexpr double kSigmaLo = 0.1, kSigmaHi = 1.0;

private:
    int64_t n_data_, min_ctx_, max_ctx_;
    bool use_priors_;
    std::vector<Latent> latents_;
};

// ---------------------------------------------------------------------------
// Simulators
// ---------------------------------------------------------------------------

struct SimOutput {
    std::vector<double> t;      // time stamps (raw units)
    std::vector<double> y;      // observed series (raw units)
    std::vector<double> theta;  // parameter vector (raw units)
};

// y_{t+1} = y_t + theta1 (exp(theta2) - y_t) dt + noise_scale w, w ~ N(0, dt);
// T = 25 steps, dt = 0.2, y0 = 10; noise_scale 0.5 per the model definition
SimOutput simulate_oup(double theta1, double theta2, Rng& rng, double noise_scale = 0.5);

enum class SirVariant { kMain, kExtended };
// kMain: N=1e6, 10 observations y ~ Bin(1000, I_t/N) over T=160
// kExtended: 25 observations y ~ Poi(phi I_t/N) over T=250, four parameters
SimOutput simulate_sir(const std::vector<double>& theta, Rng& rng, SirVariant variant = SirVariant::kMain);
// Euler-integrated fractions (S, I, R) / N at t = 0..T; exposed for tests
struct SirPath {
    std::vector<double> s, i, r;
};
SirPath sir_path(double beta, double gamma, double i0_frac, int64_t t_end);

struct TurinRaw {
    int64_t n_paths = 0;                     // Poisson point count
    std::vector<double> y_re, y_im;          // transfer function samples Y_k
    std::vector<double> ytime_re, ytime_im;  // inverse-DFT time signal
    std::vector<double> out;                 // 10 log10 |y(t)|^2
};
TurinRaw simulate_turin_raw(double g0, double t_rev, double nu, double sigma2_w, Rng& rng);
SimOutput simulate_turin(double g0, double t_rev, double nu, double sigma2_w, Rng& rng);

// conditional gain variance E[|alpha|^2 | tau]
inline double turin_gain_var(double g0, double t_rev, double nu, double tau) {
    return g0 * std::exp(-tau / t_rev) / nu;
}

constexpr int64_t kTurinNs = 101;
constexpr double kTurinBandwidth = 0.5e9;

// Simulator-backed task generators (normalized covariates/values/latents).
class SimTaskGen final : public TaskGenerator {
public:
    enum class Kind { kOup, kSir, kTurin };
    SimTaskGen(Kind kind, bool use_priors);
    TaskInstance sample(Rng& rng, int64_t n_ctx) const override;
    const std::vector<Latent>& latent_info() const override { return latents_; }
    int dim() const override { return 1; }
    int64_t total_points() const override { return n_points_; }
    int64_t min_ctx() const override { return min_ctx_; }
    int64_t max_ctx() const override { return max_ctx_; }
    bool latents_carry_priors() const override { return use_priors_; }
    std::string id() const override;

    Kind kind() const { return kind_; }
    // normalized <-> raw conversions for reporting
    double norm_value(double raw) const;
    double raw_value(double normed) const;
    double norm_theta(size_t l, double raw) const;
    double raw_theta(size_t l, double normed) const;
    const std::vector<Latent>& raw_latent_info() const { return raw_latents_; }
    // run the simulator for raw theta and return a normalized task with the
    // given context size (used by SBC and the metric harnesses)
    TaskInstance make_task(const std::vector<double>& raw_theta_vals, Rng& rng, int64_t n_ctx) const;

private:
    Kind kind_;
    bool use_priors_;
    int64_t n_points_, min_ctx_, max_ctx_;
    std::vector<Latent> latents_;
    std::vector<Latent> raw_latents_;
};

// ---------------------------------------------------------------------------
// Batch construction
// ---------------------------------------------------------------------------

struct BatchConfig {
    int64_t batch_size = 32;
    uint64_t seed = 0;
    int64_t step = 0;  // stream index; (seed, step, element) keys the rng
};

struct Batch {
    std::vector<TaskInstance> instances;
    int64_t n_ctx = 0;
};

// Draws one context size for the whole batch, generates instances, and
// assigns each latent to context-value / context-prior / target following
// the 50% rule. Elements with an empty target set are resampled.
Batch build_batch(const TaskGenerator& gen, const BatchConfig& cfg);

// assigns placement for a single instance (exposed for evaluation code)
void assign_latent_placement(TaskInstance& inst, bool carry_priors, Rng& rng);

// Debug dump: role,kind,index,x...,value-or-prior-id plus a prior sidecar.
void dump_task_csv(const TaskInstance& inst, const std::string& main_path,
                   const std::string& prior_path);

}  // namespace ace::tasks
