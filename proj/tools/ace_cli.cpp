// Command-line front end: training, evaluation, Bayesian optimization,
// simulator inference metrics, calibration, and a gradient self-check.
//
// Exit codes: 0 ok, 1 test/assertion failure, 2 config error, 3 I/O error.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ace/bo.hpp"
#include "ace/engine.hpp"
#include "ace/sbi.hpp"
#include "ace/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ace;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int log_level() {
    const char* env = std::getenv("ACE_LOG");
    if (!env) return 0;
    std::string v(env);
    if (v == "debug") return 2;
    if (v == "info") return 1;
    return 0;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::cerr << "[info] " << msg << "\n";
}

const std::vector<std::string> kGeneratorIds = {"gp", "bo", "gaussian-toy", "oup", "sir", "turin"};

std::unique_ptr<tasks::TaskGenerator> make_generator(const json& g) {
    std::string id = g.at("id").get<std::string>();
    auto get_or = [&](const char* key, int64_t dflt) {
        return g.contains(key) ? g.at(key).get<int64_t>() : dflt;
    };
    bool use_priors = g.contains("use_priors") && g.at("use_priors").get<bool>();
    if (id == "gp") {
        double noise = g.contains("noise_var") ? g.at("noise_var").get<double>() : 0.0;
        return std::make_unique<tasks::GpTaskGen>(static_cast<int>(get_or("dim", 1)),
                                                  get_or("n_total", 128), get_or("min_ctx", 3),
                                                  get_or("max_ctx", 50), noise);
    }
    if (id == "bo") {
        int dim = static_cast<int>(get_or("dim", 1));
        return std::make_unique<tasks::BoTaskGen>(dim, get_or("n_total", 100 * dim),
                                                  get_or("min_ctx", 3),
                                                  get_or("max_ctx", dim == 1 ? 50 : 100), use_priors);
    }
    if (id == "gaussian-toy")
        return std::make_unique<tasks::GaussianToyGen>(get_or("n_data", 30), get_or("min_ctx", 5),
                                                       get_or("max_ctx", 25), use_priors);
    if (id == "oup") return std::make_unique<tasks::SimTaskGen>(tasks::SimTaskGen::Kind::kOup, use_priors);
    if (id == "sir") return std::make_unique<tasks::SimTaskGen>(tasks::SimTaskGen::Kind::kSir, use_priors);
    if (id == "turin")
        return std::make_unique<tasks::SimTaskGen>(tasks::SimTaskGen::Kind::kTurin, use_priors);
    std::string ids;
    for (const auto& v : kGeneratorIds) ids += (ids.empty() ? "" : ", ") + v;
    throw ConfigError("unknown generator id '" + id + "' (valid: " + ids + ")");
}

json load_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return j;
}

model::ModelConfig model_config_from(const json& cfg, const tasks::TaskGenerator& gen) {
    const json& m = cfg.at("model");
    model::ModelConfig out;
    out.dim = gen.dim();
    out.latents = model::ModelConfig::latents_from(gen.latent_info());
    out.d_emb = m.at("d_emb").get<int64_t>();
    out.n_layers = m.at("n_layers").get<int64_t>();
    out.n_heads = m.at("n_heads").get<int64_t>();
    out.mlp_hidden = m.at("mlp_hidden").get<int64_t>();
    out.embed_hidden = m.at("embed_hidden").get<int64_t>();
    out.k_components = m.at("k_components").get<int64_t>();
    out.head_hidden = m.at("head_hidden").get<int64_t>();
    out.validate();
    return out;
}

// per-dimension Gaussian test priors centered near a known optimum
std::vector<PriorHistogram> bo_test_priors(const std::string& kind, const std::vector<double>& center,
                                           Rng& rng) {
    std::vector<PriorHistogram> out;
    for (double c : center) {
        if (kind == "flat")
            out.push_back(PriorHistogram::uniform(-1.0, 1.0));
        else
            out.push_back(tasks::make_test_prior(rng, c, -1.0, 1.0, kind == "strong" ? 0.1 : 0.25));
    }
    return out;
}

// --------------------------------------------------------------------------
// train
// --------------------------------------------------------------------------

int cmd_train(const std::string& config_path, uint64_t seed, bool seed_set, const std::string& out_dir,
              bool fixed_data, int threads) {
    json cfg = load_json(config_path);
    try {
        if (!cfg.contains("schema_version") || cfg.at("schema_version").get<int>() != 1)
            throw ConfigError("config needs schema_version 1");
        auto gen = make_generator(cfg.at("generator"));
        auto mcfg = model_config_from(cfg, *gen);
        const json& t = cfg.at("train");
        train::TrainConfig tc;
        tc.steps = t.at("steps").get<int64_t>();
        tc.batch_size = t.at("batch_size").get<int64_t>();
        tc.lr0 = t.at("lr0").get<double>();
        tc.t_w = t.contains("t_w") ? t.at("t_w").get<double>() : 0.0;
        tc.eval_every = t.contains("eval_every") ? t.at("eval_every").get<int64_t>() : 100;
        tc.run_steps = t.contains("run_steps") ? t.at("run_steps").get<int64_t>() : 0;
        tc.seed = seed_set ? seed : (t.contains("seed") ? t.at("seed").get<uint64_t>() : 0);
        tc.fixed_data = fixed_data;
        tc.threads = threads;
        tc.validate();

        model::Model m = model::Model::create(mcfg, tc.seed);
        fs::path dir(out_dir.empty() ? "." : out_dir);
        if (fs::exists(dir / "checkpoint.ace")) {
            log_info("resuming from existing checkpoint");
            m = model::Model::load(dir.string());
        }
        log_info("training " + gen->id() + " for " + std::to_string(tc.steps) + " steps");
        auto res = train::train(m, *gen, tc, dir.string());
        std::cout << "final_loss=" << res.final_loss << "\n";
        return 0;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config error: ") + e.what());
    }
}

// --------------------------------------------------------------------------
// eval
// --------------------------------------------------------------------------

// exact grid posterior for the Gaussian toy (same construction as the tests)
struct ToyGridPosterior {
    double mu_mean, mu_sd, sigma_mean, sigma_sd;
};

ToyGridPosterior toy_exact_posterior(const std::vector<double>& data, const PriorHistogram& pmu,
                                     const PriorHistogram& psd) {
    const size_t nb = pmu.probs.size();
    std::vector<double> lp(nb * nb);
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < nb; ++i) {
        double mu = pmu.bin_center(i);
        for (size_t j = 0; j < nb; ++j) {
            double sd = psd.bin_center(j);
            double acc = std::log(pmu.probs[i] + 1e-300) + std::log(psd.probs[j] + 1e-300);
            double inv2 = 1.0 / (2.0 * sd * sd);
            for (double y : data) acc += -(y - mu) * (y - mu) * inv2 - std::log(sd);
            lp[i * nb + j] = acc;
            mx = std::max(mx, acc);
        }
    }
    double z = 0;
    for (double& v : lp) {
        v = std::exp(v - mx);
        z += v;
    }
    for (double& v : lp) v /= z;
    ToyGridPosterior out{0, 0, 0, 0};
    for (size_t i = 0; i < nb; ++i)
        for (size_t j = 0; j < nb; ++j) {
            out.mu_mean += lp[i * nb + j] * pmu.bin_center(i);
            out.sigma_mean += lp[i * nb + j] * psd.bin_center(j);
        }
    for (size_t i = 0; i < nb; ++i)
        for (size_t j = 0; j < nb; ++j) {
            double p = lp[i * nb + j];
            out.mu_sd += p * (pmu.bin_center(i) - out.mu_mean) * (pmu.bin_center(i) - out.mu_mean);
            out.sigma_sd += p * (psd.bin_center(j) - out.sigma_mean) * (psd.bin_center(j) - out.sigma_mean);
        }
    out.mu_sd = std::sqrt(out.mu_sd);
    out.sigma_sd = std::sqrt(out.sigma_sd);
    return out;
}

int cmd_eval_toy(const model::Model& m, const std::string& prior_mode, int n_test, int64_t n_ctx,
                 uint64_t seed, const std::string& out_dir) {
    tasks::GaussianToyGen gen(30, 5, 25, true);
    std::ofstream os(fs::path(out_dir) / "toy_eval.csv");
    if (!os) throw IoError("cannot write toy_eval.csv");
    os << "set,mu_mean_pred,mu_mean_exact,mu_sd_pred,mu_sd_exact,sigma_mean_pred,sigma_mean_exact,"
          "sigma_sd_pred,sigma_sd_exact\n";
    os.precision(10);
    for (int t = 0; t < n_test; ++t) {
        Rng rng(seed, 1000 + static_cast<uint64_t>(t));
        auto inst = gen.sample(rng, n_ctx);
        std::vector<model::Token> ctx;
        for (int64_t i = 0; i < inst.n_ctx; ++i)
            ctx.push_back(model::Token::context_data({0.0}, inst.y[static_cast<size_t>(i)]));
        PriorHistogram pmu = *inst.latents[0].prior;
        PriorHistogram psd = *inst.latents[1].prior;
        if (prior_mode == "flat") {
            pmu = PriorHistogram::uniform(tasks::GaussianToyGen::kMuLo, tasks::GaussianToyGen::kMuHi);
            psd = PriorHistogram::uniform(tasks::GaussianToyGen::kSigmaLo,
                                          tasks::GaussianToyGen::kSigmaHi);
        }
        if (prior_mode != "none") {
            ctx.push_back(model::Token::context_prior(0, pmu));
            ctx.push_back(model::Token::context_prior(1, psd));
        }
        std::vector<model::Token> tgt = {model::Token::target_latent(0), model::Token::target_latent(1)};
        auto dists = engine::predict_marginals(m, ctx, tgt);
        const auto& dmu = std::get<GaussianMixture1D>(dists[0]);
        const auto& dsd = std::get<GaussianMixture1D>(dists[1]);
        std::vector<double> data(inst.y.begin(), inst.y.begin() + inst.n_ctx);
        // the exact posterior always uses the generating prior
        auto exact = toy_exact_posterior(data, *inst.latents[0].prior, *inst.latents[1].prior);
        os << t << "," << dmu.mean() << "," << exact.mu_mean << "," << std::sqrt(dmu.variance()) << ","
           << exact.mu_sd << "," << dsd.mean() << "," << exact.sigma_mean << ","
           << std::sqrt(dsd.variance()) << "," << exact.sigma_sd << "\n";
    }
    return 0;
}

int cmd_eval_gp(const model::Model& m, double noise_var, int n_test, uint64_t seed,
                const std::string& out_dir) {
    static const int64_t kSizes[] = {2, 4, 6, 8, 10, 15, 20, 25};
    tasks::GpTaskGen gen(1, 60, 2, 30, noise_var);
    std::ofstream os(fs::path(out_dir) / "gp_eval.csv");
    if (!os) throw IoError("cannot write gp_eval.csv");
    os << "context_size,lpd_model,lpd_exact,lpd_model_theta,kernel_acc\n";
    os.precision(10);
    const int64_t n_eval = 30;  // target points per set
    for (int64_t n_ctx : kSizes) {
        double lpd = 0, lpd_exact = 0, lpd_theta = 0, acc = 0;
        int64_t count = 0;
        for (int t = 0; t < n_test; ++t) {
            Rng rng(seed, 5000 + static_cast<uint64_t>(t));
            auto inst = gen.sample(rng, 30);
            std::vector<model::Token> ctx, ctx_theta;
            for (int64_t i = 0; i < n_ctx; ++i) {
                auto xv = std::vector<double>{inst.x[static_cast<size_t>(i)]};
                ctx.push_back(model::Token::context_data(xv, inst.y[static_cast<size_t>(i)]));
            }
            ctx_theta = ctx;
            ctx_theta.push_back(model::Token::context_latent_discrete(0, inst.latents[0].id));
            ctx_theta.push_back(model::Token::context_latent(1, inst.latents[1].value));
            ctx_theta.push_back(model::Token::context_latent(2, inst.latents[2].value));

            std::vector<model::Token> tgt;
            for (int64_t j = 30; j < 30 + n_eval; ++j)
                tgt.push_back(model::Token::target_data({inst.x[static_cast<size_t>(j)]}));
            std::vector<model::Token> tgt_kernel = tgt;
            tgt_kernel.push_back(model::Token::target_latent(0));

            auto dists = engine::predict_marginals(m, ctx, tgt_kernel);
            auto dists_theta = engine::predict_marginals(m, ctx_theta, tgt);
            std::vector<double> xc(inst.x.begin(), inst.x.begin() + n_ctx);
            std::vector<double> yc(inst.y.begin(), inst.y.begin() + n_ctx);
            for (int64_t j = 0; j < n_eval; ++j) {
                double truth = inst.y[static_cast<size_t>(30 + j)];
                lpd += std::get<GaussianMixture1D>(dists[static_cast<size_t>(j)]).log_prob(truth);
                lpd_theta +=
                    std::get<GaussianMixture1D>(dists_theta[static_cast<size_t>(j)]).log_prob(truth);
                auto ex = tasks::gp_predict(xc, yc, 1, &inst.x[static_cast<size_t>(30 + j)], *inst.gp,
                                            noise_var);
                double z = (truth - ex.mean);
                lpd_exact += -0.5 * z * z / ex.var - 0.5 * std::log(2 * M_PI * ex.var);
                ++count;
            }
            const auto& kdist = std::get<Categorical1D>(dists.back());
            int64_t pick = 0;
            for (size_t c = 1; c < kdist.p.size(); ++c)
                if (kdist.p[c] > kdist.p[static_cast<size_t>(pick)]) pick = static_cast<int64_t>(c);
            acc += pick == inst.latents[0].id ? 1.0 : 0.0;
        }
        os << n_ctx << "," << lpd / count << "," << lpd_exact / count << "," << lpd_theta / count << ","
           << acc / n_test << "\n";
    }
    return 0;
}

// --------------------------------------------------------------------------
// bo
// --------------------------------------------------------------------------

int cmd_bo(const std::string& checkpoint, const std::string& proposer, const std::string& bench_name,
           int seeds, int iters, const std::string& prior_kind, uint64_t seed,
           const std::string& out_dir) {
    const auto& fn = bo::benchmark(bench_name);
    std::optional<model::Model> m;
    if (proposer.rfind("ace", 0) == 0) {
        if (checkpoint.empty()) throw ConfigError("--checkpoint required for " + proposer);
        m = model::Model::load(checkpoint);
        if (m->cfg.n_latents() != fn.dim + 1 || m->cfg.dim != fn.dim)
            throw ConfigError("checkpoint dimensionality does not match benchmark " + bench_name);
    }
    fs::create_directories(out_dir);
    auto path = (fs::path(out_dir) / "regret.csv").string();
    bool append = false;
    int n_init = fn.dim == 1 ? 3 : 10;
    for (int s = 0; s < seeds; ++s) {
        uint64_t run_seed = seed + static_cast<uint64_t>(s);
        Rng prior_rng(run_seed, 0x9);
        std::vector<PriorHistogram> priors;
        if (prior_kind != "none") priors = bo_test_priors(prior_kind, fn.x_opt_unit, prior_rng);

        bo::Proposer propose;
        if (proposer == "random") {
            propose = bo::random_propose;
        } else if (proposer == "ace-ts") {
            propose = [&](const bo::BOState& st, Rng& rng) { return bo::ace_ts_propose(st, *m, rng); };
        } else if (proposer == "ace-mes") {
            propose = [&](const bo::BOState& st, Rng& rng) { return bo::ace_mes_propose(st, *m, rng); };
        } else if (proposer == "acep-ts") {
            if (priors.empty()) throw ConfigError("acep-ts needs --prior flat|weak|strong");
            propose = [&](const bo::BOState& st, Rng& rng) {
                return bo::acep_ts_propose(st, *m, priors, rng);
            };
        } else if (proposer == "gp-ts") {
            propose = [&](const bo::BOState& st, Rng& rng) { return bo::gp_ts_propose(st, rng); };
        } else if (proposer == "pibo-ts") {
            if (priors.empty()) throw ConfigError("pibo-ts needs --prior flat|weak|strong");
            auto pi = [priors](const double* x) {
                double p = 1.0;
                for (size_t d = 0; d < priors.size(); ++d) p *= std::max(priors[d].pdf(x[d]), 1e-12);
                return p;
            };
            propose = [&, pi](const bo::BOState& st, Rng& rng) {
                return bo::pibo_ts_propose(st, pi, 10.0, rng);
            };
        } else {
            throw ConfigError("unknown proposer " + proposer +
                              " (valid: ace-ts, ace-mes, acep-ts, gp-ts, pibo-ts, random)");
        }
        auto rows = bo::run_bo(fn, propose, iters, n_init, run_seed);
        bo::write_regret_csv(path, rows, fn.dim, append);
        append = true;
        log_info("seed " + std::to_string(run_seed) + " final regret " +
                 std::to_string(rows.back().regret));
    }
    return 0;
}

// --------------------------------------------------------------------------
// sbi / sbc
// --------------------------------------------------------------------------

tasks::SimTaskGen::Kind sim_kind_of(const std::string& name) {
    if (name == "oup") return tasks::SimTaskGen::Kind::kOup;
    if (name == "sir") return tasks::SimTaskGen::Kind::kSir;
    if (name == "turin") return tasks::SimTaskGen::Kind::kTurin;
    throw ConfigError("unknown simulator " + name + " (valid: oup, sir, turin)");
}

int cmd_sbi(const std::string& checkpoint, const std::string& sim_name, int n_test, int n_post,
            int runs, uint64_t seed, const std::string& out_dir) {
    auto m = model::Model::load(checkpoint);
    tasks::SimTaskGen gen(sim_kind_of(sim_name), false);
    fs::create_directories(out_dir);
    std::ofstream os(fs::path(out_dir) / "sbi_metrics.csv");
    if (!os) throw IoError("cannot write sbi_metrics.csv");
    os << "task,metric,mean,std,n_runs\n";
    os.precision(8);

    std::vector<double> logps, rmses, mmds;
    for (int r = 0; r < runs; ++r) {
        Rng rng(seed, 7000 + static_cast<uint64_t>(r));
        std::vector<tasks::TaskInstance> tests;
        std::vector<std::vector<double>> truths, raw_thetas;
        std::vector<std::vector<std::vector<double>>> post_samples;
        for (int t = 0; t < n_test; ++t) {
            auto inst = gen.sample(rng, gen.min_ctx());
            std::vector<double> theta_norm;
            std::vector<double> theta_raw;
            for (size_t l = 0; l < inst.latents.size(); ++l) {
                theta_norm.push_back(inst.latents[l].value);
                theta_raw.push_back(gen.raw_theta(l, inst.latents[l].value));
            }
            truths.push_back(theta_norm);
            raw_thetas.push_back(theta_raw);
            post_samples.push_back(sbi::sample_posterior_marginals(m, inst, n_post, rng));
            tests.push_back(std::move(inst));
        }
        logps.push_back(sbi::posterior_logprob(m, tests, engine::kDefaultPermutations, rng));
        rmses.push_back(sbi::rmse_metric(truths, post_samples));
        mmds.push_back(sbi::data_mmd(m, gen, raw_thetas, 16, rng));
    }
    auto put = [&](const char* metric, const std::vector<double>& v) {
        double mean = 0, var = 0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        for (double x : v) var += (x - mean) * (x - mean);
        var = v.size() > 1 ? var / static_cast<double>(v.size() - 1) : 0.0;
        os << sim_name << "," << metric << "," << mean << "," << std::sqrt(var) << "," << v.size()
           << "\n";
    };
    put("log_probs_theta", logps);
    put("rmse_theta", rmses);
    put("mmd_y", mmds);
    return 0;
}

int cmd_sbc(const std::string& checkpoint, const std::string& sim_name, int n_sims, int n_post,
            const std::string& prior_kind, uint64_t seed, const std::string& out_dir) {
    auto m = model::Model::load(checkpoint);
    tasks::SimTaskGen gen(sim_kind_of(sim_name), false);
    size_t L = gen.raw_latent_info().size();
    fs::create_directories(out_dir);
    Rng rng(seed, 0x5bc);

    // matched prior histograms are injected when the model was prior-trained
    bool inject = m.cfg.n_latents() > 0 && prior_kind != "none";
    std::vector<PriorHistogram> priors;
    for (size_t l = 0; l < L; ++l) {
        if (prior_kind == "weak" || prior_kind == "strong") {
            double center = rng.uniform(0.2, 0.8);
            priors.push_back(
                tasks::make_test_prior(rng, center, 0.0, 1.0, prior_kind == "strong" ? 0.1 : 0.25));
        } else {
            priors.push_back(PriorHistogram::uniform(0.0, 1.0));
        }
    }

    auto prior_draw = [&](Rng& r) {
        std::vector<double> theta(L);
        for (size_t l = 0; l < L; ++l) theta[l] = gen.raw_theta(l, priors[l].sample(r));
        return theta;
    };
    auto post = [&](const tasks::TaskInstance& inst, Rng& r) {
        tasks::TaskInstance with_priors = inst;
        if (inject)
            for (size_t l = 0; l < L; ++l) {
                with_priors.latents[l].prior = priors[l];
                with_priors.placement[l] = tasks::Placement::kContextPrior;
            }
        return sbi::sample_posterior_marginals(m, with_priors, n_post, r);
    };
    auto res = sbi::sbc_run(gen, prior_draw, post, n_sims, rng);

    std::ofstream ranks_os(fs::path(out_dir) / "sbc_ranks.csv");
    ranks_os << "latent,sim,fractional_rank\n";
    for (size_t l = 0; l < res.fractional_ranks.size(); ++l)
        for (size_t s = 0; s < res.fractional_ranks[l].size(); ++s)
            ranks_os << l << "," << s << "," << res.fractional_ranks[l][s] << "\n";
    std::ofstream sum_os(fs::path(out_dir) / "sbc_summary.csv");
    sum_os << "latent,max_dev,avg_dev\n";
    for (size_t l = 0; l < res.max_dev.size(); ++l)
        sum_os << l << "," << res.max_dev[l] << "," << res.avg_dev[l] << "\n";
    std::cout << "avg_abs_ecdf_deviation=" << res.avg_dev_all << "\n";
    return 0;
}

// --------------------------------------------------------------------------
// gradcheck
// --------------------------------------------------------------------------

// 64-bit finite-difference sweep over the primitive set plus the full
// training loss on a small model
int cmd_gradcheck() {
    using GD = Graph<double>;
    Rng rng(20240);
    auto rt = [&](Shape s) {
        Tensor<double> t(std::move(s));
        for (auto& v : t.v) v = rng.normal();
        return t;
    };
    double worst = 0;
    auto fd_check = [&](const std::function<GD::Id(GD&, const std::vector<GD::Id>&)>& build,
                        std::vector<Tensor<double>> leaves) {
        auto run = [&](bool grads) {
            auto g = std::make_unique<GD>();
            std::vector<GD::Id> ids;
            for (auto& t : leaves) ids.push_back(g->param(t));
            auto loss = build(*g, ids);
            if (grads) g->backward(loss);
            return std::pair{std::move(g), loss};
        };
        auto [ga, loss] = run(true);
        for (size_t li = 0; li < leaves.size(); ++li)
            for (int64_t i = 0; i < leaves[li].numel(); ++i) {
                double ana = ga->grad(static_cast<GD::Id>(li)).v[static_cast<size_t>(i)];
                double rel = 1;
                for (double h : {1e-4, 1e-5, 1e-6}) {
                    double orig = leaves[li].v[static_cast<size_t>(i)];
                    leaves[li].v[static_cast<size_t>(i)] = orig + h;
                    double fp = run(false).first->val(loss).v[0];
                    leaves[li].v[static_cast<size_t>(i)] = orig - h;
                    double fm = run(false).first->val(loss).v[0];
                    leaves[li].v[static_cast<size_t>(i)] = orig;
                    double num = (fp - fm) / (2 * h);
                    rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1.0});
                    if (rel < 1e-4) break;
                }
                worst = std::max(worst, rel);
            }
    };

    for (int rep = 0; rep < 20; ++rep) {
        fd_check([](GD& g, const std::vector<GD::Id>& L) {
            return g.sum_all(g.mul(g.matmul(L[0], L[1]), L[2]));
        }, {rt({3, 4}), rt({4, 2}), rt({3, 2})});
        fd_check([](GD& g, const std::vector<GD::Id>& L) {
            auto t = g.div(g.mul(g.add(L[0], L[1]), g.sub(L[0], L[2])),
                           g.add_const(g.mul(L[3], L[3]), 1.0));
            return g.sum_all(g.mul(g.softplus(t), L[4]));
        }, {rt({3, 4}), rt({1, 4}), rt({3, 1}), rt({1}), rt({3, 4})});
        fd_check([](GD& g, const std::vector<GD::Id>& L) {
            auto a = g.softmax_last(L[0]);
            auto b = g.logsumexp_last(L[0]);
            auto c = g.layer_norm_last(g.relu(L[0]));
            return g.sum_all(g.add(g.mul(c, L[1]), g.mul(a, g.add(L[1], b))));
        }, {rt({4, 6}), rt({4, 6})});
        fd_check([](GD& g, const std::vector<GD::Id>& L) {
            auto mask = AttentionMask::from_lists(4, {{0, 1, 2}, {1, 3}, {0, 1, 2, 3}});
            auto full = g.attention(L[0], L[1], L[2], 2);
            auto masked = g.attention(L[0], L[1], L[2], 1, &mask);
            return g.sum_all(g.mul(g.add(full, masked), L[3]));
        }, {rt({3, 4}), rt({4, 4}), rt({4, 4}), rt({3, 4})});
        fd_check([](GD& g, const std::vector<GD::Id>& L) {
            auto e = g.embed_rows(L[0], {1, 0, 2});
            auto t = g.take_last(g.clamp_min(g.log(g.add_const(g.mul(e, e), 0.5)), 0.2), {0, 2, 1});
            std::vector<GD::Id> parts = {t, g.slice_cols(L[1], 0, 1)};
            return g.sum_all(g.concat_rows(parts));
        }, {rt({3, 3}), rt({2, 2})});
    }

    // full training loss
    model::ModelConfig cfg;
    cfg.dim = 1;
    cfg.latents = {{"a", false, 0, -1.0, 1.0}, {"b", false, 0, 0.1, 1.0}};
    cfg.d_emb = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.mlp_hidden = 16;
    cfg.embed_hidden = 12;
    cfg.k_components = 2;
    cfg.head_hidden = 12;
    tasks::GaussianToyGen gen(5, 2, 4, true);
    for (int rep = 0; rep < 3; ++rep) {
        auto batch = tasks::build_batch(gen, {2, static_cast<uint64_t>(40 + rep), 0});
        ParamStore<double> store;
        Rng r2(99 + static_cast<uint64_t>(rep));
        model::init_params<double>(cfg, store, r2);
        auto loss_of = [&]() {
            Graph<double> g;
            model::ParamBinder<double> bind(g, store);
            return g.val(train::batch_loss(g, bind, cfg, batch, 2.0).loss).v[0];
        };
        store.zero_grad();
        {
            Graph<double> g;
            model::ParamBinder<double> bind(g, store);
            auto bl = train::batch_loss(g, bind, cfg, batch, 2.0);
            g.backward(bl.loss);
            bind.export_grads();
        }
        for (auto& [name, e] : store.entries())
            for (int64_t i = 0; i < e.w.numel(); ++i) {
                double ana = e.g.v[static_cast<size_t>(i)];
                double rel = 1;
                for (double h : {1e-4, 1e-5, 1e-6}) {
                    double orig = e.w.v[static_cast<size_t>(i)];
                    e.w.v[static_cast<size_t>(i)] = orig + h;
                    double fp = loss_of();
                    e.w.v[static_cast<size_t>(i)] = orig - h;
                    double fm = loss_of();
                    e.w.v[static_cast<size_t>(i)] = orig;
                    double num = (fp - fm) / (2 * h);
                    rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1.0});
                    if (rel < 1e-4) break;
                }
                worst = std::max(worst, rel);
            }
    }
    std::cout << "max_rel_err=" << worst << "\n";
    return worst < 1e-4 ? 0 : 1;
}

int cmd_taskdump(const std::string& gen_id, uint64_t seed, const std::string& out_dir) {
    json g;
    g["id"] = gen_id;
    auto gen = make_generator(g);
    Rng rng(seed, 0xd);
    auto inst = gen->sample(rng, (gen->min_ctx() + gen->max_ctx()) / 2);
    tasks::assign_latent_placement(inst, gen->latents_carry_priors(), rng);
    fs::create_directories(out_dir);
    tasks::dump_task_csv(inst, (fs::path(out_dir) / "task.csv").string(),
                         (fs::path(out_dir) / "priors.csv").string());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"amortized conditioning engine"};
    app.require_subcommand(1);

    std::string config, out_dir = ".", checkpoint, proposer = "ace-ts", bench = "gramacy-lee";
    std::string prior = "none", simulator = "oup", task = "gp", gen_id = "gaussian-toy";
    uint64_t seed = 0;
    bool seed_set = false, fixed_data = false;
    int threads = 1, seeds = 10, iters = 100, n_sims = 500, n_test = 100, n_post = 1000, runs = 2;
    int64_t n_ctx_eval = 25;
    double gp_noise = 0.0;

    auto add_common = [&](CLI::App* c) {
        c->add_option("--seed", seed)->each([&](const std::string&) { seed_set = true; });
        c->add_option("--threads", threads);
        c->add_option("--out-dir", out_dir);
    };

    auto* t = app.add_subcommand("train", "train a model from a JSON config");
    t->add_option("--config", config)->required();
    t->add_flag("--fixed-data", fixed_data);
    add_common(t);

    auto* e = app.add_subcommand("eval", "evaluate a checkpoint on gp or toy tasks");
    e->add_option("--checkpoint", checkpoint)->required();
    e->add_option("--task", task)->check(CLI::IsMember({"gp", "toy"}));
    e->add_option("--prior", prior)->check(CLI::IsMember({"none", "flat", "weak", "strong", "gen"}));
    e->add_option("--n-test", n_test);
    e->add_option("--n-ctx", n_ctx_eval);
    e->add_option("--gp-noise", gp_noise);
    add_common(e);

    auto* b = app.add_subcommand("bo", "run Bayesian optimization on a benchmark");
    b->add_option("--checkpoint", checkpoint);
    b->add_option("--proposer", proposer);
    b->add_option("--benchmark", bench);
    b->add_option("--seeds", seeds);
    b->add_option("--iters", iters);
    b->add_option("--prior", prior)->check(CLI::IsMember({"none", "flat", "weak", "strong"}));
    add_common(b);

    auto* si = app.add_subcommand("sbi", "posterior metrics for a simulator model");
    si->add_option("--checkpoint", checkpoint)->required();
    si->add_option("--simulator", simulator);
    si->add_option("--n-test", n_test);
    si->add_option("--n-post", n_post);
    si->add_option("--runs", runs);
    add_common(si);

    auto* sc = app.add_subcommand("sbc", "simulation-based calibration");
    sc->add_option("--checkpoint", checkpoint)->required();
    sc->add_option("--simulator", simulator);
    sc->add_option("--n-sims", n_sims);
    sc->add_option("--n-post", n_post);
    sc->add_option("--prior", prior)->check(CLI::IsMember({"none", "flat", "weak", "strong"}));
    add_common(sc);

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of all primitives");
    add_common(gc);

    auto* td = app.add_subcommand("taskdump", "dump one sampled task as CSV");
    td->add_option("--generator", gen_id);
    add_common(td);

    CLI11_PARSE(app, argc, argv);

    try {
        if (t->parsed()) return cmd_train(config, seed, seed_set, out_dir, fixed_data, threads);
        if (e->parsed()) {
            auto m = model::Model::load(checkpoint);
            fs::create_directories(out_dir);
            if (task == "toy")
                return cmd_eval_toy(m, prior == "none" && !e->count("--prior") ? "gen" : prior, n_test,
                                    n_ctx_eval, seed, out_dir);
            return cmd_eval_gp(m, gp_noise, n_test, seed, out_dir);
        }
        if (b->parsed()) return cmd_bo(checkpoint, proposer, bench, seeds, iters, prior, seed, out_dir);
        if (si->parsed()) return cmd_sbi(checkpoint, simulator, n_test, n_post, runs, seed, out_dir);
        if (sc->parsed()) return cmd_sbc(checkpoint, simulator, n_sims, n_post, prior, seed, out_dir);
        if (gc->parsed()) return cmd_gradcheck();
        if (td->parsed()) return cmd_taskdump(gen_id, seed, out_dir);
    } catch (const ConfigError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return 2;
    } catch (const IoError& ex) {
        std::cerr << "io error: " << ex.what() << "\n";
        return 3;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
