#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ace/engine.hpp"
#include "ace/model.hpp"
#include "oracles.hpp"

using namespace ace;
using namespace ace::model;
using ace::testing::mean_of;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.dim = 1;
    cfg.latents = {{"mu", false, 0, -1.0, 1.0},
                   {"sigma", false, 0, 0.1, 1.0},
                   {"kind", true, 4, 0.0, 0.0}};
    cfg.d_emb = 32;
    cfg.n_layers = 2;
    cfg.n_heads = 4;
    cfg.mlp_hidden = 48;
    cfg.embed_hidden = 24;
    cfg.k_components = 3;
    cfg.head_hidden = 16;
    return cfg;
}

std::vector<Token> random_context(Rng& rng, int n_data) {
    std::vector<Token> ctx;
    for (int i = 0; i < n_data; ++i)
        ctx.push_back(Token::context_data({rng.uniform(-1, 1)}, rng.normal()));
    return ctx;
}

}  // namespace

TEST_CASE("embedding structure") {
    ModelConfig cfg = small_config();
    ParamStore<double> store;
    Rng rng(1);
    init_params<double>(cfg, store, rng);

    SUBCASE("equal-valued latents differ exactly by their marker embeddings") {
        Graph<double> g;
        ParamBinder<double> bind(g, store);
        std::vector<Token> toks = {Token::context_latent(0, 0.37), Token::context_latent(1, 0.37)};
        auto rows = embed_tokens(g, bind, cfg, toks);
        const auto& e = store.at("emb.e_latent").w;
        for (int64_t c = 0; c < cfg.d_emb; ++c) {
            double diff = g.val(rows).v[static_cast<size_t>(c)] -
                          g.val(rows).v[static_cast<size_t>(cfg.d_emb + c)];
            double expect = e.v[static_cast<size_t>(c)] - e.v[static_cast<size_t>(cfg.d_emb + c)];
            CHECK(diff == doctest::Approx(expect).epsilon(1e-12));
        }
    }
    SUBCASE("flat and sharp priors embed differently") {
        Graph<double> g;
        ParamBinder<double> bind(g, store);
        auto flat = PriorHistogram::uniform(-1, 1);
        auto sharp = PriorHistogram::from_gaussian_mixture(-1, 1, {1.0}, {0.2}, {0.05});
        std::vector<Token> toks = {Token::context_prior(0, flat), Token::context_prior(0, sharp)};
        auto rows = embed_tokens(g, bind, cfg, toks);
        double dist = 0;
        for (int64_t c = 0; c < cfg.d_emb; ++c) {
            double d = g.val(rows).v[static_cast<size_t>(c)] -
                       g.val(rows).v[static_cast<size_t>(cfg.d_emb + c)];
            dist += d * d;
        }
        CHECK(dist > 1e-8);
    }
    SUBCASE("target latent embedding is the marker plus the unknown vector") {
        Graph<double> g;
        ParamBinder<double> bind(g, store);
        std::vector<Token> toks = {Token::target_latent(1)};
        auto rows = embed_tokens(g, bind, cfg, toks);
        const auto& e = store.at("emb.e_latent").w;
        const auto& u = store.at("emb.e_unknown").w;
        for (int64_t c = 0; c < cfg.d_emb; ++c)
            CHECK(g.val(rows).v[static_cast<size_t>(c)] ==
                  doctest::Approx(e.v[static_cast<size_t>(cfg.d_emb + c)] + u.v[static_cast<size_t>(c)])
                      .epsilon(1e-12));
    }
    SUBCASE("discrete ids out of range are rejected") {
        Graph<double> g;
        ParamBinder<double> bind(g, store);
        std::vector<Token> toks = {Token::context_latent_discrete(2, 4)};
        CHECK_THROWS_WITH_AS(embed_tokens(g, bind, cfg, toks), doctest::Contains("out of range"),
                             std::runtime_error);
    }
    SUBCASE("prior grid mismatch is rejected") {
        Graph<double> g;
        ParamBinder<double> bind(g, store);
        std::vector<Token> toks = {Token::context_prior(0, PriorHistogram::uniform(-2, 2))};
        CHECK_THROWS_WITH_AS(embed_tokens(g, bind, cfg, toks), doctest::Contains("trained grid"),
                             std::runtime_error);
    }
}

TEST_CASE("forward map invariances") {
    ModelConfig cfg = small_config();
    Model m = Model::create(cfg, 42);
    Rng rng(7);

    auto forward = [&](const std::vector<Token>& ctx, const std::vector<Token>& tgt) {
        Graph<float> g;
        ParamBinder<float> bind(g, m.store);
        auto feats = ace_forward(g, bind, cfg, ctx, tgt);
        return g.val(feats).v;
    };

    std::vector<Token> ctx = random_context(rng, 9);
    ctx.push_back(Token::context_latent(0, 0.3));
    ctx.push_back(Token::context_latent_discrete(2, 1));
    std::vector<Token> tgt = {Token::target_data({0.1}), Token::target_data({-0.7}),
                              Token::target_latent(1)};

    SUBCASE("context permutation leaves every target output unchanged") {
        auto base = forward(ctx, tgt);
        auto shuffled = ctx;
        std::shuffle(shuffled.begin(), shuffled.end(), rng.gen());
        auto out = forward(shuffled, tgt);
        for (size_t i = 0; i < base.size(); ++i)
            CHECK(out[i] == doctest::Approx(base[i]).epsilon(1e-5));
    }
    SUBCASE("duplicated targets produce identical rows") {
        std::vector<Token> tgt2 = tgt;
        tgt2.push_back(tgt[0]);
        auto out = forward(ctx, tgt2);
        int64_t d = cfg.d_emb;
        for (int64_t c = 0; c < d; ++c)
            CHECK(out[static_cast<size_t>(3 * d + c)] == out[static_cast<size_t>(c)]);
    }
    SUBCASE("removing a target changes no other target") {
        auto base = forward(ctx, tgt);
        std::vector<Token> fewer = {tgt[0], tgt[2]};
        auto out = forward(ctx, fewer);
        int64_t d = cfg.d_emb;
        for (int64_t c = 0; c < d; ++c) {
            CHECK(out[static_cast<size_t>(c)] == base[static_cast<size_t>(c)]);
            CHECK(out[static_cast<size_t>(d + c)] == base[static_cast<size_t>(2 * d + c)]);
        }
    }
    SUBCASE("empty context is a hard error") {
        std::vector<Token> none;
        Graph<float> g;
        ParamBinder<float> bind(g, m.store);
        CHECK_THROWS_WITH_AS(ace_forward(g, bind, cfg, none, tgt), doctest::Contains("empty"),
                             std::runtime_error);
    }
}

TEST_CASE("output heads") {
    ModelConfig cfg = small_config();
    Model m = Model::create(cfg, 3);
    // zero the head nets so outputs equal the global bias exactly
    for (int64_t k = 0; k < cfg.k_components; ++k) {
        std::string p = "head.gmm.c" + std::to_string(k);
        for (const char* s : {".w0", ".b0", ".w1", ".b1"}) {
            auto& t = m.store.at(p + s).w;
            std::fill(t.v.begin(), t.v.end(), 0.0f);
        }
    }
    auto& bias = m.store.at("head.gmm.bias").w;
    std::fill(bias.v.begin(), bias.v.end(), 0.0f);
    for (int64_t k = 0; k < cfg.k_components; ++k)
        bias.v[static_cast<size_t>(2 * cfg.k_components + k)] = -10.0f;  // raw sigma column
    for (const char* s : {".w0", ".b0", ".w1", ".b1"}) {
        auto& t = m.store.at(std::string("head.cat2") + s).w;
        std::fill(t.v.begin(), t.v.end(), 0.0f);
    }

    Rng rng(5);
    std::vector<Token> ctx = random_context(rng, 4);
    std::vector<Token> tgt = {Token::target_data({0.0}), Token::target_latent(2)};
    auto dists = engine::predict_marginals(m, ctx, tgt);

    auto gmm = std::get<GaussianMixture1D>(dists[0]);
    for (double w : gmm.w) CHECK(w == doctest::Approx(1.0 / 3.0).epsilon(1e-6));
    for (double s : gmm.sigma) CHECK(s == doctest::Approx(1e-4).epsilon(1e-9));  // floored
    auto cat = std::get<Categorical1D>(dists[1]);
    for (double p : cat.p) CHECK(p == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("head outputs stay valid for random inputs") {
    ModelConfig cfg = small_config();
    Model m = Model::create(cfg, 11);
    Rng rng(13);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<Token> ctx = random_context(rng, 1 + static_cast<int>(rng.uniform_int(0, 10)));
        std::vector<Token> tgt = {Token::target_data({rng.uniform(-1, 1)}), Token::target_latent(0),
                                  Token::target_latent(2)};
        auto dists = engine::predict_marginals(m, ctx, tgt);
        auto gmm = std::get<GaussianMixture1D>(dists[0]);
        gmm.validate();
        for (double s : gmm.sigma) CHECK(s >= kSigmaFloor * (1 - 1e-9));
        std::get<GaussianMixture1D>(dists[1]).validate();
        std::get<Categorical1D>(dists[2]).validate();
    }
}

TEST_CASE("mixture log-prob, sampling, entropy") {
    SUBCASE("standard normal log density at zero") {
        GaussianMixture1D m{{1.0}, {0.0}, {1.0}};
        CHECK(m.log_prob(0.0) == doctest::Approx(-0.9189385332).epsilon(1e-9));
    }
    SUBCASE("collapsed mixture equals its live component") {
        GaussianMixture1D m{{1.0, 0.0, 0.0}, {0.5, -3.0, 9.0}, {0.7, 0.1, 2.0}};
        GaussianMixture1D s{{1.0}, {0.5}, {0.7}};
        for (double z : {-1.0, 0.0, 0.5, 2.0})
            CHECK(m.log_prob(z) == doctest::Approx(s.log_prob(z)).epsilon(1e-9));
    }
    SUBCASE("density integrates to one") {
        GaussianMixture1D m{{0.3, 0.7}, {-1.0, 2.0}, {0.5, 1.5}};
        double lo = -1.0 - 10 * 0.5, hi = 2.0 + 10 * 1.5;
        int n = 20001;
        double h = (hi - lo) / (n - 1), acc = 0;
        for (int i = 0; i < n; ++i) {
            double f = m.pdf(lo + i * h);
            acc += (i == 0 || i == n - 1) ? 0.5 * f : f;
        }
        CHECK(acc * h == doctest::Approx(1.0).epsilon(1e-4));
    }
    SUBCASE("truncated sampling") {
        Rng rng(17);
        GaussianMixture1D m{{0.4, 0.6}, {0.0, 1.0}, {1.0, 0.5}};
        for (int i = 0; i < 200; ++i) CHECK(m.truncated_sample(rng, 0.3) <= 0.3);
        GaussianMixture1D sn{{1.0}, {0.0}, {1.0}};
        std::vector<double> draws(100000);
        for (auto& d : draws) d = sn.truncated_sample(rng, 0.0);
        CHECK(mean_of(draws) == doctest::Approx(-std::sqrt(2.0 / M_PI)).epsilon(0.01));
        std::vector<double> plain(20000);
        for (auto& d : plain) d = sn.truncated_sample(rng, std::numeric_limits<double>::infinity());
        CHECK(std::abs(mean_of(plain)) < 0.03);
        GaussianMixture1D far{{1.0}, {0.0}, {1e-6}};
        CHECK_THROWS_WITH_AS(far.truncated_sample(rng, -1.0), doctest::Contains("all mass"),
                             std::runtime_error);
    }
    SUBCASE("numeric entropy") {
        GaussianMixture1D unit{{1.0}, {0.0}, {1.0}};
        double gauss_ent = 0.5 * std::log(2.0 * M_PI * std::exp(1.0));
        CHECK(unit.entropy_numeric() == doctest::Approx(gauss_ent).epsilon(1e-3));
        GaussianMixture1D scaled{{1.0}, {0.0}, {2.5}};
        CHECK(scaled.entropy_numeric() - unit.entropy_numeric() ==
              doctest::Approx(std::log(2.5)).epsilon(1e-3));
        GaussianMixture1D two{{0.5, 0.5}, {0.0, 20.0}, {1.0, 1.0}};
        CHECK(two.entropy_numeric() == doctest::Approx(gauss_ent + std::log(2.0)).epsilon(1e-3));
    }
}

TEST_CASE("gradients reach every embedder that is used") {
    ModelConfig cfg = small_config();
    ParamStore<float> store;
    Rng rng(23);
    init_params<float>(cfg, store, rng);

    auto grad_norm_for = [&](bool with_prior, const char* name) {
        store.zero_grad();
        Graph<float> g;
        ParamBinder<float> bind(g, store);
        std::vector<Token> ctx = random_context(rng, 5);
        ctx.push_back(Token::context_latent(1, 0.4));
        ctx.push_back(Token::context_latent_discrete(2, 3));
        if (with_prior) ctx.push_back(Token::context_prior(0, PriorHistogram::uniform(-1, 1)));
        std::vector<Token> tgt = {Token::target_data({0.2}), Token::target_latent(0)};
        auto feats = ace_forward(g, bind, cfg, ctx, tgt);
        auto gmm = gmm_head(g, bind, cfg, feats);
        auto loss = g.sum_all(g.add(g.add(gmm.mu, gmm.sigma), gmm.w));
        g.backward(loss);
        bind.export_grads();
        double s = 0;
        for (float v : store.at(name).g.v) s += std::abs(v);
        return s;
    };

    CHECK(grad_norm_for(true, "emb.fx.w0") > 0);
    CHECK(grad_norm_for(true, "emb.fval.w0") > 0);
    CHECK(grad_norm_for(true, "emb.fprob.w0") > 0);
    CHECK(grad_norm_for(true, "emb.e_data") > 0);
    CHECK(grad_norm_for(true, "emb.e_unknown") > 0);
    CHECK(grad_norm_for(true, "emb.e_latent") > 0);
    CHECK(grad_norm_for(true, "emb.disc2") > 0);
    CHECK(grad_norm_for(false, "emb.fprob.w0") == 0.0);  // no prior token present
}

TEST_CASE("model config and bundle IO") {
    namespace fs = std::filesystem;
    ModelConfig cfg = small_config();
    auto text = cfg.to_json();
    auto back = ModelConfig::from_json(text);
    CHECK(back.d_emb == cfg.d_emb);
    CHECK(back.latents.size() == cfg.latents.size());
    CHECK(back.latents[2].discrete);
    CHECK(back.latents[2].cardinality == 4);

    auto dir = (fs::temp_directory_path() / "ace_model_io").string();
    Model m = Model::create(cfg, 9);
    m.save(dir);
    Model loaded = Model::load(dir);
    CHECK(loaded.store.numel() == m.store.numel());
    CHECK(loaded.store.at("emb.fx.w0").w.v == m.store.at("emb.fx.w0").w.v);

    // a config whose shapes disagree with the stored weights must be refused
    ModelConfig other = cfg;
    other.d_emb = 64;
    {
        std::ofstream os(fs::path(dir) / "model.json");
        os << other.to_json();
    }
    CHECK_THROWS_AS(Model::load(dir), IoError);
    fs::remove_all(dir);
}

TEST_CASE("initialization statistics") {
    ModelConfig cfg = small_config();
    ParamStore<float> store;
    Rng rng(31);
    init_params<float>(cfg, store, rng);
    const auto& w = store.at("layer0.attn.wq").w;  // fan_in = d_emb
    double bound = 1.0 / std::sqrt(static_cast<double>(cfg.d_emb));
    double mx = 0;
    for (float v : w.v) mx = std::max(mx, std::abs(static_cast<double>(v)));
    CHECK(mx <= bound);
    const auto& e = store.at("emb.e_latent").w;
    double var = 0;
    for (float v : e.v) var += static_cast<double>(v) * v;
    var /= static_cast<double>(e.numel());
    CHECK(std::sqrt(var) == doctest::Approx(0.02).epsilon(0.3));
}
