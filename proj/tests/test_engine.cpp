#include "doctest.h"

#include <cmath>

#include "ace/engine.hpp"

using namespace ace;
using namespace ace::engine;
using model::Token;

namespace {

model::Model make_model() {
    model::ModelConfig cfg;
    cfg.dim = 1;
    cfg.latents = {{"a", false, 0, -1.0, 1.0},
                   {"b", false, 0, 0.0, 2.0},
                   {"k", true, 3, 0.0, 0.0}};
    cfg.d_emb = 24;
    cfg.n_layers = 2;
    cfg.n_heads = 3;
    cfg.mlp_hidden = 32;
    cfg.embed_hidden = 16;
    cfg.k_components = 2;
    cfg.head_hidden = 16;
    return model::Model::create(cfg, 77);
}

std::vector<Token> make_context(Rng& rng, int n) {
    std::vector<Token> ctx;
    for (int i = 0; i < n; ++i) ctx.push_back(Token::context_data({rng.uniform(-1, 1)}, rng.normal()));
    return ctx;
}

}  // namespace

TEST_CASE("marginals: order, invariance, errors") {
    auto m = make_model();
    Rng rng(3);
    auto ctx = make_context(rng, 6);
    ctx.push_back(Token::context_prior(0, PriorHistogram::uniform(-1, 1)));

    SUBCASE("output order matches the request, mixed kinds included") {
        std::vector<Token> tgt = {Token::target_latent(2), Token::target_data({0.5}),
                                  Token::target_latent(1)};
        auto dists = predict_marginals(m, ctx, tgt);
        REQUIRE(dists.size() == 3);
        CHECK(std::holds_alternative<Categorical1D>(dists[0]));
        CHECK(std::holds_alternative<GaussianMixture1D>(dists[1]));
        CHECK(std::holds_alternative<GaussianMixture1D>(dists[2]));
    }
    SUBCASE("context order never changes the marginals") {
        std::vector<Token> tgt = {Token::target_data({0.2}), Token::target_latent(0)};
        auto base = predict_marginals(m, ctx, tgt);
        auto shuffled = ctx;
        std::shuffle(shuffled.begin(), shuffled.end(), rng.gen());
        auto out = predict_marginals(m, shuffled, tgt);
        auto& b0 = std::get<GaussianMixture1D>(base[0]);
        auto& o0 = std::get<GaussianMixture1D>(out[0]);
        for (size_t k = 0; k < b0.k(); ++k) {
            CHECK(o0.mu[k] == doctest::Approx(b0.mu[k]).epsilon(1e-5));
            CHECK(o0.sigma[k] == doctest::Approx(b0.sigma[k]).epsilon(1e-5));
        }
    }
    SUBCASE("latent given as a context value cannot be requested") {
        auto ctx2 = ctx;
        ctx2.push_back(Token::context_latent(1, 0.7));
        std::vector<Token> tgt = {Token::target_latent(1)};
        CHECK_THROWS_WITH_AS(predict_marginals(m, ctx2, tgt),
                             doctest::Contains("already given"), std::runtime_error);
    }
    SUBCASE("latent index out of range") {
        std::vector<Token> tgt = {Token::target_latent(5)};
        CHECK_THROWS_AS(predict_marginals(m, ctx, tgt), std::runtime_error);
    }
    SUBCASE("histogram grid mismatch is a hard error, never rescaled") {
        auto ctx2 = make_context(rng, 3);
        ctx2.push_back(Token::context_prior(1, PriorHistogram::uniform(0.0, 1.0)));  // trained [0,2]
        std::vector<Token> tgt = {Token::target_data({0.0})};
        CHECK_THROWS_WITH_AS(predict_marginals(m, ctx2, tgt), doctest::Contains("trained grid"),
                             std::runtime_error);
    }
}

TEST_CASE("autoregressive joint prediction") {
    auto m = make_model();
    Rng rng(5);
    auto ctx = make_context(rng, 5);

    SUBCASE("a single target reduces to the marginal") {
        std::vector<Token> tgt = {Token::target_latent(0)};
        auto dists = predict_marginals(m, ctx, tgt);
        double v = 0.123;
        Rng r2(1);
        double lp = ar_joint_logprob(m, ctx, tgt, {v}, 4, r2);
        CHECK(lp == doctest::Approx(std::get<GaussianMixture1D>(dists[0]).log_prob(v)).epsilon(1e-9));
    }
    SUBCASE("two enumerated targets are symmetric under swap") {
        std::vector<Token> ab = {Token::target_latent(0), Token::target_latent(1)};
        std::vector<Token> ba = {Token::target_latent(1), Token::target_latent(0)};
        Rng r2(1);
        double lp_ab = ar_joint_logprob(m, ctx, ab, {0.3, 1.2}, 1, r2);
        double lp_ba = ar_joint_logprob(m, ctx, ba, {1.2, 0.3}, 1, r2);
        CHECK(lp_ab == doctest::Approx(lp_ba).epsilon(1e-6));
    }
    SUBCASE("joint samples re-enter the context as plain values") {
        std::vector<Token> tgt = {Token::target_latent(0), Token::target_latent(1),
                                  Token::target_latent(2)};
        Rng r2(9);
        auto js = ar_joint_sample(m, ctx, tgt, 2, r2);
        REQUIRE(js.values.size() == 3);
        CHECK(std::isfinite(js.log_prob));
        // the discrete latent sample is an integer id within range
        double id = js.values[2];
        CHECK(id == std::floor(id));
        CHECK(id >= 0);
        CHECK(id <= 2);
    }
    SUBCASE("as_context_value keeps token kinds straight") {
        auto t1 = as_context_value(Token::target_latent(2), m.cfg, 1.0);
        CHECK(t1.vkind == Token::ValueKind::kDiscrete);
        CHECK(t1.id == 1);
        auto t2 = as_context_value(Token::target_latent(0), m.cfg, 0.25);
        CHECK(t2.vkind == Token::ValueKind::kContinuous);
        auto t3 = as_context_value(Token::target_data({0.5}), m.cfg, -2.0);
        CHECK(t3.kind == Token::Kind::kData);
        CHECK(t3.value == -2.0);
    }
    SUBCASE("requesting nothing is rejected") {
        std::vector<Token> none;
        Rng r2(2);
        CHECK_THROWS_AS(ar_joint_sample(m, ctx, none, 2, r2), std::runtime_error);
    }
}
