#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "ace/sbi.hpp"
#include "oracles.hpp"

using namespace ace;
using namespace ace::sbi;
using ace::testing::mean_of;

TEST_CASE("RMSE metric") {
    SUBCASE("samples equal to the truth give zero") {
        std::vector<std::vector<double>> truths = {{0.4, -1.2}};
        std::vector<std::vector<std::vector<double>>> samples = {{{0.4, -1.2}, {0.4, -1.2}}};
        CHECK(rmse_metric(truths, samples) == doctest::Approx(0.0).epsilon(1e-15));
    }
    SUBCASE("single observation, symmetric errors of one") {
        std::vector<std::vector<double>> truths = {{2.0}};
        std::vector<std::vector<std::vector<double>>> samples = {{{3.0}, {1.0}}};
        CHECK(rmse_metric(truths, samples) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("matches a naive double-loop reference") {
        Rng rng(3);
        for (int rep = 0; rep < 5; ++rep) {
            size_t n_obs = 4, n_post = 7, L = 3;
            std::vector<std::vector<double>> truths(n_obs, std::vector<double>(L));
            std::vector<std::vector<std::vector<double>>> samples(
                n_obs, std::vector<std::vector<double>>(n_post, std::vector<double>(L)));
            for (auto& t : truths)
                for (auto& v : t) v = rng.normal();
            for (auto& s : samples)
                for (auto& row : s)
                    for (auto& v : row) v = rng.normal();
            // independent reference with explicit loops
            double ref = 0;
            for (size_t i = 0; i < n_obs; ++i) {
                double inner = 0;
                for (size_t l = 0; l < L; ++l)
                    for (size_t j = 0; j < n_post; ++j) {
                        double d = truths[i][l] - samples[i][j][l];
                        inner += d * d;
                    }
                ref += std::sqrt(inner / (static_cast<double>(L) * static_cast<double>(n_post)));
            }
            ref /= static_cast<double>(n_obs);
            CHECK(std::abs(rmse_metric(truths, samples) - ref) < 1e-12);
        }
    }
}

TEST_CASE("MMD metric") {
    Rng rng(7);
    SUBCASE("identical sample sets give zero") {
        std::vector<std::vector<double>> a;
        for (int i = 0; i < 50; ++i) a.push_back({rng.normal(), rng.normal()});
        CHECK(mmd_metric(a, a) < 1e-9);
    }
    SUBCASE("same distribution stays small, separated grows large") {
        std::vector<std::vector<double>> a, b, c;
        for (int i = 0; i < 500; ++i) {
            a.push_back({rng.normal()});
            b.push_back({rng.normal()});
            c.push_back({rng.normal(5.0, 1.0)});
        }
        CHECK(mmd_metric(a, b) < 0.05);
        CHECK(mmd_metric(a, c) > 0.5);
    }
    SUBCASE("symmetric in its arguments") {
        std::vector<std::vector<double>> a, b;
        for (int i = 0; i < 40; ++i) {
            a.push_back({rng.normal()});
            b.push_back({rng.normal(1.0, 2.0)});
        }
        CHECK(mmd_metric(a, b) == doctest::Approx(mmd_metric(b, a)).epsilon(1e-12));
        auto b_shuffled = b;
        std::shuffle(b_shuffled.begin(), b_shuffled.end(), rng.gen());
        CHECK(mmd_metric(a, b) == doctest::Approx(mmd_metric(a, b_shuffled)).epsilon(1e-12));
    }
}

TEST_CASE("coverage metric") {
    Rng rng(11);
    SUBCASE("an oracle posterior is calibrated at the nominal level") {
        size_t n_sets = 1000, n_post = 5000;
        std::vector<std::vector<double>> truths(n_sets, std::vector<double>(1));
        std::vector<std::vector<std::vector<double>>> samples(
            n_sets, std::vector<std::vector<double>>(n_post, std::vector<double>(1)));
        for (size_t i = 0; i < n_sets; ++i) {
            truths[i][0] = rng.normal();
            for (size_t j = 0; j < n_post; ++j) samples[i][j][0] = rng.normal();
        }
        auto cov = coverage_metric(truths, samples, 0.95);
        CHECK(std::abs(cov[0] - 0.95) < 0.02);
    }
    SUBCASE("a collapsed posterior covers nothing") {
        size_t n_sets = 200;
        std::vector<std::vector<double>> truths(n_sets, std::vector<double>(1));
        std::vector<std::vector<std::vector<double>>> samples(
            n_sets, std::vector<std::vector<double>>(50, std::vector<double>(1, 7.0)));
        for (auto& t : truths) t[0] = rng.normal();
        auto cov = coverage_metric(truths, samples, 0.95);
        CHECK(cov[0] == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("quantiles match a sorted-array reference") {
        for (int rep = 0; rep < 10; ++rep) {
            std::vector<double> v(37);
            for (auto& x : v) x = rng.normal();
            for (double p : {0.025, 0.5, 0.975}) {
                auto sorted = v;
                std::sort(sorted.begin(), sorted.end());
                double pos = p * static_cast<double>(sorted.size() - 1);
                size_t lo = static_cast<size_t>(std::floor(pos));
                size_t hi = std::min(lo + 1, sorted.size() - 1);
                double ref = sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
                CHECK(empirical_quantile(v, p) == doctest::Approx(ref).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("simulation-based calibration statistics") {
    Rng rng(13);
    SUBCASE("uniform ranks sit inside the null band") {
        std::vector<double> ranks(1000);
        for (auto& r : ranks) r = rng.uniform();
        auto res = sbc_from_ranks({ranks});
        CHECK(res.avg_dev[0] < 0.03);   // null scale is about 0.01 at n=1000
        CHECK(res.max_dev[0] < 0.07);
    }
    SUBCASE("constant ranks are maximally miscalibrated") {
        std::vector<double> ranks(1000, 0.0);
        auto res = sbc_from_ranks({ranks});
        CHECK(res.avg_dev[0] == doctest::Approx(0.5).epsilon(0.01));
    }
    SUBCASE("rank counts are conserved") {
        std::vector<double> ranks(257);
        for (auto& r : ranks) r = rng.uniform();
        auto res = sbc_from_ranks({ranks});
        CHECK(res.fractional_ranks[0].size() == 257);
    }
}

TEST_CASE("bootstrap comparison") {
    Rng rng(17);
    SUBCASE("identical run sets are indistinguishable") {
        std::vector<double> a = {1.0, 1.1, 0.9, 1.05, 0.95};
        auto v = bootstrap_compare(a, a, 20000, 0.05, 1);
        CHECK(v.indistinguishable);
        CHECK(v.p_b_beats_a == doctest::Approx(0.5).epsilon(0.15));
    }
    SUBCASE("disjoint supports differ") {
        std::vector<double> a = {10.0, 10.2, 9.9, 10.1};
        std::vector<double> b = {0.0, 0.3, -0.1, 0.2};
        auto v = bootstrap_compare(a, b, 20000, 0.05, 1);
        CHECK_FALSE(v.indistinguishable);
        CHECK(v.p_b_beats_a < 1e-6);
    }
    SUBCASE("verdicts match a reference resampling implementation on 20 fixtures") {
        for (int fix = 0; fix < 20; ++fix) {
            bool shifted = fix % 2 == 1;
            std::vector<double> a(12), b(12);
            for (auto& v : a) v = rng.normal(0.0, 1.0);
            for (auto& v : b) v = rng.normal(shifted ? -6.0 : 0.0, 1.0);
            auto got = bootstrap_compare(a, b, 30000, 0.05, 100 + static_cast<uint64_t>(fix));

            // independent reference resampler
            Rng ref_rng(777 + static_cast<uint64_t>(fix));
            int64_t wins = 0;
            const int64_t n_boot = 30000;
            for (int64_t it = 0; it < n_boot; ++it) {
                double ma = 0, mb = 0;
                for (size_t i = 0; i < a.size(); ++i)
                    ma += a[static_cast<size_t>(ref_rng.uniform_int(0, 11))];
                for (size_t i = 0; i < b.size(); ++i)
                    mb += b[static_cast<size_t>(ref_rng.uniform_int(0, 11))];
                if (mb / 12.0 > ma / 12.0) ++wins;
            }
            bool ref_indist = static_cast<double>(wins) / n_boot > 0.05;
            CHECK(got.indistinguishable == ref_indist);
        }
    }
}

TEST_CASE("model-driven harnesses run end to end on an untrained model") {
    model::ModelConfig cfg;
    cfg.dim = 1;
    cfg.latents = {{"theta1", false, 0, 0.0, 1.0}, {"theta2", false, 0, 0.0, 1.0}};
    cfg.d_emb = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.mlp_hidden = 16;
    cfg.embed_hidden = 12;
    cfg.k_components = 2;
    cfg.head_hidden = 12;
    auto m = model::Model::create(cfg, 3);
    tasks::SimTaskGen gen(tasks::SimTaskGen::Kind::kOup, false);
    Rng rng(5);

    SUBCASE("posterior marginal draws have the right shape") {
        auto inst = gen.sample(rng, 15);
        auto draws = sample_posterior_marginals(m, inst, 32, rng);
        CHECK(draws.size() == 32);
        CHECK(draws[0].size() == 2);
        for (const auto& d : draws)
            for (double v : d) CHECK(std::isfinite(v));
    }
    SUBCASE("joint log-probability is finite") {
        std::vector<tasks::TaskInstance> tests;
        for (int i = 0; i < 3; ++i) tests.push_back(gen.sample(rng, 15));
        double lp = posterior_logprob(m, tests, 2, rng);
        CHECK(std::isfinite(lp));
    }
    SUBCASE("sbc loop produces one rank per simulation") {
        auto prior = [&](Rng& r) {
            return std::vector<double>{r.uniform(0.0, 2.0), r.uniform(-2.0, 2.0)};
        };
        auto post = [&](const tasks::TaskInstance& inst, Rng& r) {
            return sample_posterior_marginals(m, inst, 40, r);
        };
        auto res = sbc_run(gen, prior, post, 25, rng);
        CHECK(res.fractional_ranks.size() == 2);
        CHECK(res.fractional_ranks[0].size() == 25);
        CHECK(res.avg_dev_all >= 0.0);
    }
    SUBCASE("data prediction MMD runs") {
        std::vector<std::vector<double>> thetas = {{1.0, 0.5}, {0.3, -1.0}};
        double v = data_mmd(m, gen, thetas, 8, rng);
        CHECK(std::isfinite(v));
        CHECK(v >= 0.0);
    }
}
