#include "ace/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ace::engine {

using model::Token;

namespace {

void check_request(const model::ModelConfig& cfg, std::span<const Token> context,
                   std::span<const Token> targets) {
    std::vector<bool> known(static_cast<size_t>(cfg.n_latents()), false);
    for (const Token& t : context)
        if (t.kind == Token::Kind::kLatent && (t.vkind == Token::ValueKind::kContinuous ||
                                               t.vkind == Token::ValueKind::kDiscrete)) {
            if (t.latent < 0 || t.latent >= cfg.n_latents())
                throw std::runtime_error("context latent index out of range");
            known[static_cast<size_t>(t.latent)] = true;
        }
    for (const Token& t : targets) {
        if (t.kind != Token::Kind::kLatent) continue;
        if (t.latent < 0 || t.latent >= cfg.n_latents())
            throw std::runtime_error("target latent index out of range");
        if (known[static_cast<size_t>(t.latent)])
            throw std::runtime_error("latent " + std::to_string(t.latent) +
                                     " is already given in the context");
    }
}

bool is_discrete_target(const model::ModelConfig& cfg, const Token& t) {
    return t.kind == Token::Kind::kLatent && cfg.latents[static_cast<size_t>(t.latent)].discrete;
}

}  // namespace

std::vector<PredDist> predict_marginals(const model::Model& m, std::span<const Token> context,
                                        std::span<const Token> targets) {
    check_request(m.cfg, context, targets);
    if (targets.empty()) return {};
    // heads want targets grouped as [continuous..., discrete...]; outputs are
    // exchangeable over target order, so regroup and un-permute afterwards
    std::vector<size_t> cont_rows, disc_rows;
    for (size_t i = 0; i < targets.size(); ++i)
        (is_discrete_target(m.cfg, targets[i]) ? disc_rows : cont_rows).push_back(i);
    std::vector<Token> ordered;
    ordered.reserve(targets.size());
    for (size_t i : cont_rows) ordered.push_back(targets[i]);
    for (size_t i : disc_rows) ordered.push_back(targets[i]);

    Graph<float> g;
    model::ParamBinder<float> binder(g, m.store);
    auto feats = model::ace_forward(g, binder, m.cfg, context, std::span<const Token>(ordered));

    std::vector<PredDist> out(targets.size(), GaussianMixture1D{});
    int64_t n_cont = static_cast<int64_t>(cont_rows.size());
    if (n_cont > 0) {
        auto cont_feats =
            n_cont == static_cast<int64_t>(ordered.size()) ? feats : g.slice_rows(feats, 0, n_cont);
        auto gmm = model::gmm_head(g, binder, m.cfg, cont_feats);
        for (int64_t r = 0; r < n_cont; ++r)
            out[cont_rows[static_cast<size_t>(r)]] = model::read_gmm_row(g, gmm, r);
    }
    for (size_t d = 0; d < disc_rows.size(); ++d) {
        int64_t row = n_cont + static_cast<int64_t>(d);
        auto frow = g.slice_rows(feats, row, row + 1);
        auto logits = model::cat_head(g, binder, m.cfg, frow, ordered[static_cast<size_t>(row)].latent);
        out[disc_rows[d]] = model::read_cat_row(g, logits, 0);
    }
    return out;
}

model::Token as_context_value(const Token& target, const model::ModelConfig& cfg, double value) {
    if (target.kind == Token::Kind::kData) return Token::context_data(target.x, value);
    if (cfg.latents[static_cast<size_t>(target.latent)].discrete)
        return Token::context_latent_discrete(target.latent, static_cast<int64_t>(std::llround(value)));
    return Token::context_latent(target.latent, value);
}

namespace {

std::vector<std::vector<size_t>> permutations_for(size_t m, int n_perm, Rng& rng) {
    std::vector<size_t> base(m);
    std::iota(base.begin(), base.end(), 0);
    std::vector<std::vector<size_t>> perms;
    if (m <= 4) {  // exact enumeration for small target sets
        std::vector<size_t> p = base;
        do {
            perms.push_back(p);
        } while (std::next_permutation(p.begin(), p.end()));
    } else {
        for (int i = 0; i < n_perm; ++i) {
            std::vector<size_t> p = base;
            std::shuffle(p.begin(), p.end(), rng.gen());
            perms.push_back(std::move(p));
        }
    }
    return perms;
}

double single_log_prob(const PredDist& dist, const Token& target, const model::ModelConfig& cfg,
                       double value) {
    if (std::holds_alternative<Categorical1D>(dist)) {
        (void)target;
        (void)cfg;
        return std::get<Categorical1D>(dist).log_prob(static_cast<int64_t>(std::llround(value)));
    }
    return std::get<GaussianMixture1D>(dist).log_prob(value);
}

}  // namespace

double ar_joint_logprob(const model::Model& m, const std::vector<Token>& context,
                        const std::vector<Token>& targets, const std::vector<double>& values,
                        int n_perm, Rng& rng) {
    if (targets.empty()) throw std::runtime_error("ar_joint_logprob: no targets");
    if (values.size() != targets.size())
        throw std::runtime_error("ar_joint_logprob: one value per target required");
    if (n_perm < 1) throw std::runtime_error("ar_joint_logprob: n_perm must be >= 1");
    auto perms = permutations_for(targets.size(), n_perm, rng);
    std::vector<double> path_logps;
    path_logps.reserve(perms.size());
    for (const auto& perm : perms) {
        std::vector<Token> ctx = context;
        double acc = 0;
        for (size_t step = 0; step < perm.size(); ++step) {
            size_t idx = perm[step];
            auto dists = predict_marginals(m, ctx, std::span<const Token>(&targets[idx], 1));
            acc += single_log_prob(dists[0], targets[idx], m.cfg, values[idx]);
            ctx.push_back(as_context_value(targets[idx], m.cfg, values[idx]));
        }
        path_logps.push_back(acc);
    }
    double mx = *std::max_element(path_logps.begin(), path_logps.end());
    double s = 0;
    for (double lp : path_logps) s += std::exp(lp - mx);
    return mx + std::log(s) - std::log(static_cast<double>(path_logps.size()));
}

JointSample ar_joint_sample(const model::Model& m, std::vector<Token> context,
                            const std::vector<Token>& targets, int n_perm, Rng& rng) {
    if (targets.empty()) throw std::runtime_error("ar_joint_sample: no targets");
    std::vector<size_t> perm(targets.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.gen());

    JointSample out;
    out.values.assign(targets.size(), 0.0);
    std::vector<Token> ctx = context;
    for (size_t step = 0; step < perm.size(); ++step) {
        size_t idx = perm[step];
        auto dists = predict_marginals(m, ctx, std::span<const Token>(&targets[idx], 1));
        double v;
        if (std::holds_alternative<Categorical1D>(dists[0]))
            v = static_cast<double>(std::get<Categorical1D>(dists[0]).sample(rng));
        else
            v = std::get<GaussianMixture1D>(dists[0]).sample(rng);
        out.values[idx] = v;
        ctx.push_back(as_context_value(targets[idx], m.cfg, v));
    }
    out.log_prob = ar_joint_logprob(m, context, targets, out.values, n_perm, rng);
    return out;
}

}  // namespace ace::engine
