#include "ace/model.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace ace::model {

using nlohmann::json;

void ModelConfig::validate() const {
    if (d_emb <= 0 || n_layers <= 0 || n_heads <= 0 || mlp_hidden <= 0 || embed_hidden <= 0 ||
        head_hidden <= 0)
        throw std::runtime_error("model config: sizes must be positive");
    if (d_emb % n_heads != 0) throw std::runtime_error("model config: d_emb must divide by n_heads");
    if (k_components < 1) throw std::runtime_error("model config: k_components must be >= 1");
    if (n_bins != PriorHistogram::kPriorBins)
        throw std::runtime_error("model config: n_bins must be 100");
    if (dim < 1) throw std::runtime_error("model config: dim must be >= 1");
    for (const auto& l : latents) {
        if (l.discrete && l.cardinality < 2)
            throw std::runtime_error("model config: discrete latent needs cardinality >= 2");
        if (!l.discrete && !(l.lo < l.hi))
            throw std::runtime_error("model config: latent grid needs lo < hi");
    }
}

std::string ModelConfig::to_json() const {
    json j;
    j["schema_version"] = 1;
    j["dim"] = dim;
    j["d_emb"] = d_emb;
    j["n_layers"] = n_layers;
    j["n_heads"] = n_heads;
    j["mlp_hidden"] = mlp_hidden;
    j["embed_hidden"] = embed_hidden;
    j["k_components"] = k_components;
    j["head_hidden"] = head_hidden;
    j["n_bins"] = n_bins;
    j["latents"] = json::array();
    for (const auto& l : latents)
        j["latents"].push_back({{"name", l.name},
                                {"discrete", l.discrete},
                                {"cardinality", l.cardinality},
                                {"lo", l.lo},
                                {"hi", l.hi}});
    return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1)
        throw IoError("model config: unsupported schema_version");
    ModelConfig c;
    c.dim = j.at("dim").get<int>();
    c.d_emb = j.at("d_emb").get<int64_t>();
    c.n_layers = j.at("n_layers").get<int64_t>();
    c.n_heads = j.at("n_heads").get<int64_t>();
    c.mlp_hidden = j.at("mlp_hidden").get<int64_t>();
    c.embed_hidden = j.at("embed_hidden").get<int64_t>();
    c.k_components = j.at("k_components").get<int64_t>();
    c.head_hidden = j.at("head_hidden").get<int64_t>();
    c.n_bins = j.at("n_bins").get<int64_t>();
    for (const auto& l : j.at("latents")) {
        LatentKind k;
        k.name = l.at("name").get<std::string>();
        k.discrete = l.at("discrete").get<bool>();
        k.cardinality = l.at("cardinality").get<int64_t>();
        k.lo = l.at("lo").get<double>();
        k.hi = l.at("hi").get<double>();
        c.latents.push_back(std::move(k));
    }
    c.validate();
    return c;
}

std::vector<LatentKind> ModelConfig::latents_from(const std::vector<tasks::Latent>& info) {
    std::vector<LatentKind> out;
    for (const auto& l : info) out.push_back({l.name, l.discrete, l.cardinality, l.lo, l.hi});
    return out;
}

// ---------------------------------------------------------------------------
// tokens
// ---------------------------------------------------------------------------

Token Token::context_data(std::vector<double> x, double y) {
    Token t;
    t.role = Role::kContext;
    t.kind = Kind::kData;
    t.vkind = ValueKind::kContinuous;
    t.x = std::move(x);
    t.value = y;
    return t;
}

Token Token::target_data(std::vector<double> x) {
    Token t;
    t.role = Role::kTarget;
    t.kind = Kind::kData;
    t.vkind = ValueKind::kUnknown;
    t.x = std::move(x);
    return t;
}

Token Token::context_latent(int64_t l, double value) {
    Token t;
    t.role = Role::kContext;
    t.kind = Kind::kLatent;
    t.vkind = ValueKind::kContinuous;
    t.latent = l;
    t.value = value;
    return t;
}

Token Token::context_latent_discrete(int64_t l, int64_t id) {
    Token t;
    t.role = Role::kContext;
    t.kind = Kind::kLatent;
    t.vkind = ValueKind::kDiscrete;
    t.latent = l;
    t.id = id;
    return t;
}

Token Token::context_prior(int64_t l, PriorHistogram prior) {
    prior.validate();
    Token t;
    t.role = Role::kContext;
    t.kind = Kind::kLatent;
    t.vkind = ValueKind::kPrior;
    t.latent = l;
    t.prior = std::move(prior);
    return t;
}

Token Token::target_latent(int64_t l) {
    Token t;
    t.role = Role::kTarget;
    t.kind = Kind::kLatent;
    t.vkind = ValueKind::kUnknown;
    t.latent = l;
    return t;
}

// ---------------------------------------------------------------------------
// parameter initialization
// ---------------------------------------------------------------------------

namespace {

template <typename T>
Tensor<T> linear_init(Rng& rng, int64_t fan_in, int64_t fan_out) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor<T> w({fan_in, fan_out});
    for (auto& v : w.v) v = static_cast<T>(rng.uniform(-bound, bound));
    return w;
}

// biases share the U(-1/sqrt(fan_in), +1/sqrt(fan_in)) range; a nonzero bias
// keeps ReLU pre-activations off the exact kink for constant features
template <typename T>
Tensor<T> bias_init(Rng& rng, int64_t fan_in, int64_t n) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Tensor<T> b({1, n});
    for (auto& v : b.v) v = static_cast<T>(rng.uniform(-bound, bound));
    return b;
}

template <typename T>
Tensor<T> embedding_init(Rng& rng, int64_t rows, int64_t cols) {
    Tensor<T> w({rows, cols});
    for (auto& v : w.v) v = static_cast<T>(rng.normal(0.0, 0.02));
    return w;
}

template <typename T>
void add_mlp(ParamStore<T>& s, Rng& rng, const std::string& prefix, int64_t in, int64_t hidden,
             int64_t out) {
    s.add(prefix + ".w0", linear_init<T>(rng, in, hidden));
    s.add(prefix + ".b0", bias_init<T>(rng, in, hidden));
    s.add(prefix + ".w1", linear_init<T>(rng, hidden, hidden));
    s.add(prefix + ".b1", bias_init<T>(rng, hidden, hidden));
    s.add(prefix + ".w2", linear_init<T>(rng, hidden, out));
    s.add(prefix + ".b2", bias_init<T>(rng, hidden, out));
}

}  // namespace

template <typename T>
void init_params(const ModelConfig& cfg, ParamStore<T>& s, Rng& rng) {
    cfg.validate();
    int64_t d = cfg.d_emb;
    add_mlp(s, rng, "emb.fx", cfg.dim, cfg.embed_hidden, d);
    add_mlp(s, rng, "emb.fval", 1, cfg.embed_hidden, d);
    add_mlp(s, rng, "emb.fprob", cfg.n_bins, cfg.embed_hidden, d);
    s.add("emb.e_data", embedding_init<T>(rng, 1, d));
    s.add("emb.e_unknown", embedding_init<T>(rng, 1, d));
    if (cfg.n_latents() > 0) s.add("emb.e_latent", embedding_init<T>(rng, cfg.n_latents(), d));
    for (int64_t l = 0; l < cfg.n_latents(); ++l)
        if (cfg.latents[static_cast<size_t>(l)].discrete)
            s.add("emb.disc" + std::to_string(l),
                  embedding_init<T>(rng, cfg.latents[static_cast<size_t>(l)].cardinality, d));
    for (int64_t b = 0; b < cfg.n_layers; ++b) {
        std::string p = "layer" + std::to_string(b);
        for (const char* w : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"})
            s.add(p + w, linear_init<T>(rng, d, d));
        for (const char* bn : {".attn.bq", ".attn.bk", ".attn.bv", ".attn.bo"})
            s.add(p + bn, bias_init<T>(rng, d, d));
        s.add(p + ".ln1.g", Tensor<T>::full({1, d}, T(1)));
        s.add(p + ".ln1.b", Tensor<T>::zeros({1, d}));
        s.add(p + ".ln2.g", Tensor<T>::full({1, d}, T(1)));
        s.add(p + ".ln2.b", Tensor<T>::zeros({1, d}));
        s.add(p + ".mlp.w0", linear_init<T>(rng, d, cfg.mlp_hidden));
        s.add(p + ".mlp.b0", bias_init<T>(rng, d, cfg.mlp_hidden));
        s.add(p + ".mlp.w1", linear_init<T>(rng, cfg.mlp_hidden, d));
        s.add(p + ".mlp.b1", bias_init<T>(rng, cfg.mlp_hidden, d));
    }
    s.add("final_ln.g", Tensor<T>::full({1, d}, T(1)));
    s.add("final_ln.b", Tensor<T>::zeros({1, d}));
    for (int64_t k = 0; k < cfg.k_components; ++k) {
        std::string p = "head.gmm.c" + std::to_string(k);
        s.add(p + ".w0", linear_init<T>(rng, d, cfg.head_hidden));
        s.add(p + ".b0", bias_init<T>(rng, d, cfg.head_hidden));
        s.add(p + ".w1", linear_init<T>(rng, cfg.head_hidden, 3));
        s.add(p + ".b1", bias_init<T>(rng, cfg.head_hidden, 3));
    }
    s.add("head.gmm.bias", Tensor<T>::zeros({1, 3 * cfg.k_components}));
    for (int64_t l = 0; l < cfg.n_latents(); ++l) {
        const auto& lk = cfg.latents[static_cast<size_t>(l)];
        if (!lk.discrete) continue;
        std::string p = "head.cat" + std::to_string(l);
        s.add(p + ".w0", linear_init<T>(rng, d, cfg.head_hidden));
        s.add(p + ".b0", bias_init<T>(rng, d, cfg.head_hidden));
        s.add(p + ".w1", linear_init<T>(rng, cfg.head_hidden, lk.cardinality));
        s.add(p + ".b1", bias_init<T>(rng, cfg.head_hidden, lk.cardinality));
    }
}

template <typename T>
typename Graph<T>::Id ParamBinder<T>::operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    auto id = g_->param(cstore_->at(name).w);
    bound_.emplace(name, id);
    return id;
}

template <typename T>
void ParamBinder<T>::export_grads() {
    if (!store_) throw std::runtime_error("export_grads on a read-only binder");
    for (const auto& [name, id] : bound_) store_->accumulate_grad(name, g_->grad(id));
}

// ---------------------------------------------------------------------------
// embedding
// ---------------------------------------------------------------------------

namespace {

template <typename T>
using Id = typename Graph<T>::Id;

template <typename T>
Id<T> mlp3(Graph<T>& g, ParamBinder<T>& p, const std::string& prefix, Id<T> x) {
    auto h = g.relu(g.add(g.matmul(x, p(prefix + ".w0")), p(prefix + ".b0")));
    h = g.relu(g.add(g.matmul(h, p(prefix + ".w1")), p(prefix + ".b1")));
    return g.add(g.matmul(h, p(prefix + ".w2")), p(prefix + ".b2"));
}

template <typename T>
Id<T> input_matrix(Graph<T>& g, const std::vector<double>& vals, int64_t rows, int64_t cols) {
    Tensor<T> t({rows, cols});
    for (int64_t i = 0; i < rows * cols; ++i) t.v[static_cast<size_t>(i)] = static_cast<T>(vals[static_cast<size_t>(i)]);
    return g.input(std::move(t));
}

}  // namespace

template <typename T>
typename Graph<T>::Id embed_tokens(Graph<T>& g, ParamBinder<T>& p, const ModelConfig& cfg,
                                   std::span<const Token> tokens) {
    if (tokens.empty()) throw std::runtime_error("embed_tokens: empty token list");
    using VK = Token::ValueKind;
    using KD = Token::Kind;
    std::vector<typename Graph<T>::Id> parts;

    size_t i = 0;
    while (i < tokens.size()) {
        const Token& t0 = tokens[i];
        // token class of this run: (kind, vkind); discrete latents are kept
        // one per run since each latent has its own value table
        size_t j = i + 1;
        auto same_class = [&](const Token& a, const Token& b) {
            if (a.kind != b.kind || a.vkind != b.vkind || a.role != b.role) return false;
            if (a.kind == KD::kLatent && a.vkind == VK::kDiscrete) return false;
            return true;
        };
        while (j < tokens.size() && same_class(t0, tokens[j])) ++j;
        int64_t n = static_cast<int64_t>(j - i);

        for (size_t t = i; t < j; ++t) {
            const Token& tok = tokens[t];
            if (tok.kind == KD::kLatent) {
                if (tok.latent < 0 || tok.latent >= cfg.n_latents())
                    throw std::runtime_error("token latent index out of range");
                const auto& lk = cfg.latents[static_cast<size_t>(tok.latent)];
                if (tok.vkind == VK::kDiscrete && tok.id >= lk.cardinality)
                    throw std::runtime_error("discrete value id " + std::to_string(tok.id) +
                                             " out of range for latent " + lk.name);
                if (tok.vkind == VK::kPrior && lk.discrete)
                    throw std::runtime_error("histogram prior on discrete latent " + lk.name);
                if (tok.vkind == VK::kPrior &&
                    (tok.prior.lo != lk.lo || tok.prior.hi != lk.hi))
                    throw std::runtime_error("prior grid [" + std::to_string(tok.prior.lo) + "," +
                                             std::to_string(tok.prior.hi) +
                                             "] does not match trained grid [" + std::to_string(lk.lo) +
                                             "," + std::to_string(lk.hi) + "] for latent " + lk.name);
                if (tok.role == Token::Role::kTarget && tok.vkind != VK::kUnknown)
                    throw std::runtime_error("target tokens carry no value");
            }
        }

        typename Graph<T>::Id row_block;
        if (t0.kind == KD::kData) {
            std::vector<double> xs;
            xs.reserve(static_cast<size_t>(n) * cfg.dim);
            for (size_t t = i; t < j; ++t) {
                if (static_cast<int>(tokens[t].x.size()) != cfg.dim)
                    throw std::runtime_error("data token covariate size mismatch");
                xs.insert(xs.end(), tokens[t].x.begin(), tokens[t].x.end());
            }
            auto fx = mlp3(g, p, "emb.fx", input_matrix(g, xs, n, cfg.dim));
            if (t0.vkind == VK::kContinuous) {  // context data: f_x(x) + f_val(y) + e_data
                std::vector<double> ys(static_cast<size_t>(n));
                for (size_t t = i; t < j; ++t) ys[t - i] = tokens[t].value;
                auto fv = mlp3(g, p, "emb.fval", input_matrix(g, ys, n, 1));
                row_block = g.add(g.add(fx, fv), p("emb.e_data"));
            } else {  // target data: f_x(x) + e_? + e_data
                row_block = g.add(g.add(fx, p("emb.e_unknown")), p("emb.e_data"));
            }
        } else if (t0.vkind == VK::kContinuous) {  // known latent: f_val(theta) + e_l
            std::vector<double> vals(static_cast<size_t>(n));
            std::vector<int64_t> ids(static_cast<size_t>(n));
            for (size_t t = i; t < j; ++t) {
                vals[t - i] = tokens[t].value;
                ids[t - i] = tokens[t].latent;
            }
            auto fv = mlp3(g, p, "emb.fval", input_matrix(g, vals, n, 1));
            row_block = g.add(fv, g.embed_rows(p("emb.e_latent"), ids));
        } else if (t0.vkind == VK::kPrior) {  // latent prior: f_prob(p_l) + e_l
            std::vector<double> probs;
            std::vector<int64_t> ids(static_cast<size_t>(n));
            probs.reserve(static_cast<size_t>(n * cfg.n_bins));
            for (size_t t = i; t < j; ++t) {
                probs.insert(probs.end(), tokens[t].prior.probs.begin(), tokens[t].prior.probs.end());
                ids[t - i] = tokens[t].latent;
            }
            auto fp = mlp3(g, p, "emb.fprob", input_matrix(g, probs, n, cfg.n_bins));
            row_block = g.add(fp, g.embed_rows(p("emb.e_latent"), ids));
        } else if (t0.vkind == VK::kDiscrete) {  // known discrete latent: E_val row + e_l
            auto row = g.embed_rows(p("emb.disc" + std::to_string(t0.latent)), {t0.id});
            row_block = g.add(row, g.embed_rows(p("emb.e_latent"), {t0.latent}));
        } else {  // unknown latent target: e_? + e_l
            std::vector<int64_t> ids(static_cast<size_t>(n));
            for (size_t t = i; t < j; ++t) ids[t - i] = tokens[t].latent;
            row_block = g.add(g.embed_rows(p("emb.e_latent"), ids), p("emb.e_unknown"));
        }
        parts.push_back(row_block);
        i = j;
    }
    if (parts.size() == 1) return parts[0];
    return g.concat_rows(parts);
}

// ---------------------------------------------------------------------------
// transformer
// ---------------------------------------------------------------------------

template <typename T>
typename Graph<T>::Id ace_forward(Graph<T>& g, ParamBinder<T>& p, const ModelConfig& cfg,
                                  std::span<const Token> context, std::span<const Token> targets) {
    if (context.empty()) throw std::runtime_error("ace_forward: conditioning set is empty");
    if (targets.empty()) throw std::runtime_error("ace_forward: no targets requested");
    for (const Token& t : context)
        if (t.role != Token::Role::kContext) throw std::runtime_error("context list holds a target token");
    for (const Token& t : targets)
        if (t.role != Token::Role::kTarget) throw std::runtime_error("target list holds a context token");

    auto C = embed_tokens(g, p, cfg, context);
    auto Tt = embed_tokens(g, p, cfg, targets);
    int heads = static_cast<int>(cfg.n_heads);

    for (int64_t b = 0; b < cfg.n_layers; ++b) {
        std::string lp = "layer" + std::to_string(b);
        auto norm = [&](typename Graph<T>::Id x, const std::string& ln) {
            return g.add(g.mul(g.layer_norm_last(x), p(lp + ln + ".g")), p(lp + ln + ".b"));
        };
        // keys/values from the context state entering this layer, so targets
        // cross-attend to the same representation the context self-attends to
        auto Cn = norm(C, ".ln1");
        auto K = g.add(g.matmul(Cn, p(lp + ".attn.wk")), p(lp + ".attn.bk"));
        auto V = g.add(g.matmul(Cn, p(lp + ".attn.wv")), p(lp + ".attn.bv"));
        auto Qc = g.add(g.matmul(Cn, p(lp + ".attn.wq")), p(lp + ".attn.bq"));
        auto Tn = norm(Tt, ".ln1");
        auto Qt = g.add(g.matmul(Tn, p(lp + ".attn.wq")), p(lp + ".attn.bq"));
        auto attn_c = g.add(g.matmul(g.attention(Qc, K, V, heads), p(lp + ".attn.wo")), p(lp + ".attn.bo"));
        auto attn_t = g.add(g.matmul(g.attention(Qt, K, V, heads), p(lp + ".attn.wo")), p(lp + ".attn.bo"));
        C = g.add(C, attn_c);
        Tt = g.add(Tt, attn_t);

        auto mlp_block = [&](typename Graph<T>::Id x) {
            auto xn = norm(x, ".ln2");
            auto h = g.relu(g.add(g.matmul(xn, p(lp + ".mlp.w0")), p(lp + ".mlp.b0")));
            return g.add(x, g.add(g.matmul(h, p(lp + ".mlp.w1")), p(lp + ".mlp.b1")));
        };
        C = mlp_block(C);
        Tt = mlp_block(Tt);
    }
    return g.add(g.mul(g.layer_norm_last(Tt), p("final_ln.g")), p("final_ln.b"));
}

// ---------------------------------------------------------------------------
// heads
// ---------------------------------------------------------------------------

template <typename T>
GmmRows<T> gmm_head(Graph<T>& g, ParamBinder<T>& p, const ModelConfig& cfg,
                    typename Graph<T>::Id feats) {
    int64_t kc = cfg.k_components;
    std::vector<typename Graph<T>::Id> raw_w, raw_mu, raw_sig;
    for (int64_t k = 0; k < kc; ++k) {
        std::string hp = "head.gmm.c" + std::to_string(k);
        auto h = g.relu(g.add(g.matmul(feats, p(hp + ".w0")), p(hp + ".b0")));
        auto raw = g.add(g.matmul(h, p(hp + ".w1")), p(hp + ".b1"));  // [rows, 3]
        raw_w.push_back(g.slice_cols(raw, 0, 1));
        raw_mu.push_back(g.slice_cols(raw, 1, 2));
        raw_sig.push_back(g.slice_cols(raw, 2, 3));
    }
    auto cat = [&](std::vector<typename Graph<T>::Id>& v) { return g.concat_cols(v); };
    auto bias = p("head.gmm.bias");
    GmmRows<T> out;
    out.logits = g.add(cat(raw_w), g.slice_cols(bias, 0, kc));
    out.w = g.softmax_last(out.logits);
    out.mu = g.add(cat(raw_mu), g.slice_cols(bias, kc, 2 * kc));
    out.sigma = g.clamp_min(g.softplus(g.add(cat(raw_sig), g.slice_cols(bias, 2 * kc, 3 * kc))),
                            T(kSigmaFloor));
    return out;
}

template <typename T>
typename Graph<T>::Id cat_head(Graph<T>& g, ParamBinder<T>& p, const ModelConfig& cfg,
                               typename Graph<T>::Id feats, int64_t latent) {
    const auto& lk = cfg.latents.at(static_cast<size_t>(latent));
    if (!lk.discrete) throw std::runtime_error("categorical head on continuous latent " + lk.name);
    std::string hp = "head.cat" + std::to_string(latent);
    auto h = g.relu(g.add(g.matmul(feats, p(hp + ".w0")), p(hp + ".b0")));
    return g.add(g.matmul(h, p(hp + ".w1")), p(hp + ".b1"));
}

template <typename T>
GaussianMixture1D read_gmm_row(const Graph<T>& g, const GmmRows<T>& rows, int64_t row) {
    const auto& w = g.val(rows.w);
    const auto& mu = g.val(rows.mu);
    const auto& sig = g.val(rows.sigma);
    int64_t k = w.cols();
    GaussianMixture1D m;
    m.w.resize(static_cast<size_t>(k));
    m.mu.resize(static_cast<size_t>(k));
    m.sigma.resize(static_cast<size_t>(k));
    for (int64_t i = 0; i < k; ++i) {
        m.w[static_cast<size_t>(i)] = static_cast<double>(w.v[static_cast<size_t>(row * k + i)]);
        m.mu[static_cast<size_t>(i)] = static_cast<double>(mu.v[static_cast<size_t>(row * k + i)]);
        m.sigma[static_cast<size_t>(i)] = static_cast<double>(sig.v[static_cast<size_t>(row * k + i)]);
    }
    // renormalize away float summation error
    double s = 0;
    for (double wi : m.w) s += wi;
    for (double& wi : m.w) wi /= s;
    m.validate();
    return m;
}

template <typename T>
Categorical1D read_cat_row(const Graph<T>& g, typename Graph<T>::Id logits, int64_t row) {
    const auto& lv = g.val(logits);
    int64_t c = lv.cols();
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t i = 0; i < c; ++i)
        mx = std::max(mx, static_cast<double>(lv.v[static_cast<size_t>(row * c + i)]));
    Categorical1D out;
    out.p.resize(static_cast<size_t>(c));
    double sum = 0;
    for (int64_t i = 0; i < c; ++i) {
        out.p[static_cast<size_t>(i)] = std::exp(static_cast<double>(lv.v[static_cast<size_t>(row * c + i)]) - mx);
        sum += out.p[static_cast<size_t>(i)];
    }
    for (double& v : out.p) v /= sum;
    out.validate();
    return out;
}

// ---------------------------------------------------------------------------
// model bundle
// ---------------------------------------------------------------------------

Model Model::create(const ModelConfig& cfg, uint64_t seed) {
    Model m;
    m.cfg = cfg;
    Rng rng(seed, 0xbeef);
    init_params<float>(cfg, m.store, rng);
    return m;
}

void Model::save(const std::string& dir) const {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    save_checkpoint((fs::path(dir) / "checkpoint.ace").string(), store);
    std::ofstream os(fs::path(dir) / "model.json");
    if (!os) throw IoError("cannot write model.json in " + dir);
    os << cfg.to_json() << "\n";
}

Model Model::load(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream is(fs::path(dir) / "model.json");
    if (!is) throw IoError("cannot open model.json in " + dir);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    Model m;
    m.cfg = ModelConfig::from_json(text);
    Rng rng(0, 0xbeef);
    init_params<float>(m.cfg, m.store, rng);  // establishes expected shapes
    load_checkpoint((fs::path(dir) / "checkpoint.ace").string(), m.store);
    return m;
}

// ---------------------------------------------------------------------------
// tokenization
// ---------------------------------------------------------------------------

TokenizedTask tokenize(const tasks::TaskInstance& inst, const ModelConfig& cfg) {
    if (static_cast<int64_t>(inst.latents.size()) != cfg.n_latents())
        throw std::runtime_error("task latent count does not match model config");
    TokenizedTask out;
    auto xvec = [&](int64_t i) {
        return std::vector<double>(inst.x.begin() + i * inst.dim, inst.x.begin() + (i + 1) * inst.dim);
    };
    for (int64_t i = 0; i < inst.n_ctx; ++i)
        out.ctx.push_back(Token::context_data(xvec(i), inst.y[static_cast<size_t>(i)]));
    for (size_t l = 0; l < inst.latents.size(); ++l) {
        const auto& lk = cfg.latents[l];
        if (inst.placement[l] == tasks::Placement::kContextValue) {
            if (lk.discrete)
                out.ctx.push_back(Token::context_latent_discrete(static_cast<int64_t>(l),
                                                                 inst.latents[l].id));
            else
                out.ctx.push_back(Token::context_latent(static_cast<int64_t>(l), inst.latents[l].value));
        } else if (inst.placement[l] == tasks::Placement::kContextPrior) {
            out.ctx.push_back(Token::context_prior(static_cast<int64_t>(l), *inst.latents[l].prior));
        }
    }
    // targets: data first, then continuous latents, then discrete latents
    for (int64_t i = inst.n_ctx; i < inst.n_points(); ++i) {
        out.tgt.push_back(Token::target_data(xvec(i)));
        out.cont_values.push_back(inst.y[static_cast<size_t>(i)]);
        ++out.n_data_targets;
    }
    for (size_t l = 0; l < inst.latents.size(); ++l) {
        if (inst.placement[l] == tasks::Placement::kContextValue || cfg.latents[l].discrete) continue;
        out.tgt.push_back(Token::target_latent(static_cast<int64_t>(l)));
        out.cont_values.push_back(inst.latents[l].value);
    }
    for (size_t l = 0; l < inst.latents.size(); ++l) {
        if (inst.placement[l] == tasks::Placement::kContextValue || !cfg.latents[l].discrete) continue;
        out.tgt.push_back(Token::target_latent(static_cast<int64_t>(l)));
        out.disc_latents.push_back(static_cast<int64_t>(l));
        out.disc_ids.push_back(inst.latents[l].id);
    }
    return out;
}

template void init_params<float>(const ModelConfig&, ParamStore<float>&, Rng&);
template void init_params<double>(const ModelConfig&, ParamStore<double>&, Rng&);
template class ParamBinder<float>;
template class ParamBinder<double>;
template Graph<float>::Id embed_tokens<float>(Graph<float>&, ParamBinder<float>&, const ModelConfig&,
                                              std::span<const Token>);
template Graph<double>::Id embed_tokens<double>(Graph<double>&, ParamBinder<double>&,
                                                const ModelConfig&, std::span<const Token>);
template Graph<float>::Id ace_forward<float>(Graph<float>&, ParamBinder<float>&, const ModelConfig&,
                                             std::span<const Token>, std::span<const Token>);
template Graph<double>::Id ace_forward<double>(Graph<double>&, ParamBinder<double>&,
                                               const ModelConfig&, std::span<const Token>,
                                               std::span<const Token>);
template GmmRows<float> gmm_head<float>(Graph<float>&, ParamBinder<float>&, const ModelConfig&,
                                        Graph<float>::Id);
template GmmRows<double> gmm_head<double>(Graph<double>&, ParamBinder<double>&, const ModelConfig&,
                                          Graph<double>::Id);
template Graph<float>::Id cat_head<float>(Graph<float>&, ParamBinder<float>&, const ModelConfig&,
                                          Graph<float>::Id, int64_t);
template Graph<double>::Id cat_head<double>(Graph<double>&, ParamBinder<double>&, const ModelConfig&,
                                            Graph<double>::Id, int64_t);
template GaussianMixture1D read_gmm_row<float>(const Graph<float>&, const GmmRows<float>&, int64_t);
template GaussianMixture1D read_gmm_row<double>(const Graph<double>&, const GmmRows<double>&, int64_t);
template Categorical1D read_cat_row<float>(const Graph<float>&, Graph<float>::Id, int64_t);
template Categorical1D read_cat_row<double>(const Graph<double>&, Graph<double>::Id, int64_t);

}  // namespace ace::model
