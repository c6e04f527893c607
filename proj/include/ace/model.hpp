#pragma once

#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ace/distributions.hpp"
#include "ace/graph.hpp"
#include "ace/param_store.hpp"
#include "ace/tasks.hpp"

namespace ace::model {

struct LatentKind {
    std::string name;
    bool discrete = false;
    int64_t cardinality = 0;
    double lo = 0.0, hi = 1.0;  // trained prior grid (continuous latents)
};

struct ModelConfig {
    int dim = 1;
    std::vector<LatentKind> latents;
    int64_t d_emb = 64;
    int64_t n_layers = 4;
    int64_t n_heads = 4;
    int64_t mlp_hidden = 128;
    int64_t embed_hidden = 64;
    int64_t k_components = 8;   // mixture components; 1 gives the single-Gaussian ablation
    int64_t head_hidden = 64;
    int64_t n_bins = 100;

    int64_t n_latents() const { return static_cast<int64_t>(latents.size()); }
    void validate() const;

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    static std::vector<LatentKind> latents_from(const std::vector<tasks::Latent>& info);
};

// ---------------------------------------------------------------------------
// tokens
// ---------------------------------------------------------------------------

struct Token {
    enum class Role { kContext, kTarget };
    enum class Kind { kData, kLatent };
    enum class ValueKind { kContinuous, kDiscrete, kPrior, kUnknown };

    Role role = Role::kContext;
    Kind kind = Kind::kData;
    ValueKind vkind = ValueKind::kUnknown;
    std::vector<double> x;  // covariates, data tokens only
    int64_t latent = -1;
    double value = 0.0;
    int64_t id = 0;
    PriorHistogram prior;

    static Token context_data(std::vector<double> x, double y);
    static Token target_data(std::vector<double> x);
    static Token context_latent(int64_t l, double value);
    static Token context_latent_discrete(int64_t l, int64_t id);
    static Token context_prior(int64_t l, PriorHistogram prior);
    static Token target_latent(int64_t l);
};

// ---------------------------------------------------------------------------
// parameters
// ---------------------------------------------------------------------------

// weight init: linear layers U(-1/sqrt(fan_in), +1/sqrt(fan_in)), embedding
// rows N(0, 0.02^2), norm gains 1, everything else 0
template <typename T>
void init_params(const ModelConfig& cfg, ParamStore<T>& store, Rng& rng);

// Binds store weights into a graph once per weight and routes gradients back.
// A binder built over a const store is read-only (inference).
template <typename T>
class ParamBinder {
public:
    ParamBinder(Graph<T>& g, ParamStore<T>& store) : g_(&g), cstore_(&store), store_(&store) {}
    ParamBinder(Graph<T>& g, const ParamStore<T>& store) : g_(&g), cstore_(&store), store_(nullptr) {}
    typename Graph<T>::Id operator()(const std::string& name);
    void export_grads();  // accumulate graph gradients into the store

private:
    Graph<T>* g_;
    const ParamStore<T>* cstore_;
    ParamStore<T>* store_;
    std::map<std::string, typename Graph<T>::Id> bound_;
};

// ---------------------------------------------------------------------------
// network
// ---------------------------------------------------------------------------

// Embeds one token list (order preserved; consecutive same-kind tokens are
// batched through the shared embedders).
template <typename T>
typename Graph<T>::Id embed_tokens(Graph<T>& g, ParamBinder<T>& p, const ModelConfig& cfg,
                                   std::span<const Token> tokens);

// Context self-attention plus layer-wise target cross-attention; pre-norm
// blocks with shared layer weights, final norm on the target stream.
// Returns the [M, d_emb] target features.
template <typename T>
typename Graph<T>::Id ace_forward(Graph<T>& g, ParamBinder<T>& p, const ModelConfig& cfg,
                                  std::span<const Token> context, std::span<const Token> targets);

template <typename T>
struct GmmRows {
    typename Graph<T>::Id w, mu, sigma;  // each [rows, K]
    typename Graph<T>::Id logits;        // biased raw weights, pre-softmax
};

// Gaussian-mixture head over feature rows: K component MLPs plus a learnt
// global raw bias, softmax/identity/softplus transforms, sigma floored.
template <typename T>
GmmRows<T> gmm_head(Graph<T>& g, ParamBinder<T>& p, const ModelConfig& cfg,
                    typename Graph<T>::Id feats);

// categorical head for one discrete latent; returns [rows, cardinality] logits
template <typename T>
typename Graph<T>::Id cat_head(Graph<T>& g, ParamBinder<T>& p, const ModelConfig& cfg,
                               typename Graph<T>::Id feats, int64_t latent);

constexpr double kSigmaFloor = 1e-4;

// read a head row out of the graph as a plain distribution
template <typename T>
GaussianMixture1D read_gmm_row(const Graph<T>& g, const GmmRows<T>& rows, int64_t row);
template <typename T>
Categorical1D read_cat_row(const Graph<T>& g, typename Graph<T>::Id logits, int64_t row);

// ---------------------------------------------------------------------------
// model bundle (config + weights + IO)
// ---------------------------------------------------------------------------

struct Model {
    ModelConfig cfg;
    ParamStore<float> store;

    static Model create(const ModelConfig& cfg, uint64_t seed);
    void save(const std::string& dir) const;   // checkpoint.ace + model.json
    static Model load(const std::string& dir);
};

// token assembly from a task instance; targets ordered as
// [data targets, continuous latent targets, discrete latent targets]
struct TokenizedTask {
    std::vector<Token> ctx;
    std::vector<Token> tgt;
    std::vector<double> cont_values;   // per continuous target row
    std::vector<int64_t> disc_latents;  // latent index per discrete target row
    std::vector<int64_t> disc_ids;      // true ids, aligned with disc_latents
    int64_t n_data_targets = 0;
};
TokenizedTask tokenize(const tasks::TaskInstance& inst, const ModelConfig& cfg);

extern template void init_params<float>(const ModelConfig&, ParamStore<float>&, Rng&);
extern template void init_params<double>(const ModelConfig&, ParamStore<double>&, Rng&);
extern template class ParamBinder<float>;
extern template class ParamBinder<double>;
extern template Graph<float>::Id embed_tokens<float>(Graph<float>&, ParamBinder<float>&,
                                                     const ModelConfig&, std::span<const Token>);
extern template Graph<double>::Id embed_tokens<double>(Graph<double>&, ParamBinder<double>&,
                                                       const ModelConfig&, std::span<const Token>);
extern template Graph<float>::Id ace_forward<float>(Graph<float>&, ParamBinder<float>&,
                                                    const ModelConfig&, std::span<const Token>,
                                                    std::span<const Token>);
extern template Graph<double>::Id ace_forward<double>(Graph<double>&, ParamBinder<double>&,
                                                      const ModelConfig&, std::span<const Token>,
                                                      std::span<const Token>);
extern template GmmRows<float> gmm_head<float>(Graph<float>&, ParamBinder<float>&, const ModelConfig&,
                                               Graph<float>::Id);
extern template GmmRows<double> gmm_head<double>(Graph<double>&, ParamBinder<double>&,
                                                 const ModelConfig&, Graph<double>::Id);
extern template Graph<float>::Id cat_head<float>(Graph<float>&, ParamBinder<float>&,
                                                 const ModelConfig&, Graph<float>::Id, int64_t);
extern template Graph<double>::Id cat_head<double>(Graph<double>&, ParamBinder<double>&,
                                                   const ModelConfig&, Graph<double>::Id, int64_t);
extern template GaussianMixture1D read_gmm_row<float>(const Graph<float>&, const GmmRows<float>&,
                                                      int64_t);
extern template GaussianMixture1D read_gmm_row<double>(const Graph<double>&, const GmmRows<double>&,
                                                       int64_t);
extern template Categorical1D read_cat_row<float>(const Graph<float>&, Graph<float>::Id, int64_t);
extern template Categorical1D read_cat_row<double>(const Graph<double>&, Graph<double>::Id, int64_t);

}  // namespace ace::model
