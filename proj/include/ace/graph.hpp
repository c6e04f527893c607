#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ace/tensor.hpp"

namespace ace {

// Attention mask kept as per-query index lists; a full mask stores nothing,
// so the (N+M)^2 joint matrix is never materialized.
struct AttentionMask {
    bool full = true;
    int64_t nq = 0, nk = 0;
    std::vector<std::vector<int32_t>> allowed;  // per query row, used when !full

    static AttentionMask all_allowed(int64_t nq, int64_t nk) {
        AttentionMask m;
        m.full = true;
        m.nq = nq;
        m.nk = nk;
        return m;
    }
    static AttentionMask from_lists(int64_t nk, std::vector<std::vector<int32_t>> lists);
    // test helper: dense row-major nq x nk boolean
    static AttentionMask from_dense(int64_t nq, int64_t nk, const std::vector<uint8_t>& dense);
};

// Reverse-mode tape over dense tensors. Nodes reference earlier nodes only,
// so creation order is a topological order.
template <typename T>
class Graph {
public:
    using Id = int32_t;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // leaves
    Id input(Tensor<T> val);                 // constant, no gradient
    Id param(Tensor<T> val);                 // gradient tracked

    // primitives
    Id matmul(Id a, Id b);
    Id add(Id a, Id b);
    Id sub(Id a, Id b);
    Id mul(Id a, Id b);
    Id div(Id a, Id b);
    Id scale(Id a, T c);
    Id add_const(Id a, T c);
    Id relu(Id a);
    Id softplus(Id a);
    Id log(Id a);
    Id clamp_min(Id a, T lo);
    Id softmax_last(Id a);
    Id logsumexp_last(Id a);                 // [rows, n] -> [rows, 1]
    Id layer_norm_last(Id a, T eps = T(1e-5));
    Id embed_rows(Id table, std::vector<int64_t> ids);
    Id attention(Id q, Id k, Id v, int n_heads, const AttentionMask* mask = nullptr);
    Id concat_rows(std::span<const Id> parts);
    Id concat_cols(std::span<const Id> parts);
    Id slice_rows(Id a, int64_t r0, int64_t r1);
    Id slice_cols(Id a, int64_t c0, int64_t c1);
    Id sum_all(Id a);                        // -> [1]
    Id take_last(Id a, std::vector<int64_t> ids);  // a[i, ids[i]] -> [rows, 1]

    void backward(Id loss);

    const Tensor<T>& val(Id id) const { return nodes_[id].val; }
    const Tensor<T>& grad(Id id) const;
    bool has_grad(Id id) const { return nodes_[id].needs_grad; }
    size_t size() const { return nodes_.size(); }

    // allocation accounting, in elements (used by the memory-shape checks)
    int64_t max_single_alloc() const { return max_single_alloc_; }
    int64_t total_alloc() const { return total_alloc_; }

private:
    struct Node {
        Tensor<T> val;
        Tensor<T> grad;
        bool needs_grad = false;
        bool grad_ready = false;
        std::function<void()> back;  // empty for leaves
    };

    std::vector<Node> nodes_;
    int64_t max_single_alloc_ = 0;
    int64_t total_alloc_ = 0;

    Id push(Tensor<T> val, bool needs_grad, std::function<void()> back);
    void account(int64_t elems);
    Tensor<T>& grad_buf(Id id);  // lazily allocated, zero-initialized
    void add_grad(Id id, const Tensor<T>& g);

    struct BinaryPlan;  // broadcast resolution for elementwise binary ops
    BinaryPlan plan_binary(Id a, Id b, const char* opname) const;
    template <typename FwdFn, typename BwdA, typename BwdB>
    Id binary_op(Id a, Id b, const char* opname, FwdFn fwd, BwdA bwd_a, BwdB bwd_b);
    template <typename FwdFn, typename BwdFn>
    Id unary_op(Id a, FwdFn fwd, BwdFn bwd);
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace ace
