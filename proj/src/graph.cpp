#include "ace/graph.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace ace {

namespace {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;
template <typename T>
using EStride = Eigen::Map<EMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ECStride = Eigen::Map<const EMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
ECMap<T> as_mat(const Tensor<T>& t, int64_t rows, int64_t cols) {
    return ECMap<T>(t.data(), rows, cols);
}
template <typename T>
EMap<T> as_mat(Tensor<T>& t, int64_t rows, int64_t cols) {
    return EMap<T>(t.data(), rows, cols);
}

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw std::runtime_error(std::string("shape mismatch in ") + op + ": " + shape_str(a) +
                             " vs " + shape_str(b));
}

template <typename T>
T stable_softplus(T x) {
    return std::log1p(std::exp(-std::abs(x))) + std::max(x, T(0));
}
template <typename T>
T sigmoid(T x) {
    if (x >= 0) return T(1) / (T(1) + std::exp(-x));
    T e = std::exp(x);
    return e / (T(1) + e);
}

}  // namespace

AttentionMask AttentionMask::from_lists(int64_t nk, std::vector<std::vector<int32_t>> lists) {
    AttentionMask m;
    m.full = false;
    m.nq = static_cast<int64_t>(lists.size());
    m.nk = nk;
    m.allowed = std::move(lists);
    for (const auto& row : m.allowed)
        for (int32_t j : row)
            if (j < 0 || j >= nk) throw std::runtime_error("attention mask index out of range");
    return m;
}

AttentionMask AttentionMask::from_dense(int64_t nq, int64_t nk, const std::vector<uint8_t>& dense) {
    if (static_cast<int64_t>(dense.size()) != nq * nk)
        throw std::runtime_error("dense mask size mismatch");
    std::vector<std::vector<int32_t>> lists(static_cast<size_t>(nq));
    for (int64_t i = 0; i < nq; ++i)
        for (int64_t j = 0; j < nk; ++j)
            if (dense[static_cast<size_t>(i * nk + j)]) lists[static_cast<size_t>(i)].push_back(static_cast<int32_t>(j));
    return from_lists(nk, std::move(lists));
}

template <typename T>
void Graph<T>::account(int64_t elems) {
    max_single_alloc_ = std::max(max_single_alloc_, elems);
    total_alloc_ += elems;
}

template <typename T>
typename Graph<T>::Id Graph<T>::push(Tensor<T> val, bool needs_grad, std::function<void()> back) {
    account(val.numel());
    Node n;
    n.val = std::move(val);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

template <typename T>
typename Graph<T>::Id Graph<T>::input(Tensor<T> val) {
    return push(std::move(val), false, {});
}

template <typename T>
typename Graph<T>::Id Graph<T>::param(Tensor<T> val) {
    return push(std::move(val), true, {});
}

template <typename T>
Tensor<T>& Graph<T>::grad_buf(Id id) {
    Node& n = nodes_[id];
    if (n.grad.v.empty()) {
        n.grad = Tensor<T>::zeros(n.val.shape);
        account(n.grad.numel());
    }
    return n.grad;
}

template <typename T>
void Graph<T>::add_grad(Id id, const Tensor<T>& g) {
    if (!nodes_[id].needs_grad) return;
    Tensor<T>& dst = grad_buf(id);
    if (!dst.same_shape(g)) shape_error("add_grad", dst.shape, g.shape);
    for (int64_t i = 0; i < dst.numel(); ++i) dst.v[static_cast<size_t>(i)] += g.v[static_cast<size_t>(i)];
    nodes_[id].grad_ready = true;
}

template <typename T>
const Tensor<T>& Graph<T>::grad(Id id) const {
    const Node& n = nodes_[id];
    if (!n.needs_grad) throw std::runtime_error("grad() on a node that does not track gradients");
    return n.grad;
}

// ---------------------------------------------------------------------------
// elementwise binary ops with broadcast on the right operand:
//   same shape | scalar [1] | per-row [rows,1] | shared row [cols]
// ---------------------------------------------------------------------------

template <typename T>
struct Graph<T>::BinaryPlan {
    enum Mode { kSame, kScalar, kPerRow, kRowVec } mode;
    int64_t rows, cols;
};

template <typename T>
typename Graph<T>::BinaryPlan Graph<T>::plan_binary(Id a, Id b, const char* opname) const {
    const Tensor<T>& ta = nodes_[a].val;
    const Tensor<T>& tb = nodes_[b].val;
    BinaryPlan p{};
    p.rows = ta.rows();
    p.cols = ta.cols();
    if (ta.same_shape(tb)) {
        p.mode = BinaryPlan::kSame;
    } else if (tb.numel() == 1) {
        p.mode = BinaryPlan::kScalar;
    } else if (tb.rows() == p.rows && tb.cols() == 1) {
        p.mode = BinaryPlan::kPerRow;
    } else if (tb.rows() == 1 && tb.cols() == p.cols) {
        p.mode = BinaryPlan::kRowVec;
    } else {
        shape_error(opname, ta.shape, tb.shape);
    }
    return p;
}

namespace detail {

// dispatches the broadcast pattern once, keeping the inner loops tight
template <typename T, typename Fn>
void for_each_pair(int64_t rows, int64_t cols, int mode, const T* a, const T* b, Fn&& fn) {
    int64_t n = rows * cols;
    switch (mode) {
        case 0:  // same shape
            for (int64_t i = 0; i < n; ++i) fn(i, a[i], b[i]);
            break;
        case 1: {  // scalar
            T bv = b[0];
            for (int64_t i = 0; i < n; ++i) fn(i, a[i], bv);
            break;
        }
        case 2:  // per-row scalar
            for (int64_t r = 0; r < rows; ++r) {
                T bv = b[r];
                for (int64_t c = 0; c < cols; ++c) {
                    int64_t i = r * cols + c;
                    fn(i, a[i], bv);
                }
            }
            break;
        default:  // shared row vector
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < cols; ++c) {
                    int64_t i = r * cols + c;
                    fn(i, a[i], b[c]);
                }
            break;
    }
}

}  // namespace detail

template <typename T>
template <typename FwdFn, typename BwdA, typename BwdB>
typename Graph<T>::Id Graph<T>::binary_op(Id a, Id b, const char* opname, FwdFn fwd, BwdA bwd_a,
                                          BwdB bwd_b) {
    BinaryPlan p = plan_binary(a, b, opname);
    const Tensor<T>& ta = nodes_[a].val;
    const Tensor<T>& tb = nodes_[b].val;
    Tensor<T> out(ta.shape);
    T* o = out.data();
    detail::for_each_pair(p.rows, p.cols, static_cast<int>(p.mode), ta.data(), tb.data(),
                          [&](int64_t i, T x, T y) { o[i] = fwd(x, y); });
    bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
    Id out_id = push(std::move(out), ng, {});
    if (ng) {
        nodes_[out_id].back = [this, a, b, out_id, p, bwd_a, bwd_b]() {
            const Tensor<T>& ta2 = nodes_[a].val;
            const Tensor<T>& tb2 = nodes_[b].val;
            const Tensor<T>& go = nodes_[out_id].grad;
            const T* g = go.data();
            if (nodes_[a].needs_grad) {
                Tensor<T> ga(ta2.shape);
                T* out_g = ga.data();
                detail::for_each_pair(p.rows, p.cols, static_cast<int>(p.mode), ta2.data(), tb2.data(),
                                      [&](int64_t i, T x, T y) { out_g[i] = bwd_a(x, y) * g[i]; });
                add_grad(a, ga);
            }
            if (nodes_[b].needs_grad) {
                Tensor<T> gb(tb2.shape);
                T* out_g = gb.data();
                switch (p.mode) {
                    case BinaryPlan::kSame:
                        detail::for_each_pair(p.rows, p.cols, 0, ta2.data(), tb2.data(),
                                              [&](int64_t i, T x, T y) { out_g[i] = bwd_b(x, y) * g[i]; });
                        break;
                    case BinaryPlan::kScalar: {
                        T acc = 0;
                        detail::for_each_pair(p.rows, p.cols, 1, ta2.data(), tb2.data(),
                                              [&](int64_t i, T x, T y) { acc += bwd_b(x, y) * g[i]; });
                        out_g[0] = acc;
                        break;
                    }
                    case BinaryPlan::kPerRow:
                        for (int64_t r = 0; r < p.rows; ++r) {
                            T acc = 0;
                            T bv = tb2.v[static_cast<size_t>(r)];
                            const T* ar = ta2.data() + r * p.cols;
                            const T* gr = g + r * p.cols;
                            for (int64_t c = 0; c < p.cols; ++c) acc += bwd_b(ar[c], bv) * gr[c];
                            out_g[r] = acc;
                        }
                        break;
                    default:
                        for (int64_t r = 0; r < p.rows; ++r) {
                            const T* ar = ta2.data() + r * p.cols;
                            const T* gr = g + r * p.cols;
                            for (int64_t c = 0; c < p.cols; ++c)
                                out_g[c] += bwd_b(ar[c], tb2.v[static_cast<size_t>(c)]) * gr[c];
                        }
                        break;
                }
                add_grad(b, gb);
            }
        };
    }
    return out_id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::add(Id a, Id b) {
    return binary_op(
        a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
        [](T, T) { return T(1); });
}

template <typename T>
typename Graph<T>::Id Graph<T>::sub(Id a, Id b) {
    return binary_op(
        a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
        [](T, T) { return T(-1); });
}

template <typename T>
typename Graph<T>::Id Graph<T>::mul(Id a, Id b) {
    return binary_op(
        a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
        [](T x, T) { return x; });
}

template <typename T>
typename Graph<T>::Id Graph<T>::div(Id a, Id b) {
    return binary_op(
        a, b, "div", [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
        [](T x, T y) { return -x / (y * y); });
}

// ---------------------------------------------------------------------------
// unary elementwise
// ---------------------------------------------------------------------------

template <typename T>
template <typename FwdFn, typename BwdFn>
typename Graph<T>::Id Graph<T>::unary_op(Id a, FwdFn fwd, BwdFn bwd) {
    const Tensor<T>& ta = nodes_[a].val;
    Tensor<T> out(ta.shape);
    for (int64_t i = 0; i < ta.numel(); ++i) out.v[static_cast<size_t>(i)] = fwd(ta.v[static_cast<size_t>(i)]);
    bool ng = nodes_[a].needs_grad;
    Id out_id = push(std::move(out), ng, {});
    if (ng) {
        nodes_[out_id].back = [this, a, out_id, bwd]() {
            const Tensor<T>& ta2 = nodes_[a].val;
            const Tensor<T>& go = nodes_[out_id].grad;
            Tensor<T> ga(ta2.shape);
            for (int64_t i = 0; i < ta2.numel(); ++i)
                ga.v[static_cast<size_t>(i)] = bwd(ta2.v[static_cast<size_t>(i)]) * go.v[static_cast<size_t>(i)];
            add_grad(a, ga);
        };
    }
    return out_id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::scale(Id a, T c) {
    return unary_op(a, [c](T x) { return x * c; }, [c](T) { return c; });
}

template <typename T>
typename Graph<T>::Id Graph<T>::add_const(Id a, T c) {
    return unary_op(a, [c](T x) { return x + c; }, [](T) { return T(1); });
}

template <typename T>
typename Graph<T>::Id Graph<T>::relu(Id a) {
    return unary_op(a, [](T x) { return x > 0 ? x : T(0); }, [](T x) { return x > 0 ? T(1) : T(0); });
}

template <typename T>
typename Graph<T>::Id Graph<T>::softplus(Id a) {
    return unary_op(a, [](T x) { return stable_softplus(x); }, [](T x) { return sigmoid(x); });
}

template <typename T>
typename Graph<T>::Id Graph<T>::log(Id a) {
    return unary_op(a, [](T x) { return std::log(x); }, [](T x) { return T(1) / x; });
}

template <typename T>
typename Graph<T>::Id Graph<T>::clamp_min(Id a, T lo) {
    return unary_op(a, [lo](T x) { return x > lo ? x : lo; }, [lo](T x) { return x > lo ? T(1) : T(0); });
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

template <typename T>
typename Graph<T>::Id Graph<T>::matmul(Id a, Id b) {
    const Tensor<T>& ta = nodes_[a].val;
    const Tensor<T>& tb = nodes_[b].val;
    if (ta.shape.size() != 2 || tb.shape.size() != 2 || ta.shape[1] != tb.shape[0])
        shape_error("matmul", ta.shape, tb.shape);
    int64_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
    Tensor<T> out({m, n});
    as_mat(out, m, n).noalias() = as_mat(ta, m, k) * as_mat(tb, k, n);
    bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
    Id out_id = push(std::move(out), ng, {});
    if (ng) {
        nodes_[out_id].back = [this, a, b, out_id, m, k, n]() {
            auto go = as_mat(nodes_[out_id].grad, m, n);
            if (nodes_[a].needs_grad) {
                Tensor<T> ga({m, k});
                as_mat(ga, m, k).noalias() = go * as_mat(nodes_[b].val, k, n).transpose();
                add_grad(a, ga);
            }
            if (nodes_[b].needs_grad) {
                Tensor<T> gb({k, n});
                as_mat(gb, k, n).noalias() = as_mat(nodes_[a].val, m, k).transpose() * go;
                add_grad(b, gb);
            }
        };
    }
    return out_id;
}

// ---------------------------------------------------------------------------
// row-wise reductions / normalizations
// ---------------------------------------------------------------------------

template <typename T>
typename Graph<T>::Id Graph<T>::softmax_last(Id a) {
    const Tensor<T>& ta = nodes_[a].val;
    int64_t rows = ta.rows(), cols = ta.cols();
    if (cols == 0) throw std::runtime_error("softmax_last on empty axis");
    Tensor<T> out(ta.shape);
    for (int64_t r = 0; r < rows; ++r) {
        const T* x = ta.data() + r * cols;
        T* y = out.data() + r * cols;
        T mx = *std::max_element(x, x + cols);
        T sum = 0;
        for (int64_t c = 0; c < cols; ++c) {
            y[c] = std::exp(x[c] - mx);
            sum += y[c];
        }
        for (int64_t c = 0; c < cols; ++c) y[c] /= sum;
    }
    bool ng = nodes_[a].needs_grad;
    Id out_id = push(std::move(out), ng, {});
    if (ng) {
        nodes_[out_id].back = [this, a, out_id, rows, cols]() {
            const Tensor<T>& y = nodes_[out_id].val;
            const Tensor<T>& go = nodes_[out_id].grad;
            Tensor<T> ga(nodes_[a].val.shape);
            for (int64_t r = 0; r < rows; ++r) {
                const T* yr = y.data() + r * cols;
                const T* gr = go.data() + r * cols;
                T dot = 0;
                for (int64_t c = 0; c < cols; ++c) dot += yr[c] * gr[c];
                T* out_g = ga.data() + r * cols;
                for (int64_t c = 0; c < cols; ++c) out_g[c] = yr[c] * (gr[c] - dot);
            }
            add_grad(a, ga);
        };
    }
    return out_id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::logsumexp_last(Id a) {
    const Tensor<T>& ta = nodes_[a].val;
    int64_t rows = ta.rows(), cols = ta.cols();
    if (cols == 0) throw std::runtime_error("logsumexp_last on empty axis");
    Tensor<T> out({rows, 1});
    for (int64_t r = 0; r < rows; ++r) {
        const T* x = ta.data() + r * cols;
        T mx = *std::max_element(x, x + cols);
        T sum = 0;
        for (int64_t c = 0; c < cols; ++c) sum += std::exp(x[c] - mx);
        out.v[static_cast<size_t>(r)] = mx + std::log(sum);
    }
    bool ng = nodes_[a].needs_grad;
    Id out_id = push(std::move(out), ng, {});
    if (ng) {
        nodes_[out_id].back = [this, a, out_id, rows, cols]() {
            const Tensor<T>& ta2 = nodes_[a].val;
            const Tensor<T>& lse = nodes_[out_id].val;
            const Tensor<T>& go = nodes_[out_id].grad;
            Tensor<T> ga(ta2.shape);
            for (int64_t r = 0; r < rows; ++r) {
                const T* x = ta2.data() + r * cols;
                T* g = ga.data() + r * cols;
                T l = lse.v[static_cast<size_t>(r)];
                T gr = go.v[static_cast<size_t>(r)];
                for (int64_t c = 0; c < cols; ++c) g[c] = std::exp(x[c] - l) * gr;
            }
            add_grad(a, ga);
        };
    }
    return out_id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::layer_norm_last(Id a, T eps) {
    const Tensor<T>& ta = nodes_[a].val;
    int64_t rows = ta.rows(), cols = ta.cols();
    if (cols == 0) throw std::runtime_error("layer_norm_last on empty axis");
    Tensor<T> out(ta.shape);
    Tensor<T> inv_sd({rows, 1});
    for (int64_t r = 0; r < rows; ++r) {
        const T* x = ta.data() + r * cols;
        T* y = out.data() + r * cols;
        T mean = 0;
        for (int64_t c = 0; c < cols; ++c) mean += x[c];
        mean /= static_cast<T>(cols);
        T var = 0;
        for (int64_t c = 0; c < cols; ++c) var += (x[c] - mean) * (x[c] - mean);
        var /= static_cast<T>(cols);
        T s = T(1) / std::sqrt(var + eps);
        inv_sd.v[static_cast<size_t>(r)] = s;
        for (int64_t c = 0; c < cols; ++c) y[c] = (x[c] - mean) * s;
    }
    bool ng = nodes_[a].needs_grad;
    Id out_id = push(std::move(out), ng, {});
    if (ng) {
        auto saved = std::make_shared<Tensor<T>>(std::move(inv_sd));
        nodes_[out_id].back = [this, a, out_id, rows, cols, saved]() {
            const Tensor<T>& y = nodes_[out_id].val;
            const Tensor<T>& go = nodes_[out_id].grad;
            Tensor<T> ga(nodes_[a].val.shape);
            for (int64_t r = 0; r < rows; ++r) {
                const T* yr = y.data() + r * cols;
                const T* gr = go.data() + r * cols;
                T* g = ga.data() + r * cols;
                T s = saved->v[static_cast<size_t>(r)];
                T mg = 0, mgy = 0;
                for (int64_t c = 0; c < cols; ++c) {
                    mg += gr[c];
                    mgy += gr[c] * yr[c];
                }
                mg /= static_cast<T>(cols);
                mgy /= static_cast<T>(cols);
                for (int64_t c = 0; c < cols; ++c) g[c] = s * (gr[c] - mg - yr[c] * mgy);
            }
            add_grad(a, ga);
        };
    }
    return out_id;
}

// ---------------------------------------------------------------------------
// gather / scatter
// ---------------------------------------------------------------------------

template <typename T>
typename Graph<T>::Id Graph<T>::embed_rows(Id table, std::vector<int64_t> ids) {
    const Tensor<T>& tt = nodes_[table].val;
    if (tt.shape.size() != 2) throw std::runtime_error("embed_rows table must be 2-D, got " + shape_str(tt.shape));
    int64_t vocab = tt.shape[0], dim = tt.shape[1];
    for (int64_t id : ids)
        if (id < 0 || id >= vocab)
            throw std::runtime_error("embed_rows index " + std::to_string(id) + " out of range [0," +
                                     std::to_string(vocab) + ")");
    int64_t n = static_cast<int64_t>(ids.size());
    Tensor<T> out({n, dim});
    for (int64_t i = 0; i < n; ++i)
        std::copy_n(tt.data() + ids[static_cast<size_t>(i)] * dim, dim, out.data() + i * dim);
    bool ng = nodes_[table].needs_grad;
    Id out_id = push(std::move(out), ng, {});
    if (ng) {
        auto ids_p = std::make_shared<std::vector<int64_t>>(std::move(ids));
        nodes_[out_id].back = [this, table, out_id, dim, ids_p]() {
            const Tensor<T>& go = nodes_[out_id].grad;
            Tensor<T> gt(nodes_[table].val.shape);
            for (size_t i = 0; i < ids_p->size(); ++i) {
                T* dst = gt.data() + (*ids_p)[i] * dim;
                const T* src = go.data() + static_cast<int64_t>(i) * dim;
                for (int64_t c = 0; c < dim; ++c) dst[c] += src[c];
            }
            add_grad(table, gt);
        };
    }
    return out_id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::take_last(Id a, std::vector<int64_t> ids) {
    const Tensor<T>& ta = nodes_[a].val;
    int64_t rows = ta.rows(), cols = ta.cols();
    if (static_cast<int64_t>(ids.size()) != rows)
        throw std::runtime_error("take_last needs one index per row");
    for (int64_t id : ids)
        if (id < 0 || id >= cols) throw std::runtime_error("take_last index out of range");
    Tensor<T> out({rows, 1});
    for (int64_t r = 0; r < rows; ++r) out.v[static_cast<size_t>(r)] = ta.v[static_cast<size_t>(r * cols + ids[static_cast<size_t>(r)])];
    bool ng = nodes_[a].needs_grad;
    Id out_id = push(std::move(out), ng, {});
    if (ng) {
        auto ids_p = std::make_shared<std::vector<int64_t>>(std::move(ids));
        nodes_[out_id].back = [this, a, out_id, rows, cols, ids_p]() {
            const Tensor<T>& go = nodes_[out_id].grad;
            Tensor<T> ga(nodes_[a].val.shape);
            for (int64_t r = 0; r < rows; ++r)
                ga.v[static_cast<size_t>(r * cols + (*ids_p)[static_cast<size_t>(r)])] = go.v[static_cast<size_t>(r)];
            add_grad(a, ga);
        };
    }
    return out_id;
}

// ---------------------------------------------------------------------------
// concat / slice (2-D)
// ---------------------------------------------------------------------------

template <typename T>
typename Graph<T>::Id Graph<T>::concat_rows(std::span<const Id> parts) {
    if (parts.empty()) throw std::runtime_error("concat_rows of nothing");
    int64_t cols = nodes_[parts[0]].val.cols();
    int64_t rows = 0;
    bool ng = false;
    for (Id p : parts) {
        const Tensor<T>& t = nodes_[p].val;
        if (t.shape.size() != 2 || t.cols() != cols) shape_error("concat_rows", nodes_[parts[0]].val.shape, t.shape);
        rows += t.rows();
        ng = ng || nodes_[p].needs_grad;
    }
    Tensor<T> out({rows, cols});
    int64_t r0 = 0;
    for (Id p : parts) {
        const Tensor<T>& t = nodes_[p].val;
        std::copy_n(t.data(), t.numel(), out.data() + r0 * cols);
        r0 += t.rows();
    }
    Id out_id = push(std::move(out), ng, {});
    if (ng) {
        auto parts_p = std::make_shared<std::vector<Id>>(parts.begin(), parts.end());
        nodes_[out_id].back = [this, out_id, cols, parts_p]() {
            const Tensor<T>& go = nodes_[out_id].grad;
            int64_t r = 0;
            for (Id p : *parts_p) {
                int64_t pr = nodes_[p].val.rows();
                if (nodes_[p].needs_grad) {
                    Tensor<T> g({pr, cols});
                    std::copy_n(go.data() + r * cols, pr * cols, g.data());
                    add_grad(p, g);
                }
                r += pr;
            }
        };
    }
    return out_id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::concat_cols(std::span<const Id> parts) {
    if (parts.empty()) throw std::runtime_error("concat_cols of nothing");
    int64_t rows = nodes_[parts[0]].val.rows();
    int64_t cols = 0;
    bool ng = false;
    for (Id p : parts) {
        const Tensor<T>& t = nodes_[p].val;
        if (t.shape.size() != 2 || t.rows() != rows) shape_error("concat_cols", nodes_[parts[0]].val.shape, t.shape);
        cols += t.cols();
        ng = ng || nodes_[p].needs_grad;
    }
    Tensor<T> out({rows, cols});
    int64_t c0 = 0;
    for (Id p : parts) {
        const Tensor<T>& t = nodes_[p].val;
        for (int64_t r = 0; r < rows; ++r)
            std::copy_n(t.data() + r * t.cols(), t.cols(), out.data() + r * cols + c0);
        c0 += t.cols();
    }
    Id out_id = push(std::move(out), ng, {});
    if (ng) {
        auto parts_p = std::make_shared<std::vector<Id>>(parts.begin(), parts.end());
        nodes_[out_id].back = [this, out_id, rows, cols, parts_p]() {
            const Tensor<T>& go = nodes_[out_id].grad;
            int64_t c = 0;
            for (Id p : *parts_p) {
                int64_t pc = nodes_[p].val.cols();
                if (nodes_[p].needs_grad) {
                    Tensor<T> g({rows, pc});
                    for (int64_t r = 0; r < rows; ++r)
                        std::copy_n(go.data() + r * cols + c, pc, g.data() + r * pc);
                    add_grad(p, g);
                }
                c += pc;
            }
        };
    }
    return out_id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::slice_rows(Id a, int64_t r0, int64_t r1) {
    const Tensor<T>& ta = nodes_[a].val;
    int64_t rows = ta.rows(), cols = ta.cols();
    if (r0 < 0 || r1 > rows || r0 > r1) throw std::runtime_error("slice_rows range out of bounds");
    Tensor<T> out({r1 - r0, cols});
    std::copy_n(ta.data() + r0 * cols, (r1 - r0) * cols, out.data());
    bool ng = nodes_[a].needs_grad;
    Id out_id = push(std::move(out), ng, {});
    if (ng) {
        nodes_[out_id].back = [this, a, out_id, r0, r1, cols]() {
            const Tensor<T>& go = nodes_[out_id].grad;
            Tensor<T> ga(nodes_[a].val.shape);
            std::copy_n(go.data(), (r1 - r0) * cols, ga.data() + r0 * cols);
            add_grad(a, ga);
        };
    }
    return out_id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::slice_cols(Id a, int64_t c0, int64_t c1) {
    const Tensor<T>& ta = nodes_[a].val;
    int64_t rows = ta.rows(), cols = ta.cols();
    if (c0 < 0 || c1 > cols || c0 > c1) throw std::runtime_error("slice_cols range out of bounds");
    Tensor<T> out({rows, c1 - c0});
    for (int64_t r = 0; r < rows; ++r)
        std::copy_n(ta.data() + r * cols + c0, c1 - c0, out.data() + r * (c1 - c0));
    bool ng = nodes_[a].needs_grad;
    Id out_id = push(std::move(out), ng, {});
    if (ng) {
        nodes_[out_id].back = [this, a, out_id, c0, c1, rows, cols]() {
            const Tensor<T>& go = nodes_[out_id].grad;
            Tensor<T> ga(nodes_[a].val.shape);
            for (int64_t r = 0; r < rows; ++r)
                std::copy_n(go.data() + r * (c1 - c0), c1 - c0, ga.data() + r * cols + c0);
            add_grad(a, ga);
        };
    }
    return out_id;
}

template <typename T>
typename Graph<T>::Id Graph<T>::sum_all(Id a) {
    const Tensor<T>& ta = nodes_[a].val;
    T s = 0;
    for (T x : ta.v) s += x;
    bool ng = nodes_[a].needs_grad;
    Id out_id = push(Tensor<T>::scalar(s), ng, {});
    if (ng) {
        nodes_[out_id].back = [this, a, out_id]() {
            T g = nodes_[out_id].grad.v[0];
            Tensor<T> ga(nodes_[a].val.shape);
            std::fill(ga.v.begin(), ga.v.end(), g);
            add_grad(a, ga);
        };
    }
    return out_id;
}

// ---------------------------------------------------------------------------
// scaled dot-product attention, multi-head, optional index-list mask
// ---------------------------------------------------------------------------

template <typename T>
typename Graph<T>::Id Graph<T>::attention(Id q, Id k, Id v, int n_heads, const AttentionMask* mask) {
    const Tensor<T>& tq = nodes_[q].val;
    const Tensor<T>& tk = nodes_[k].val;
    const Tensor<T>& tv = nodes_[v].val;
    if (tq.shape.size() != 2 || tk.shape.size() != 2 || tv.shape.size() != 2 ||
        tq.cols() != tk.cols() || tk.cols() != tv.cols())
        shape_error("attention", tq.shape, tk.shape);
    if (tk.rows() != tv.rows()) shape_error("attention k/v", tk.shape, tv.shape);
    int64_t M = tq.rows(), N = tk.rows(), D = tq.cols();
    if (n_heads <= 0 || D % n_heads != 0)
        throw std::runtime_error("attention: width " + std::to_string(D) + " not divisible by " +
                                 std::to_string(n_heads) + " heads");
    if (mask && !mask->full && (mask->nq != M || mask->nk != N))
        throw std::runtime_error("attention mask sized " + std::to_string(mask->nq) + "x" +
                                 std::to_string(mask->nk) + " for " + std::to_string(M) + " queries, " +
                                 std::to_string(N) + " keys");
    int64_t Dh = D / n_heads;
    T scl = T(1) / std::sqrt(static_cast<T>(Dh));
    bool masked = mask && !mask->full;

    // per-head probability buffers; kept separate so no single allocation
    // reaches the joint (N+M)^2 size
    auto probs = std::make_shared<std::vector<Tensor<T>>>();
    probs->reserve(static_cast<size_t>(n_heads));
    Tensor<T> out({M, D});

    for (int h = 0; h < n_heads; ++h) {
        Tensor<T> P({M, N});
        account(P.numel());
        int64_t off = h * Dh;
        if (!masked) {
            EMap<T> pm(P.data(), M, N);
            pm.noalias() = ECStride<T>(tq.data() + off, M, Dh, Eigen::OuterStride<>(D)) *
                           ECStride<T>(tk.data() + off, N, Dh, Eigen::OuterStride<>(D)).transpose() * scl;
            for (int64_t r = 0; r < M; ++r) {
                T* row = P.data() + r * N;
                T mx = *std::max_element(row, row + N);
                T sum = 0;
                for (int64_t c = 0; c < N; ++c) {
                    row[c] = std::exp(row[c] - mx);
                    sum += row[c];
                }
                for (int64_t c = 0; c < N; ++c) row[c] /= sum;
            }
            EStride<T>(out.data() + off, M, Dh, Eigen::OuterStride<>(D)).noalias() =
                pm * ECStride<T>(tv.data() + off, N, Dh, Eigen::OuterStride<>(D));
        } else {
            for (int64_t r = 0; r < M; ++r) {
                const auto& idx = mask->allowed[static_cast<size_t>(r)];
                T* prow = P.data() + r * N;
                T* orow = out.data() + r * D + off;
                std::fill_n(orow, Dh, T(0));
                if (idx.empty()) continue;  // no keys allowed: zero output, zero weights
                T mx = -std::numeric_limits<T>::infinity();
                for (int32_t j : idx) {
                    T s = 0;
                    const T* qr = tq.data() + r * D + off;
                    const T* kr = tk.data() + static_cast<int64_t>(j) * D + off;
                    for (int64_t c = 0; c < Dh; ++c) s += qr[c] * kr[c];
                    s *= scl;
                    prow[j] = s;
                    mx = std::max(mx, s);
                }
                T sum = 0;
                for (int32_t j : idx) {
                    prow[j] = std::exp(prow[j] - mx);
                    sum += prow[j];
                }
                for (int32_t j : idx) {
                    prow[j] /= sum;
                    const T* vr = tv.data() + static_cast<int64_t>(j) * D + off;
                    for (int64_t c = 0; c < Dh; ++c) orow[c] += prow[j] * vr[c];
                }
            }
        }
        probs->push_back(std::move(P));
    }

    bool ng = nodes_[q].needs_grad || nodes_[k].needs_grad || nodes_[v].needs_grad;
    Id out_id = push(std::move(out), ng, {});
    if (ng) {
        std::shared_ptr<const AttentionMask> mask_copy;
        if (masked) mask_copy = std::make_shared<AttentionMask>(*mask);
        nodes_[out_id].back = [this, q, k, v, out_id, n_heads, M, N, D, Dh, scl, probs, mask_copy]() {
            const Tensor<T>& tq2 = nodes_[q].val;
            const Tensor<T>& tk2 = nodes_[k].val;
            const Tensor<T>& tv2 = nodes_[v].val;
            const Tensor<T>& go = nodes_[out_id].grad;
            Tensor<T> gq(tq2.shape), gk(tk2.shape), gv(tv2.shape);
            for (int h = 0; h < n_heads; ++h) {
                int64_t off = h * Dh;
                const Tensor<T>& P = (*probs)[static_cast<size_t>(h)];
                if (!mask_copy) {
                    ECMap<T> pm(P.data(), M, N);
                    ECStride<T> goh(go.data() + off, M, Dh, Eigen::OuterStride<>(D));
                    ECStride<T> vh(tv2.data() + off, N, Dh, Eigen::OuterStride<>(D));
                    EMat<T> dP = goh * vh.transpose();           // [M,N]
                    EMat<T> dS(M, N);
                    for (int64_t r = 0; r < M; ++r) {
                        T dot = (dP.row(r).array() * pm.row(r).array()).sum();
                        dS.row(r) = pm.row(r).array() * (dP.row(r).array() - dot);
                    }
                    EStride<T>(gv.data() + off, N, Dh, Eigen::OuterStride<>(D)).noalias() +=
                        pm.transpose() * goh;
                    EStride<T>(gq.data() + off, M, Dh, Eigen::OuterStride<>(D)).noalias() +=
                        dS * ECStride<T>(tk2.data() + off, N, Dh, Eigen::OuterStride<>(D)) * scl;
                    EStride<T>(gk.data() + off, N, Dh, Eigen::OuterStride<>(D)).noalias() +=
                        dS.transpose() * ECStride<T>(tq2.data() + off, M, Dh, Eigen::OuterStride<>(D)) * scl;
                } else {
                    for (int64_t r = 0; r < M; ++r) {
                        const auto& idx = mask_copy->allowed[static_cast<size_t>(r)];
                        if (idx.empty()) continue;
                        const T* prow = P.data() + r * N;
                        const T* gor = go.data() + r * D + off;
                        const T* qr = tq2.data() + r * D + off;
                        T dot = 0;
                        std::vector<T> dp(idx.size());
                        for (size_t t = 0; t < idx.size(); ++t) {
                            const T* vr = tv2.data() + static_cast<int64_t>(idx[t]) * D + off;
                            T s = 0;
                            for (int64_t c = 0; c < Dh; ++c) s += gor[c] * vr[c];
                            dp[t] = s;
                            dot += s * prow[idx[t]];
                        }
                        for (size_t t = 0; t < idx.size(); ++t) {
                            int64_t j = idx[t];
                            T p = prow[j];
                            T ds = p * (dp[t] - dot);
                            const T* kr = tk2.data() + j * D + off;
                            T* gqr = gq.data() + r * D + off;
                            T* gkr = gk.data() + j * D + off;
                            T* gvr = gv.data() + j * D + off;
                            for (int64_t c = 0; c < Dh; ++c) {
                                gqr[c] += ds * kr[c] * scl;
                                gkr[c] += ds * qr[c] * scl;
                                gvr[c] += p * gor[c];
                            }
                        }
                    }
                }
            }
            add_grad(q, gq);
            add_grad(k, gk);
            add_grad(v, gv);
        };
    }
    return out_id;
}

// ---------------------------------------------------------------------------
// backward driver
// ---------------------------------------------------------------------------

template <typename T>
void Graph<T>::backward(Id loss) {
    if (nodes_[loss].val.numel() != 1)
        throw std::runtime_error("backward requires a scalar loss, got shape " +
                                 shape_str(nodes_[loss].val.shape));
    if (!nodes_[loss].needs_grad) return;  // loss independent of all params
    grad_buf(loss).v[0] = T(1);
    nodes_[loss].grad_ready = true;
    for (Id i = loss; i >= 0; --i) {
        Node& n = nodes_[i];
        if (n.needs_grad && n.grad_ready && n.back) n.back();
    }
    // params never reached by the loss keep an explicit zero gradient
    for (auto& n : nodes_)
        if (n.needs_grad && n.grad.v.empty()) n.grad = Tensor<T>::zeros(n.val.shape);
}

template class Graph<float>;
template class Graph<double>;

}  // namespace ace
