#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ace {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t e : s) {
        if (e < 0) throw std::runtime_error("negative extent in shape");
        n *= e;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Dense row-major array. Ops treat the last axis as the "feature" axis and
// everything before it as rows.
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> v;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), v(static_cast<size_t>(shape_numel(shape)), T(0)) {}
    Tensor(Shape s, std::vector<T> vals) : shape(std::move(s)), v(std::move(vals)) {
        if (static_cast<int64_t>(v.size()) != shape_numel(shape))
            throw std::runtime_error("tensor value count " + std::to_string(v.size()) +
                                     " does not match shape " + shape_str(shape));
    }

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, T c) {
        Tensor t(std::move(s));
        std::fill(t.v.begin(), t.v.end(), c);
        return t;
    }
    static Tensor scalar(T c) { return Tensor({1}, {c}); }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    // rows()/cols() flatten all leading axes against the last one
    int64_t cols() const { return shape.empty() ? 1 : shape.back(); }
    int64_t rows() const { return cols() == 0 ? 0 : numel() / cols(); }

    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace ace
