#pragma once

#include <map>
#include <string>

#include "ace/rng.hpp"
#include "ace/tensor.hpp"

namespace ace {

// Named weights with gradients and Adam state. Weight and gradient shapes
// always match; Adam moments start at zero with the step counter.
template <typename T>
class ParamStore {
public:
    struct Entry {
        Tensor<T> w;
        Tensor<T> g;
        Tensor<T> m;  // first moment
        Tensor<T> v;  // second moment
    };

    void add(const std::string& name, Tensor<T> w) {
        if (entries_.count(name)) throw std::runtime_error("duplicate parameter " + name);
        Entry e;
        e.g = Tensor<T>::zeros(w.shape);
        e.m = Tensor<T>::zeros(w.shape);
        e.v = Tensor<T>::zeros(w.shape);
        e.w = std::move(w);
        entries_.emplace(name, std::move(e));
    }

    bool has(const std::string& name) const { return entries_.count(name) != 0; }
    Entry& at(const std::string& name) {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw std::runtime_error("unknown parameter " + name);
        return it->second;
    }
    const Entry& at(const std::string& name) const {
        auto it = entries_.find(name);
        if (it == entries_.end()) throw std::runtime_error("unknown parameter " + name);
        return it->second;
    }
    std::map<std::string, Entry>& entries() { return entries_; }
    const std::map<std::string, Entry>& entries() const { return entries_; }

    void accumulate_grad(const std::string& name, const Tensor<T>& g) {
        Entry& e = at(name);
        if (!e.g.same_shape(g))
            throw std::runtime_error("gradient shape " + shape_str(g.shape) + " does not match weight " +
                                     shape_str(e.w.shape) + " for " + name);
        for (int64_t i = 0; i < g.numel(); ++i) e.g.v[static_cast<size_t>(i)] += g.v[static_cast<size_t>(i)];
    }

    void zero_grad() {
        for (auto& [name, e] : entries_) std::fill(e.g.v.begin(), e.g.v.end(), T(0));
    }

    // returns the global gradient norm before clipping
    double clip_grad_norm(double max_norm);

    // standard Adam; increments the step counter and zeroes gradients after
    void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    int64_t step() const { return step_; }
    void set_step(int64_t s) { step_ = s; }
    int64_t count() const { return static_cast<int64_t>(entries_.size()); }
    int64_t numel() const {
        int64_t n = 0;
        for (const auto& [name, e] : entries_) n += e.w.numel();
        return n;
    }

private:
    std::map<std::string, Entry> entries_;
    int64_t step_ = 0;
};

// lr0 * 0.5 * (1 + cos(pi * step / total_steps))
double cosine_lr(int64_t step, int64_t total_steps, double lr0);

// Checkpoint format: magic "ACE1", u32 version, then repeated records of
// (u32 name length, name bytes, u32 rank, u64 extents, little-endian f32
// payload). Weights use their plain names; Adam state rides along as
// "opt.m::<name>", "opt.v::<name>" and "opt.step" records so training can
// resume bitwise. The loader rejects unknown versions.
void save_checkpoint(const std::string& path, const ParamStore<float>& store);
void load_checkpoint(const std::string& path, ParamStore<float>& store);

// corrupt or unreadable checkpoint / config data
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;

}  // namespace ace
