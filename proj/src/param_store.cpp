#include "ace/param_store.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace ace {

template <typename T>
double ParamStore<T>::clip_grad_norm(double max_norm) {
    double sq = 0;
    for (auto& [name, e] : entries_)
        for (T g : e.g.v) sq += static_cast<double>(g) * static_cast<double>(g);
    double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0) {
        T s = static_cast<T>(max_norm / norm);
        for (auto& [name, e] : entries_)
            for (T& g : e.g.v) g *= s;
    }
    return norm;
}

template <typename T>
void ParamStore<T>::adam_step(double lr, double beta1, double beta2, double eps) {
    for (auto& [name, e] : entries_)
        for (T g : e.g.v)
            if (!std::isfinite(static_cast<double>(g)))
                throw std::runtime_error("non-finite gradient in parameter " + name);
    ++step_;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (auto& [name, e] : entries_) {
        for (int64_t i = 0; i < e.w.numel(); ++i) {
            size_t k = static_cast<size_t>(i);
            double g = static_cast<double>(e.g.v[k]);
            double m = beta1 * static_cast<double>(e.m.v[k]) + (1.0 - beta1) * g;
            double v = beta2 * static_cast<double>(e.v.v[k]) + (1.0 - beta2) * g * g;
            e.m.v[k] = static_cast<T>(m);
            e.v.v[k] = static_cast<T>(v);
            double mhat = m / bc1;
            double vhat = v / bc2;
            e.w.v[k] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
    zero_grad();
}

double cosine_lr(int64_t step, int64_t total_steps, double lr0) {
    if (total_steps <= 0) throw std::runtime_error("cosine_lr: total_steps must be positive");
    if (step < 0 || step > total_steps) throw std::runtime_error("cosine_lr: step out of range");
    return lr0 * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total_steps)));
}

namespace {

constexpr char kMagic[4] = {'A', 'C', 'E', '1'};
constexpr uint32_t kVersion = 1;

template <typename V>
void write_pod(std::ostream& os, V v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}
template <typename V>
V read_pod(std::istream& is) {
    V v;
    is.read(reinterpret_cast<char*>(&v), sizeof(V));
    if (!is) throw IoError("checkpoint truncated");
    return v;
}

}  // namespace

namespace {

void write_record(std::ostream& os, const std::string& name, const Tensor<float>& t) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint32_t>(os, static_cast<uint32_t>(t.shape.size()));
    for (int64_t ext : t.shape) write_pod<uint64_t>(os, static_cast<uint64_t>(ext));
    os.write(reinterpret_cast<const char*>(t.v.data()),
             static_cast<std::streamsize>(t.v.size() * sizeof(float)));
}

constexpr const char* kOptM = "opt.m::";
constexpr const char* kOptV = "opt.v::";
constexpr const char* kOptStep = "opt.step";

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore<float>& store) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, 4);
    write_pod<uint32_t>(os, kVersion);
    for (const auto& [name, e] : store.entries()) {
        write_record(os, name, e.w);
        write_record(os, kOptM + name, e.m);
        write_record(os, kOptV + name, e.v);
    }
    write_record(os, kOptStep, Tensor<float>::scalar(static_cast<float>(store.step())));
    if (!os) throw IoError("checkpoint write failed: " + path);
}

void load_checkpoint(const std::string& path, ParamStore<float>& store) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw IoError("bad checkpoint magic in " + path);
    uint32_t version = read_pod<uint32_t>(is);
    if (version != kVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(version) + " in " + path);
    while (true) {
        uint32_t name_len;
        is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (is.eof()) break;
        if (!is) throw IoError("checkpoint truncated");
        if (name_len > 4096) throw IoError("implausible name length in checkpoint");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        uint32_t rank = read_pod<uint32_t>(is);
        if (rank > 8) throw IoError("implausible rank in checkpoint");
        Shape shape(rank);
        for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(read_pod<uint64_t>(is));
        Tensor<float> w(shape);
        is.read(reinterpret_cast<char*>(w.v.data()),
                static_cast<std::streamsize>(w.v.size() * sizeof(float)));
        if (!is) throw IoError("checkpoint truncated");
        auto assign = [&](Tensor<float>& dst, const std::string& what) {
            if (dst.shape != shape)
                throw IoError("checkpoint shape " + shape_str(shape) + " does not match expected " +
                              shape_str(dst.shape) + " for " + what);
            dst = std::move(w);
        };
        if (name == kOptStep) {
            store.set_step(static_cast<int64_t>(w.v.at(0)));
        } else if (name.rfind(kOptM, 0) == 0) {
            std::string base = name.substr(std::string(kOptM).size());
            if (store.has(base)) assign(store.at(base).m, name);
        } else if (name.rfind(kOptV, 0) == 0) {
            std::string base = name.substr(std::string(kOptV).size());
            if (store.has(base)) assign(store.at(base).v, name);
        } else if (store.has(name)) {
            assign(store.at(name).w, name);
        } else {
            store.add(name, std::move(w));
        }
    }
}

template class ParamStore<float>;
template class ParamStore<double>;

}  // namespace ace
