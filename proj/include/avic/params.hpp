#pragma once

#include <cstdio>
#include <cstring>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "avic/rng.hpp"
#include "avic/tensor.hpp"

namespace avic {

template <typename T>
struct Param {
    std::string name;
    Shape shape;
    std::vector<T> value;
    bool frozen = false;
};

// Named parameters in insertion order. Prefixes partition the store into the
// encoder/decoder/generator/classifier slices.
template <typename T>
class ParameterStore {
public:
    Param<T>& add(const std::string& name, Shape shape, std::vector<T> value) {
        if (index_.count(name)) throw Error("ParameterStore: duplicate name " + name);
        check_shape_positive(shape, "param");
        if (static_cast<int64_t>(value.size()) != numel(shape))
            throw ShapeError("ParameterStore: " + name + " data does not match " + shape_str(shape));
        index_.emplace(name, params_.size());
        params_.push_back(Param<T>{name, std::move(shape), std::move(value), false});
        return params_.back();
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    Param<T>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw Error("ParameterStore: no parameter " + name);
        return params_[it->second];
    }
    const Param<T>& at(const std::string& name) const {
        return const_cast<ParameterStore*>(this)->at(name);
    }

    std::vector<Param<T>>& all() { return params_; }
    const std::vector<Param<T>>& all() const { return params_; }
    size_t size() const { return params_.size(); }

    std::vector<size_t> prefix_indices(const std::string& prefix) const {
        std::vector<size_t> out;
        for (size_t i = 0; i < params_.size(); ++i)
            if (params_[i].name.rfind(prefix, 0) == 0) out.push_back(i);
        return out;
    }

    void set_frozen(const std::string& prefix, bool frozen) {
        for (size_t i : prefix_indices(prefix)) params_[i].frozen = frozen;
    }
    bool all_frozen(const std::string& prefix) const {
        auto idx = prefix_indices(prefix);
        if (idx.empty()) return false;
        for (size_t i : idx)
            if (!params_[i].frozen) return false;
        return true;
    }

    int64_t total_elements(const std::string& prefix = "") const {
        int64_t n = 0;
        for (size_t i : prefix_indices(prefix)) n += numel(params_[i].shape);
        return n;
    }

    // FNV-1a over raw bytes in insertion order; freeze contracts in tests
    // compare these before/after a stage.
    uint64_t checksum(const std::string& prefix = "") const {
        uint64_t h = 0xCBF29CE484222325ull;
        for (size_t i : prefix_indices(prefix)) {
            const auto& p = params_[i];
            const unsigned char* bytes = reinterpret_cast<const unsigned char*>(p.value.data());
            size_t nb = p.value.size() * sizeof(T);
            for (size_t b = 0; b < nb; ++b) {
                h ^= bytes[b];
                h *= 0x100000001B3ull;
            }
        }
        return h;
    }

private:
    std::vector<Param<T>> params_;
    std::unordered_map<std::string, size_t> index_;
};

// Leaves entered on a tape for one step, keyed by parameter name.
template <typename T>
struct TapeBinding {
    Tape<T>* tape = nullptr;
    ParameterStore<T>* store = nullptr;
    std::vector<std::pair<size_t, TensorRef>> entries;  // param index -> leaf
    std::unordered_map<std::string, TensorRef> by_name;

    TensorRef operator[](const std::string& name) const {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw Error("TapeBinding: no bound parameter " + name);
        return it->second;
    }
};

template <typename T>
TapeBinding<T> bind_params(Tape<T>& tape, ParameterStore<T>& store, const std::string& prefix,
                           bool requires_grad) {
    TapeBinding<T> b;
    b.tape = &tape;
    b.store = &store;
    for (size_t i : store.prefix_indices(prefix)) {
        auto& p = store.all()[i];
        TensorRef r = tape.leaf(p.value, p.shape, requires_grad && !p.frozen);
        b.entries.emplace_back(i, r);
        b.by_name.emplace(p.name, r);
    }
    if (b.entries.empty()) throw Error("bind_params: no parameters under prefix '" + prefix + "'");
    return b;
}

template <typename T>
void merge_bindings(TapeBinding<T>& dst, const TapeBinding<T>& src) {
    for (auto& e : src.entries) dst.entries.push_back(e);
    for (auto& kv : src.by_name) dst.by_name.emplace(kv.first, kv.second);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
    T lr;
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T eps = T(1e-8);
    int64_t t = 0;
    std::unordered_map<std::string, std::pair<std::vector<T>, std::vector<T>>> moments;  // m, v

    explicit AdamState(T lr_) : lr(lr_) {}
};

// Standard Adam with bias correction over the bound parameters. Every bound
// parameter must have a gradient entry.
template <typename T>
void adam_step(TapeBinding<T>& bound, const GradientMap<T>& grads, AdamState<T>& state) {
    state.t += 1;
    T b1t = T(1) - std::pow(state.beta1, T(state.t));
    T b2t = T(1) - std::pow(state.beta2, T(state.t));
    for (auto& [idx, ref] : bound.entries) {
        Param<T>& p = bound.store->all()[idx];
        if (p.frozen) continue;
        if (!grads.contains(ref)) throw Error("adam_step: missing gradient for " + p.name);
        const auto& g = grads.at(ref);
        if (g.size() != p.value.size())
            throw ShapeError("adam_step: gradient size mismatch for " + p.name);
        auto& [m, v] = state.moments[p.name];
        if (m.empty()) {
            m.assign(p.value.size(), T(0));
            v.assign(p.value.size(), T(0));
        }
        for (size_t i = 0; i < g.size(); ++i) {
            m[i] = state.beta1 * m[i] + (T(1) - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (T(1) - state.beta2) * g[i] * g[i];
            T mhat = m[i] / b1t;
            T vhat = v[i] / b2t;
            p.value[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// weights file
//
// magic "AVIC", u32 version=1, u32 tensor count; per tensor: u16 name length,
// name bytes, u8 dtype (0=f32, 1=f64), u8 rank, u32 dims, raw little-endian
// payload. Round trips are bit-exact.
// ---------------------------------------------------------------------------

namespace wire {

template <typename T>
constexpr uint8_t dtype_code();
template <>
constexpr uint8_t dtype_code<float>() {
    return 0;
}
template <>
constexpr uint8_t dtype_code<double>() {
    return 1;
}

inline void put_u16(std::string& s, uint16_t v) {
    s.push_back(char(v & 0xFF));
    s.push_back(char(v >> 8));
}
inline void put_u32(std::string& s, uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xFF));
}

struct Reader {
    const unsigned char* p;
    size_t n, pos = 0;
    Reader(const void* data, size_t size) : p(static_cast<const unsigned char*>(data)), n(size) {}
    void need(size_t k, const char* what) {
        if (pos + k > n) throw IoError(std::string("weights file truncated reading ") + what);
    }
    uint8_t u8(const char* what) {
        need(1, what);
        return p[pos++];
    }
    uint16_t u16(const char* what) {
        need(2, what);
        uint16_t v = uint16_t(p[pos]) | uint16_t(p[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    void bytes(void* dst, size_t k, const char* what) {
        need(k, what);
        std::memcpy(dst, p + pos, k);
        pos += k;
    }
};

}  // namespace wire

template <typename T>
std::string encode_weights(const ParameterStore<T>& store, const std::string& prefix = "") {
    auto idx = store.prefix_indices(prefix);
    std::string out = "AVIC";
    wire::put_u32(out, 1);
    wire::put_u32(out, static_cast<uint32_t>(idx.size()));
    for (size_t i : idx) {
        const auto& p = store.all()[i];
        if (p.name.size() > 0xFFFF) throw IoError("weights: name too long " + p.name);
        wire::put_u16(out, static_cast<uint16_t>(p.name.size()));
        out += p.name;
        out.push_back(char(wire::dtype_code<T>()));
        out.push_back(char(p.shape.size()));
        for (int d : p.shape) wire::put_u32(out, static_cast<uint32_t>(d));
        size_t nb = p.value.size() * sizeof(T);
        size_t off = out.size();
        out.resize(off + nb);
        std::memcpy(out.data() + off, p.value.data(), nb);  // little-endian host
    }
    return out;
}

template <typename T>
void save_weights(const ParameterStore<T>& store, const std::string& path,
                  const std::string& prefix = "") {
    std::string blob = encode_weights(store, prefix);
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open for write: " + path);
    size_t w = std::fwrite(blob.data(), 1, blob.size(), f);
    std::fclose(f);
    if (w != blob.size()) throw IoError("short write: " + path);
}

// Parses a full store from the blob. Nothing is returned on error.
template <typename T>
ParameterStore<T> decode_weights(const void* data, size_t size) {
    wire::Reader r(data, size);
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, "AVIC", 4) != 0) throw IoError("weights: bad magic, not an AVIC file");
    uint32_t version = r.u32("version");
    if (version != 1)
        throw IoError("weights: unsupported version " + std::to_string(version) + " (expected 1)");
    uint32_t count = r.u32("tensor count");
    ParameterStore<T> store;
    for (uint32_t t = 0; t < count; ++t) {
        uint16_t nl = r.u16("name length");
        std::string name(nl, '\0');
        r.bytes(name.data(), nl, "name");
        uint8_t dtype = r.u8("dtype");
        if (dtype != wire::dtype_code<T>())
            throw IoError("weights: dtype code " + std::to_string(int(dtype)) + " for " + name +
                          " does not match requested scalar type");
        uint8_t rank = r.u8("rank");
        Shape shape(rank);
        for (int d = 0; d < rank; ++d) shape[d] = static_cast<int>(r.u32("dim"));
        int64_t n = numel(shape);
        std::vector<T> value(static_cast<size_t>(n), T(0));
        r.bytes(value.data(), size_t(n) * sizeof(T), "payload");
        store.add(name, std::move(shape), std::move(value));
    }
    return store;
}

template <typename T>
ParameterStore<T> load_weights(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open: " + path);
    std::string blob;
    char buf[1 << 16];
    size_t k;
    while ((k = std::fread(buf, 1, sizeof buf, f)) > 0) blob.append(buf, k);
    std::fclose(f);
    return decode_weights<T>(blob.data(), blob.size());
}

// Fill an already-built model; names and shapes must line up.
template <typename T>
void load_weights_into(ParameterStore<T>& store, const std::string& path,
                       const std::string& prefix = "") {
    ParameterStore<T> loaded = load_weights<T>(path);
    for (const auto& p : loaded.all()) {
        if (!prefix.empty() && p.name.rfind(prefix, 0) != 0) continue;
        if (!store.has(p.name)) throw IoError("weights: file has unknown parameter " + p.name);
        auto& dst = store.at(p.name);
        if (dst.shape != p.shape)
            throw IoError("weights: shape mismatch for " + p.name + ": model " + shape_str(dst.shape) +
                          " vs file " + shape_str(p.shape));
        dst.value = p.value;
    }
}

}  // namespace avic
