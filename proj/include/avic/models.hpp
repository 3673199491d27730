#pragma once

#include <string>

#include "avic/ops.hpp"
#include "avic/params.hpp"

namespace avic {

enum class DatasetId { mnist, cifar10, cifar100 };

inline DatasetId parse_dataset(const std::string& s) {
    if (s == "mnist") return DatasetId::mnist;
    if (s == "cifar10") return DatasetId::cifar10;
    if (s == "cifar100") return DatasetId::cifar100;
    throw ConfigError("unknown dataset '" + s + "' (expected mnist, cifar10 or cifar100)");
}
inline std::string dataset_name(DatasetId d) {
    switch (d) {
        case DatasetId::mnist: return "mnist";
        case DatasetId::cifar10: return "cifar10";
        default: return "cifar100";
    }
}

struct DataDims {
    int C, H, W, K;
};
inline DataDims dims_for(DatasetId d) {
    switch (d) {
        case DatasetId::mnist: return {1, 28, 28, 10};
        case DatasetId::cifar10: return {3, 32, 32, 10};
        default: return {3, 32, 32, 100};
    }
}
inline int default_latent(DatasetId d) { return d == DatasetId::mnist ? 16 : 64; }

// ---------------------------------------------------------------------------
// initialization
// ---------------------------------------------------------------------------

namespace detail {

// Kaiming-uniform: U(-b, b) with b = sqrt(6 / fan_in); biases start at zero.
template <typename T>
void add_kaiming(ParameterStore<T>& store, const std::string& name, Shape shape, int64_t fan_in,
                 uint64_t seed) {
    std::vector<T> w(size_t(numel(shape)));
    CounterRng rng(derive_seed(seed, "init", hash_str(name)));
    double bound = std::sqrt(6.0 / double(fan_in));
    fill_uniform(w, rng, -bound, bound);
    store.add(name, std::move(shape), std::move(w));
}

template <typename T>
void add_zeros(ParameterStore<T>& store, const std::string& name, Shape shape) {
    store.add(name, std::move(shape), std::vector<T>(size_t(numel(shape)), T(0)));
}

template <typename T>
void add_conv(ParameterStore<T>& store, const std::string& base, int out_c, int in_c, int k,
              uint64_t seed) {
    add_kaiming(store, base + ".w", {out_c, in_c, k, k}, int64_t(in_c) * k * k, seed);
    add_zeros(store, base + ".b", {out_c});
}

// transpose-conv layout [C_in, C_out, k, k]
template <typename T>
void add_deconv(ParameterStore<T>& store, const std::string& base, int in_c, int out_c, int k,
                uint64_t seed) {
    add_kaiming(store, base + ".w", {in_c, out_c, k, k}, int64_t(in_c) * k * k, seed);
    add_zeros(store, base + ".b", {out_c});
}

template <typename T>
void add_dense(ParameterStore<T>& store, const std::string& base, int in_d, int out_d,
               uint64_t seed) {
    add_kaiming(store, base + ".w", {in_d, out_d}, in_d, seed);
    add_zeros(store, base + ".b", {out_d});
}

template <typename T>
TensorRef conv_layer(Tape<T>& t, const TapeBinding<T>& b, const std::string& base, TensorRef x,
                     int stride, int pad) {
    return conv2d(t, x, b[base + ".w"], b[base + ".b"], stride, pad);
}
template <typename T>
TensorRef deconv_layer(Tape<T>& t, const TapeBinding<T>& b, const std::string& base, TensorRef x,
                       int stride, int pad) {
    return conv2d_transpose(t, x, b[base + ".w"], b[base + ".b"], stride, pad);
}
template <typename T>
TensorRef dense_layer(Tape<T>& t, const TapeBinding<T>& b, const std::string& base, TensorRef x) {
    return dense(t, x, b[base + ".w"], b[base + ".b"]);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// VAE: two stride-2 conv encoder stages, dense heads for the posterior mean
// and log-variance, mirrored transpose-conv decoder with a final sigmoid.
// ---------------------------------------------------------------------------

struct VaeArch {
    DatasetId dataset;
    DataDims dims;
    int latent;
    int c1 = 16, c2 = 32;
    int eh, ew;  // encoder spatial dims after two stride-2 convs
    int64_t flat() const { return int64_t(c2) * eh * ew; }
};

inline VaeArch make_vae_arch(DatasetId d, int latent = 0) {
    VaeArch a;
    a.dataset = d;
    a.dims = dims_for(d);
    a.latent = latent > 0 ? latent : default_latent(d);
    a.eh = a.dims.H / 4;
    a.ew = a.dims.W / 4;
    return a;
}

template <typename T>
VaeArch build_vae(ParameterStore<T>& store, DatasetId d, int latent, uint64_t seed) {
    VaeArch a = make_vae_arch(d, latent);
    detail::add_conv(store, "vae.encoder.conv1", a.c1, a.dims.C, 4, seed);
    detail::add_conv(store, "vae.encoder.conv2", a.c2, a.c1, 4, seed);
    detail::add_dense(store, "vae.encoder.mu", int(a.flat()), a.latent, seed);
    detail::add_dense(store, "vae.encoder.logvar", int(a.flat()), a.latent, seed);
    detail::add_dense(store, "vae.decoder.fc", a.latent, int(a.flat()), seed);
    detail::add_deconv(store, "vae.decoder.deconv1", a.c2, a.c1, 4, seed);
    detail::add_deconv(store, "vae.decoder.out", a.c1, a.dims.C, 4, seed);
    return a;
}

template <typename T>
struct VaeHeads {
    TensorRef mu, logvar;
};

// log-variance is clamped to [-10,10] before any exponentiation
template <typename T>
VaeHeads<T> vae_encode(Tape<T>& t, const TapeBinding<T>& b, const VaeArch& a, TensorRef x) {
    TensorRef h = relu(t, detail::conv_layer(t, b, "vae.encoder.conv1", x, 2, 1));
    h = relu(t, detail::conv_layer(t, b, "vae.encoder.conv2", h, 2, 1));
    int n = t.shape(h)[0];
    h = reshape(t, h, {n, int(a.flat())});
    TensorRef mu = detail::dense_layer(t, b, "vae.encoder.mu", h);
    TensorRef logvar = clamp_op(t, detail::dense_layer(t, b, "vae.encoder.logvar", h), T(-10), T(10));
    return {mu, logvar};
}

template <typename T>
TensorRef vae_decode(Tape<T>& t, const TapeBinding<T>& b, const VaeArch& a, TensorRef z) {
    int n = t.shape(z)[0];
    TensorRef h = relu(t, detail::dense_layer(t, b, "vae.decoder.fc", z));
    h = reshape(t, h, {n, a.c2, a.eh, a.ew});
    h = relu(t, detail::deconv_layer(t, b, "vae.decoder.deconv1", h, 2, 1));
    return sigmoid(t, detail::deconv_layer(t, b, "vae.decoder.out", h, 2, 1));
}

// ---------------------------------------------------------------------------
// Generator: stride-2 conv encoder, two residual bottleneck blocks, mirrored
// transpose-conv decoder; final tanh keeps the raw field in (-1,1). The last
// layer starts at zero so a fresh generator is the identity perturbation.
// ---------------------------------------------------------------------------

struct GeneratorArch {
    DatasetId dataset;
    DataDims dims;
    int c1 = 16, c2 = 32;
};

inline GeneratorArch make_generator_arch(DatasetId d) { return {d, dims_for(d)}; }

template <typename T>
GeneratorArch build_generator(ParameterStore<T>& store, DatasetId d, uint64_t seed) {
    GeneratorArch a = make_generator_arch(d);
    detail::add_conv(store, "gen.enc1", a.c1, a.dims.C, 4, seed);
    detail::add_conv(store, "gen.enc2", a.c2, a.c1, 4, seed);
    for (const char* blk : {"gen.res1", "gen.res2"}) {
        detail::add_conv(store, std::string(blk) + ".conv1", a.c2, a.c2, 3, seed);
        detail::add_conv(store, std::string(blk) + ".conv2", a.c2, a.c2, 3, seed);
    }
    detail::add_deconv(store, "gen.dec1", a.c2, a.c1, 4, seed);
    store.add("gen.out.w", {a.c1, a.dims.C, 4, 4},
              std::vector<T>(size_t(a.c1) * a.dims.C * 16, T(0)));
    detail::add_zeros(store, "gen.out.b", {a.dims.C});
    return a;
}

// x + branch, no activation after the sum
template <typename T>
TensorRef residual_block(Tape<T>& t, const TapeBinding<T>& b, const std::string& base, TensorRef x) {
    TensorRef h = relu(t, detail::conv_layer(t, b, base + ".conv1", x, 1, 1));
    h = detail::conv_layer(t, b, base + ".conv2", h, 1, 1);
    return add(t, x, h);
}

template <typename T>
TensorRef generator_forward(Tape<T>& t, const TapeBinding<T>& b, const GeneratorArch&, TensorRef x) {
    TensorRef h = relu(t, detail::conv_layer(t, b, "gen.enc1", x, 2, 1));
    h = relu(t, detail::conv_layer(t, b, "gen.enc2", h, 2, 1));
    h = residual_block(t, b, "gen.res1", h);
    h = residual_block(t, b, "gen.res2", h);
    h = relu(t, detail::deconv_layer(t, b, "gen.dec1", h, 2, 1));
    return tanh_op(t, detail::deconv_layer(t, b, "gen.out", h, 2, 1));
}

// ---------------------------------------------------------------------------
// Classifiers. plain_cnn: three conv/pool stages and two dense layers.
// resnet_small: conv stem, three residual blocks (middle one downsamples with
// a projection skip), global average pooling, dense head. Logits out.
// ---------------------------------------------------------------------------

struct ClassifierArch {
    std::string arch_id;
    DatasetId dataset;
    DataDims dims;
    int c1 = 16, c2 = 32, c3 = 32, fc = 128;
    int64_t flat = 0;  // plain_cnn flatten size
};

inline ClassifierArch make_classifier_arch(const std::string& arch_id, DatasetId d) {
    if (arch_id != "plain_cnn" && arch_id != "resnet_small")
        throw ConfigError("unknown classifier arch '" + arch_id +
                          "' (expected plain_cnn or resnet_small)");
    ClassifierArch a;
    a.arch_id = arch_id;
    a.dataset = d;
    a.dims = dims_for(d);
    int h = a.dims.H / 2 / 2 / 2;
    int w = a.dims.W / 2 / 2 / 2;
    a.flat = int64_t(a.c3) * h * w;
    return a;
}

template <typename T>
ClassifierArch build_classifier(ParameterStore<T>& store, const std::string& arch_id, DatasetId d,
                                uint64_t seed) {
    ClassifierArch a = make_classifier_arch(arch_id, d);
    if (a.arch_id == "plain_cnn") {
        detail::add_conv(store, "cls.conv1", a.c1, a.dims.C, 3, seed);
        detail::add_conv(store, "cls.conv2", a.c2, a.c1, 3, seed);
        detail::add_conv(store, "cls.conv3", a.c3, a.c2, 3, seed);
        detail::add_dense(store, "cls.fc1", int(a.flat), a.fc, seed);
        detail::add_dense(store, "cls.fc2", a.fc, a.dims.K, seed);
    } else {
        detail::add_conv(store, "cls.stem", a.c1, a.dims.C, 3, seed);
        detail::add_conv(store, "cls.b1.conv1", a.c1, a.c1, 3, seed);
        detail::add_conv(store, "cls.b1.conv2", a.c1, a.c1, 3, seed);
        detail::add_conv(store, "cls.b2.conv1", a.c2, a.c1, 4, seed);  // stride 2
        detail::add_conv(store, "cls.b2.conv2", a.c2, a.c2, 3, seed);
        detail::add_conv(store, "cls.b2.skip", a.c2, a.c1, 2, seed);  // stride-2 projection
        detail::add_conv(store, "cls.b3.conv1", a.c3, a.c2, 3, seed);
        detail::add_conv(store, "cls.b3.conv2", a.c3, a.c2, 3, seed);
        detail::add_dense(store, "cls.fc", a.c3, a.dims.K, seed);
    }
    return a;
}

// relu(x + branch); with the branch at zero this passes nonnegative inputs
// through unchanged
template <typename T>
TensorRef classifier_res_block(Tape<T>& t, const TapeBinding<T>& b, const std::string& base,
                               TensorRef x) {
    TensorRef h = relu(t, detail::conv_layer(t, b, base + ".conv1", x, 1, 1));
    h = detail::conv_layer(t, b, base + ".conv2", h, 1, 1);
    return relu(t, add(t, x, h));
}

template <typename T>
TensorRef classifier_forward(Tape<T>& t, const TapeBinding<T>& b, const ClassifierArch& a,
                             TensorRef x) {
    if (a.arch_id == "plain_cnn") {
        TensorRef h = maxpool2(t, relu(t, detail::conv_layer(t, b, "cls.conv1", x, 1, 1)));
        h = maxpool2(t, relu(t, detail::conv_layer(t, b, "cls.conv2", h, 1, 1)));
        h = maxpool2(t, relu(t, detail::conv_layer(t, b, "cls.conv3", h, 1, 1)));
        int n = t.shape(h)[0];
        h = reshape(t, h, {n, int(a.flat)});
        h = relu(t, detail::dense_layer(t, b, "cls.fc1", h));
        return detail::dense_layer(t, b, "cls.fc2", h);
    }
    TensorRef h = relu(t, detail::conv_layer(t, b, "cls.stem", x, 1, 1));
    h = classifier_res_block(t, b, "cls.b1", h);
    TensorRef main = relu(t, detail::conv_layer(t, b, "cls.b2.conv1", h, 2, 1));
    main = detail::conv_layer(t, b, "cls.b2.conv2", main, 1, 1);
    TensorRef skip = detail::conv_layer(t, b, "cls.b2.skip", h, 2, 0);
    h = relu(t, add(t, skip, main));
    h = classifier_res_block(t, b, "cls.b3", h);
    h = global_avg_pool(t, h);
    return detail::dense_layer(t, b, "cls.fc", h);
}

}  // namespace avic
