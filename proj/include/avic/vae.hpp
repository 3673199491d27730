#pragma once

#include <chrono>

#include "avic/data.hpp"
#include "avic/models.hpp"
#include "avic/run_types.hpp"

namespace avic {

template <typename T>
struct VaeOutput {
    TensorRef x_recon, mu, logvar, z;
};

template <typename T>
TensorRef normal_noise_leaf(Tape<T>& t, int n, int latent, uint64_t seed) {
    std::vector<T> noise(size_t(n) * latent);
    CounterRng rng(seed);
    fill_normal(noise, rng);
    return t.leaf(std::move(noise), {n, latent}, false);
}

// Encoder heads, reparameterized sample z = mu + exp(logvar/2) * noise,
// decoder reconstruction. Differentiable in the parameters and in x.
template <typename T>
VaeOutput<T> vae_forward_with_noise(Tape<T>& t, const TapeBinding<T>& b, const VaeArch& a,
                                    TensorRef x, TensorRef noise) {
    VaeHeads<T> heads = vae_encode(t, b, a, x);
    TensorRef sigma = exp_op(t, scale(t, heads.logvar, T(0.5)));
    TensorRef z = add(t, heads.mu, mul(t, sigma, noise));
    TensorRef recon = vae_decode(t, b, a, z);
    return {recon, heads.mu, heads.logvar, z};
}

template <typename T>
VaeOutput<T> vae_forward(Tape<T>& t, const TapeBinding<T>& b, const VaeArch& a, TensorRef x,
                         uint64_t rng_seed) {
    TensorRef noise = normal_noise_leaf(t, t.shape(x)[0], a.latent, rng_seed);
    return vae_forward_with_noise(t, b, a, x, noise);
}

template <typename T>
TensorRef vae_loss(Tape<T>& t, TensorRef x, const VaeOutput<T>& out) {
    return add(t, half_sse(t, x, out.x_recon), kl_diag_gaussian(t, out.mu, out.logvar));
}

// Mean loss over a split with sequential batches and a fixed noise stream.
// The same seed must be reused when comparing clean and attacked inputs.
template <typename T>
double mean_vae_loss(ParameterStore<T>& store, const VaeArch& arch, const DatasetSplit& split,
                     int batch_size, uint64_t noise_seed,
                     const std::function<std::vector<T>(const Batch&, int)>& transform = nullptr) {
    auto batches = sequential_batches(split, batch_size);
    double total = 0;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
        const Batch& b = batches[bi];
        Tape<T> tape;
        auto bind = bind_params(tape, store, "vae.", false);
        std::vector<T> xs(b.images.begin(), b.images.end());
        if (transform) xs = transform(b, int(bi));
        TensorRef x = tape.leaf(std::move(xs), {b.n, split.channels, split.height, split.width}, false);
        auto out = vae_forward(tape, bind, arch, x, derive_seed(noise_seed, "eval_noise", bi));
        double loss = double(tape.value(vae_loss(tape, x, out))[0]);
        total += loss * b.n;
    }
    return total / double(split.count());
}

// Stage 1: fit the VAE on clean images. Returns the per-epoch mean loss.
template <typename T>
StageResult train_vae(ParameterStore<T>& store, const VaeArch& arch, const DatasetSplit& split,
                      const RunConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    StageResult res;
    res.stage = "vae";
    AdamState<T> adam(T(cfg.vae_lr));
    uint64_t stage_seed = derive_seed(cfg.seed, "stage_vae");
    for (int epoch = 0; epoch < cfg.vae_epochs; ++epoch) {
        auto batches = make_batches(split, cfg.batch_size, stage_seed, epoch);
        double total = 0;
        for (size_t bi = 0; bi < batches.size(); ++bi) {
            const Batch& b = batches[bi];
            Tape<T> tape;
            auto bind = bind_params(tape, store, "vae.", true);
            std::vector<T> xs(b.images.begin(), b.images.end());
            TensorRef x =
                tape.leaf(std::move(xs), {b.n, split.channels, split.height, split.width}, false);
            auto out = vae_forward(tape, bind, arch, x,
                                   derive_seed(cfg.seed, "vae_noise", uint64_t(epoch), bi));
            TensorRef loss = vae_loss(tape, x, out);
            total += double(tape.value(loss)[0]) * b.n;
            auto grads = tape.backward(loss);
            adam_step(bind, grads, adam);
        }
        res.curve.push_back(total / double(split.count()));
    }
    res.final_metric = res.curve.empty() ? 0.0 : res.curve.back();
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace avic
