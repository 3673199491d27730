#pragma once

#include <functional>

#include "avic/models.hpp"
#include "avic/vae.hpp"

namespace avic {

enum class AttackMethod { generator, fgsm, pgd };
enum class AttackTarget { vae, classifier };

inline AttackMethod parse_attack_method(const std::string& s) {
    if (s == "generator") return AttackMethod::generator;
    if (s == "fgsm") return AttackMethod::fgsm;
    if (s == "pgd") return AttackMethod::pgd;
    throw ConfigError("unknown attack method '" + s + "'");
}
inline AttackTarget parse_attack_target(const std::string& s) {
    if (s == "vae") return AttackTarget::vae;
    if (s == "classifier") return AttackTarget::classifier;
    throw ConfigError("unknown attack target '" + s + "'");
}

struct AttackSpec {
    AttackMethod method = AttackMethod::pgd;
    AttackTarget target = AttackTarget::classifier;
    double epsilon = 0.02;
    int steps = 10;           // pgd
    double step_size = 0;     // pgd; 0 resolves to 2.5 * epsilon / steps
    bool rand_init = false;   // pgd
    uint64_t seed = 0;

    double resolved_step() const { return step_size > 0 ? step_size : 2.5 * epsilon / steps; }
    void validate() const {
        if (epsilon < 0 || epsilon > 1) throw ConfigError("attack epsilon must be in [0,1]");
        if (method == AttackMethod::pgd) {
            if (steps < 1) throw ConfigError("pgd steps must be >= 1");
            if (epsilon > 0 && resolved_step() <= 0) throw ConfigError("pgd step_size must be > 0");
        }
    }
};

// Builds a scalar loss on the tape from an input leaf. The VAE flavor takes
// no labels and the classifier flavor touches no VAE parameters.
template <typename T>
using BatchLossFn = std::function<TensorRef(Tape<T>&, TensorRef)>;

template <typename T>
BatchLossFn<T> vae_attack_loss(ParameterStore<T>& vae_store, const VaeArch& arch,
                               uint64_t noise_seed) {
    return [&vae_store, arch, noise_seed](Tape<T>& t, TensorRef x) {
        auto bind = bind_params(t, vae_store, "vae.", false);
        auto out = vae_forward(t, bind, arch, x, noise_seed);
        return vae_loss(t, x, out);
    };
}

template <typename T>
BatchLossFn<T> classifier_attack_loss(ParameterStore<T>& cls_store, const ClassifierArch& arch,
                                      std::vector<int> labels) {
    return [&cls_store, arch, labels = std::move(labels)](Tape<T>& t, TensorRef x) {
        auto bind = bind_params(t, cls_store, "cls.", false);
        TensorRef logits = classifier_forward(t, bind, arch, x);
        return softmax_cross_entropy(t, logits, labels);
    };
}

template <typename T>
std::vector<T> loss_input_gradient(const BatchLossFn<T>& loss_fn, const std::vector<T>& x,
                                   const Shape& shape) {
    Tape<T> tape;
    TensorRef xr = tape.leaf(x, shape, true);
    TensorRef loss = loss_fn(tape, xr);
    if (numel(tape.shape(loss)) != 1)
        throw ShapeError("attack loss must be scalar, got " + shape_str(tape.shape(loss)));
    auto grads = tape.backward(loss);
    return grads.at(xr);
}

// clamp of candidate into [origin-eps, origin+eps] intersected with [0,1]
template <typename T>
std::vector<T> project_linf(const std::vector<T>& origin, const std::vector<T>& candidate, T epsilon) {
    if (origin.size() != candidate.size()) throw ShapeError("project_linf: size mismatch");
    std::vector<T> out(candidate.size());
    for (size_t i = 0; i < out.size(); ++i) {
        T lo = std::max(T(0), origin[i] - epsilon);
        T hi = std::min(T(1), origin[i] + epsilon);
        out[i] = std::min(hi, std::max(lo, candidate[i]));
    }
    return out;
}

template <typename T>
inline T sign0(T v) {
    return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));  // sign(0) = 0
}

template <typename T>
std::vector<T> fgsm(const BatchLossFn<T>& loss_fn, const std::vector<T>& x, const Shape& shape,
                    T epsilon) {
    if (epsilon == T(0)) return x;
    std::vector<T> g = loss_input_gradient(loss_fn, x, shape);
    std::vector<T> out(x.size());
    for (size_t i = 0; i < x.size(); ++i)
        out[i] = std::min(T(1), std::max(T(0), x[i] + epsilon * sign0(g[i])));
    return out;
}

template <typename T>
std::vector<T> pgd(const BatchLossFn<T>& loss_fn, const std::vector<T>& x, const Shape& shape,
                   const AttackSpec& spec) {
    spec.validate();
    T eps = T(spec.epsilon);
    if (eps == T(0)) return x;
    T step = T(spec.resolved_step());
    std::vector<T> cur = x;
    if (spec.rand_init) {
        CounterRng rng(derive_seed(spec.seed, "pgd_init"));
        for (auto& v : cur) v += T(rng.next_uniform(-double(eps), double(eps)));
        cur = project_linf(x, cur, eps);
    }
    for (int it = 0; it < spec.steps; ++it) {
        std::vector<T> g = loss_input_gradient(loss_fn, cur, shape);
        for (size_t i = 0; i < cur.size(); ++i)
            cur[i] = std::min(T(1), std::max(T(0), cur[i] + step * sign0(g[i])));
        cur = project_linf(x, cur, eps);
    }
    return cur;
}

// x_a = clamp(x + eps * g_raw(x), 0, 1) with g_raw in (-1,1); used on-tape in
// training so gradients flow into the generator.
template <typename T>
TensorRef generator_attack_on_tape(Tape<T>& t, const TapeBinding<T>& gen_bind,
                                   const GeneratorArch& arch, TensorRef x, T epsilon) {
    TensorRef raw = generator_forward(t, gen_bind, arch, x);
    return clamp_op(t, add(t, x, scale(t, raw, epsilon)), T(0), T(1));
}

template <typename T>
std::vector<T> generator_attack(ParameterStore<T>& gen_store, const GeneratorArch& arch,
                                const std::vector<T>& x, const Shape& shape, T epsilon) {
    if (epsilon == T(0)) return x;
    Tape<T> tape;
    auto bind = bind_params(tape, gen_store, "gen.", false);
    TensorRef xr = tape.leaf(x, shape, false);
    TensorRef xa = generator_attack_on_tape(tape, bind, arch, xr, epsilon);
    return tape.value(xa);
}

}  // namespace avic
