#pragma once

#include <chrono>

#include "avic/report.hpp"

namespace avic {

namespace detail {

struct StageClock {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double elapsed() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

template <typename T>
TensorRef image_leaf(Tape<T>& t, const Batch& b, const DatasetSplit& split) {
    std::vector<T> xs(b.images.begin(), b.images.end());
    return t.leaf(std::move(xs), {b.n, split.channels, split.height, split.width}, false);
}

}  // namespace detail

// Descent objective of the attack stage: the negated VAE loss on x_a, so
// Adam descent maximizes reconstruction damage.
template <typename T>
TensorRef separate_generator_objective(Tape<T>& t, const TapeBinding<T>& gen_bind,
                                       const TapeBinding<T>& vae_bind, const GeneratorArch& gen_arch,
                                       const VaeArch& vae_arch, TensorRef x, TensorRef noise,
                                       T epsilon) {
    TensorRef xa = generator_attack_on_tape(t, gen_bind, gen_arch, x, epsilon);
    auto out = vae_forward_with_noise(t, vae_bind, vae_arch, xa, noise);
    return neg(t, vae_loss(t, xa, out));
}

template <typename T>
struct GlobalStep {
    TensorRef x_adv;
    TensorRef vae_loss_value;   // L_VAE(x_a, recon)
    TensorRef cls_loss;         // cross entropy on x_a
    TensorRef gen_objective;    // -L_VAE + alpha * L_CLS
};

// One shared forward for the joint stage. With alpha = 0 the generator
// objective degenerates to the pure attack objective, bit for bit.
template <typename T>
GlobalStep<T> global_objectives(Tape<T>& t, const TapeBinding<T>& gen_bind,
                                const TapeBinding<T>& vae_bind, const TapeBinding<T>& cls_bind,
                                const GeneratorArch& gen_arch, const VaeArch& vae_arch,
                                const ClassifierArch& cls_arch, TensorRef x,
                                const std::vector<int>& labels, TensorRef noise, T epsilon, T alpha) {
    GlobalStep<T> s;
    s.x_adv = generator_attack_on_tape(t, gen_bind, gen_arch, x, epsilon);
    auto out = vae_forward_with_noise(t, vae_bind, vae_arch, s.x_adv, noise);
    s.vae_loss_value = vae_loss(t, s.x_adv, out);
    TensorRef logits = classifier_forward(t, cls_bind, cls_arch, s.x_adv);
    s.cls_loss = softmax_cross_entropy(t, logits, labels);
    s.gen_objective = alpha == T(0) ? neg(t, s.vae_loss_value)
                                    : add(t, neg(t, s.vae_loss_value), scale(t, s.cls_loss, alpha));
    return s;
}

// Stage 2a: train the generator against the frozen VAE by maximizing its
// loss. The VAE must be flagged frozen before entry.
template <typename T>
StageResult train_generator_separate(ParameterStore<T>& store, const VaeArch& vae_arch,
                                     const GeneratorArch& gen_arch, const DatasetSplit& split,
                                     const RunConfig& cfg) {
    if (!store.all_frozen("vae."))
        throw Error("train_generator_separate: VAE parameters must be frozen");
    detail::StageClock clock;
    StageResult res;
    res.stage = "generator";
    AdamState<T> adam(T(cfg.gen_lr));
    uint64_t stage_seed = derive_seed(cfg.seed, "stage_gen");
    for (int epoch = 0; epoch < cfg.gen_epochs; ++epoch) {
        auto batches = make_batches(split, cfg.batch_size, stage_seed, epoch);
        double total = 0;
        for (size_t bi = 0; bi < batches.size(); ++bi) {
            const Batch& b = batches[bi];
            Tape<T> tape;
            auto gen_bind = bind_params(tape, store, "gen.", true);
            auto vae_bind = bind_params(tape, store, "vae.", false);
            TensorRef x = detail::image_leaf(tape, b, split);
            TensorRef noise = normal_noise_leaf(tape, b.n, vae_arch.latent,
                                                derive_seed(cfg.seed, "gen_noise", uint64_t(epoch), bi));
            TensorRef objective = separate_generator_objective(tape, gen_bind, vae_bind, gen_arch,
                                                               vae_arch, x, noise, T(cfg.epsilon));
            total += -double(tape.value(objective)[0]) * b.n;  // adversarial VAE loss
            auto grads = tape.backward(objective);
            adam_step(gen_bind, grads, adam);
        }
        res.curve.push_back(total / double(split.count()));
    }
    res.final_metric = res.curve.empty() ? 0.0 : res.curve.back();
    res.wall_seconds = clock.elapsed();
    return res;
}

// Stage 2b: train the classifier on generator outputs only; adversarial
// examples keep the labels of their clean sources. Epoch numbering continues
// into the joint stage so the classifier sees one contiguous schedule.
template <typename T>
StageResult train_classifier_adv(ParameterStore<T>& store, const GeneratorArch& gen_arch,
                                 const ClassifierArch& cls_arch, const DatasetSplit& split,
                                 const RunConfig& cfg) {
    if (!store.all_frozen("gen."))
        throw Error("train_classifier_adv: generator parameters must be frozen");
    detail::StageClock clock;
    StageResult res;
    res.stage = "classifier";
    AdamState<T> adam(T(cfg.cls_lr));
    uint64_t stage_seed = derive_seed(cfg.seed, "stage_cls");
    for (int epoch = 0; epoch < cfg.cls_epochs; ++epoch) {
        auto batches = make_batches(split, cfg.batch_size, stage_seed, epoch);
        double total = 0;
        for (const Batch& b : batches) {
            Tape<T> tape;
            auto cls_bind = bind_params(tape, store, "cls.", true);
            auto gen_bind = bind_params(tape, store, "gen.", false);
            TensorRef x = detail::image_leaf(tape, b, split);
            TensorRef xa = generator_attack_on_tape(tape, gen_bind, gen_arch, x, T(cfg.epsilon));
            TensorRef logits = classifier_forward(tape, cls_bind, cls_arch, xa);
            TensorRef loss = softmax_cross_entropy(tape, logits, b.labels);
            total += double(tape.value(loss)[0]) * b.n;
            auto grads = tape.backward(loss);
            adam_step(cls_bind, grads, adam);
        }
        res.curve.push_back(total / double(split.count()));
    }
    res.final_metric = res.curve.empty() ? 0.0 : res.curve.back();
    res.wall_seconds = clock.elapsed();
    return res;
}

// Vanilla baseline: same initialization, same batch schedule, clean inputs.
// With epsilon = 0 the pipeline reproduces this trajectory exactly.
template <typename T>
StageResult train_classifier_clean(ParameterStore<T>& store, const ClassifierArch& cls_arch,
                                   const DatasetSplit& split, const RunConfig& cfg, int epochs,
                                   int first_epoch = 0) {
    detail::StageClock clock;
    StageResult res;
    res.stage = "classifier_clean";
    AdamState<T> adam(T(cfg.cls_lr));
    uint64_t stage_seed = derive_seed(cfg.seed, "stage_cls");
    for (int epoch = first_epoch; epoch < first_epoch + epochs; ++epoch) {
        auto batches = make_batches(split, cfg.batch_size, stage_seed, epoch);
        double total = 0;
        for (const Batch& b : batches) {
            Tape<T> tape;
            auto cls_bind = bind_params(tape, store, "cls.", true);
            TensorRef x = detail::image_leaf(tape, b, split);
            TensorRef logits = classifier_forward(tape, cls_bind, cls_arch, x);
            TensorRef loss = softmax_cross_entropy(tape, logits, b.labels);
            total += double(tape.value(loss)[0]) * b.n;
            auto grads = tape.backward(loss);
            adam_step(cls_bind, grads, adam);
        }
        res.curve.push_back(total / double(split.count()));
    }
    res.final_metric = res.curve.empty() ? 0.0 : res.curve.back();
    res.wall_seconds = clock.elapsed();
    return res;
}

// Stage 3: one forward per batch, two backward roots. The generator descends
// -L_VAE + alpha * L_CLS with the classifier held constant; the classifier
// descends L_CLS on the frozen x_a. The VAE stays frozen throughout.
template <typename T>
StageResult global_finetune(ParameterStore<T>& store, const VaeArch& vae_arch,
                            const GeneratorArch& gen_arch, const ClassifierArch& cls_arch,
                            const DatasetSplit& split, const RunConfig& cfg) {
    if (!store.all_frozen("vae.")) throw Error("global_finetune: VAE parameters must be frozen");
    detail::StageClock clock;
    StageResult res;
    res.stage = "global";
    AdamState<T> adam_gen(T(cfg.gen_lr));
    AdamState<T> adam_cls(T(cfg.cls_lr));
    uint64_t stage_seed = derive_seed(cfg.seed, "stage_cls");  // continues the classifier schedule
    for (int epoch = cfg.cls_epochs; epoch < cfg.cls_epochs + cfg.global_epochs; ++epoch) {
        auto batches = make_batches(split, cfg.batch_size, stage_seed, epoch);
        double total = 0;
        for (size_t bi = 0; bi < batches.size(); ++bi) {
            const Batch& b = batches[bi];
            Tape<T> tape;
            auto gen_bind = bind_params(tape, store, "gen.", true);
            auto cls_bind = bind_params(tape, store, "cls.", true);
            auto vae_bind = bind_params(tape, store, "vae.", false);
            TensorRef x = detail::image_leaf(tape, b, split);
            TensorRef noise =
                normal_noise_leaf(tape, b.n, vae_arch.latent,
                                  derive_seed(cfg.seed, "global_noise", uint64_t(epoch), bi));
            auto step = global_objectives(tape, gen_bind, vae_bind, cls_bind, gen_arch, vae_arch,
                                          cls_arch, x, b.labels, noise, T(cfg.epsilon), T(cfg.alpha));
            total += double(tape.value(step.cls_loss)[0]) * b.n;
            auto [gen_grads, cls_grads] = tape.backward_pair(step.gen_objective, step.cls_loss);
            adam_step(gen_bind, gen_grads, adam_gen);
            adam_step(cls_bind, cls_grads, adam_cls);
        }
        res.curve.push_back(total / double(split.count()));
    }
    res.final_metric = res.curve.empty() ? 0.0 : res.curve.back();
    res.wall_seconds = clock.elapsed();
    return res;
}

// ---------------------------------------------------------------------------
// orchestrator
// ---------------------------------------------------------------------------

struct AvicModels {
    ParameterStore<float> store;
    VaeArch vae_arch;
    GeneratorArch gen_arch;
    ClassifierArch cls_arch;
};

inline AvicModels build_models(const RunConfig& cfg) {
    AvicModels m;
    DatasetId ds = parse_dataset(cfg.dataset);
    m.vae_arch = build_vae(m.store, ds, 0, derive_seed(cfg.seed, "vae_init"));
    m.gen_arch = build_generator(m.store, ds, derive_seed(cfg.seed, "gen_init"));
    m.cls_arch = build_classifier(m.store, cfg.arch, ds, derive_seed(cfg.seed, "cls_init"));
    return m;
}

template <typename Fn>
StageResult run_stage(const char* name, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error("stage " + std::string(name) + ": " + e.what());
    }
}

// Test-set metrics: accuracies, reconstruction-loss growth under the trained
// generator, and the PGD transfer grid.
inline void evaluate_into_report(AvicModels& m, const RunConfig& cfg, const DatasetSplit& test,
                                 RunReport& report) {
    auto gen_attack = [&](const Batch& b, int) {
        return generator_attack(m.store, m.gen_arch, b.images,
                                {b.n, test.channels, test.height, test.width}, float(cfg.epsilon));
    };
    std::function<std::vector<float>(const Batch&, int)> attack_fn = gen_attack;
    report.accuracy_clean_pct = evaluate_accuracy(m.store, m.cls_arch, test);
    report.accuracy_adv_pct = evaluate_accuracy(m.store, m.cls_arch, test, 256, attack_fn);
    auto inc = vae_loss_increase(m.store, m.vae_arch, test, attack_fn,
                                 derive_seed(cfg.seed, "report_noise"));
    report.vae_loss_clean = inc.clean_loss;
    report.vae_loss_adv = inc.adv_loss;
    report.vae_increase_rate_pct = inc.rate_pct;
    std::vector<double> eps_list{0.0, cfg.epsilon, 0.3};
    std::sort(eps_list.begin(), eps_list.end());
    eps_list.erase(std::unique(eps_list.begin(), eps_list.end()), eps_list.end());
    report.transfer =
        transfer_matrix(m.store, m.cls_arch, m.store, m.vae_arch, test, eps_list, cfg.seed);
}

// Full four-step run: VAE, generator vs frozen VAE, classifier on attacks,
// joint fine-tune; then evaluation on the test split.
inline RunReport run_avic(const RunConfig& cfg, const DatasetSplit& train, const DatasetSplit& test,
                          AvicModels* models_out = nullptr) {
    RunReport report;
    report.config = cfg;
    AvicModels m = build_models(cfg);

    report.stages.push_back(
        run_stage("vae", [&] { return train_vae(m.store, m.vae_arch, train, cfg); }));
    m.store.set_frozen("vae.", true);
    report.stages.push_back(run_stage(
        "generator", [&] { return train_generator_separate(m.store, m.vae_arch, m.gen_arch, train, cfg); }));
    m.store.set_frozen("gen.", true);
    report.stages.push_back(run_stage(
        "classifier", [&] { return train_classifier_adv(m.store, m.gen_arch, m.cls_arch, train, cfg); }));
    m.store.set_frozen("gen.", false);
    report.stages.push_back(run_stage("global", [&] {
        return global_finetune(m.store, m.vae_arch, m.gen_arch, m.cls_arch, train, cfg);
    }));

    run_stage("evaluation", [&] {
        StageResult ev;
        ev.stage = "evaluation";
        detail::StageClock clock;
        evaluate_into_report(m, cfg, test, report);
        ev.wall_seconds = clock.elapsed();
        report.stages.push_back(ev);
        return ev;
    });

    if (models_out) *models_out = std::move(m);
    return report;
}

}  // namespace avic
