#pragma once

#include "avic/attacks.hpp"
#include "avic/run_types.hpp"

namespace avic {

struct TransferRow {
    double epsilon = 0;
    std::string target;  // "classifier" | "vae"
    std::string method;  // "pgd" | "generator" | "fgsm"
    double accuracy_pct = 0;
    double vae_loss_clean = 0;
    double vae_loss_adv = 0;
    double increase_rate_pct = 0;
};

struct RunReport {
    int format_version = 1;
    RunConfig config;
    std::vector<StageResult> stages;
    double accuracy_clean_pct = 0;  // pipeline classifier on the clean test set
    double accuracy_adv_pct = 0;    // same classifier on generator-attacked tests
    double vae_loss_clean = 0;
    double vae_loss_adv = 0;
    double vae_increase_rate_pct = 0;
    std::vector<TransferRow> transfer;
};

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

// argmax ties resolve to the lowest class index
template <typename T>
double evaluate_accuracy(ParameterStore<T>& cls_store, const ClassifierArch& arch,
                         const DatasetSplit& split, int batch_size = 256,
                         const std::function<std::vector<T>(const Batch&, int)>& transform = nullptr) {
    if (split.count() == 0) throw Error("evaluate_accuracy: empty split");
    auto batches = sequential_batches(split, batch_size);
    int64_t correct = 0;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
        const Batch& b = batches[bi];
        Tape<T> tape;
        auto bind = bind_params(tape, cls_store, "cls.", false);
        std::vector<T> xs(b.images.begin(), b.images.end());
        if (transform) xs = transform(b, int(bi));
        TensorRef x = tape.leaf(std::move(xs), {b.n, split.channels, split.height, split.width}, false);
        const auto& logits = tape.value(classifier_forward(tape, bind, arch, x));
        int k = arch.dims.K;
        for (int n = 0; n < b.n; ++n) {
            const T* row = logits.data() + int64_t(n) * k;
            int best = 0;
            for (int j = 1; j < k; ++j)
                if (row[j] > row[best]) best = j;
            if (best == b.labels[size_t(n)]) ++correct;
        }
    }
    return 100.0 * double(correct) / double(split.count());
}

struct VaeLossIncrease {
    double clean_loss = 0, adv_loss = 0, rate_pct = 0;
};

// rate = 100 * (adv - clean) / clean over identical batch order and noise
template <typename T>
VaeLossIncrease vae_loss_increase(ParameterStore<T>& vae_store, const VaeArch& arch,
                                  const DatasetSplit& split,
                                  const std::function<std::vector<T>(const Batch&, int)>& attack,
                                  uint64_t noise_seed, int batch_size = 256) {
    VaeLossIncrease out;
    out.clean_loss = mean_vae_loss(vae_store, arch, split, batch_size, noise_seed);
    out.adv_loss = mean_vae_loss(vae_store, arch, split, batch_size, noise_seed, attack);
    if (out.clean_loss == 0) throw NumericError("vae_loss_increase: clean loss is zero");
    out.rate_pct = 100.0 * (out.adv_loss - out.clean_loss) / out.clean_loss;
    return out;
}

// For each budget: a classifier-targeted PGD row and a VAE-targeted PGD row,
// each scored on both models.
template <typename T>
std::vector<TransferRow> transfer_matrix(ParameterStore<T>& cls_store, const ClassifierArch& cls_arch,
                                         ParameterStore<T>& vae_store, const VaeArch& vae_arch,
                                         const DatasetSplit& split, const std::vector<double>& eps_list,
                                         uint64_t seed, int pgd_steps = 10, int batch_size = 256) {
    std::vector<TransferRow> rows;
    uint64_t noise_seed = derive_seed(seed, "transfer_noise");
    for (double eps : eps_list) {
        for (AttackTarget target : {AttackTarget::classifier, AttackTarget::vae}) {
            AttackSpec spec;
            spec.method = AttackMethod::pgd;
            spec.target = target;
            spec.epsilon = eps;
            spec.steps = pgd_steps;
            spec.seed = derive_seed(seed, "transfer_attack", uint64_t(target));
            auto attack = [&, spec](const Batch& b, int bi) {
                std::vector<T> xs(b.images.begin(), b.images.end());
                Shape shape{b.n, split.channels, split.height, split.width};
                BatchLossFn<T> fn =
                    target == AttackTarget::classifier
                        ? classifier_attack_loss(cls_store, cls_arch, b.labels)
                        : vae_attack_loss(vae_store, vae_arch,
                                          derive_seed(noise_seed, "eval_noise", uint64_t(bi)));
                return pgd(fn, xs, shape, spec);
            };
            TransferRow row;
            row.epsilon = eps;
            row.target = target == AttackTarget::classifier ? "classifier" : "vae";
            row.method = "pgd";
            row.accuracy_pct = evaluate_accuracy(cls_store, cls_arch, split, batch_size,
                                                 std::function<std::vector<T>(const Batch&, int)>(attack));
            auto inc = vae_loss_increase(vae_store, vae_arch, split,
                                         std::function<std::vector<T>(const Batch&, int)>(attack),
                                         noise_seed, batch_size);
            row.vae_loss_clean = inc.clean_loss;
            row.vae_loss_adv = inc.adv_loss;
            row.increase_rate_pct = inc.rate_pct;
            rows.push_back(row);
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// emission (implemented in report_io.cpp)
// ---------------------------------------------------------------------------

// canonical JSON: sorted keys, %.6g floats; wall times are excluded and go to
// timing.json instead
std::string report_to_json(const RunReport& r);
std::string timing_to_json(const RunReport& r);
std::string transfer_to_csv(const RunReport& r);
void emit_report(const RunReport& r, const std::string& out_dir);

// grid of sample images: columns left to right, each holding `rows` images of
// identical dims; 2px separators; written as binary PPM (P6)
struct SampleGrid {
    int channels = 0, height = 0, width = 0, rows = 0;
    std::vector<std::vector<float>> columns;
};
void emit_samples(const SampleGrid& grid, const std::string& path);

}  // namespace avic
