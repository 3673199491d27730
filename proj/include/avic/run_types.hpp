#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avic/common.hpp"

namespace avic {

// All hyperparameters of one pipeline run. Defaults: perturbation budget
// 0.02, objective weight 1.0, classifier/VAE learning rates 0.005/0.05.
struct RunConfig {
    std::string dataset = "mnist";
    std::string arch = "plain_cnn";
    double epsilon = 0.02;
    double alpha = 1.0;
    double vae_lr = 0.05;
    double cls_lr = 0.005;
    double gen_lr = 0.001;
    int vae_epochs = 5;
    int gen_epochs = 3;
    int cls_epochs = 3;
    int global_epochs = 2;
    int batch_size = 128;
    uint64_t seed = 0;
    size_t data_limit = 0;  // 0 = use every record

    void validate() const {
        if (epsilon < 0 || epsilon > 1) throw ConfigError("epsilon must be in [0,1]");
        if (alpha < 0) throw ConfigError("alpha must be >= 0");
        if (vae_lr <= 0) throw ConfigError("vae_lr must be > 0");
        if (cls_lr <= 0) throw ConfigError("cls_lr must be > 0");
        if (gen_lr <= 0) throw ConfigError("gen_lr must be > 0");
        if (vae_epochs < 0) throw ConfigError("vae_epochs must be >= 0");
        if (gen_epochs < 0) throw ConfigError("gen_epochs must be >= 0");
        if (cls_epochs < 0) throw ConfigError("cls_epochs must be >= 0");
        if (global_epochs < 0) throw ConfigError("global_epochs must be >= 0");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    }
};

struct StageResult {
    std::string stage;
    std::vector<double> curve;  // per-epoch mean loss
    double wall_seconds = 0;
    double final_metric = 0;
};

}  // namespace avic
