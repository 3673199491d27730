#pragma once

#include <string>
#include <vector>

#include "avic/attacks.hpp"
#include "avic/run_types.hpp"

namespace avic {

struct PathsConfig {
    std::string train_images, train_labels, test_images, test_labels;
    std::vector<std::string> cifar_train, cifar_test;  // comma-separated in the file
    std::string out_dir = "out";
};

struct AttackConfig {
    std::string method = "pgd";
    std::string target = "classifier";
    int steps = 10;
    double step_size = 0;
    bool rand_init = false;
};

struct FullConfig {
    RunConfig run;
    AttackConfig attack;
    PathsConfig paths;

    AttackSpec attack_spec() const {
        AttackSpec s;
        s.method = parse_attack_method(attack.method);
        s.target = parse_attack_target(attack.target);
        s.epsilon = run.epsilon;
        s.steps = attack.steps;
        s.step_size = attack.step_size;
        s.rand_init = attack.rand_init;
        s.seed = run.seed;
        return s;
    }
};

// key=value file with [section] headers; sections: run, train, attack, paths.
// Unknown keys are hard errors. Precedence: defaults < file < overrides.
// Overrides take "key=value" or "section.key=value".
FullConfig parse_config(const std::string& path, const std::vector<std::string>& overrides);

// Applies one key=value assignment (used for file lines and overrides alike).
void apply_config_entry(FullConfig& cfg, const std::string& section, const std::string& key,
                        const std::string& value);

// Fills empty MNIST paths from AVIC_DATA_DIR when the dataset is mnist.
void resolve_default_paths(FullConfig& cfg);

}  // namespace avic
