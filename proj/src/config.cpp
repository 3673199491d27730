#include "avic/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

namespace avic {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (...) {
        throw ConfigError("config: bad numeric value '" + v + "' for key " + key);
    }
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long d = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return int(d);
    } catch (...) {
        throw ConfigError("config: bad integer value '" + v + "' for key " + key);
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        uint64_t d = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (...) {
        throw ConfigError("config: bad integer value '" + v + "' for key " + key);
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ConfigError("config: bad boolean value '" + v + "' for key " + key);
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    size_t at = 0;
    while (at <= v.size()) {
        size_t comma = v.find(',', at);
        if (comma == std::string::npos) comma = v.size();
        std::string item = trim(v.substr(at, comma - at));
        if (!item.empty()) out.push_back(item);
        at = comma + 1;
    }
    return out;
}

}  // namespace

void apply_config_entry(FullConfig& cfg, const std::string& section, const std::string& key,
                        const std::string& value) {
    auto is = [&](const char* sec, const char* k) {
        return (section.empty() || section == sec) && key == k;
    };
    // [run]
    if (is("run", "dataset")) cfg.run.dataset = value;
    else if (is("run", "arch")) cfg.run.arch = value;
    else if (is("run", "epsilon")) cfg.run.epsilon = parse_double(key, value);
    else if (is("run", "alpha")) cfg.run.alpha = parse_double(key, value);
    else if (is("run", "seed")) cfg.run.seed = parse_u64(key, value);
    else if (is("run", "batch_size")) cfg.run.batch_size = parse_int(key, value);
    else if (is("run", "data_limit")) cfg.run.data_limit = size_t(parse_u64(key, value));
    // [train]
    else if (is("train", "vae_lr")) cfg.run.vae_lr = parse_double(key, value);
    else if (is("train", "cls_lr")) cfg.run.cls_lr = parse_double(key, value);
    else if (is("train", "gen_lr")) cfg.run.gen_lr = parse_double(key, value);
    else if (is("train", "vae_epochs")) cfg.run.vae_epochs = parse_int(key, value);
    else if (is("train", "gen_epochs")) cfg.run.gen_epochs = parse_int(key, value);
    else if (is("train", "cls_epochs")) cfg.run.cls_epochs = parse_int(key, value);
    else if (is("train", "global_epochs")) cfg.run.global_epochs = parse_int(key, value);
    // [attack]
    else if (is("attack", "method")) cfg.attack.method = value;
    else if (is("attack", "target")) cfg.attack.target = value;
    else if (is("attack", "steps")) cfg.attack.steps = parse_int(key, value);
    else if (is("attack", "step_size")) cfg.attack.step_size = parse_double(key, value);
    else if (is("attack", "rand_init")) cfg.attack.rand_init = parse_bool(key, value);
    // [paths]
    else if (is("paths", "train_images")) cfg.paths.train_images = value;
    else if (is("paths", "train_labels")) cfg.paths.train_labels = value;
    else if (is("paths", "test_images")) cfg.paths.test_images = value;
    else if (is("paths", "test_labels")) cfg.paths.test_labels = value;
    else if (is("paths", "cifar_train")) cfg.paths.cifar_train = split_list(value);
    else if (is("paths", "cifar_test")) cfg.paths.cifar_test = split_list(value);
    else if (is("paths", "out_dir")) cfg.paths.out_dir = value;
    else
        throw ConfigError("config: unknown key '" + (section.empty() ? key : section + "." + key) +
                          "'");
}

FullConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
    FullConfig cfg;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("config: cannot open file " + path);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::string s = trim(line);
            if (s.empty() || s[0] == '#' || s[0] == ';') continue;
            if (s.front() == '[') {
                if (s.back() != ']')
                    throw ConfigError("config: malformed section header at line " +
                                      std::to_string(lineno));
                section = trim(s.substr(1, s.size() - 2));
                if (section != "run" && section != "train" && section != "attack" &&
                    section != "paths")
                    throw ConfigError("config: unknown section '" + section + "'");
                continue;
            }
            size_t eq = s.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config: expected key=value at line " + std::to_string(lineno));
            apply_config_entry(cfg, section, trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
        }
    }
    for (const auto& ov : overrides) {
        size_t eq = ov.find('=');
        if (eq == std::string::npos) throw ConfigError("config: override must be key=value: " + ov);
        std::string key = trim(ov.substr(0, eq));
        std::string value = trim(ov.substr(eq + 1));
        std::string section;
        size_t dot = key.find('.');
        if (dot != std::string::npos) {
            section = key.substr(0, dot);
            key = key.substr(dot + 1);
        }
        apply_config_entry(cfg, section, key, value);
    }
    cfg.run.validate();
    return cfg;
}

void resolve_default_paths(FullConfig& cfg) {
    const char* env = std::getenv("AVIC_DATA_DIR");
    if (!env) return;
    std::string dir(env);
    auto pick = [&](std::string& slot, std::initializer_list<const char*> names) {
        if (!slot.empty()) return;
        for (const char* n : names) {
            std::string p = dir + "/" + n;
            if (std::filesystem::exists(p)) {
                slot = p;
                return;
            }
        }
    };
    if (cfg.run.dataset == "mnist") {
        pick(cfg.paths.train_images, {"train-images-idx3-ubyte", "train-images-idx3-ubyte.gz"});
        pick(cfg.paths.train_labels, {"train-labels-idx1-ubyte", "train-labels-idx1-ubyte.gz"});
        pick(cfg.paths.test_images, {"t10k-images-idx3-ubyte", "t10k-images-idx3-ubyte.gz"});
        pick(cfg.paths.test_labels, {"t10k-labels-idx1-ubyte", "t10k-labels-idx1-ubyte.gz"});
    }
}

}  // namespace avic
