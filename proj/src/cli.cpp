#include "avic/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <thread>

#include "avic/config.hpp"
#include "avic/json_canon.hpp"
#include "avic/pipeline.hpp"
#include "avic/synth.hpp"

namespace avic {

namespace {

const char* const kCommands[] = {"train-vae", "attack-train", "cls-train", "finetune",
                                 "run-avic",  "eval",         "sweep",     "report"};

struct CliArgs {
    std::string command;
    std::string config_path;
    std::vector<std::string> sets;
    std::string grid;
    std::string out_override;
    bool parallel = false;
};

bool known_command(const std::string& c) {
    for (const char* k : kCommands)
        if (c == k) return true;
    return false;
}

DatasetSplit load_split(const FullConfig& cfg, bool train) {
    const auto& p = cfg.paths;
    size_t limit = cfg.run.data_limit;
    if (cfg.run.dataset == "mnist") {
        const std::string& img = train ? p.train_images : p.test_images;
        const std::string& lab = train ? p.train_labels : p.test_labels;
        if (img.empty() || lab.empty())
            throw ConfigError(std::string("config: missing mnist ") + (train ? "train" : "test") +
                              " file paths (set [paths] keys or AVIC_DATA_DIR)");
        return load_mnist_idx(img, lab, limit);
    }
    const auto& files = train ? p.cifar_train : p.cifar_test;
    if (files.empty())
        throw ConfigError(std::string("config: missing cifar ") + (train ? "train" : "test") +
                          " file paths");
    return load_cifar_binary(files, cfg.run.dataset == "cifar10" ? 10 : 100, limit);
}

void save_checkpoints(AvicModels& m, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    save_weights(m.store, out_dir + "/vae.avicw", "vae.");
    save_weights(m.store, out_dir + "/generator.avicw", "gen.");
    save_weights(m.store, out_dir + "/classifier.avicw", "cls.");
}

void emit_sample_grid(AvicModels& m, const RunConfig& cfg, const DatasetSplit& test,
                      const std::string& path, int rows = 4) {
    rows = int(std::min<size_t>(size_t(rows), test.count()));
    if (rows == 0) return;
    std::vector<uint32_t> idx(static_cast<size_t>(rows), 0);
    for (int i = 0; i < rows; ++i) idx[size_t(i)] = uint32_t(i);
    Batch b = gather_batch(test, idx.data(), rows);
    Shape shape{rows, test.channels, test.height, test.width};
    std::vector<float> xa =
        generator_attack(m.store, m.gen_arch, b.images, shape, float(cfg.epsilon));
    auto reconstruct = [&](const std::vector<float>& imgs) {
        Tape<float> tape;
        auto bind = bind_params(tape, m.store, "vae.", false);
        TensorRef x = tape.leaf(imgs, shape, false);
        auto out = vae_forward(tape, bind, m.vae_arch, x, derive_seed(cfg.seed, "sample_noise"));
        return tape.value(out.x_recon);
    };
    SampleGrid grid;
    grid.channels = test.channels;
    grid.height = test.height;
    grid.width = test.width;
    grid.rows = rows;
    grid.columns = {b.images, xa, reconstruct(b.images), reconstruct(xa)};
    emit_samples(grid, path);
}

int cmd_run_avic(FullConfig& cfg) {
    DatasetSplit train = load_split(cfg, true);
    DatasetSplit test = load_split(cfg, false);
    AvicModels m;
    RunReport report = run_avic(cfg.run, train, test, &m);
    save_checkpoints(m, cfg.paths.out_dir);
    emit_report(report, cfg.paths.out_dir);
    emit_sample_grid(m, cfg.run, test, cfg.paths.out_dir + "/samples.ppm");
    std::printf("clean accuracy: %.2f%%  adversarial accuracy: %.2f%%\n", report.accuracy_clean_pct,
                report.accuracy_adv_pct);
    std::printf("report written to %s\n", cfg.paths.out_dir.c_str());
    return 0;
}

AvicModels load_models(const FullConfig& cfg, bool vae, bool gen, bool cls) {
    AvicModels m = build_models(cfg.run);
    const std::string& dir = cfg.paths.out_dir;
    if (vae) load_weights_into(m.store, dir + "/vae.avicw");
    if (gen) load_weights_into(m.store, dir + "/generator.avicw");
    if (cls) load_weights_into(m.store, dir + "/classifier.avicw");
    return m;
}

int cmd_stage(const std::string& command, FullConfig& cfg) {
    DatasetSplit train = load_split(cfg, true);
    std::filesystem::create_directories(cfg.paths.out_dir);
    const std::string& dir = cfg.paths.out_dir;
    if (command == "train-vae") {
        AvicModels m = build_models(cfg.run);
        StageResult r = train_vae(m.store, m.vae_arch, train, cfg.run);
        save_weights(m.store, dir + "/vae.avicw", "vae.");
        std::printf("vae trained, final loss %.6g\n", r.final_metric);
        return 0;
    }
    if (command == "attack-train") {
        AvicModels m = load_models(cfg, true, false, false);
        m.store.set_frozen("vae.", true);
        StageResult r = train_generator_separate(m.store, m.vae_arch, m.gen_arch, train, cfg.run);
        save_weights(m.store, dir + "/generator.avicw", "gen.");
        std::printf("generator trained, adversarial vae loss %.6g\n", r.final_metric);
        return 0;
    }
    if (command == "cls-train") {
        AvicModels m = load_models(cfg, false, true, false);
        m.store.set_frozen("gen.", true);
        StageResult r = train_classifier_adv(m.store, m.gen_arch, m.cls_arch, train, cfg.run);
        save_weights(m.store, dir + "/classifier.avicw", "cls.");
        std::printf("classifier trained, final loss %.6g\n", r.final_metric);
        return 0;
    }
    // finetune
    AvicModels m = load_models(cfg, true, true, true);
    m.store.set_frozen("vae.", true);
    StageResult r = global_finetune(m.store, m.vae_arch, m.gen_arch, m.cls_arch, train, cfg.run);
    save_weights(m.store, dir + "/generator.avicw", "gen.");
    save_weights(m.store, dir + "/classifier.avicw", "cls.");
    std::printf("global fine-tune done, final loss %.6g\n", r.final_metric);
    return 0;
}

int cmd_eval(FullConfig& cfg, bool full_report) {
    DatasetSplit test = load_split(cfg, false);
    AvicModels m = load_models(cfg, true, true, true);
    RunReport report;
    report.config = cfg.run;
    evaluate_into_report(m, cfg.run, test, report);
    if (full_report) {
        emit_report(report, cfg.paths.out_dir);
        emit_sample_grid(m, cfg.run, test, cfg.paths.out_dir + "/samples.ppm");
        std::printf("report written to %s\n", cfg.paths.out_dir.c_str());
        return 0;
    }
    std::printf("clean accuracy: %.4f%%\n", report.accuracy_clean_pct);
    std::printf("adversarial accuracy: %.4f%%\n", report.accuracy_adv_pct);
    std::printf("vae loss clean/adv: %.6g / %.6g (increase %.4f%%)\n", report.vae_loss_clean,
                report.vae_loss_adv, report.vae_increase_rate_pct);
    return 0;
}

int cmd_sweep(FullConfig& cfg, const CliArgs& args) {
    size_t eq = args.grid.find('=');
    if (args.grid.empty() || eq == std::string::npos)
        throw ConfigError("sweep: pass --grid epsilon=v1,v2,... or --grid alpha=v1,v2,...");
    std::string key = args.grid.substr(0, eq);
    if (key != "epsilon" && key != "alpha")
        throw ConfigError("sweep: grid key must be epsilon or alpha, got '" + key + "'");
    std::vector<double> values;
    for (size_t at = eq + 1; at <= args.grid.size();) {
        size_t comma = args.grid.find(',', at);
        if (comma == std::string::npos) comma = args.grid.size();
        values.push_back(std::stod(args.grid.substr(at, comma - at)));
        at = comma + 1;
    }
    if (values.empty()) throw ConfigError("sweep: empty grid");

    DatasetSplit train = load_split(cfg, true);
    DatasetSplit test = load_split(cfg, false);
    std::string base_dir = cfg.paths.out_dir;
    auto run_point = [&](double v) {
        RunConfig point = cfg.run;
        (key == "epsilon" ? point.epsilon : point.alpha) = v;
        point.validate();
        std::string dir = base_dir + "/" + (key == "epsilon" ? "eps_" : "alpha_") + format_number(v);
        AvicModels m;
        RunReport report = run_avic(point, train, test, &m);
        save_checkpoints(m, dir);
        emit_report(report, dir);
    };
    if (args.parallel) {
        std::vector<std::thread> threads;
        for (double v : values) threads.emplace_back(run_point, v);
        for (auto& t : threads) t.join();
    } else {
        for (double v : values) run_point(v);
    }
    std::printf("sweep complete: %zu points under %s\n", values.size(), base_dir.c_str());
    return 0;
}

}  // namespace

std::string cli_usage() {
    return "usage: avic <command> [--config FILE] [--set key=value ...] [--out DIR]\n"
           "            [--grid epsilon=v1,v2,... | --grid alpha=v1,v2,...] [--parallel]\n"
           "commands:\n"
           "  train-vae     stage 1: fit the VAE on clean images\n"
           "  attack-train  stage 2a: train the generator against the frozen VAE\n"
           "  cls-train     stage 2b: train the classifier on generator outputs\n"
           "  finetune      stage 3: joint generator/classifier fine-tune\n"
           "  run-avic      all stages plus evaluation and report\n"
           "  eval          metrics from saved checkpoints\n"
           "  sweep         run-avic over an epsilon or alpha grid\n"
           "  report        full report files from saved checkpoints\n";
}

int cli_main(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return cli_main(args);
}

int cli_main(const std::vector<std::string>& raw) {
    CliArgs args;
    for (size_t i = 0; i < raw.size(); ++i) {
        const std::string& a = raw[i];
        auto next = [&](const char* flag) -> const std::string& {
            if (i + 1 >= raw.size()) throw ConfigError(std::string(flag) + " needs a value");
            return raw[++i];
        };
        try {
            if (a == "--config") args.config_path = next("--config");
            else if (a == "--set") args.sets.push_back(next("--set"));
            else if (a == "--grid") args.grid = next("--grid");
            else if (a == "--out") args.out_override = next("--out");
            else if (a == "--parallel") args.parallel = true;
            else if (a == "--help" || a == "-h") {
                std::fputs(cli_usage().c_str(), stdout);
                return 0;
            } else if (!a.empty() && a[0] == '-') {
                std::fprintf(stderr, "unknown flag: %s\n%s", a.c_str(), cli_usage().c_str());
                return 2;
            } else if (args.command.empty()) {
                args.command = a;
            } else {
                std::fprintf(stderr, "unexpected argument: %s\n%s", a.c_str(), cli_usage().c_str());
                return 2;
            }
        } catch (const ConfigError& e) {
            std::fprintf(stderr, "%s\n%s", e.what(), cli_usage().c_str());
            return 2;
        }
    }
    if (args.command.empty()) {
        std::fputs(cli_usage().c_str(), stderr);
        return 2;
    }
    if (!known_command(args.command)) {
        std::fprintf(stderr, "unknown command: %s\n%s", args.command.c_str(), cli_usage().c_str());
        return 2;
    }

    try {
        FullConfig cfg = parse_config(args.config_path, args.sets);
        if (!args.out_override.empty()) cfg.paths.out_dir = args.out_override;
        resolve_default_paths(cfg);

        if (args.command == "run-avic") return cmd_run_avic(cfg);
        if (args.command == "eval") return cmd_eval(cfg, false);
        if (args.command == "report") return cmd_eval(cfg, true);
        if (args.command == "sweep") return cmd_sweep(cfg, args);
        return cmd_stage(args.command, cfg);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace avic
