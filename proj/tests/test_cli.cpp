#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "avic/cli.hpp"
#include "avic/config.hpp"
#include "avic/json_canon.hpp"
#include "avic/synth.hpp"

using namespace avic;

namespace {

namespace fs = std::filesystem;

fs::path tmp_dir(const char* name) {
    auto d = fs::temp_directory_path() / name;
    fs::create_directories(d);
    return d;
}

std::string write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

// tiny on-disk dataset + config for end-to-end CLI runs
struct CliFixture {
    fs::path dir = tmp_dir("avic_cli_fixture");
    std::string config_path;
    CliFixture() {
        auto train = synth_digits(96, 1001);
        auto test = synth_digits(32, 1002);
        write_idx_images((dir / "train-img").string(), train);
        write_idx_labels((dir / "train-lab").string(), train);
        write_idx_images((dir / "test-img").string(), test);
        write_idx_labels((dir / "test-lab").string(), test);
        config_path = write_file(dir / "run.cfg",
                                 "[run]\n"
                                 "batch_size = 32\n"
                                 "seed = 9\n"
                                 "[train]\n"
                                 "vae_epochs = 1\n"
                                 "gen_epochs = 1\n"
                                 "cls_epochs = 1\n"
                                 "global_epochs = 1\n"
                                 "vae_lr = 0.005\n"
                                 "[paths]\n"
                                 "train_images = " + (dir / "train-img").string() + "\n" +
                                 "train_labels = " + (dir / "train-lab").string() + "\n" +
                                 "test_images = " + (dir / "test-img").string() + "\n" +
                                 "test_labels = " + (dir / "test-lab").string() + "\n" +
                                 "out_dir = " + (dir / "out").string() + "\n");
    }
};

}  // namespace

TEST_CASE("parse_config: empty file gives documented defaults") {
    auto dir = tmp_dir("avic_cfg");
    std::string path = write_file(dir / "empty.cfg", "");
    FullConfig cfg = parse_config(path, {});
    CHECK(cfg.run.epsilon == doctest::Approx(0.02));
    CHECK(cfg.run.alpha == doctest::Approx(1.0));
    CHECK(cfg.run.cls_lr == doctest::Approx(0.005));
    CHECK(cfg.run.vae_lr == doctest::Approx(0.05));
    CHECK(cfg.run.gen_lr == doctest::Approx(0.001));
    CHECK(cfg.run.batch_size == 128);
    CHECK(cfg.run.dataset == "mnist");
    CHECK(cfg.attack.steps == 10);
}

TEST_CASE("parse_config: overrides beat the file") {
    auto dir = tmp_dir("avic_cfg");
    std::string path = write_file(dir / "eps.cfg", "[run]\nepsilon = 0.05\n");
    FullConfig cfg = parse_config(path, {"epsilon=0.1"});
    CHECK(cfg.run.epsilon == doctest::Approx(0.1));
    FullConfig cfg2 = parse_config(path, {"run.epsilon=0.2"});
    CHECK(cfg2.run.epsilon == doctest::Approx(0.2));
}

TEST_CASE("parse_config: unknown key names the offender") {
    auto dir = tmp_dir("avic_cfg");
    std::string path = write_file(dir / "typo.cfg", "[run]\nepsilom = 0.1\n");
    CHECK_THROWS_WITH_AS(parse_config(path, {}), doctest::Contains("epsilom"), ConfigError);
    std::string path2 = write_file(dir / "sec.cfg", "[runs]\nepsilon = 0.1\n");
    CHECK_THROWS_WITH_AS(parse_config(path2, {}), doctest::Contains("runs"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("", {"epsilom=0.1"}), doctest::Contains("epsilom"), ConfigError);
}

TEST_CASE("parse_config: invariant violations name the key") {
    CHECK_THROWS_WITH_AS(parse_config("", {"epsilon=1.5"}), doctest::Contains("epsilon"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("", {"alpha=-1"}), doctest::Contains("alpha"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("", {"cls_lr=0"}), doctest::Contains("cls_lr"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("", {"batch_size=0"}), doctest::Contains("batch_size"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config("/does/not/exist.cfg", {}), doctest::Contains("cannot open"),
                         ConfigError);
}

TEST_CASE("cli: unknown command exits 2 with usage") {
    CHECK(cli_main({"trian"}) == 2);
    CHECK(cli_main({}) == 2);
    CHECK(cli_main({"--bogus"}) == 2);
    CHECK(cli_main({"--help"}) == 0);
}

TEST_CASE("cli: run-avic end to end, deterministic reruns, stage commands") {
    CliFixture fx;
    std::string out = (fx.dir / "out").string();

    CHECK(cli_main({"run-avic", "--config", fx.config_path}) == 0);
    for (const char* f : {"report.json", "metrics.csv", "timing.json", "samples.ppm", "vae.avicw",
                          "generator.avicw", "classifier.avicw"})
        CHECK(fs::exists(fs::path(out) / f));

    std::string report1 = slurp(out + "/report.json");
    std::string vae1 = slurp(out + "/vae.avicw");
    CHECK(cli_main({"run-avic", "--config", fx.config_path}) == 0);
    CHECK(slurp(out + "/report.json") == report1);  // byte-identical rerun
    CHECK(slurp(out + "/vae.avicw") == vae1);

    // stage commands over the same checkpoints
    CHECK(cli_main({"train-vae", "--config", fx.config_path}) == 0);
    CHECK(cli_main({"attack-train", "--config", fx.config_path}) == 0);
    CHECK(cli_main({"cls-train", "--config", fx.config_path}) == 0);
    CHECK(cli_main({"finetune", "--config", fx.config_path}) == 0);
    CHECK(cli_main({"eval", "--config", fx.config_path}) == 0);
    CHECK(cli_main({"report", "--config", fx.config_path}) == 0);
}

TEST_CASE("cli: missing dataset paths fail with exit 1") {
    auto dir = tmp_dir("avic_cfg");
    std::string path = write_file(dir / "nopaths.cfg", "[run]\nseed = 1\n");
    CHECK(cli_main({"run-avic", "--config", path}) == 1);
}

TEST_CASE("AVIC_DATA_DIR fills empty mnist paths") {
    auto dir = tmp_dir("avic_data_dir");
    auto train = synth_digits(8, 500);
    write_idx_images((dir / "train-images-idx3-ubyte").string(), train);
    write_idx_labels((dir / "train-labels-idx1-ubyte").string(), train);
    write_idx_images((dir / "t10k-images-idx3-ubyte").string(), train);
    write_idx_labels((dir / "t10k-labels-idx1-ubyte").string(), train);
    setenv("AVIC_DATA_DIR", dir.string().c_str(), 1);
    FullConfig cfg = parse_config("", {});
    resolve_default_paths(cfg);
    unsetenv("AVIC_DATA_DIR");
    CHECK(cfg.paths.train_images == (dir / "train-images-idx3-ubyte").string());
    CHECK(cfg.paths.test_labels == (dir / "t10k-labels-idx1-ubyte").string());

    // explicit paths win over the fallback
    FullConfig cfg2 = parse_config("", {"train_images=/explicit/path"});
    setenv("AVIC_DATA_DIR", dir.string().c_str(), 1);
    resolve_default_paths(cfg2);
    unsetenv("AVIC_DATA_DIR");
    CHECK(cfg2.paths.train_images == "/explicit/path");
}

TEST_CASE("cli: sweep writes one report per grid point with the value echoed") {
    CliFixture fx;
    std::string out = (fx.dir / "sweep_out").string();
    CHECK(cli_main({"sweep", "--config", fx.config_path, "--out", out, "--grid",
                    "epsilon=0.01,0.03,0.05"}) == 0);
    int count = 0;
    for (double eps : {0.01, 0.03, 0.05}) {
        std::string sub = out + "/eps_" + format_number(eps);
        REQUIRE(fs::exists(sub + "/report.json"));
        auto j = json_parse(slurp(sub + "/report.json"));
        CHECK(j.object.at("config").object.at("epsilon").num == doctest::Approx(eps));
        ++count;
    }
    CHECK(count == 3);
    CHECK(cli_main({"sweep", "--config", fx.config_path, "--out", out, "--grid", "lr=1,2"}) == 1);
}
