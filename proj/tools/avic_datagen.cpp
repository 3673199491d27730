// Writes deterministic synthetic datasets in the MNIST IDX / CIFAR binary
// formats for desk-scale runs where the real archives are unavailable.
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>

#include "avic/synth.hpp"

namespace {

void usage() {
    std::fputs(
        "usage: avic-datagen --out DIR [--train N] [--test N] [--seed S] [--format mnist|cifar10|cifar100] [--gzip]\n",
        stderr);
}

}  // namespace

int main(int argc, char** argv) {
    std::string out_dir;
    size_t train_n = 10000, test_n = 2000;
    uint64_t seed = 7;
    std::string format = "mnist";
    bool gz = false;
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        auto next = [&]() -> std::string {
            if (i + 1 >= argc) {
                usage();
                std::exit(2);
            }
            return argv[++i];
        };
        if (a == "--out") out_dir = next();
        else if (a == "--train") train_n = std::stoull(next());
        else if (a == "--test") test_n = std::stoull(next());
        else if (a == "--seed") seed = std::stoull(next());
        else if (a == "--format") format = next();
        else if (a == "--gzip") gz = true;
        else {
            usage();
            return 2;
        }
    }
    if (out_dir.empty()) {
        usage();
        return 2;
    }
    try {
        std::filesystem::create_directories(out_dir);
        if (format == "mnist") {
            const auto train = avic::synth_digits(train_n, avic::derive_seed(seed, "train"));
            const auto test = avic::synth_digits(test_n, avic::derive_seed(seed, "test"));
            std::string ext = gz ? ".gz" : "";
            avic::write_idx_images(out_dir + "/train-images-idx3-ubyte" + ext, train, gz);
            avic::write_idx_labels(out_dir + "/train-labels-idx1-ubyte" + ext, train, gz);
            avic::write_idx_images(out_dir + "/t10k-images-idx3-ubyte" + ext, test, gz);
            avic::write_idx_labels(out_dir + "/t10k-labels-idx1-ubyte" + ext, test, gz);
        } else if (format == "cifar10" || format == "cifar100") {
            int classes = format == "cifar10" ? 10 : 100;
            auto train = avic::synth_color(train_n, avic::derive_seed(seed, "train"), classes);
            auto test = avic::synth_color(test_n, avic::derive_seed(seed, "test"), classes);
            if (classes == 10) {
                avic::write_cifar10(out_dir + "/data_batch_1.bin", train);
                avic::write_cifar10(out_dir + "/test_batch.bin", test);
            } else {
                avic::write_cifar100(out_dir + "/train.bin", train);
                avic::write_cifar100(out_dir + "/test.bin", test);
            }
        } else {
            usage();
            return 2;
        }
        std::printf("wrote %s dataset (%zu train, %zu test) to %s\n", format.c_str(), train_n, test_n,
                    out_dir.c_str());
        return 0;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
