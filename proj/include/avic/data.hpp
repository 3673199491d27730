#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "avic/common.hpp"
#include "avic/rng.hpp"

namespace avic {

// Images normalized to [0,1], NCHW, labels aligned by index.
struct DatasetSplit {
    int channels = 0, height = 0, width = 0, classes = 0;
    std::vector<float> images;
    std::vector<int> labels;
    std::string name;

    size_t count() const { return labels.size(); }
    int64_t image_size() const { return int64_t(channels) * height * width; }
    const float* image(size_t i) const { return images.data() + int64_t(i) * image_size(); }
};

// Raw file bytes; transparently gunzips when the gzip magic is present.
std::vector<unsigned char> read_file_maybe_gzip(const std::string& path);

// IDX pair (magic 2051 images / 2049 labels, big-endian dims). limit > 0
// keeps only the first records.
DatasetSplit load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                            size_t limit = 0);

// CIFAR binary batches: variant 10 reads 3073-byte records, variant 100 reads
// 3074-byte records and keeps the fine label.
DatasetSplit load_cifar_binary(const std::vector<std::string>& paths, int variant, size_t limit = 0);

struct Batch {
    std::vector<float> images;
    std::vector<int> labels;
    int n = 0;
};

struct BatchPlan {
    uint64_t seed = 0;
    int batch_size = 0;
    std::vector<uint32_t> order;
};

// Permutation derived from (seed, epoch) through the counter generator; the
// final partial batch is kept.
BatchPlan make_batch_plan(size_t n, int batch_size, uint64_t seed, int epoch);
std::vector<Batch> make_batches(const DatasetSplit& split, int batch_size, uint64_t seed, int epoch);

// Sequential batches in stored order (evaluation paths).
std::vector<Batch> sequential_batches(const DatasetSplit& split, int batch_size);

Batch gather_batch(const DatasetSplit& split, const uint32_t* idx, int n);

}  // namespace avic
