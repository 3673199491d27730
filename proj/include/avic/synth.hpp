#pragma once

#include "avic/data.hpp"

namespace avic {

// Deterministic digit images for desk-scale runs: 5x7 glyphs scaled and
// jittered onto a 28x28 canvas with background noise. Labels are the digits.
DatasetSplit synth_digits(size_t count, uint64_t seed);

// 3x32x32 color variant built from tinted glyphs; classes = 10 uses the digit
// as the label, classes = 100 combines digit and tint.
DatasetSplit synth_color(size_t count, uint64_t seed, int classes);

// Writers for the on-disk formats the loaders consume.
void write_idx_images(const std::string& path, const DatasetSplit& split, bool gzip_file = false);
void write_idx_labels(const std::string& path, const DatasetSplit& split, bool gzip_file = false);
void write_cifar10(const std::string& path, const DatasetSplit& split);
void write_cifar100(const std::string& path, const DatasetSplit& split);

void write_bytes(const std::string& path, const void* data, size_t n, bool gzip_file = false);

}  // namespace avic
