#include "avic/data.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>

namespace avic {

namespace {

std::vector<unsigned char> read_all(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open: " + path);
    std::vector<unsigned char> out;
    unsigned char buf[1 << 16];
    size_t k;
    while ((k = std::fread(buf, 1, sizeof buf, f)) > 0) out.insert(out.end(), buf, buf + k);
    std::fclose(f);
    return out;
}

std::vector<unsigned char> gunzip(const std::vector<unsigned char>& in, const std::string& path) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw IoError("zlib init failed for " + path);
    std::vector<unsigned char> out;
    out.reserve(in.size() * 4);
    unsigned char buf[1 << 16];
    zs.next_in = const_cast<unsigned char*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    int rc = Z_OK;
    do {
        zs.next_out = buf;
        zs.avail_out = sizeof buf;
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw IoError("gzip decompression failed for " + path);
        }
        out.insert(out.end(), buf, buf + (sizeof buf - zs.avail_out));
    } while (rc != Z_STREAM_END);
    inflateEnd(&zs);
    return out;
}

uint32_t be32(const unsigned char* p) {
    return uint32_t(p[0]) << 24 | uint32_t(p[1]) << 16 | uint32_t(p[2]) << 8 | uint32_t(p[3]);
}

}  // namespace

std::vector<unsigned char> read_file_maybe_gzip(const std::string& path) {
    auto raw = read_all(path);
    if (raw.size() >= 2 && raw[0] == 0x1F && raw[1] == 0x8B) return gunzip(raw, path);
    return raw;
}

DatasetSplit load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                            size_t limit) {
    auto img = read_file_maybe_gzip(images_path);
    auto lab = read_file_maybe_gzip(labels_path);

    if (img.size() < 16) throw IoError("IDX image file truncated: " + images_path);
    uint32_t magic = be32(img.data());
    if (magic != 2051)
        throw IoError("IDX image magic " + std::to_string(magic) + " != 2051 in " + images_path);
    uint32_t n = be32(img.data() + 4);
    uint32_t h = be32(img.data() + 8);
    uint32_t w = be32(img.data() + 12);
    if (img.size() != 16 + size_t(n) * h * w)
        throw IoError("IDX image file truncated: " + images_path + " (header claims " +
                      std::to_string(n) + " images of " + std::to_string(h) + "x" + std::to_string(w) +
                      ")");

    if (lab.size() < 8) throw IoError("IDX label file truncated: " + labels_path);
    uint32_t lmagic = be32(lab.data());
    if (lmagic != 2049)
        throw IoError("IDX label magic " + std::to_string(lmagic) + " != 2049 in " + labels_path);
    uint32_t ln = be32(lab.data() + 4);
    if (lab.size() != 8 + size_t(ln)) throw IoError("IDX label file truncated: " + labels_path);
    if (ln != n)
        throw IoError("IDX count mismatch: " + std::to_string(n) + " images vs " + std::to_string(ln) +
                      " labels");
    if (n == 0) throw IoError("IDX files contain no records: " + images_path);

    size_t keep = (limit > 0 && limit < n) ? limit : n;
    DatasetSplit split;
    split.channels = 1;
    split.height = int(h);
    split.width = int(w);
    split.classes = 10;
    split.name = "mnist";
    split.images.resize(keep * h * w);
    split.labels.resize(keep);
    for (size_t i = 0; i < keep * h * w; ++i) split.images[i] = float(img[16 + i]) / 255.0f;
    for (size_t i = 0; i < keep; ++i) {
        int y = lab[8 + i];
        if (y > 9) throw IoError("IDX label " + std::to_string(y) + " out of range in " + labels_path);
        split.labels[i] = y;
    }
    return split;
}

DatasetSplit load_cifar_binary(const std::vector<std::string>& paths, int variant, size_t limit) {
    if (variant != 10 && variant != 100) throw ConfigError("CIFAR variant must be 10 or 100");
    if (paths.empty()) throw IoError("no CIFAR files given");
    const size_t pixels = 3072;
    const size_t rec = variant == 10 ? 1 + pixels : 2 + pixels;
    const int classes = variant;

    DatasetSplit split;
    split.channels = 3;
    split.height = 32;
    split.width = 32;
    split.classes = classes;
    split.name = variant == 10 ? "cifar10" : "cifar100";

    for (const auto& path : paths) {
        auto bytes = read_file_maybe_gzip(path);
        if (bytes.empty() || bytes.size() % rec != 0)
            throw IoError("CIFAR file length " + std::to_string(bytes.size()) +
                          " is not a multiple of record size " + std::to_string(rec) + ": " + path);
        size_t n = bytes.size() / rec;
        for (size_t i = 0; i < n; ++i) {
            if (limit > 0 && split.labels.size() >= limit) return split;
            const unsigned char* r = bytes.data() + i * rec;
            int y = variant == 10 ? r[0] : r[1];  // fine label
            if (y >= classes)
                throw IoError("CIFAR label " + std::to_string(y) + " out of range [0," +
                              std::to_string(classes) + ") in " + path);
            split.labels.push_back(y);
            const unsigned char* px = r + (rec - pixels);
            size_t base = split.images.size();
            split.images.resize(base + pixels);
            for (size_t p = 0; p < pixels; ++p) split.images[base + p] = float(px[p]) / 255.0f;
        }
    }
    if (split.labels.empty()) throw IoError("CIFAR files contain no records");
    return split;
}

BatchPlan make_batch_plan(size_t n, int batch_size, uint64_t seed, int epoch) {
    if (batch_size <= 0) throw ConfigError("batch size must be positive");
    if (size_t(batch_size) > n)
        throw ConfigError("batch size " + std::to_string(batch_size) + " exceeds dataset size " +
                          std::to_string(n));
    BatchPlan plan;
    plan.seed = seed;
    plan.batch_size = batch_size;
    CounterRng rng(derive_seed(seed, "shuffle", uint64_t(epoch)));
    plan.order = random_permutation(n, rng);
    return plan;
}

Batch gather_batch(const DatasetSplit& split, const uint32_t* idx, int n) {
    Batch b;
    b.n = n;
    int64_t sz = split.image_size();
    b.images.resize(size_t(n) * sz);
    b.labels.resize(size_t(n));
    for (int i = 0; i < n; ++i) {
        std::memcpy(b.images.data() + int64_t(i) * sz, split.image(idx[i]), size_t(sz) * sizeof(float));
        b.labels[size_t(i)] = split.labels[idx[i]];
    }
    return b;
}

std::vector<Batch> make_batches(const DatasetSplit& split, int batch_size, uint64_t seed, int epoch) {
    BatchPlan plan = make_batch_plan(split.count(), batch_size, seed, epoch);
    std::vector<Batch> out;
    size_t n = split.count();
    for (size_t at = 0; at < n; at += size_t(batch_size)) {
        int take = int(std::min(n - at, size_t(batch_size)));
        out.push_back(gather_batch(split, plan.order.data() + at, take));
    }
    return out;
}

std::vector<Batch> sequential_batches(const DatasetSplit& split, int batch_size) {
    if (batch_size <= 0) throw ConfigError("batch size must be positive");
    std::vector<Batch> out;
    size_t n = split.count();
    std::vector<uint32_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = uint32_t(i);
    for (size_t at = 0; at < n; at += size_t(batch_size)) {
        int take = int(std::min(n - at, size_t(batch_size)));
        out.push_back(gather_batch(split, idx.data() + at, take));
    }
    return out;
}

}  // namespace avic
