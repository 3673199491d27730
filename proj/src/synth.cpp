#include "avic/synth.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstdio>
#include <cstring>

namespace avic {

namespace {

// 5x7 digit glyphs, row-major, MSB-left in the low 5 bits
const uint8_t kGlyphs[10][7] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
};

// centered like the real archives: fixed scale, one-pixel positional jitter
void render_glyph(float* img, int H, int W, int digit, CounterRng& rng) {
    const int scale = 3;
    int gw = 5 * scale, gh = 7 * scale;
    int jitter = 1;
    int ox = (W - gw) / 2 - jitter + int(rng.next_u64() % uint64_t(2 * jitter + 1));
    int oy = (H - gh) / 2 - jitter + int(rng.next_u64() % uint64_t(2 * jitter + 1));
    double intensity = rng.next_uniform(0.6, 1.0);
    for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 5; ++c) {
            if (!((kGlyphs[digit][r] >> (4 - c)) & 1)) continue;
            for (int dy = 0; dy < scale; ++dy)
                for (int dx = 0; dx < scale; ++dx) {
                    int y = oy + r * scale + dy, x = ox + c * scale + dx;
                    img[y * W + x] = float(std::min(1.0, img[y * W + x] + intensity));
                }
        }
}

}  // namespace

DatasetSplit synth_digits(size_t count, uint64_t seed) {
    const int H = 28, W = 28;
    DatasetSplit s;
    s.channels = 1;
    s.height = H;
    s.width = W;
    s.classes = 10;
    s.name = "synth-digits";
    s.images.assign(count * H * W, 0.0f);
    s.labels.resize(count);
    for (size_t i = 0; i < count; ++i) {
        CounterRng rng(derive_seed(seed, "synth", i));
        int digit = int(rng.next_u64() % 10);
        s.labels[i] = digit;
        float* img = s.images.data() + i * H * W;
        for (int p = 0; p < H * W; ++p) img[p] = float(rng.next_uniform(0.0, 0.08));
        render_glyph(img, H, W, digit, rng);
    }
    return s;
}

DatasetSplit synth_color(size_t count, uint64_t seed, int classes) {
    if (classes != 10 && classes != 100) throw ConfigError("synth_color: classes must be 10 or 100");
    const int H = 32, W = 32;
    DatasetSplit s;
    s.channels = 3;
    s.height = H;
    s.width = W;
    s.classes = classes;
    s.name = classes == 10 ? "synth-color10" : "synth-color100";
    s.images.assign(count * 3 * H * W, 0.0f);
    s.labels.resize(count);
    for (size_t i = 0; i < count; ++i) {
        CounterRng rng(derive_seed(seed, "synthc", i));
        int digit = int(rng.next_u64() % 10);
        int tint = int(rng.next_u64() % 10);
        s.labels[i] = classes == 10 ? digit : digit * 10 + tint;
        std::vector<float> plane(H * W, 0.0f);
        for (int p = 0; p < H * W; ++p) plane[size_t(p)] = float(rng.next_uniform(0.0, 0.1));
        render_glyph(plane.data(), H, W, digit, rng);
        float* img = s.images.data() + i * 3 * H * W;
        // channel weights keyed by tint
        double wr = 0.25 + 0.075 * (tint % 4), wg = 0.25 + 0.09 * ((tint / 4) % 3),
               wb = 0.3 + 0.07 * (tint % 5);
        for (int p = 0; p < H * W; ++p) {
            img[p] = float(std::min(1.0, plane[size_t(p)] * (0.4 + wr)));
            img[H * W + p] = float(std::min(1.0, plane[size_t(p)] * (0.4 + wg)));
            img[2 * H * W + p] = float(std::min(1.0, plane[size_t(p)] * (0.4 + wb)));
        }
    }
    return s;
}

void write_bytes(const std::string& path, const void* data, size_t n, bool gzip_file) {
    if (gzip_file) {
        gzFile gz = gzopen(path.c_str(), "wb");
        if (!gz) throw IoError("cannot open for write: " + path);
        if (gzwrite(gz, data, unsigned(n)) != int(n)) {
            gzclose(gz);
            throw IoError("short gzip write: " + path);
        }
        gzclose(gz);
        return;
    }
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open for write: " + path);
    size_t w = std::fwrite(data, 1, n, f);
    std::fclose(f);
    if (w != n) throw IoError("short write: " + path);
}

namespace {

void put_be32(std::string& s, uint32_t v) {
    s.push_back(char(v >> 24));
    s.push_back(char((v >> 16) & 0xFF));
    s.push_back(char((v >> 8) & 0xFF));
    s.push_back(char(v & 0xFF));
}

uint8_t quantize(float v) {
    int q = int(v * 255.0f + 0.5f);
    return uint8_t(std::clamp(q, 0, 255));
}

}  // namespace

void write_idx_images(const std::string& path, const DatasetSplit& split, bool gzip_file) {
    if (split.channels != 1) throw IoError("IDX writer expects single-channel images");
    std::string out;
    put_be32(out, 2051);
    put_be32(out, uint32_t(split.count()));
    put_be32(out, uint32_t(split.height));
    put_be32(out, uint32_t(split.width));
    out.reserve(out.size() + split.images.size());
    for (float v : split.images) out.push_back(char(quantize(v)));
    write_bytes(path, out.data(), out.size(), gzip_file);
}

void write_idx_labels(const std::string& path, const DatasetSplit& split, bool gzip_file) {
    std::string out;
    put_be32(out, 2049);
    put_be32(out, uint32_t(split.count()));
    for (int y : split.labels) out.push_back(char(uint8_t(y)));
    write_bytes(path, out.data(), out.size(), gzip_file);
}

void write_cifar10(const std::string& path, const DatasetSplit& split) {
    if (split.channels != 3) throw IoError("CIFAR writer expects 3-channel images");
    std::string out;
    size_t px = size_t(split.image_size());
    for (size_t i = 0; i < split.count(); ++i) {
        out.push_back(char(uint8_t(split.labels[i])));
        const float* img = split.image(i);
        for (size_t p = 0; p < px; ++p) out.push_back(char(quantize(img[p])));
    }
    write_bytes(path, out.data(), out.size());
}

void write_cifar100(const std::string& path, const DatasetSplit& split) {
    if (split.channels != 3) throw IoError("CIFAR writer expects 3-channel images");
    std::string out;
    size_t px = size_t(split.image_size());
    for (size_t i = 0; i < split.count(); ++i) {
        out.push_back(char(uint8_t(split.labels[i] / 10)));  // coarse
        out.push_back(char(uint8_t(split.labels[i])));       // fine
        const float* img = split.image(i);
        for (size_t p = 0; p < px; ++p) out.push_back(char(quantize(img[p])));
    }
    write_bytes(path, out.data(), out.size());
}

}  // namespace avic
