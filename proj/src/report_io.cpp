#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "avic/json_canon.hpp"
#include "avic/report.hpp"

namespace avic {

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open for write: " + path);
    size_t w = std::fwrite(text.data(), 1, text.size(), f);
    std::fclose(f);
    if (w != text.size()) throw IoError("short write: " + path);
}

Json config_json(const RunConfig& c) {
    Json j = Json::obj();
    j["dataset"] = Json::of(c.dataset);
    j["arch"] = Json::of(c.arch);
    j["epsilon"] = Json::of(c.epsilon);
    j["alpha"] = Json::of(c.alpha);
    j["vae_lr"] = Json::of(c.vae_lr);
    j["cls_lr"] = Json::of(c.cls_lr);
    j["gen_lr"] = Json::of(c.gen_lr);
    j["vae_epochs"] = Json::of(c.vae_epochs);
    j["gen_epochs"] = Json::of(c.gen_epochs);
    j["cls_epochs"] = Json::of(c.cls_epochs);
    j["global_epochs"] = Json::of(c.global_epochs);
    j["batch_size"] = Json::of(c.batch_size);
    j["seed"] = Json::of(c.seed);
    j["data_limit"] = Json::of(uint64_t(c.data_limit));
    return j;
}

}  // namespace

std::string report_to_json(const RunReport& r) {
    Json j = Json::obj();
    j["format_version"] = Json::of(r.format_version);
    j["config"] = config_json(r.config);
    Json stages = Json::arr();
    for (const auto& s : r.stages) {
        Json sj = Json::obj();
        sj["name"] = Json::of(s.stage);
        Json curve = Json::arr();
        for (double v : s.curve) curve.push(Json::of(v));
        sj["loss_curve"] = std::move(curve);
        sj["final_metric"] = Json::of(s.final_metric);
        stages.push(std::move(sj));
    }
    j["stages"] = std::move(stages);
    Json acc = Json::obj();
    acc["clean_test_pct"] = Json::of(r.accuracy_clean_pct);
    acc["adversarial_test_pct"] = Json::of(r.accuracy_adv_pct);
    j["accuracy"] = std::move(acc);
    Json vl = Json::obj();
    vl["clean"] = Json::of(r.vae_loss_clean);
    vl["adversarial"] = Json::of(r.vae_loss_adv);
    vl["increase_rate_pct"] = Json::of(r.vae_increase_rate_pct);
    j["vae_loss"] = std::move(vl);
    Json transfer = Json::arr();
    for (const auto& row : r.transfer) {
        Json tj = Json::obj();
        tj["epsilon"] = Json::of(row.epsilon);
        tj["target"] = Json::of(row.target);
        tj["method"] = Json::of(row.method);
        tj["accuracy_pct"] = Json::of(row.accuracy_pct);
        tj["vae_loss_clean"] = Json::of(row.vae_loss_clean);
        tj["vae_loss_adv"] = Json::of(row.vae_loss_adv);
        tj["increase_rate_pct"] = Json::of(row.increase_rate_pct);
        transfer.push(std::move(tj));
    }
    j["transfer"] = std::move(transfer);
    return json_serialize(j) + "\n";
}

// wall-clock lives here, outside the canonical report
std::string timing_to_json(const RunReport& r) {
    Json j = Json::obj();
    Json stages = Json::arr();
    double total = 0;
    for (const auto& s : r.stages) {
        Json sj = Json::obj();
        sj["name"] = Json::of(s.stage);
        sj["wall_seconds"] = Json::of(s.wall_seconds);
        total += s.wall_seconds;
        stages.push(std::move(sj));
    }
    j["stages"] = std::move(stages);
    j["total_wall_seconds"] = Json::of(total);
    return json_serialize(j) + "\n";
}

std::string transfer_to_csv(const RunReport& r) {
    std::string out = "epsilon,target,method,accuracy_pct,vae_loss_clean,vae_loss_adv,increase_rate_pct\n";
    for (const auto& row : r.transfer) {
        out += format_number(row.epsilon) + "," + row.target + "," + row.method + "," +
               format_number(row.accuracy_pct) + "," + format_number(row.vae_loss_clean) + "," +
               format_number(row.vae_loss_adv) + "," + format_number(row.increase_rate_pct) + "\n";
    }
    return out;
}

void emit_report(const RunReport& r, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_text(out_dir + "/report.json", report_to_json(r));
    write_text(out_dir + "/metrics.csv", transfer_to_csv(r));
    write_text(out_dir + "/timing.json", timing_to_json(r));
}

void emit_samples(const SampleGrid& grid, const std::string& path) {
    if (grid.columns.empty() || grid.rows <= 0) throw Error("emit_samples: empty grid");
    const int sep = 2;
    const int64_t img_px = int64_t(grid.channels) * grid.height * grid.width;
    for (const auto& col : grid.columns)
        if (int64_t(col.size()) != img_px * grid.rows)
            throw ShapeError("emit_samples: column size does not match grid dims");
    const int cols = int(grid.columns.size());
    const int W = cols * grid.width + (cols - 1) * sep;
    const int H = grid.rows * grid.height + (grid.rows - 1) * sep;
    std::vector<unsigned char> rgb(size_t(3) * W * H, 0);
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < grid.rows; ++r) {
            const float* img = grid.columns[size_t(c)].data() + int64_t(r) * img_px;
            int y0 = r * (grid.height + sep), x0 = c * (grid.width + sep);
            for (int y = 0; y < grid.height; ++y)
                for (int x = 0; x < grid.width; ++x) {
                    for (int ch = 0; ch < 3; ++ch) {
                        int src_ch = grid.channels == 3 ? ch : 0;
                        float v = img[(int64_t(src_ch) * grid.height + y) * grid.width + x];
                        int q = int(v * 255.0f + 0.5f);
                        rgb[(size_t(y0 + y) * W + size_t(x0 + x)) * 3 + size_t(ch)] =
                            static_cast<unsigned char>(std::clamp(q, 0, 255));
                    }
                }
        }
    char header[64];
    int hl = std::snprintf(header, sizeof header, "P6\n%d %d\n255\n", W, H);
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open for write: " + path);
    std::fwrite(header, 1, size_t(hl), f);
    std::fwrite(rgb.data(), 1, rgb.size(), f);
    std::fclose(f);
}

}  // namespace avic
