#include "occudiff/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <climits>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "occudiff/camera.hpp"
#include "occudiff/checkpoint.hpp"
#include "occudiff/local_region.hpp"
#include "occudiff/occg_io.hpp"
#include "occudiff/occupancy_map.hpp"
#include "occudiff/parallel.hpp"
#include "occudiff/rng.hpp"
#include "occudiff/schedule.hpp"

namespace occudiff {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------------------
// Config schema

namespace {

[[noreturn]] void bad_config(const std::string& msg) {
    throw std::invalid_argument("config: " + msg);
}

void require_object(const json& j, const std::string& ctx) {
    if (!j.is_object()) bad_config(ctx + " must be a JSON object");
}

void check_keys(const json& j, const std::string& ctx, std::initializer_list<const char*> allowed) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) bad_config("unknown key \"" + it.key() + "\" in " + ctx);
    }
}

void get_int(const json& j, const std::string& ctx, const char* key, int& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number_integer()) bad_config(ctx + "." + key + " must be an integer");
    const auto x = v.get<int64_t>();
    if (x < INT_MIN || x > INT_MAX) bad_config(ctx + "." + key + " out of range");
    out = static_cast<int>(x);
}

void get_u64(const json& j, const std::string& ctx, const char* key, uint64_t& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (v.is_number_unsigned()) {
        out = v.get<uint64_t>();
        return;
    }
    if (v.is_number_integer() && v.get<int64_t>() >= 0) {
        out = static_cast<uint64_t>(v.get<int64_t>());
        return;
    }
    bad_config(ctx + "." + key + " must be a non-negative integer");
}

void get_double(const json& j, const std::string& ctx, const char* key, double& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_number()) bad_config(ctx + "." + key + " must be a number");
    out = v.get<double>();
}

void get_float(const json& j, const std::string& ctx, const char* key, float& out) {
    double d = out;
    get_double(j, ctx, key, d);
    out = static_cast<float>(d);
}

void get_bool(const json& j, const std::string& ctx, const char* key, bool& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_boolean()) bad_config(ctx + "." + key + " must be a boolean");
    out = v.get<bool>();
}

void get_string(const json& j, const std::string& ctx, const char* key, std::string& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_string()) bad_config(ctx + "." + key + " must be a string");
    out = v.get<std::string>();
}

void get_int_list(const json& j, const std::string& ctx, const char* key, std::vector<int>& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_array()) bad_config(ctx + "." + key + " must be an array of integers");
    std::vector<int> result;
    for (const json& e : v) {
        if (!e.is_number_integer()) bad_config(ctx + "." + key + " must be an array of integers");
        result.push_back(static_cast<int>(e.get<int64_t>()));
    }
    out = std::move(result);
}

void get_double_list(const json& j, const std::string& ctx, const char* key,
                     std::vector<double>& out) {
    if (!j.contains(key)) return;
    const json& v = j.at(key);
    if (!v.is_array()) bad_config(ctx + "." + key + " must be an array of numbers");
    std::vector<double> result;
    for (const json& e : v) {
        if (!e.is_number()) bad_config(ctx + "." + key + " must be an array of numbers");
        result.push_back(e.get<double>());
    }
    out = std::move(result);
}

void get_ivec3(const json& j, const std::string& ctx, const char* key, IVec3& out) {
    if (!j.contains(key)) return;
    std::vector<int> v;
    get_int_list(j, ctx, key, v);
    if (v.size() != 3) bad_config(ctx + "." + key + " must hold exactly 3 integers");
    out = IVec3(v[0], v[1], v[2]);
}

void parse_scene(const json& j, SceneParams& p) {
    const std::string ctx = "dataset.scene";
    require_object(j, ctx);
    check_keys(j, ctx,
               {"extent_x", "extent_y", "wall_height", "voxel_size", "room_count_min",
                "room_count_max", "min_room_extent", "door_width", "furniture_min", "furniture_max",
                "furniture_extent_min", "furniture_extent_max", "furniture_height_min",
                "furniture_height_max", "max_attempts"});
    get_double(j, ctx, "extent_x", p.extent_x);
    get_double(j, ctx, "extent_y", p.extent_y);
    get_double(j, ctx, "wall_height", p.wall_height);
    get_double(j, ctx, "voxel_size", p.voxel_size);
    get_int(j, ctx, "room_count_min", p.room_count_min);
    get_int(j, ctx, "room_count_max", p.room_count_max);
    get_double(j, ctx, "min_room_extent", p.min_room_extent);
    get_double(j, ctx, "door_width", p.door_width);
    get_int(j, ctx, "furniture_min", p.furniture_min);
    get_int(j, ctx, "furniture_max", p.furniture_max);
    get_double(j, ctx, "furniture_extent_min", p.furniture_extent_min);
    get_double(j, ctx, "furniture_extent_max", p.furniture_extent_max);
    get_double(j, ctx, "furniture_height_min", p.furniture_height_min);
    get_double(j, ctx, "furniture_height_max", p.furniture_height_max);
    get_int(j, ctx, "max_attempts", p.max_attempts);
}

void parse_camera(const json& j, DepthCamera& c) {
    const std::string ctx = "dataset.camera";
    require_object(j, ctx);
    check_keys(j, ctx, {"width", "height", "hfov", "vfov", "max_range"});
    get_int(j, ctx, "width", c.width);
    get_int(j, ctx, "height", c.height);
    get_double(j, ctx, "hfov", c.hfov);
    get_double(j, ctx, "vfov", c.vfov);
    get_double(j, ctx, "max_range", c.max_range);
}

void parse_dataset(const json& j, RunConfig& cfg) {
    const std::string ctx = "dataset";
    require_object(j, ctx);
    check_keys(j, ctx,
               {"dir", "scene_count", "train_scene_count", "region_dims", "step_length",
                "cloud_cap", "scene", "camera"});
    get_string(j, ctx, "dir", cfg.dataset_dir);
    get_int(j, ctx, "scene_count", cfg.dataset.scene_count);
    get_int(j, ctx, "train_scene_count", cfg.dataset.train_scene_count);
    get_ivec3(j, ctx, "region_dims", cfg.dataset.region_dims);
    get_double(j, ctx, "step_length", cfg.dataset.step_length);
    get_int(j, ctx, "cloud_cap", cfg.dataset.cloud_cap);
    if (j.contains("scene")) parse_scene(j.at("scene"), cfg.dataset.scene);
    if (j.contains("camera")) parse_camera(j.at("camera"), cfg.dataset.camera);
}

void parse_model(const json& j, UnetConfig& m) {
    const std::string ctx = "model";
    require_object(j, ctx);
    check_keys(j, ctx, {"width1", "width2", "time_dim", "cond_dim", "point_hidden", "gn_groups", "T"});
    get_int(j, ctx, "width1", m.width1);
    get_int(j, ctx, "width2", m.width2);
    get_int(j, ctx, "time_dim", m.time_dim);
    get_int(j, ctx, "cond_dim", m.cond_dim);
    get_int(j, ctx, "point_hidden", m.point_hidden);
    get_int(j, ctx, "gn_groups", m.gn_groups);
    get_int(j, ctx, "T", m.T);
}

void parse_train(const json& j, RunConfig& cfg) {
    const std::string ctx = "train";
    require_object(j, ctx);
    check_keys(j, ctx,
               {"batch_size", "epochs", "dropout", "warmup_steps", "lr_min", "lr_max", "beta1",
                "beta2", "adam_eps", "predict_x0", "checkpoint_every"});
    get_int(j, ctx, "batch_size", cfg.train.batch_size);
    get_int(j, ctx, "epochs", cfg.train.epochs);
    get_double(j, ctx, "dropout", cfg.train.dropout);
    get_int(j, ctx, "warmup_steps", cfg.train.warmup_steps);
    get_double(j, ctx, "lr_min", cfg.train.lr_min);
    get_double(j, ctx, "lr_max", cfg.train.lr_max);
    get_double(j, ctx, "beta1", cfg.train.beta1);
    get_double(j, ctx, "beta2", cfg.train.beta2);
    get_double(j, ctx, "adam_eps", cfg.train.adam_eps);
    get_bool(j, ctx, "predict_x0", cfg.train.predict_x0);
    get_int(j, ctx, "checkpoint_every", cfg.checkpoint_every);
}

void parse_sampler(const json& j, SamplerConfig& s) {
    const std::string ctx = "sampler";
    require_object(j, ctx);
    check_keys(j, ctx,
               {"steps", "guidance", "inpaint", "inpaint_after_denoise", "threshold", "cloud_cap"});
    get_int(j, ctx, "steps", s.steps);
    get_double(j, ctx, "guidance", s.guidance);
    get_bool(j, ctx, "inpaint", s.inpaint);
    get_bool(j, ctx, "inpaint_after_denoise", s.inpaint_after_denoise);
    get_float(j, ctx, "threshold", s.threshold);
    get_int(j, ctx, "cloud_cap", s.cloud_cap);
}

void parse_eval(const json& j, EvalConfig& e) {
    const std::string ctx = "eval";
    require_object(j, ctx);
    check_keys(j, ctx,
               {"features", "c1", "c2", "clip", "allow_fid_regularization", "kid_subsets",
                "kid_subset_size"});
    get_int(j, ctx, "features", e.features);
    get_int(j, ctx, "c1", e.c1);
    get_int(j, ctx, "c2", e.c2);
    get_float(j, ctx, "clip", e.clip);
    get_bool(j, ctx, "allow_fid_regularization", e.allow_fid_regularization);
    get_int(j, ctx, "kid_subsets", e.kid_subsets);
    get_int(j, ctx, "kid_subset_size", e.kid_subset_size);
}

void parse_explore(const json& j, ExploreConfig& e) {
    const std::string ctx = "explore";
    require_object(j, ctx);
    check_keys(j, ctx, {"scenes"});
    get_int_list(j, ctx, "scenes", e.scenes);
}

void parse_ablate(const json& j, AblateConfig& a) {
    const std::string ctx = "ablate";
    require_object(j, ctx);
    check_keys(j, ctx, {"scene", "max_poses", "k_sweep", "s_sweep", "grid"});
    get_int(j, ctx, "scene", a.scene);
    get_int(j, ctx, "max_poses", a.max_poses);
    get_int_list(j, ctx, "k_sweep", a.k_sweep);
    get_double_list(j, ctx, "s_sweep", a.s_sweep);
    get_bool(j, ctx, "grid", a.grid);
}

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

std::string pose_stem(int p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "pose-%03d", p);
    return buf;
}

}  // namespace

void EvalConfig::validate() const {
    if (features < 1) bad_config("eval.features must be >= 1");
    if (c1 < 1 || c2 < 1) bad_config("eval.c1 / eval.c2 must be >= 1");
    if (!(clip > 0.0f)) bad_config("eval.clip must be > 0");
    if (kid_subsets < 0) bad_config("eval.kid_subsets must be >= 0");
    if (kid_subsets > 0 && kid_subset_size < 2) {
        bad_config("eval.kid_subset_size must be >= 2 when kid_subsets > 0");
    }
}

void AblateConfig::validate() const {
    if (scene < -1) bad_config("ablate.scene must be -1 or a scene id");
    if (max_poses < 0) bad_config("ablate.max_poses must be >= 0");
    if (k_sweep.empty()) bad_config("ablate.k_sweep must be nonempty");
    for (int k : k_sweep) {
        if (k < 1) bad_config("ablate.k_sweep entries must be >= 1");
    }
    if (s_sweep.empty()) bad_config("ablate.s_sweep must be nonempty");
    for (double s : s_sweep) {
        if (!(s >= 0.0)) bad_config("ablate.s_sweep entries must be >= 0");
    }
}

std::string RunConfig::dataset_root() const {
    return dataset_dir.empty() ? out_dir + "/dataset" : dataset_dir;
}

void RunConfig::validate() const {
    if (out_dir.empty()) bad_config("out_dir must be nonempty");
    dataset.validate();
    const IVec3& rd = dataset.region_dims;
    if (rd[0] != rd[1] || rd[0] != rd[2]) {
        bad_config("dataset.region_dims must be cubic (the denoiser consumes cubes)");
    }
    if (model.dim != rd[0]) bad_config("model grid size must equal dataset.region_dims");
    model.validate();
    train.validate();
    if (checkpoint_every < 1) bad_config("train.checkpoint_every must be >= 1");
    sampler.validate();
    if (sampler.steps > model.T) bad_config("sampler.steps must be <= model.T");
    eval.validate();
    for (int s : explore.scenes) {
        if (s < 0) bad_config("explore.scenes entries must be >= 0");
    }
    ablate.validate();
    for (int k : ablate.k_sweep) {
        if (k > model.T) bad_config("ablate.k_sweep entries must be <= model.T");
    }
}

RunConfig parse_run_config(const json& doc) {
    require_object(doc, "top level");
    check_keys(doc, "top level",
               {"seed", "out_dir", "dataset", "model", "train", "sampler", "eval", "explore",
                "ablate"});
    RunConfig cfg;
    get_u64(doc, "top level", "seed", cfg.seed);
    get_string(doc, "top level", "out_dir", cfg.out_dir);
    if (doc.contains("dataset")) parse_dataset(doc.at("dataset"), cfg);
    if (doc.contains("model")) parse_model(doc.at("model"), cfg.model);
    if (doc.contains("train")) parse_train(doc.at("train"), cfg);
    if (doc.contains("sampler")) parse_sampler(doc.at("sampler"), cfg.sampler);
    if (doc.contains("eval")) parse_eval(doc.at("eval"), cfg.eval);
    if (doc.contains("explore")) parse_explore(doc.at("explore"), cfg.explore);
    if (doc.contains("ablate")) parse_ablate(doc.at("ablate"), cfg.ablate);
    cfg.model.dim = cfg.dataset.region_dims[0];  // the network consumes region cubes
    cfg.validate();
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) bad_config("cannot open " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        bad_config(path + ": " + e.what());
    }
    return parse_run_config(doc);
}

json run_config_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["out_dir"] = cfg.out_dir;
    json d;
    if (!cfg.dataset_dir.empty()) d["dir"] = cfg.dataset_dir;
    d["scene_count"] = cfg.dataset.scene_count;
    d["train_scene_count"] = cfg.dataset.train_scene_count;
    d["region_dims"] = {cfg.dataset.region_dims[0], cfg.dataset.region_dims[1],
                        cfg.dataset.region_dims[2]};
    d["step_length"] = cfg.dataset.step_length;
    d["cloud_cap"] = cfg.dataset.cloud_cap;
    const SceneParams& sp = cfg.dataset.scene;
    d["scene"] = {{"extent_x", sp.extent_x},
                  {"extent_y", sp.extent_y},
                  {"wall_height", sp.wall_height},
                  {"voxel_size", sp.voxel_size},
                  {"room_count_min", sp.room_count_min},
                  {"room_count_max", sp.room_count_max},
                  {"min_room_extent", sp.min_room_extent},
                  {"door_width", sp.door_width},
                  {"furniture_min", sp.furniture_min},
                  {"furniture_max", sp.furniture_max},
                  {"furniture_extent_min", sp.furniture_extent_min},
                  {"furniture_extent_max", sp.furniture_extent_max},
                  {"furniture_height_min", sp.furniture_height_min},
                  {"furniture_height_max", sp.furniture_height_max},
                  {"max_attempts", sp.max_attempts}};
    const DepthCamera& cam = cfg.dataset.camera;
    d["camera"] = {{"width", cam.width},
                   {"height", cam.height},
                   {"hfov", cam.hfov},
                   {"vfov", cam.vfov},
                   {"max_range", cam.max_range}};
    j["dataset"] = std::move(d);
    j["model"] = {{"width1", cfg.model.width1},
                  {"width2", cfg.model.width2},
                  {"time_dim", cfg.model.time_dim},
                  {"cond_dim", cfg.model.cond_dim},
                  {"point_hidden", cfg.model.point_hidden},
                  {"gn_groups", cfg.model.gn_groups},
                  {"T", cfg.model.T}};
    j["train"] = {{"batch_size", cfg.train.batch_size},
                  {"epochs", cfg.train.epochs},
                  {"dropout", cfg.train.dropout},
                  {"warmup_steps", cfg.train.warmup_steps},
                  {"lr_min", cfg.train.lr_min},
                  {"lr_max", cfg.train.lr_max},
                  {"beta1", cfg.train.beta1},
                  {"beta2", cfg.train.beta2},
                  {"adam_eps", cfg.train.adam_eps},
                  {"predict_x0", cfg.train.predict_x0},
                  {"checkpoint_every", cfg.checkpoint_every}};
    j["sampler"] = {{"steps", cfg.sampler.steps},
                    {"guidance", cfg.sampler.guidance},
                    {"inpaint", cfg.sampler.inpaint},
                    {"inpaint_after_denoise", cfg.sampler.inpaint_after_denoise},
                    {"threshold", cfg.sampler.threshold},
                    {"cloud_cap", cfg.sampler.cloud_cap}};
    j["eval"] = {{"features", cfg.eval.features},
                 {"c1", cfg.eval.c1},
                 {"c2", cfg.eval.c2},
                 {"clip", cfg.eval.clip},
                 {"allow_fid_regularization", cfg.eval.allow_fid_regularization},
                 {"kid_subsets", cfg.eval.kid_subsets},
                 {"kid_subset_size", cfg.eval.kid_subset_size}};
    j["explore"] = {{"scenes", cfg.explore.scenes}};
    j["ablate"] = {{"scene", cfg.ablate.scene},
                   {"max_poses", cfg.ablate.max_poses},
                   {"k_sweep", cfg.ablate.k_sweep},
                   {"s_sweep", cfg.ablate.s_sweep},
                   {"grid", cfg.ablate.grid}};
    return j;
}

// ---------------------------------------------------------------------------
// Shared command helpers

namespace {

/// Occupied-where-observed crop of the running map: the baseline method.
VoxelGrid baseline_grid(const LocalRegion& region) {
    VoxelGrid bl(region.known_values.dims(), region.known_values.voxel_size(),
                 region.known_values.origin());
    const auto& v = region.known_values.values();
    const auto& m = region.known_mask.values();
    for (size_t i = 0; i < bl.cell_count(); ++i) {
        bl.values()[i] = (m[i] == 1.0f && v[i] > 0.0f) ? 1.0f : 0.0f;
    }
    return bl;
}

const SceneEntry& find_scene(const DatasetIndex& index, int scene_id) {
    for (const SceneEntry& e : index.scenes) {
        if (e.id == scene_id) return e;
    }
    throw std::invalid_argument("scene " + std::to_string(scene_id) + " is not in the dataset");
}

std::vector<int> resolve_eval_scenes(const RunConfig& cfg, const DatasetIndex& index) {
    std::vector<int> ids = cfg.explore.scenes;
    if (ids.empty()) {
        for (const SceneEntry& e : index.scenes) {
            if (!e.train) ids.push_back(e.id);
        }
    } else {
        for (int id : ids) find_scene(index, id);  // membership check
    }
    if (ids.empty()) {
        throw std::invalid_argument("no held-out scenes to walk (explore.scenes is empty "
                                    "and every scene is in the training split)");
    }
    return ids;
}

Denoiser<float> load_trained_model(const RunConfig& cfg, const DatasetIndex& index,
                                   CheckpointMeta* meta_out) {
    const std::string latest = cfg.out_dir + "/checkpoints/latest";
    if (!fs::exists(latest + "/manifest.json")) {
        throw std::runtime_error("no checkpoint at " + latest + " (run the train command first)");
    }
    CheckpointMeta meta;
    Denoiser<float> net = load_checkpoint(latest, &meta);
    if (meta.arch.dim != index.region_dims[0]) {
        throw std::runtime_error("checkpoint grid size " + std::to_string(meta.arch.dim) +
                                 " does not match dataset region size " +
                                 std::to_string(index.region_dims[0]));
    }
    if (meta_out) *meta_out = meta;
    return net;
}

uint64_t pose_key(int scene_id, int step_id) {
    return (static_cast<uint64_t>(static_cast<uint32_t>(scene_id)) << 32) |
           static_cast<uint32_t>(step_id);
}

json report_json(const MetricReport& r) {
    json j;
    j["fid"] = r.fid;
    j["fid_regularized"] = r.fid_regularized;
    j["kid_x1000"] = r.kid_x1000;
    j["mean_iou"] = r.mean_iou;
    j["sample_count"] = r.sample_count;
    json iou_series = json::array();
    for (double v : r.iou_series) iou_series.push_back(v);
    j["iou_series"] = std::move(iou_series);
    json ratio_series = json::array();
    for (size_t i = 0; i < r.vp_vo_series.size(); ++i) {
        if (r.vp_vo_defined[i]) {
            ratio_series.push_back(r.vp_vo_series[i]);
        } else {
            ratio_series.push_back(nullptr);
        }
    }
    j["vp_vo_series"] = std::move(ratio_series);
    return j;
}

void print_report_row(const std::string& scene, const char* method, const MetricReport& r) {
    std::printf("  %7s  %-4s  %10.4f%s  %10.4f  %8.4f  %5zu\n", scene.c_str(), method, r.fid,
                r.fid_regularized ? "*" : " ", r.kid_x1000, r.mean_iou, r.sample_count);
}

struct LossRow {
    long step = 0;
    int epoch = 0;
    double loss = 0.0;
    double lr = 0.0;
};

std::vector<LossRow> read_loss_csv(const std::string& path) {
    std::vector<LossRow> rows;
    std::ifstream in(path);
    if (!in) return rows;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (first) {
            first = false;
            continue;  // header
        }
        LossRow r;
        if (std::sscanf(line.c_str(), "%ld,%d,%lf,%lf", &r.step, &r.epoch, &r.loss, &r.lr) == 4) {
            rows.push_back(r);
        }
    }
    return rows;
}

void write_loss_csv(const std::string& path, const std::vector<LossRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    out << "step,epoch,loss,lr\n";
    for (const LossRow& r : rows) {
        out << r.step << ',' << r.epoch << ',' << fmt_g(r.loss) << ',' << fmt_g(r.lr) << "\n";
    }
}

std::vector<double> epoch_means(const std::vector<LossRow>& rows, int epochs) {
    std::vector<double> sum(static_cast<size_t>(std::max(epochs, 0)), 0.0);
    std::vector<long> count(sum.size(), 0);
    for (const LossRow& r : rows) {
        if (r.epoch >= 0 && r.epoch < epochs) {
            sum[static_cast<size_t>(r.epoch)] += r.loss;
            ++count[static_cast<size_t>(r.epoch)];
        }
    }
    std::vector<double> means;
    for (size_t e = 0; e < sum.size(); ++e) {
        if (count[e] == 0) break;  // epochs not reached yet
        means.push_back(sum[e] / static_cast<double>(count[e]));
    }
    return means;
}

void write_train_summary(const std::string& path, const std::vector<LossRow>& rows, long spe,
                         const TrainConfig& tc) {
    json j;
    j["steps_per_epoch"] = spe;
    j["epochs"] = tc.epochs;
    j["total_steps"] = tc.total_steps;
    const std::vector<double> means = epoch_means(rows, tc.epochs);
    j["epoch_mean_loss"] = means;
    if (!means.empty()) {
        j["first_epoch_mean"] = means.front();
        j["last_epoch_mean"] = means.back();
        j["last_over_first"] = means.back() / means.front();
    }
    std::ofstream out(path, std::ios::trunc);
    out << j.dump(2) << "\n";
}

/// Complete (newline-terminated, parseable, correctly ordered) record prefix
/// of a metrics.jsonl file; anything after the first defect is dropped.
std::vector<json> read_complete_jsonl(const std::string& path, int scene_id) {
    std::vector<json> recs;
    std::ifstream in(path, std::ios::binary);
    if (!in) return recs;
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    size_t pos = 0;
    while (pos < content.size()) {
        const size_t nl = content.find('\n', pos);
        if (nl == std::string::npos) break;  // partial tail from an interrupted run
        const std::string line = content.substr(pos, nl - pos);
        pos = nl + 1;
        json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (j.is_discarded() || !j.is_object()) break;
        if (!j.contains("scene") || !j.contains("step")) break;
        if (j["scene"] != scene_id || j["step"] != static_cast<int>(recs.size())) break;
        recs.push_back(std::move(j));
    }
    return recs;
}

}  // namespace

// ---------------------------------------------------------------------------
// gen

void cmd_gen(const RunConfig& cfg, bool force, bool dry_run) {
    cfg.validate();
    const std::string root = cfg.dataset_root();
    if (dry_run) {
        std::cout << "gen dry run: " << cfg.dataset.scene_count << " scenes ("
                  << cfg.dataset.train_scene_count << " train), region "
                  << cfg.dataset.region_dims[0] << "^3 at " << cfg.dataset.scene.voxel_size
                  << " m -> " << root << " (nothing written)\n";
        return;
    }
    if (fs::exists(root) && !fs::is_empty(root)) {
        if (!force) {
            throw std::invalid_argument("gen: " + root +
                                        " already exists; pass --force to regenerate");
        }
        fs::remove_all(root);
    }
    const DatasetIndex index = make_dataset(sub_seed(cfg.seed, "dataset"), cfg.dataset, root);
    int train_scenes = 0, test_scenes = 0, train_samples = 0, test_samples = 0;
    for (const SceneEntry& e : index.scenes) {
        std::cout << "  scene " << e.id << ": " << e.pose_count << " poses ("
                  << (e.train ? "train" : "held-out") << ")\n";
        (e.train ? train_scenes : test_scenes) += 1;
        (e.train ? train_samples : test_samples) += e.pose_count;
    }
    std::cout << "dataset written to " << root << ": " << train_scenes << " train scenes ("
              << train_samples << " samples), " << test_scenes << " held-out scenes ("
              << test_samples << " samples)\n";
}

// ---------------------------------------------------------------------------
// train

void cmd_train(const RunConfig& cfg, bool force, bool dry_run) {
    cfg.validate();
    if (dry_run) {
        Denoiser<float> model(cfg.model);
        model.init_params(sub_seed(cfg.seed, "model-init"));
        const VecX<float> x = VecX<float>::Zero(model.cell_count());
        const std::optional<VecX<float>> no_cond;
        const VecX<float> out = model.predict(x, 1, no_cond);
        if (out.size() != x.size()) throw std::runtime_error("train: self-check shape mismatch");
        std::cout << "train dry run: " << model.param_count() << " parameters, grid "
                  << cfg.model.dim << "^3, T=" << cfg.model.T
                  << "; forward pass OK, nothing written\n";
        return;
    }

    const DatasetIndex index = load_dataset(cfg.dataset_root());
    std::vector<TrainSample<float>> data;
    for (const auto& [scene, step] : index.split_samples(/*train=*/true)) {
        const DatasetSample s = load_sample(index, scene, step);
        TrainSample<float> ts;
        const auto& v = s.ground_truth.values();
        ts.x0.resize(static_cast<Eigen::Index>(v.size()));
        for (size_t i = 0; i < v.size(); ++i) {
            ts.x0[static_cast<Eigen::Index>(i)] = 2.0f * v[i] - 1.0f;
        }
        ts.cloud = conditioning_matrix(s.cloud, index.region_dims, index.voxel_size);
        ts.id = scene * 100000 + step;
        data.push_back(std::move(ts));
    }
    if (data.empty()) throw std::runtime_error("train: dataset has no training samples");
    const long spe = steps_per_epoch(data.size(), cfg.train.batch_size);

    const std::string ckpt_root = cfg.out_dir + "/checkpoints";
    const std::string latest = ckpt_root + "/latest";
    const std::string train_dir = cfg.out_dir + "/train";
    if (force) {
        fs::remove_all(ckpt_root);
        fs::remove_all(train_dir);
    }
    fs::create_directories(ckpt_root);
    fs::create_directories(train_dir);

    std::optional<Denoiser<float>> model;
    AdamState adam;
    TrainConfig tc;
    CheckpointMeta meta;
    int start_epoch = 0;
    if (fs::exists(latest + "/manifest.json")) {
        model.emplace(load_checkpoint(latest, &meta, &adam));
        const UnetConfig& a = meta.arch;
        const UnetConfig& b = cfg.model;
        if (a.dim != b.dim || a.width1 != b.width1 || a.width2 != b.width2 ||
            a.time_dim != b.time_dim || a.cond_dim != b.cond_dim ||
            a.point_hidden != b.point_hidden || a.gn_groups != b.gn_groups || a.T != b.T) {
            throw std::invalid_argument(
                "train: checkpoint architecture differs from the configured model; "
                "pass --force to retrain from scratch");
        }
        tc = meta.train;  // resumed runs keep their original plan (lr schedule included)
        start_epoch = meta.epoch;
        std::cout << "resuming from checkpoint: " << start_epoch << "/" << tc.epochs
                  << " epochs done\n";
    } else {
        model.emplace(cfg.model);
        model->init_params(sub_seed(cfg.seed, "model-init"));
        adam.init(model->param_count());
        tc = cfg.train;
        tc.seed = sub_seed(cfg.seed, "train");
        tc.total_steps = spe * tc.epochs;
        meta.arch = cfg.model;
    }
    meta.train = tc;
    Denoiser<float>& net = *model;

    const std::string loss_path = train_dir + "/loss.csv";
    const std::string summary_path = train_dir + "/summary.json";
    std::vector<LossRow> rows;
    if (start_epoch > 0) {
        rows = read_loss_csv(loss_path);
        const long resume_step = static_cast<long>(start_epoch) * spe;
        rows.erase(std::remove_if(rows.begin(), rows.end(),
                                  [&](const LossRow& r) { return r.step >= resume_step; }),
                   rows.end());
    }
    write_loss_csv(loss_path, rows);  // header + any kept prefix

    if (start_epoch >= tc.epochs) {
        std::cout << "training already complete (" << tc.epochs << " epochs)\n";
        const std::string final_dir = ckpt_root + "/final";
        if (!fs::exists(final_dir + "/manifest.json")) {
            save_checkpoint(final_dir, net, meta, &adam);
        }
        write_train_summary(summary_path, rows, spe, tc);
        return;
    }

    std::ofstream loss_out(loss_path, std::ios::app);
    const NoiseSchedule sched = default_schedule(cfg.model.T);

    auto save_to = [&](const std::string& dir) {
        const std::string tmp = dir + ".tmp";
        fs::remove_all(tmp);
        save_checkpoint(tmp, net, meta, &adam);
        fs::remove_all(dir);
        fs::rename(tmp, dir);
    };

    std::cout << "training: " << data.size() << " samples, " << spe << " steps/epoch, "
              << tc.epochs << " epochs, " << net.param_count() << " parameters\n";
    const auto t0 = Clock::now();
    double epoch_accum = 0.0;
    const auto on_step = [&](int epoch, long gstep, double loss) {
        loss_out << gstep << ',' << epoch << ',' << fmt_g(loss) << ','
                 << fmt_g(lr_at(gstep, tc)) << "\n";
        loss_out.flush();
        epoch_accum += loss;
        if ((gstep + 1) % spe == 0) {
            const int done = static_cast<int>((gstep + 1) / spe);
            meta.epoch = done;
            meta.global_step = gstep + 1;
            if (done % cfg.checkpoint_every == 0 || done == tc.epochs) save_to(latest);
            const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
            std::printf("  epoch %d/%d  mean loss %.6f  (%.1f s elapsed)\n", done, tc.epochs,
                        epoch_accum / static_cast<double>(spe), secs);
            std::fflush(stdout);
            epoch_accum = 0.0;
        }
    };
    train_loop(net, data, sched, tc, adam, start_epoch, on_step);

    save_to(ckpt_root + "/final");
    rows = read_loss_csv(loss_path);
    write_train_summary(summary_path, rows, spe, tc);
    const std::vector<double> means = epoch_means(rows, tc.epochs);
    if (!means.empty()) {
        std::printf("done: epoch means first %.6f -> last %.6f (ratio %.3f)\n", means.front(),
                    means.back(), means.back() / means.front());
    }
}

// ---------------------------------------------------------------------------
// explore

void cmd_explore(const RunConfig& cfg, bool force, bool dry_run) {
    cfg.validate();
    const DatasetIndex index = load_dataset(cfg.dataset_root());
    const std::vector<int> scene_ids = resolve_eval_scenes(cfg, index);
    if (dry_run) {
        int poses = 0;
        for (int sid : scene_ids) poses += find_scene(index, sid).pose_count;
        std::cout << "explore dry run: " << scene_ids.size() << " scenes, " << poses
                  << " poses, " << cfg.sampler.steps << " denoising steps per prediction; "
                  << "nothing written\n";
        return;
    }
    CheckpointMeta meta;
    const Denoiser<float> net = load_trained_model(cfg, index, &meta);
    const NoiseSchedule sched = default_schedule(meta.arch.T);
    SamplerConfig scfg = cfg.sampler;
    scfg.validate();
    if (scfg.steps > meta.arch.T) {
        throw std::invalid_argument("sampler.steps exceeds the checkpoint's T");
    }

    for (int sid : scene_ids) {
        const SceneEntry& entry = find_scene(index, sid);
        const std::string sdir = cfg.out_dir + "/explore/scene-" + std::to_string(sid);
        if (force) fs::remove_all(sdir);
        fs::create_directories(sdir);

        const std::string mpath = sdir + "/metrics.jsonl";
        std::vector<json> records = read_complete_jsonl(mpath, sid);
        if (records.size() > static_cast<size_t>(entry.pose_count)) records.clear();
        {  // drop any partial tail so the file is exactly the complete prefix
            std::ofstream mout(mpath, std::ios::trunc);
            for (const json& r : records) mout << r.dump() << "\n";
        }
        std::ofstream mout(mpath, std::ios::app);
        const std::string tpath = sdir + "/timings.csv";
        const bool fresh_timings = !fs::exists(tpath);
        std::ofstream tout(tpath, std::ios::app);
        if (fresh_timings) tout << "scene,step,seconds,mean_step_seconds\n";

        const size_t done = records.size();
        if (done > 0) {
            std::cout << "scene " << sid << ": resuming at pose " << done << "/"
                      << entry.pose_count << "\n";
        }
        const VoxelGrid gt = read_occg(scene_grid_path(index, sid));
        OccupancyMap map(index.voxel_size);
        for (int p = 0; p < entry.pose_count; ++p) {
            const DatasetSample ds = load_sample(index, sid, p);
            const RenderResult scan = render_depth(gt, ds.pose, cfg.dataset.camera, index.region_dims);
            map.integrate_scan(ds.pose.position, scan.endpoints_world, scan.hit_flags);
            if (static_cast<size_t>(p) < done) continue;  // already recorded: replay the map only

            const auto t0 = Clock::now();
            const uint64_t pose_seed = sub_seed(cfg.seed, "explore", pose_key(sid, p));
            const PredictionResult pr =
                predict_at_pose(map, ds.pose, gt, cfg.dataset.camera, net, sched, scfg, pose_seed);
            const LocalRegion region = extract_local(map, ds.pose, index.region_dims);
            const VoxelGrid bl = baseline_grid(region);
            const VoxelGrid gtc = crop_ground_truth(gt, ds.pose, index.region_dims);
            const double secs = std::chrono::duration<double>(Clock::now() - t0).count();

            const std::string stem = sdir + "/" + pose_stem(p);
            write_occg(stem + "-pred.occg", pr.binary, OccgDtype::U8);
            write_occg(stem + "-base.occg", bl, OccgDtype::U8);
            write_occg(stem + "-gt.occg", gtc, OccgDtype::U8);

            const VpVo ratio = vp_vo(pr);
            json rec;
            rec["scene"] = sid;
            rec["step"] = p;
            rec["iou_pred"] = iou(pr.binary, gtc);
            rec["iou_base"] = iou(bl, gtc);
            rec["v_p"] = pr.v_p;
            rec["v_o"] = pr.v_o;
            rec["vp_vo_defined"] = ratio.defined;
            if (ratio.defined) {
                rec["vp_vo"] = ratio.value;
            } else {
                rec["vp_vo"] = nullptr;
            }
            rec["mask_fraction"] = region.mask_fraction();
            rec["overlay_cells"] = pr.overlay.size();
            mout << rec.dump() << "\n";
            mout.flush();
            records.push_back(std::move(rec));

            double mean_step = 0.0;
            if (!pr.step_seconds.empty()) {
                for (double s : pr.step_seconds) mean_step += s;
                mean_step /= static_cast<double>(pr.step_seconds.size());
            }
            tout << sid << ',' << p << ',' << fmt_g(secs) << ',' << fmt_g(mean_step) << "\n";
            tout.flush();
        }

        double iou_pred_sum = 0.0, iou_base_sum = 0.0;
        double first_ratio = std::numeric_limits<double>::quiet_NaN();
        double last_ratio = std::numeric_limits<double>::quiet_NaN();
        for (const json& r : records) {
            iou_pred_sum += r["iou_pred"].get<double>();
            iou_base_sum += r["iou_base"].get<double>();
            if (r["vp_vo_defined"].get<bool>()) {
                const double v = r["vp_vo"].get<double>();
                if (std::isnan(first_ratio)) first_ratio = v;
                last_ratio = v;
            }
        }
        const double n = static_cast<double>(std::max<size_t>(records.size(), 1));
        std::printf(
            "scene %d: %zu poses  mean IoU pred %.4f vs base %.4f  v_p/v_o first %.3f last %.3f"
            "  final mask fraction %.3f\n",
            sid, records.size(), iou_pred_sum / n, iou_base_sum / n, first_ratio, last_ratio,
            records.empty() ? 0.0 : records.back()["mask_fraction"].get<double>());
        std::fflush(stdout);
    }
}

// ---------------------------------------------------------------------------
// eval

void cmd_eval(const RunConfig& cfg, bool force, bool dry_run) {
    (void)force;
    cfg.validate();
    const DatasetIndex index = load_dataset(cfg.dataset_root());
    const std::vector<int> scene_ids = resolve_eval_scenes(cfg, index);
    if (dry_run) {
        std::cout << "eval dry run: scoring " << scene_ids.size()
                  << " scenes from " << cfg.out_dir << "/explore; nothing written\n";
        return;
    }

    std::vector<EvalTriplet> all;
    std::vector<std::string> missing;
    for (int sid : scene_ids) {
        const SceneEntry& entry = find_scene(index, sid);
        const std::string sdir = cfg.out_dir + "/explore/scene-" + std::to_string(sid);
        for (int p = 0; p < entry.pose_count; ++p) {
            const std::string stem = sdir + "/" + pose_stem(p);
            const std::string paths[3] = {stem + "-pred.occg", stem + "-base.occg",
                                          stem + "-gt.occg"};
            bool ok = true;
            for (const std::string& path : paths) {
                if (!fs::exists(path)) {
                    missing.push_back(path);
                    ok = false;
                }
            }
            if (!ok) continue;
            EvalTriplet t;
            t.scene_id = sid;
            t.step_id = p;
            t.prediction = read_occg(paths[0]);
            t.baseline = read_occg(paths[1]);
            t.ground_truth = read_occg(paths[2]);
            all.push_back(std::move(t));
        }
    }
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << "eval: " << missing.size()
            << " artifact file(s) missing (run the explore command first):";
        const size_t show = std::min<size_t>(missing.size(), 20);
        for (size_t i = 0; i < show; ++i) msg << "\n  " << missing[i];
        if (missing.size() > show) msg << "\n  ... and " << (missing.size() - show) << " more";
        throw std::runtime_error(msg.str());
    }

    const uint64_t embedder_seed = sub_seed(cfg.seed, "embedder");
    EmbedderConfig ec;
    ec.dim = index.region_dims[0];
    ec.features = cfg.eval.features;
    ec.c1 = cfg.eval.c1;
    ec.c2 = cfg.eval.c2;
    ec.seed = embedder_seed;
    ec.clip = cfg.eval.clip;
    const GridEmbedder embedder(ec);
    FidOptions fopt;
    fopt.allow_regularization = cfg.eval.allow_fid_regularization;
    KidOptions kopt;
    kopt.subsets = cfg.eval.kid_subsets;
    kopt.subset_size = cfg.eval.kid_subset_size;
    kopt.seed = sub_seed(cfg.seed, "kid");

    std::printf("  %7s  %-4s  %11s  %10s  %8s  %5s\n", "scene", "", "FID", "KID x1000",
                "mean IoU", "n");
    json scenes_json = json::array();
    bool any_regularized = false;
    for (int sid : scene_ids) {
        std::vector<EvalTriplet> subset;
        for (const EvalTriplet& t : all) {
            if (t.scene_id == sid) subset.push_back(t);
        }
        const auto [pred, base] = evaluate_run(subset, embedder, fopt, kopt);
        print_report_row(std::to_string(sid), "base", base);
        print_report_row(std::to_string(sid), "pred", pred);
        any_regularized = any_regularized || pred.fid_regularized || base.fid_regularized;
        json row;
        row["scene"] = sid;
        row["pred"] = report_json(pred);
        row["base"] = report_json(base);
        scenes_json.push_back(std::move(row));
    }
    const auto [pred_all, base_all] = evaluate_run(all, embedder, fopt, kopt);
    print_report_row("pooled", "base", base_all);
    print_report_row("pooled", "pred", pred_all);
    any_regularized = any_regularized || pred_all.fid_regularized || base_all.fid_regularized;
    if (any_regularized) {
        std::printf("  * FID covariance ridge applied (fewer samples than feature dim + 1)\n");
    }
    std::printf("pooled ordering: FID pred %s base, KID pred %s base\n",
                pred_all.fid < base_all.fid ? "<" : ">=",
                pred_all.kid_x1000 < base_all.kid_x1000 ? "<" : ">=");

    json summary;
    summary["embedder_seed"] = embedder_seed;
    summary["scenes"] = std::move(scenes_json);
    summary["pooled"] = {{"pred", report_json(pred_all)}, {"base", report_json(base_all)}};
    summary["config"] = run_config_json(cfg);
    fs::create_directories(cfg.out_dir + "/eval");
    std::ofstream out(cfg.out_dir + "/eval/summary.json", std::ios::trunc);
    out << summary.dump(2) << "\n";
    std::cout << "wrote " << cfg.out_dir << "/eval/summary.json\n";
}

// ---------------------------------------------------------------------------
// ablate

void cmd_ablate(const RunConfig& cfg, bool force, bool dry_run) {
    (void)force;  // curves.csv is a single deterministic file; rewriting is safe
    cfg.validate();
    const DatasetIndex index = load_dataset(cfg.dataset_root());
    int sid = cfg.ablate.scene;
    if (sid < 0) {
        for (const SceneEntry& e : index.scenes) {
            if (!e.train) {
                sid = e.id;
                break;
            }
        }
        if (sid < 0) throw std::invalid_argument("ablate: dataset has no held-out scene");
    }
    const SceneEntry& entry = find_scene(index, sid);
    int poses = entry.pose_count;
    if (cfg.ablate.max_poses > 0) poses = std::min(poses, cfg.ablate.max_poses);
    if (poses < 2) throw std::invalid_argument("ablate: need at least 2 poses");

    struct Setting {
        const char* axis;
        int steps;
        double s;
        bool cond;
        bool inpaint;
    };
    std::vector<Setting> settings;
    for (int k : cfg.ablate.k_sweep) {
        settings.push_back({"steps", k, cfg.sampler.guidance, true, cfg.sampler.inpaint});
    }
    for (double s : cfg.ablate.s_sweep) {
        settings.push_back({"guidance", cfg.sampler.steps, s, true, cfg.sampler.inpaint});
    }
    if (cfg.ablate.grid) {
        for (int cond = 1; cond >= 0; --cond) {
            for (int inp = 1; inp >= 0; --inp) {
                settings.push_back(
                    {"grid", cfg.sampler.steps, cfg.sampler.guidance, cond == 1, inp == 1});
            }
        }
    }
    if (dry_run) {
        std::cout << "ablate dry run: scene " << sid << ", " << poses << " poses, "
                  << settings.size() << " settings; nothing written\n";
        return;
    }

    CheckpointMeta meta;
    const Denoiser<float> net = load_trained_model(cfg, index, &meta);
    const NoiseSchedule sched = default_schedule(meta.arch.T);

    // One map walk; every setting then reuses the same frozen pose contexts.
    struct PoseCtx {
        LocalRegion region;
        MatX<float> cloud;
        VoxelGrid base;
        VoxelGrid gt_crop;
    };
    std::vector<PoseCtx> ctx;
    const VoxelGrid gt = read_occg(scene_grid_path(index, sid));
    OccupancyMap map(index.voxel_size);
    for (int p = 0; p < poses; ++p) {
        const DatasetSample ds = load_sample(index, sid, p);
        const RenderResult scan = render_depth(gt, ds.pose, cfg.dataset.camera, index.region_dims);
        map.integrate_scan(ds.pose.position, scan.endpoints_world, scan.hit_flags);
        PoseCtx c;
        c.region = extract_local(map, ds.pose, index.region_dims);
        Rng cloud_rng(sub_seed(cfg.seed, "ablate-cloud", pose_key(sid, p)));
        const std::vector<Vec3f> pts =
            subsample_cloud(scan.cloud, cfg.sampler.cloud_cap, cloud_rng);
        c.cloud = conditioning_matrix(pts, index.region_dims, index.voxel_size);
        c.base = baseline_grid(c.region);
        c.gt_crop = crop_ground_truth(gt, ds.pose, index.region_dims);
        ctx.push_back(std::move(c));
    }

    EmbedderConfig ec;
    ec.dim = index.region_dims[0];
    ec.features = cfg.eval.features;
    ec.c1 = cfg.eval.c1;
    ec.c2 = cfg.eval.c2;
    ec.seed = sub_seed(cfg.seed, "embedder");
    ec.clip = cfg.eval.clip;
    const GridEmbedder embedder(ec);
    FidOptions fopt;
    fopt.allow_regularization = cfg.eval.allow_fid_regularization;
    KidOptions kopt;
    kopt.subsets = cfg.eval.kid_subsets;
    kopt.subset_size = cfg.eval.kid_subset_size;
    kopt.seed = sub_seed(cfg.seed, "kid");

    std::ostringstream csv;
    csv << "axis,steps,guidance,conditioning,inpainting,poses,fid_pred,kid_pred,iou_pred,"
           "fid_base,kid_base,iou_base,fid_regularized\n";
    double fid_s0 = std::numeric_limits<double>::quiet_NaN();
    double fid_s3 = std::numeric_limits<double>::quiet_NaN();
    const MatX<float> empty_cloud(3, 0);
    for (size_t r = 0; r < settings.size(); ++r) {
        const Setting& st = settings[r];
        SamplerConfig sc = cfg.sampler;
        sc.steps = st.steps;
        sc.guidance = st.s;
        sc.inpaint = st.inpaint;
        const auto t0 = Clock::now();
        std::vector<EvalTriplet> trip;
        for (int p = 0; p < poses; ++p) {
            const uint64_t seed =
                sub_seed(cfg.seed, "ablate", (static_cast<uint64_t>(r) << 32) | uint32_t(p));
            const MatX<float>& cloud = st.cond ? ctx[p].cloud : empty_cloud;
            const PredictionResult pr = sample(net, sched, ctx[p].region, cloud, sc, seed);
            EvalTriplet t;
            t.scene_id = sid;
            t.step_id = p;
            t.prediction = pr.binary;
            t.baseline = ctx[p].base;
            t.ground_truth = ctx[p].gt_crop;
            trip.push_back(std::move(t));
        }
        const auto [pred, base] = evaluate_run(trip, embedder, fopt, kopt);
        csv << st.axis << ',' << st.steps << ',' << fmt_g(st.s) << ',' << (st.cond ? 1 : 0) << ','
            << (st.inpaint ? 1 : 0) << ',' << poses << ',' << fmt_g(pred.fid) << ','
            << fmt_g(pred.kid_x1000) << ',' << fmt_g(pred.mean_iou) << ',' << fmt_g(base.fid)
            << ',' << fmt_g(base.kid_x1000) << ',' << fmt_g(base.mean_iou) << ','
            << (pred.fid_regularized ? 1 : 0) << "\n";
        if (std::string(st.axis) == "guidance") {
            if (st.s == 0.0) fid_s0 = pred.fid;
            if (st.s == 3.0) fid_s3 = pred.fid;
        }
        const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
        std::printf("  [%zu/%zu] %s steps=%d s=%g cond=%d inpaint=%d  FID %.4f KID %.4f IoU %.4f"
                    "  (%.1f s)\n",
                    r + 1, settings.size(), st.axis, st.steps, st.s, st.cond ? 1 : 0,
                    st.inpaint ? 1 : 0, pred.fid, pred.kid_x1000, pred.mean_iou, secs);
        std::fflush(stdout);
    }

    fs::create_directories(cfg.out_dir + "/ablate");
    const std::string cpath = cfg.out_dir + "/ablate/curves.csv";
    std::ofstream out(cpath, std::ios::trunc);
    out << csv.str();
    std::cout << "wrote " << cpath << "\n";
    if (!std::isnan(fid_s0) && !std::isnan(fid_s3)) {
        std::printf("guidance sweep: FID(s=0) - FID(s=3) = %.4f (s=0 %.4f, s=3 %.4f)\n",
                    fid_s0 - fid_s3, fid_s0, fid_s3);
    }
}

}  // namespace occudiff
