#include "occudiff/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "occudiff/local_region.hpp"
#include "occudiff/occg_io.hpp"
#include "occudiff/trajectory.hpp"

namespace occudiff {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string id4(int id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", id);
    return buf;
}

std::string scene_path(const std::string& root, int scene_id) {
    return root + "/scenes/" + id4(scene_id) + ".occg";
}

std::string sample_stem(const std::string& root, int scene_id, int step_id) {
    return root + "/samples/" + id4(scene_id) + "/" + id4(step_id);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path);
}

json read_json(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    return json::parse(in);
}

json pose_to_json(const Pose& pose, int scene_id, int step_id) {
    json j;
    j["scene_id"] = scene_id;
    j["step_id"] = step_id;
    j["position"] = {pose.position.x(), pose.position.y(), pose.position.z()};
    j["orientation"] = {pose.orientation.w(), pose.orientation.x(), pose.orientation.y(),
                        pose.orientation.z()};
    return j;
}

Pose pose_from_json(const json& j) {
    Pose p;
    const auto& pos = j.at("position");
    p.position = Vec3(pos.at(0).get<double>(), pos.at(1).get<double>(), pos.at(2).get<double>());
    const auto& q = j.at("orientation");
    p.orientation = Quat(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                         q.at(3).get<double>());
    p.validate();
    return p;
}

}  // namespace

void DatasetParams::validate() const {
    if (scene_count < 1) throw std::invalid_argument("scene_count must be >= 1");
    if (train_scene_count < 1 || train_scene_count >= scene_count) {
        throw std::invalid_argument("train_scene_count must leave at least one test scene");
    }
    if (region_dims[0] < 1 || region_dims[1] < 1 || region_dims[2] < 1) {
        throw std::invalid_argument("region_dims must be >= 1");
    }
    if (!(step_length > 0.0)) throw std::invalid_argument("step_length must be > 0");
    if (cloud_cap < 0) throw std::invalid_argument("cloud_cap must be >= 0");
    camera.validate();
}

std::vector<std::pair<int, int>> DatasetIndex::split_samples(bool train) const {
    std::vector<std::pair<int, int>> out;
    for (const SceneEntry& s : scenes) {
        if (s.train != train) continue;
        for (int j = 0; j < s.pose_count; ++j) out.emplace_back(s.id, j);
    }
    return out;
}

int DatasetIndex::total_samples() const {
    int n = 0;
    for (const SceneEntry& s : scenes) n += s.pose_count;
    return n;
}

VoxelGrid crop_ground_truth(const VoxelGrid& ground_truth, const Pose& pose,
                            const IVec3& region_dims) {
    const double voxel = ground_truth.voxel_size();
    const Vec3 region_origin = region_origin_for(pose, region_dims, voxel);
    IVec3 base;
    for (int i = 0; i < 3; ++i) {
        base[i] = static_cast<int>(
            std::llround((region_origin[i] - ground_truth.origin()[i]) / voxel));
    }
    VoxelGrid crop(region_dims, voxel, region_origin);
    for (int z = 0; z < region_dims[2]; ++z) {
        for (int y = 0; y < region_dims[1]; ++y) {
            for (int x = 0; x < region_dims[0]; ++x) {
                IVec3 src = base + IVec3(x, y, z);
                if (!ground_truth.in_bounds(src)) continue;
                crop.at(IVec3(x, y, z)) = ground_truth.at(src) > 0.5f ? 1.0f : 0.0f;
            }
        }
    }
    return crop;
}

std::vector<Vec3f> subsample_cloud(std::vector<Vec3f> points, int cap, Rng& rng) {
    const size_t n = points.size();
    const size_t keep = std::min(n, static_cast<size_t>(cap));
    for (size_t i = 0; i < keep; ++i) {
        size_t j = i + static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(n - i) - 1));
        std::swap(points[i], points[j]);
    }
    points.resize(keep);
    return points;
}

Eigen::MatrixXf conditioning_matrix(const std::vector<Vec3f>& points, const IVec3& region_dims,
                                    double voxel_size) {
    if (region_dims[0] < 1 || region_dims[1] < 1 || region_dims[2] < 1 || !(voxel_size > 0.0)) {
        throw std::invalid_argument("conditioning_matrix: bad region geometry");
    }
    Eigen::MatrixXf out(3, static_cast<Eigen::Index>(points.size()));
    for (size_t i = 0; i < points.size(); ++i) {
        for (int a = 0; a < 3; ++a) {
            const double extent = static_cast<double>(region_dims[a]) * voxel_size;
            out(a, static_cast<Eigen::Index>(i)) =
                static_cast<float>(2.0 * static_cast<double>(points[i][a]) / extent - 1.0);
        }
    }
    return out;
}

DatasetIndex make_dataset(uint64_t seed, const DatasetParams& params, const std::string& out_dir) {
    params.validate();

    fs::create_directories(fs::path(out_dir) / "scenes");
    fs::create_directories(fs::path(out_dir) / "samples");

    DatasetIndex index;
    index.root = out_dir;
    index.seed = seed;
    index.voxel_size = params.scene.voxel_size;
    index.region_dims = params.region_dims;
    index.cloud_cap = params.cloud_cap;

    for (int i = 0; i < params.scene_count; ++i) {
        const uint64_t scene_seed = sub_seed(seed, "scene", static_cast<uint64_t>(i));
        SceneData scene = generate_scene(scene_seed, params.scene);
        write_occg(scene_path(out_dir, i), scene.ground_truth, OccgDtype::U8);

        std::vector<Pose> poses =
            plan_trajectory(scene.spec, scene.ground_truth,
                            sub_seed(seed, "traj", static_cast<uint64_t>(i)), params.step_length);

        fs::create_directories(fs::path(out_dir) / "samples" / id4(i));
        for (size_t j = 0; j < poses.size(); ++j) {
            RenderResult render =
                render_depth(scene.ground_truth, poses[j], params.camera, params.region_dims);
            if (render.camera_in_occupied) {
                throw std::runtime_error("trajectory pose inside occupied voxel");
            }
            Rng cloud_rng(sub_seed(seed, "cloud",
                                   static_cast<uint64_t>(i) * 1000000ull + static_cast<uint64_t>(j)));
            std::vector<Vec3f> cloud =
                subsample_cloud(std::move(render.cloud), params.cloud_cap, cloud_rng);

            VoxelGrid crop = crop_ground_truth(scene.ground_truth, poses[j], params.region_dims);
            const std::string stem = sample_stem(out_dir, i, static_cast<int>(j));
            write_occg(stem + ".occg", crop, OccgDtype::U8);
            write_pts(stem + ".pts", cloud);
            write_text(stem + ".pose.json",
                       pose_to_json(poses[j], i, static_cast<int>(j)).dump(2) + "\n");
        }

        SceneEntry entry;
        entry.id = i;
        entry.seed = scene_seed;
        entry.pose_count = static_cast<int>(poses.size());
        entry.train = i < params.train_scene_count;
        index.scenes.push_back(entry);
    }

    json manifest;
    manifest["format"] = "occudiff-dataset-v1";
    manifest["seed"] = seed;
    manifest["voxel_size"] = params.scene.voxel_size;
    manifest["region_dims"] = {params.region_dims[0], params.region_dims[1], params.region_dims[2]};
    manifest["cloud_cap"] = params.cloud_cap;
    manifest["step_length"] = params.step_length;
    manifest["camera"] = {{"width", params.camera.width},
                          {"height", params.camera.height},
                          {"hfov", params.camera.hfov},
                          {"vfov", params.camera.vfov},
                          {"max_range", params.camera.max_range}};
    json scenes = json::array();
    int train_total = 0;
    int test_total = 0;
    for (const SceneEntry& s : index.scenes) {
        scenes.push_back({{"id", s.id},
                          {"seed", s.seed},
                          {"pose_count", s.pose_count},
                          {"split", s.train ? "train" : "test"}});
        (s.train ? train_total : test_total) += s.pose_count;
    }
    manifest["scenes"] = scenes;
    manifest["counts"] = {{"train", train_total}, {"test", test_total}};
    write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");

    return index;
}

std::string scene_grid_path(const DatasetIndex& index, int scene_id) {
    return scene_path(index.root, scene_id);
}

DatasetIndex load_dataset(const std::string& root) {
    json manifest = read_json(root + "/manifest.json");
    if (manifest.at("format").get<std::string>() != "occudiff-dataset-v1") {
        throw std::runtime_error("unrecognized dataset manifest format");
    }
    DatasetIndex index;
    index.root = root;
    index.seed = manifest.at("seed").get<uint64_t>();
    index.voxel_size = manifest.at("voxel_size").get<double>();
    const auto& rd = manifest.at("region_dims");
    index.region_dims =
        IVec3(rd.at(0).get<int>(), rd.at(1).get<int>(), rd.at(2).get<int>());
    index.cloud_cap = manifest.at("cloud_cap").get<int>();
    for (const auto& s : manifest.at("scenes")) {
        SceneEntry entry;
        entry.id = s.at("id").get<int>();
        entry.seed = s.at("seed").get<uint64_t>();
        entry.pose_count = s.at("pose_count").get<int>();
        entry.train = s.at("split").get<std::string>() == "train";
        index.scenes.push_back(entry);
    }
    return index;
}

DatasetSample load_sample(const DatasetIndex& index, int scene_id, int step_id) {
    const std::string stem = sample_stem(index.root, scene_id, step_id);
    DatasetSample sample;
    sample.ground_truth = read_occg(stem + ".occg");
    sample.cloud = read_pts(stem + ".pts");
    sample.pose = pose_from_json(read_json(stem + ".pose.json"));
    sample.scene_id = scene_id;
    sample.step_id = step_id;
    return sample;
}

}  // namespace occudiff
