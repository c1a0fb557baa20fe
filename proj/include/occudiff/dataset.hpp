#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "occudiff/camera.hpp"
#include "occudiff/geometry.hpp"
#include "occudiff/rng.hpp"
#include "occudiff/scene.hpp"
#include "occudiff/voxel_grid.hpp"

namespace occudiff {

struct DatasetParams {
    int scene_count = 12;
    int train_scene_count = 10;
    SceneParams scene;
    DepthCamera camera;
    IVec3 region_dims{16, 16, 16};
    double step_length = 0.2;
    int cloud_cap = 1024;

    void validate() const;
};

/// One training/eval pair: a local ground-truth crop (binary {0,1} values),
/// the conditioning cloud in the region frame, and the pose it was taken at.
struct DatasetSample {
    VoxelGrid ground_truth;
    std::vector<Vec3f> cloud;
    Pose pose;
    int scene_id = 0;
    int step_id = 0;
};

struct SceneEntry {
    int id = 0;
    uint64_t seed = 0;
    int pose_count = 0;
    bool train = true;
};

struct DatasetIndex {
    std::string root;
    uint64_t seed = 0;
    double voxel_size = 0.1;
    IVec3 region_dims{16, 16, 16};
    int cloud_cap = 1024;
    std::vector<SceneEntry> scenes;

    std::vector<std::pair<int, int>> split_samples(bool train) const;
    int total_samples() const;
};

/// Binary crop of the scene ground truth around a pose, in the region frame.
/// Cells outside the scene grid read as free.
VoxelGrid crop_ground_truth(const VoxelGrid& ground_truth, const Pose& pose,
                            const IVec3& region_dims);

/// Keeps at most cap points, chosen uniformly at random without replacement;
/// order of the kept points is not preserved.
std::vector<Vec3f> subsample_cloud(std::vector<Vec3f> points, int cap, Rng& rng);

/// Packs region-frame points into the 3 x n conditioning matrix the network
/// consumes, mapping the region box to [-1, 1] per axis. Points outside the
/// box keep the same linear map (values beyond the unit cube carry real
/// geometry and stay finite, bounded by the sensor range).
Eigen::MatrixXf conditioning_matrix(const std::vector<Vec3f>& points, const IVec3& region_dims,
                                    double voxel_size);

/// Generates scenes, plans trajectories, renders conditioning clouds, and
/// writes the dataset directory: manifest.json, scenes/<id>.occg,
/// samples/<scene>/<step>.{occg,pts,pose.json}. Scene ids below
/// train_scene_count form the training split. Deterministic in (seed, params).
DatasetIndex make_dataset(uint64_t seed, const DatasetParams& params, const std::string& out_dir);

DatasetIndex load_dataset(const std::string& root);
DatasetSample load_sample(const DatasetIndex& index, int scene_id, int step_id);

/// Path of a scene's full ground-truth grid inside the dataset directory.
std::string scene_grid_path(const DatasetIndex& index, int scene_id);

}  // namespace occudiff
