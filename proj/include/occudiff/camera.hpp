#pragma once

#include <vector>

#include "occudiff/geometry.hpp"
#include "occudiff/voxel_grid.hpp"

namespace occudiff {

/// Ideal pinhole depth camera. Camera frame: +x forward, +y left, +z up,
/// aligned with the pose orientation. A non-positive vfov derives the
/// square-pixel vertical field of view from hfov and the aspect ratio.
struct DepthCamera {
    int width = 64;
    int height = 64;
    double hfov = 1.5707963267948966;  // radians
    double vfov = 0.0;
    double max_range = 5.0;

    double effective_vfov() const;
    void validate() const;
};

struct RenderResult {
    int width = 0;
    int height = 0;
    std::vector<float> depth;           // row-major, max_range sentinel on miss
    std::vector<Vec3f> cloud;           // hit points in the local-region frame
    std::vector<Vec3> endpoints_world;  // per ray: hit point, or max-range point on miss
    std::vector<bool> hit_flags;
    bool camera_in_occupied = false;
};

/// Casts one ray per pixel into the binary grid. Depth is the Euclidean
/// distance to the first occupied voxel (max_range on miss); hit points are
/// nudged inside their voxel and also reported relative to the region origin
/// of the pose. A camera inside an occupied voxel yields all-zero depth with
/// the warning flag set.
RenderResult render_depth(const VoxelGrid& ground_truth, const Pose& pose,
                          const DepthCamera& camera, const IVec3& region_dims);

}  // namespace occudiff
