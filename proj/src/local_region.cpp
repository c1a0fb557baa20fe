#include "occudiff/local_region.hpp"

#include <cmath>
#include <stdexcept>

namespace occudiff {

Vec3 region_origin_for(const Pose& pose, const IVec3& dims, double voxel_size) {
    Vec3 lo;
    lo.x() = pose.position.x() - 0.5 * dims[0] * voxel_size;
    lo.y() = pose.position.y() - 0.5 * dims[1] * voxel_size;
    lo.z() = pose.position.z() - kRegionBottomOffset;
    IVec3 cell;
    for (int i = 0; i < 3; ++i) cell[i] = static_cast<int>(std::llround(lo[i] / voxel_size));
    return cell.cast<double>() * voxel_size;
}

LocalRegion extract_local(const OccupancyMap& map, const Pose& pose, const IVec3& dims) {
    pose.validate();
    LocalRegion region;
    region.center_pose = pose;
    region.dims = dims;
    Vec3 origin = region_origin_for(pose, dims, map.voxel_size());
    region.known_values = VoxelGrid(dims, map.voxel_size(), origin);
    region.known_mask = VoxelGrid(dims, map.voxel_size(), origin);

    IVec3 base = map.world_to_index(origin + Vec3::Constant(0.5 * map.voxel_size()));
    IVec3 idx;
    for (idx[2] = 0; idx[2] < dims[2]; ++idx[2]) {
        for (idx[1] = 0; idx[1] < dims[1]; ++idx[1]) {
            for (idx[0] = 0; idx[0] < dims[0]; ++idx[0]) {
                CellState state = map.state_of(base + idx);
                if (state == CellState::Occupied) {
                    region.known_values.at(idx) = 1.0f;
                    region.known_mask.at(idx) = 1.0f;
                } else if (state == CellState::Free) {
                    region.known_values.at(idx) = -1.0f;
                    region.known_mask.at(idx) = 1.0f;
                }
            }
        }
    }
    return region;
}

std::vector<IVec3> merge_prediction(const OccupancyMap& map, const LocalRegion& region,
                                    const VoxelGrid& predicted) {
    if (predicted.dims() != region.dims) {
        throw std::invalid_argument("merge_prediction: predicted dims != region dims");
    }
    IVec3 base = map.world_to_index(region.known_values.origin() +
                                    Vec3::Constant(0.5 * map.voxel_size()));
    std::vector<IVec3> overlay;
    IVec3 idx;
    for (idx[2] = 0; idx[2] < region.dims[2]; ++idx[2]) {
        for (idx[1] = 0; idx[1] < region.dims[1]; ++idx[1]) {
            for (idx[0] = 0; idx[0] < region.dims[0]; ++idx[0]) {
                if (predicted.at(idx) != 0.0f && region.known_mask.at(idx) == 0.0f) {
                    overlay.push_back(base + idx);
                }
            }
        }
    }
    return overlay;
}

}  // namespace occudiff
