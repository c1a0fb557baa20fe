#pragma once

#include <vector>

#include "occudiff/geometry.hpp"
#include "occudiff/occupancy_map.hpp"
#include "occudiff/voxel_grid.hpp"

namespace occudiff {

/// Local crop around a pose, in the diffusion value domain: known occupied
/// cells carry +1, known free cells -1, unknown cells 0 with mask 0.
struct LocalRegion {
    Pose center_pose;
    IVec3 dims{0, 0, 0};
    VoxelGrid known_values;  // in [-1, 1]
    VoxelGrid known_mask;    // {0, 1}, 1 = observed (occupied or free)

    double mask_fraction() const {
        if (known_mask.cell_count() == 0) return 0.0;
        return static_cast<double>(known_mask.count_equal(1.0f)) /
               static_cast<double>(known_mask.cell_count());
    }
};

/// Vertical offset of the region bottom below the pose position.
inline constexpr double kRegionBottomOffset = 0.2;

/// World origin of the local region around a pose: horizontally centered,
/// bottom kRegionBottomOffset below the sensor, snapped to the map lattice so
/// region cells coincide with map cells.
Vec3 region_origin_for(const Pose& pose, const IVec3& dims, double voxel_size);

/// Crops the running map around a pose. Regions are axis-aligned in the world
/// frame; orientation influences only the sensor, not the crop.
LocalRegion extract_local(const OccupancyMap& map, const Pose& pose, const IVec3& dims);

/// Predicted-occupied cells in unobserved space, as world lattice indices.
/// Never touches the map: predictions live in a separate overlay layer.
std::vector<IVec3> merge_prediction(const OccupancyMap& map, const LocalRegion& region,
                                    const VoxelGrid& predicted);

}  // namespace occudiff
