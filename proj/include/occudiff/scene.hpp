#pragma once

#include <cstdint>
#include <vector>

#include "occudiff/geometry.hpp"
#include "occudiff/voxel_grid.hpp"

namespace occudiff {

/// Half-open box of grid cells.
struct CellBox {
    IVec3 lo{0, 0, 0};
    IVec3 hi{0, 0, 0};

    bool contains(const IVec3& c) const {
        return c[0] >= lo[0] && c[0] < hi[0] && c[1] >= lo[1] && c[1] < hi[1] && c[2] >= lo[2] &&
               c[2] < hi[2];
    }
    bool intersects(const CellBox& o) const {
        return lo[0] < o.hi[0] && o.lo[0] < hi[0] && lo[1] < o.hi[1] && o.lo[1] < hi[1] &&
               lo[2] < o.hi[2] && o.lo[2] < hi[2];
    }
};

/// Room interior in grid cells (walls excluded), spanning full wall height.
struct Room {
    int id = 0;
    IVec3 lo{0, 0, 0};  // interior cells, half-open in x/y; z covers [0, top)
    IVec3 hi{0, 0, 0};
    IVec3 center_cell{0, 0, 0};
    std::vector<int> door_ids;
};

/// Opening carved through an internal wall, full height.
struct Door {
    int id = 0;
    int room_a = -1;
    int room_b = -1;
    CellBox cells;
};

struct Furniture {
    CellBox cells;
};

struct SceneParams {
    double extent_x = 6.4;  // world size, meters
    double extent_y = 6.4;
    double wall_height = 1.8;
    double voxel_size = 0.1;
    int room_count_min = 2;
    int room_count_max = 4;
    double min_room_extent = 1.6;  // interior span, meters
    double door_width = 0.7;
    int furniture_min = 1;  // boxes per room
    int furniture_max = 3;
    double furniture_extent_min = 0.3;
    double furniture_extent_max = 0.9;
    double furniture_height_min = 0.4;
    double furniture_height_max = 1.2;
    int max_attempts = 25;
};

struct SceneSpec {
    uint64_t seed = 0;
    AABB bounds;
    double voxel_size = 0.1;
    double wall_height = 1.8;
    IVec3 grid_dims{0, 0, 0};
    std::vector<Room> rooms;
    std::vector<Door> doors;
    std::vector<CellBox> walls;  // includes the outer shell
    std::vector<Furniture> furniture;
};

struct SceneData {
    SceneSpec spec;
    VoxelGrid ground_truth;  // binary: 1 occupied, 0 free
};

/// Procedural single-story floor plan: BSP room split with doored walls, a
/// solid floor slab, and furniture boxes that never block the route between
/// room centers. Deterministic in (seed, params).
SceneData generate_scene(uint64_t seed, const SceneParams& params);

/// Sensor height above the floor; the local region bottom sits on the floor.
inline constexpr double kSensorHeight = 0.2;

/// 2D navigability mask at sensor height (nx*ny, x fastest): a column is
/// navigable when the 3x3 column neighborhood around it is free through the
/// sensor z slab, giving poses one full voxel of clearance.
std::vector<uint8_t> navigable_columns(const VoxelGrid& gt);

}  // namespace occudiff
