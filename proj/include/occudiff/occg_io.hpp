#pragma once

#include <string>
#include <vector>

#include "occudiff/geometry.hpp"
#include "occudiff/occupancy_map.hpp"
#include "occudiff/voxel_grid.hpp"

namespace occudiff {

// Binary grid format "OCCG v1": magic `OCCG`, u32 version=1, u32 nx, ny, nz,
// f32 voxel_size, f64 origin x3, u8 dtype (0 = f32 values, 1 = u8 binary),
// then raw cell data little-endian, x fastest.

enum class OccgDtype : uint8_t { F32 = 0, U8 = 1 };

void write_occg(const std::string& path, const VoxelGrid& grid, OccgDtype dtype);
VoxelGrid read_occg(const std::string& path);

/// Maps serialize as a record stream: i32 index x3 + f32 log-odds per cell.
/// Records are written in sorted index order so output bytes are stable.
void write_map_records(const std::string& path, const OccupancyMap& map);
void read_map_records(const std::string& path, OccupancyMap& map);

/// Point cloud: u32 count then f32 xyz triples, little-endian.
void write_pts(const std::string& path, const std::vector<Vec3f>& points);
std::vector<Vec3f> read_pts(const std::string& path);

}  // namespace occudiff
