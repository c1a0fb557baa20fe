#pragma once

#include <vector>

#include "occudiff/geometry.hpp"

namespace occudiff {

/// Incremental voxel traversal (Amanatides-Woo DDA) over the global lattice
/// anchored at the world origin. Returns every voxel the segment
/// [origin, origin + max_range*direction] passes through, in order, each
/// once.
///
/// Conventions: cells are half-open [lo, hi). A crossing exactly at
/// max_range is grazing contact and enters no new cell, so an endpoint on a
/// voxel boundary belongs to the cell entered last. Rays through an exact
/// edge or corner advance all tied axes in one step.
std::vector<IVec3> raycast(const Vec3& origin, const Vec3& direction, double max_range,
                           double voxel_size);

}  // namespace occudiff
