#pragma once

#include <cstdint>
#include <vector>

#include "occudiff/scene.hpp"

namespace occudiff {

/// Exploration route: starts at a random clear cell in the first room, then
/// visits every room center, rooms ordered by hop distance over the door
/// graph (nearest unvisited first). Poses sit at sensor height at cell
/// centers with at least one voxel of clearance, no more than step_length
/// apart, facing the direction of travel.
std::vector<Pose> plan_trajectory(const SceneSpec& spec, const VoxelGrid& ground_truth,
                                  uint64_t seed, double step_length);

}  // namespace occudiff
