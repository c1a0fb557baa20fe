#include "occudiff/occupancy_map.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "occudiff/raycast.hpp"

namespace occudiff {

OccupancyMap::OccupancyMap(double voxel_size, LogOddsParams params)
    : voxel_size_(voxel_size), params_(params) {
    if (!(voxel_size_ > 0.0)) throw std::invalid_argument("OccupancyMap: voxel_size must be > 0");
    if (!(params_.free_threshold < params_.occupied_threshold)) {
        throw std::invalid_argument("OccupancyMap: free_threshold must be < occupied_threshold");
    }
}

IVec3 OccupancyMap::world_to_index(const Vec3& point) const {
    IVec3 idx;
    for (int i = 0; i < 3; ++i) idx[i] = static_cast<int>(std::floor(point[i] / voxel_size_));
    return idx;
}

Vec3 OccupancyMap::index_to_center(const IVec3& idx) const {
    return (idx.cast<double>() + Vec3::Constant(0.5)) * voxel_size_;
}

const float* OccupancyMap::log_odds(const IVec3& idx) const {
    auto it = cells_.find(idx);
    return it == cells_.end() ? nullptr : &it->second;
}

CellState OccupancyMap::state_of_value(float log_odds) const {
    if (log_odds >= params_.occupied_threshold) return CellState::Occupied;
    if (log_odds <= params_.free_threshold) return CellState::Free;
    return CellState::Unknown;
}

CellState OccupancyMap::state_of(const IVec3& idx) const {
    const float* v = log_odds(idx);
    return v == nullptr ? CellState::Unknown : state_of_value(*v);
}

void OccupancyMap::set_log_odds(const IVec3& idx, float value) {
    cells_[idx] = std::clamp(value, params_.l_min, params_.l_max);
}

void OccupancyMap::add_log_odds(const IVec3& idx, float delta) {
    float& v = cells_[idx];  // inserts 0 for new cells
    v = std::clamp(v + delta, params_.l_min, params_.l_max);
}

void OccupancyMap::integrate_scan(const Vec3& sensor_origin, const std::vector<Vec3>& endpoints,
                                  const std::vector<bool>& hit_flags) {
    if (endpoints.empty()) throw std::invalid_argument("integrate_scan: endpoints empty");
    if (endpoints.size() != hit_flags.size()) {
        throw std::invalid_argument("integrate_scan: endpoints/hit_flags size mismatch");
    }
    if (!sensor_origin.allFinite()) {
        throw std::invalid_argument("integrate_scan: non-finite sensor origin");
    }

    for (size_t i = 0; i < endpoints.size(); ++i) {
        const Vec3& end = endpoints[i];
        if (!end.allFinite()) throw std::invalid_argument("integrate_scan: non-finite endpoint");

        Vec3 delta = end - sensor_origin;
        double range = delta.norm();
        if (range < 1e-12) {
            if (hit_flags[i]) add_log_odds(world_to_index(end), params_.l_hit);
            continue;
        }
        Vec3 dir = delta / range;

        // The endpoint cell is the last traversed cell; everything strictly
        // before it is carved free, and only flagged hits mark the endpoint.
        std::vector<IVec3> cells = raycast(sensor_origin, dir, range, voxel_size_);
        for (size_t k = 0; k + 1 < cells.size(); ++k) add_log_odds(cells[k], params_.l_miss);
        if (hit_flags[i]) add_log_odds(cells.back(), params_.l_hit);
    }
}

size_t OccupancyMap::count_state(CellState s) const {
    size_t n = 0;
    for (const auto& [idx, v] : cells_) {
        if (state_of_value(v) == s) ++n;
    }
    return n;
}

}  // namespace occudiff
