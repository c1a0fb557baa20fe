#pragma once

#include <unordered_map>
#include <vector>

#include "occudiff/geometry.hpp"

namespace occudiff {

/// Log-odds update constants. Defaults correspond to p_hit = 0.85 and
/// p_miss = 0.4 with clamping for responsiveness.
struct LogOddsParams {
    float l_hit = 1.735f;
    float l_miss = -0.405f;
    float l_min = -2.0f;
    float l_max = 3.5f;
    float occupied_threshold = 0.85f;
    float free_threshold = -0.85f;
};

enum class CellState { Unknown, Free, Occupied };

/// Sparse world-frame occupancy map: a flat hash from quantized cell index to
/// clamped log-odds. Single writer (scan integration), any number of readers
/// between integrations.
class OccupancyMap {
  public:
    explicit OccupancyMap(double voxel_size = 0.1, LogOddsParams params = {});

    double voxel_size() const { return voxel_size_; }
    const LogOddsParams& params() const { return params_; }

    IVec3 world_to_index(const Vec3& point) const;
    Vec3 index_to_center(const IVec3& idx) const;

    /// Log-odds of a stored cell; absent cells have no value.
    const float* log_odds(const IVec3& idx) const;

    CellState state_of(const IVec3& idx) const;
    CellState state_of_value(float log_odds) const;

    /// Integrates one scan: every cell strictly before an endpoint gets
    /// l_miss, the endpoint cell gets l_hit iff its hit flag is set
    /// (cleared flags mark max-range misses that only carve free space).
    void integrate_scan(const Vec3& sensor_origin, const std::vector<Vec3>& endpoints,
                        const std::vector<bool>& hit_flags);

    size_t cell_count() const { return cells_.size(); }

    /// Direct cell write, clamped to [l_min, l_max]. Used by deserialization.
    void set_log_odds(const IVec3& idx, float value);

    const std::unordered_map<IVec3, float, IVec3Hash, IVec3Eq>& cells() const { return cells_; }

    size_t count_state(CellState s) const;

  private:
    void add_log_odds(const IVec3& idx, float delta);

    double voxel_size_;
    LogOddsParams params_;
    std::unordered_map<IVec3, float, IVec3Hash, IVec3Eq> cells_;
};

}  // namespace occudiff
