#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "occudiff/geometry.hpp"

namespace occudiff {

/// Dense 3D grid of scalar cell values, stored row-major with x fastest.
/// Diffusion-domain grids keep values in [-1, 1]; binary grids use {0, 1}.
class VoxelGrid {
  public:
    VoxelGrid() = default;

    VoxelGrid(IVec3 dims, double voxel_size, Vec3 origin = Vec3::Zero(), float fill = 0.0f)
        : dims_(dims), voxel_size_(voxel_size), origin_(origin) {
        if (dims_[0] < 1 || dims_[1] < 1 || dims_[2] < 1) {
            throw std::invalid_argument("VoxelGrid dims must be >= 1");
        }
        if (!(voxel_size_ > 0.0)) {
            throw std::invalid_argument("VoxelGrid voxel_size must be > 0");
        }
        values_.assign(cell_count(), fill);
    }

    const IVec3& dims() const { return dims_; }
    double voxel_size() const { return voxel_size_; }
    const Vec3& origin() const { return origin_; }
    size_t cell_count() const {
        return static_cast<size_t>(dims_[0]) * static_cast<size_t>(dims_[1]) *
               static_cast<size_t>(dims_[2]);
    }

    std::vector<float>& values() { return values_; }
    const std::vector<float>& values() const { return values_; }

    size_t flat_index(const IVec3& idx) const {
        return static_cast<size_t>(idx[0]) +
               static_cast<size_t>(dims_[0]) *
                   (static_cast<size_t>(idx[1]) + static_cast<size_t>(dims_[1]) * static_cast<size_t>(idx[2]));
    }

    bool in_bounds(const IVec3& idx) const {
        return idx[0] >= 0 && idx[0] < dims_[0] && idx[1] >= 0 && idx[1] < dims_[1] &&
               idx[2] >= 0 && idx[2] < dims_[2];
    }

    float& at(const IVec3& idx) { return values_[flat_index(idx)]; }
    float at(const IVec3& idx) const { return values_[flat_index(idx)]; }

    /// Cell index of a world point; out-of-range points yield nullopt, never
    /// wraparound. Half-open cells: a point on a boundary belongs to the
    /// higher cell.
    std::optional<IVec3> world_to_index(const Vec3& point) const {
        IVec3 idx;
        for (int i = 0; i < 3; ++i) {
            idx[i] = static_cast<int>(std::floor((point[i] - origin_[i]) / voxel_size_));
        }
        if (!in_bounds(idx)) return std::nullopt;
        return idx;
    }

    Vec3 index_to_center(const IVec3& idx) const {
        return origin_ + (idx.cast<double>() + Vec3::Constant(0.5)) * voxel_size_;
    }

    void clamp_values(float lo, float hi) {
        for (float& v : values_) v = std::clamp(v, lo, hi);
    }

    /// Occupied iff value > threshold. Defaults to the [-1,1] midpoint.
    VoxelGrid binarize(float threshold = 0.0f) const {
        VoxelGrid out(dims_, voxel_size_, origin_);
        for (size_t i = 0; i < values_.size(); ++i) {
            out.values_[i] = values_[i] > threshold ? 1.0f : 0.0f;
        }
        return out;
    }

    size_t count_equal(float v) const {
        size_t n = 0;
        for (float x : values_) {
            if (x == v) ++n;
        }
        return n;
    }

    bool same_shape(const VoxelGrid& other) const {
        return dims_ == other.dims_;
    }

  private:
    IVec3 dims_{0, 0, 0};
    double voxel_size_ = 0.1;
    Vec3 origin_{0.0, 0.0, 0.0};
    std::vector<float> values_;
};

}  // namespace occudiff
