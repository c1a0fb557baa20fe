#include "occudiff/raycast.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace occudiff {

std::vector<IVec3> raycast(const Vec3& origin, const Vec3& direction, double max_range,
                           double voxel_size) {
    if (!(voxel_size > 0.0)) throw std::invalid_argument("raycast: voxel_size must be > 0");
    if (!(max_range > 0.0)) throw std::invalid_argument("raycast: max_range must be > 0");
    if (!origin.allFinite() || !direction.allFinite()) {
        throw std::invalid_argument("raycast: non-finite ray");
    }
    double norm = direction.norm();
    if (norm == 0.0) throw std::invalid_argument("raycast: zero direction");
    if (std::abs(norm - 1.0) > 1e-9) {
        throw std::invalid_argument("raycast: direction must be unit length");
    }

    constexpr double kInf = std::numeric_limits<double>::infinity();

    IVec3 cell;
    IVec3 step;
    IVec3 plane;  // lattice plane index of the next crossing per axis
    Vec3 t_max;
    for (int i = 0; i < 3; ++i) {
        cell[i] = static_cast<int>(std::floor(origin[i] / voxel_size));
        if (direction[i] > 0.0) {
            step[i] = 1;
            plane[i] = cell[i] + 1;
        } else if (direction[i] < 0.0) {
            step[i] = -1;
            plane[i] = cell[i];
        } else {
            step[i] = 0;
        }
        // Crossing times come from a fresh division at every step instead of
        // accumulating t_delta, so a crossing that lands exactly on a lattice
        // plane stays exact and ties between axes are detected reliably.
        t_max[i] = step[i] == 0 ? kInf : (plane[i] * voxel_size - origin[i]) / direction[i];
    }

    std::vector<IVec3> out;
    out.push_back(cell);

    for (;;) {
        double t_next = std::min(t_max[0], std::min(t_max[1], t_max[2]));
        // A crossing exactly at max_range is grazing contact: the segment
        // meets the next cell in a single point and does not enter it.
        if (t_next >= max_range) break;
        // Advance every axis tied at t_next so corner/edge crossings take a
        // single diagonal step, matching point-sampling semantics.
        for (int i = 0; i < 3; ++i) {
            if (step[i] != 0 && t_max[i] == t_next) {
                cell[i] += step[i];
                plane[i] += step[i];
                t_max[i] = (plane[i] * voxel_size - origin[i]) / direction[i];
            }
        }
        out.push_back(cell);
    }
    return out;
}

}  // namespace occudiff
