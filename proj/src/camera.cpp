#include "occudiff/camera.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "occudiff/local_region.hpp"
#include "occudiff/raycast.hpp"

namespace occudiff {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Distance along the ray to the entry face of a cell. Exact at lattice
// planes; clamped at zero for the cell containing the origin.
double entry_distance(const Vec3& origin, const Vec3& direction, const IVec3& cell,
                      double voxel_size) {
    double t_entry = 0.0;
    for (int i = 0; i < 3; ++i) {
        if (direction[i] == 0.0) continue;
        double face = direction[i] > 0.0 ? cell[i] : cell[i] + 1;
        double t = (face * voxel_size - origin[i]) / direction[i];
        t_entry = std::max(t_entry, t);
    }
    return t_entry;
}

}  // namespace

double DepthCamera::effective_vfov() const {
    if (vfov > 0.0) return vfov;
    return 2.0 * std::atan(std::tan(0.5 * hfov) * static_cast<double>(height) /
                           static_cast<double>(width));
}

void DepthCamera::validate() const {
    if (width < 1 || height < 1) throw std::invalid_argument("camera resolution must be >= 1");
    if (!(hfov > 0.0) || !(hfov < kPi)) throw std::invalid_argument("camera hfov out of (0, pi)");
    if (vfov > 0.0 && !(vfov < kPi)) throw std::invalid_argument("camera vfov out of (0, pi)");
    if (!(max_range > 0.0)) throw std::invalid_argument("camera max_range must be > 0");
}

RenderResult render_depth(const VoxelGrid& ground_truth, const Pose& pose,
                          const DepthCamera& camera, const IVec3& region_dims) {
    camera.validate();
    pose.validate();
    const double voxel = ground_truth.voxel_size();
    const Vec3 origin = pose.position - ground_truth.origin();
    const Vec3 region_origin = region_origin_for(pose, region_dims, voxel);

    RenderResult out;
    out.width = camera.width;
    out.height = camera.height;
    const size_t n_rays = static_cast<size_t>(camera.width) * static_cast<size_t>(camera.height);
    out.depth.assign(n_rays, 0.0f);
    out.endpoints_world.assign(n_rays, pose.position);
    out.hit_flags.assign(n_rays, false);

    IVec3 cam_cell;
    for (int i = 0; i < 3; ++i) cam_cell[i] = static_cast<int>(std::floor(origin[i] / voxel));
    if (ground_truth.in_bounds(cam_cell) && ground_truth.at(cam_cell) > 0.5f) {
        out.camera_in_occupied = true;
        return out;
    }

    const double tan_h = std::tan(0.5 * camera.hfov);
    const double tan_v = std::tan(0.5 * camera.effective_vfov());
    const double eps = 1e-4 * voxel;

    for (int v = 0; v < camera.height; ++v) {
        for (int u = 0; u < camera.width; ++u) {
            Vec3 d_cam(1.0, tan_h * (1.0 - 2.0 * (u + 0.5) / camera.width),
                       tan_v * (1.0 - 2.0 * (v + 0.5) / camera.height));
            Vec3 dir = (pose.orientation * d_cam).normalized();

            std::vector<IVec3> cells = raycast(origin, dir, camera.max_range, voxel);
            bool hit = false;
            IVec3 hit_cell{0, 0, 0};
            for (const IVec3& c : cells) {
                if (!ground_truth.in_bounds(c)) break;
                if (ground_truth.at(c) > 0.5f) {
                    hit = true;
                    hit_cell = c;
                    break;
                }
            }

            const size_t pix = static_cast<size_t>(v) * camera.width + u;
            if (!hit) {
                out.depth[pix] = static_cast<float>(camera.max_range);
                out.endpoints_world[pix] = pose.position + camera.max_range * dir;
                continue;
            }

            double t_entry = entry_distance(origin, dir, hit_cell, voxel);
            Vec3 p = origin + t_entry * dir;
            for (int i = 0; i < 3; ++i) {
                p[i] = std::clamp(p[i], hit_cell[i] * voxel + eps, (hit_cell[i] + 1) * voxel - eps);
            }
            Vec3 world = p + ground_truth.origin();
            out.depth[pix] = static_cast<float>(t_entry);
            out.endpoints_world[pix] = world;
            out.hit_flags[pix] = true;
            out.cloud.push_back((world - region_origin).cast<float>());
        }
    }
    return out;
}

}  // namespace occudiff
