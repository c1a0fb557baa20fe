#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>

namespace occudiff {

using Vec3 = Eigen::Vector3d;
using Vec3f = Eigen::Vector3f;
using IVec3 = Eigen::Vector3i;
using Quat = Eigen::Quaterniond;

/// Robot/sensor pose: world position plus a unit-quaternion orientation.
struct Pose {
    Vec3 position{0.0, 0.0, 0.0};
    Quat orientation{1.0, 0.0, 0.0, 0.0};

    void validate() const {
        if (std::abs(orientation.norm() - 1.0) > 1e-9) {
            throw std::invalid_argument("Pose orientation must be a unit quaternion");
        }
        if (!position.allFinite()) {
            throw std::invalid_argument("Pose position must be finite");
        }
    }

    Vec3 forward() const { return orientation * Vec3(1.0, 0.0, 0.0); }
};

inline Pose pose_from_yaw(const Vec3& position, double yaw) {
    Pose p;
    p.position = position;
    p.orientation = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
    return p;
}

struct IVec3Hash {
    size_t operator()(const IVec3& v) const {
        uint64_t h = 1469598103934665603ull;
        for (int i = 0; i < 3; ++i) {
            h ^= static_cast<uint64_t>(static_cast<uint32_t>(v[i]));
            h *= 1099511628211ull;
        }
        return static_cast<size_t>(h);
    }
};

struct IVec3Eq {
    bool operator()(const IVec3& a, const IVec3& b) const {
        return a[0] == b[0] && a[1] == b[1] && a[2] == b[2];
    }
};

/// Axis-aligned box in world coordinates.
struct AABB {
    Vec3 lo{0.0, 0.0, 0.0};
    Vec3 hi{0.0, 0.0, 0.0};

    bool contains(const Vec3& p) const {
        return p.x() >= lo.x() && p.x() < hi.x() && p.y() >= lo.y() && p.y() < hi.y() &&
               p.z() >= lo.z() && p.z() < hi.z();
    }
    Vec3 extent() const { return hi - lo; }
};

}  // namespace occudiff
