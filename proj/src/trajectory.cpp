#include "occudiff/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "occudiff/rng.hpp"

namespace occudiff {

namespace {

struct NavGrid {
    int nx, ny;
    std::vector<uint8_t> nav;
    bool at(int x, int y) const {
        return x >= 0 && x < nx && y >= 0 && y < ny &&
               nav[static_cast<size_t>(x) + static_cast<size_t>(nx) * static_cast<size_t>(y)] != 0;
    }
    size_t flat(int x, int y) const {
        return static_cast<size_t>(x) + static_cast<size_t>(nx) * static_cast<size_t>(y);
    }
};

constexpr int kDx[4] = {1, -1, 0, 0};
constexpr int kDy[4] = {0, 0, 1, -1};

/// BFS path between navigable cells, deterministic neighbor order.
std::vector<IVec3> bfs_path(const NavGrid& g, const IVec3& from, const IVec3& to) {
    if (!g.at(from[0], from[1]) || !g.at(to[0], to[1])) return {};
    std::vector<int32_t> parent(static_cast<size_t>(g.nx) * static_cast<size_t>(g.ny), -1);
    std::deque<IVec3> queue{from};
    parent[g.flat(from[0], from[1])] = static_cast<int32_t>(g.flat(from[0], from[1]));
    while (!queue.empty()) {
        IVec3 c = queue.front();
        queue.pop_front();
        if (c[0] == to[0] && c[1] == to[1]) break;
        for (int k = 0; k < 4; ++k) {
            int x = c[0] + kDx[k], y = c[1] + kDy[k];
            if (!g.at(x, y) || parent[g.flat(x, y)] >= 0) continue;
            parent[g.flat(x, y)] = static_cast<int32_t>(g.flat(c[0], c[1]));
            queue.push_back(IVec3(x, y, 0));
        }
    }
    if (parent[g.flat(to[0], to[1])] < 0) return {};
    std::vector<IVec3> path;
    IVec3 c = to;
    for (;;) {
        path.push_back(c);
        size_t f = g.flat(c[0], c[1]);
        size_t p = static_cast<size_t>(parent[f]);
        if (p == f) break;
        c = IVec3(static_cast<int>(p % static_cast<size_t>(g.nx)),
                  static_cast<int>(p / static_cast<size_t>(g.nx)), 0);
    }
    std::reverse(path.begin(), path.end());
    return path;
}

/// Hop distances over the door graph from a start room.
std::vector<int> door_graph_distances(const SceneSpec& spec, int start) {
    std::vector<std::vector<int>> adj(spec.rooms.size());
    for (const Door& d : spec.doors) {
        adj[static_cast<size_t>(d.room_a)].push_back(d.room_b);
        adj[static_cast<size_t>(d.room_b)].push_back(d.room_a);
    }
    std::vector<int> dist(spec.rooms.size(), -1);
    std::deque<int> queue{start};
    dist[static_cast<size_t>(start)] = 0;
    while (!queue.empty()) {
        int r = queue.front();
        queue.pop_front();
        for (int n : adj[static_cast<size_t>(r)]) {
            if (dist[static_cast<size_t>(n)] < 0) {
                dist[static_cast<size_t>(n)] = dist[static_cast<size_t>(r)] + 1;
                queue.push_back(n);
            }
        }
    }
    return dist;
}

}  // namespace

std::vector<Pose> plan_trajectory(const SceneSpec& spec, const VoxelGrid& ground_truth,
                                  uint64_t seed, double step_length) {
    if (spec.rooms.empty()) throw std::invalid_argument("plan_trajectory: scene has no rooms");
    if (!(step_length > 0.0)) throw std::invalid_argument("plan_trajectory: bad step_length");

    NavGrid g{ground_truth.dims()[0], ground_truth.dims()[1], navigable_columns(ground_truth)};

    // Start somewhere clear in room 0, restricted to cells that can actually
    // reach the room center (furniture may pocket off navigable corners).
    Rng rng(sub_seed(seed, "trajectory"));
    const Room& r0 = spec.rooms[0];
    std::vector<uint8_t> reach(static_cast<size_t>(g.nx) * static_cast<size_t>(g.ny), 0);
    if (g.at(r0.center_cell[0], r0.center_cell[1])) {
        std::deque<IVec3> queue{r0.center_cell};
        reach[g.flat(r0.center_cell[0], r0.center_cell[1])] = 1;
        while (!queue.empty()) {
            IVec3 c = queue.front();
            queue.pop_front();
            for (int k = 0; k < 4; ++k) {
                int x = c[0] + kDx[k], y = c[1] + kDy[k];
                if (!g.at(x, y) || reach[g.flat(x, y)]) continue;
                reach[g.flat(x, y)] = 1;
                queue.push_back(IVec3(x, y, 0));
            }
        }
    }
    std::vector<IVec3> room0_cells;
    for (int y = r0.lo[1]; y < r0.hi[1]; ++y) {
        for (int x = r0.lo[0]; x < r0.hi[0]; ++x) {
            if (reach[g.flat(x, y)]) room0_cells.push_back(IVec3(x, y, 0));
        }
    }
    if (room0_cells.empty()) throw std::runtime_error("plan_trajectory: first room has no clearance");
    IVec3 here = room0_cells[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int64_t>(room0_cells.size()) - 1))];

    // Visit rooms nearest-first by door-graph hops, accumulating BFS legs.
    std::vector<IVec3> cells{here};
    std::vector<size_t> leg_ends;
    std::vector<bool> visited(spec.rooms.size(), false);
    int current_room = 0;
    for (size_t n = 0; n < spec.rooms.size(); ++n) {
        std::vector<int> dist = door_graph_distances(spec, current_room);
        int next = -1;
        for (size_t i = 0; i < spec.rooms.size(); ++i) {
            if (visited[i] || dist[i] < 0) continue;
            if (next < 0 || dist[i] < dist[static_cast<size_t>(next)]) next = static_cast<int>(i);
        }
        if (next < 0) {
            for (size_t i = 0; i < spec.rooms.size(); ++i) {
                if (!visited[i]) {
                    throw std::runtime_error("plan_trajectory: room unreachable in door graph");
                }
            }
            break;
        }
        IVec3 target = spec.rooms[static_cast<size_t>(next)].center_cell;
        std::vector<IVec3> leg = bfs_path(g, here, target);
        if (leg.empty()) throw std::runtime_error("plan_trajectory: no clear path to room center");
        cells.insert(cells.end(), leg.begin() + 1, leg.end());
        leg_ends.push_back(cells.size() - 1);
        here = target;
        visited[static_cast<size_t>(next)] = true;
        current_room = next;
    }

    // Resample at most step_length apart; cells are voxel_size apart, so
    // emitting at most every k-th cell bounds consecutive pose distance by
    // k * voxel_size. Leg ends (the room centers) are always emitted.
    const double voxel = ground_truth.voxel_size();
    size_t k = std::max<size_t>(1, static_cast<size_t>(std::floor(step_length / voxel + 1e-9)));
    std::vector<uint8_t> is_leg_end(cells.size(), 0);
    for (size_t i : leg_ends) is_leg_end[i] = 1;
    std::vector<IVec3> waypoints{cells[0]};
    size_t since_emit = 0;
    for (size_t i = 1; i < cells.size(); ++i) {
        ++since_emit;
        if (since_emit == k || is_leg_end[i]) {
            waypoints.push_back(cells[i]);
            since_emit = 0;
        }
    }
    if (waypoints.back() != cells.back()) waypoints.push_back(cells.back());

    std::vector<Pose> poses;
    double yaw = 0.0;
    for (size_t i = 0; i < waypoints.size(); ++i) {
        Vec3 p((waypoints[i][0] + 0.5) * voxel, (waypoints[i][1] + 0.5) * voxel, kSensorHeight);
        if (i + 1 < waypoints.size()) {
            double dx = static_cast<double>(waypoints[i + 1][0] - waypoints[i][0]);
            double dy = static_cast<double>(waypoints[i + 1][1] - waypoints[i][1]);
            if (dx != 0.0 || dy != 0.0) yaw = std::atan2(dy, dx);
        }
        poses.push_back(pose_from_yaw(p, yaw));
    }
    return poses;
}

}  // namespace occudiff
