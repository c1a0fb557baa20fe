#include "occudiff/scene.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

#include "occudiff/rng.hpp"

namespace occudiff {

namespace {

struct Rect {
    int x0, y0, x1, y1;  // interior cells, half-open
    bool splittable = true;
    int extent(int axis) const { return axis == 0 ? x1 - x0 : y1 - y0; }
    int area() const { return (x1 - x0) * (y1 - y0); }
};

int cells_of(double meters, double voxel) {
    return static_cast<int>(std::llround(meters / voxel));
}

int sensor_cell(double voxel) {
    return static_cast<int>(std::floor(kSensorHeight / voxel + 1e-9));
}

struct Builder {
    const SceneParams& P;
    uint64_t seed;
    int nx, ny, nz;
    int min_cells, door_cells;

    std::vector<Rect> leaves;
    std::vector<CellBox> internal_walls;
    std::vector<CellBox> door_boxes;
    std::vector<CellBox> door_margins;  // door boxes grown by 1 in x/y
    std::vector<std::pair<IVec3, IVec3>> door_probes;  // cells flanking each door
    std::vector<Furniture> furniture;

    Builder(const SceneParams& params, uint64_t s)
        : P(params),
          seed(s),
          nx(cells_of(P.extent_x, P.voxel_size)),
          ny(cells_of(P.extent_y, P.voxel_size)),
          nz(cells_of(P.wall_height, P.voxel_size)),
          min_cells(cells_of(P.min_room_extent, P.voxel_size)),
          door_cells(cells_of(P.door_width, P.voxel_size)) {
        if (nx < 4 || ny < 4 || nz < sensor_cell(P.voxel_size) + 2) {
            throw std::invalid_argument("generate_scene: bounds too small for the voxel size");
        }
        if (min_cells < door_cells + 4 || door_cells < 3) {
            throw std::invalid_argument("generate_scene: rooms too small for doors");
        }
    }

    bool wall_clear(const CellBox& wall) const {
        for (const CellBox& m : door_margins) {
            if (wall.intersects(m)) return false;
        }
        return true;
    }

    bool try_split(size_t leaf_idx, Rng& rng) {
        Rect r = leaves[leaf_idx];
        int first_axis = r.extent(0) >= r.extent(1) ? 0 : 1;
        for (int pass = 0; pass < 2; ++pass) {
            int axis = pass == 0 ? first_axis : 1 - first_axis;
            int a0 = axis == 0 ? r.x0 : r.y0;
            int a1 = axis == 0 ? r.x1 : r.y1;
            int o0 = axis == 0 ? r.y0 : r.x0;
            int o1 = axis == 0 ? r.y1 : r.x1;
            if (a1 - a0 < 2 * min_cells + 1) continue;

            std::vector<int> candidates;
            for (int c = a0 + min_cells; c <= a1 - min_cells - 1; ++c) {
                CellBox wall;
                wall.lo = axis == 0 ? IVec3(c, o0, 1) : IVec3(o0, c, 1);
                wall.hi = axis == 0 ? IVec3(c + 1, o1, nz) : IVec3(o1, c + 1, nz);
                if (wall_clear(wall)) candidates.push_back(c);
            }
            if (candidates.empty()) continue;
            int c = candidates[static_cast<size_t>(
                rng.uniform_int(0, static_cast<int64_t>(candidates.size()) - 1))];

            CellBox wall;
            wall.lo = axis == 0 ? IVec3(c, o0, 1) : IVec3(o0, c, 1);
            wall.hi = axis == 0 ? IVec3(c + 1, o1, nz) : IVec3(o1, c + 1, nz);

            int d = static_cast<int>(rng.uniform_int(o0 + 2, o1 - door_cells - 2));
            CellBox door;
            door.lo = axis == 0 ? IVec3(c, d, 1) : IVec3(d, c, 1);
            door.hi = axis == 0 ? IVec3(c + 1, d + door_cells, nz) : IVec3(d + door_cells, c + 1, nz);
            CellBox margin = door;
            margin.lo[0] -= 1;
            margin.lo[1] -= 1;
            margin.hi[0] += 1;
            margin.hi[1] += 1;

            IVec3 probe_a = axis == 0 ? IVec3(c - 1, d, 0) : IVec3(d, c - 1, 0);
            IVec3 probe_b = axis == 0 ? IVec3(c + 1, d, 0) : IVec3(d, c + 1, 0);

            internal_walls.push_back(wall);
            door_boxes.push_back(door);
            door_margins.push_back(margin);
            door_probes.emplace_back(probe_a, probe_b);

            Rect a = r, b = r;
            if (axis == 0) {
                a.x1 = c;
                b.x0 = c + 1;
            } else {
                a.y1 = c;
                b.y0 = c + 1;
            }
            a.splittable = b.splittable = true;
            leaves[leaf_idx] = a;
            leaves.push_back(b);
            return true;
        }
        leaves[leaf_idx].splittable = false;
        return false;
    }

    void split_to(int target, Rng& rng) {
        while (static_cast<int>(leaves.size()) < target) {
            int best = -1;
            for (size_t i = 0; i < leaves.size(); ++i) {
                if (!leaves[i].splittable) continue;
                if (best < 0 || leaves[i].area() > leaves[static_cast<size_t>(best)].area()) {
                    best = static_cast<int>(i);
                }
            }
            if (best < 0) break;
            try_split(static_cast<size_t>(best), rng);
        }
    }

    int leaf_of(const IVec3& cell) const {
        for (size_t i = 0; i < leaves.size(); ++i) {
            const Rect& r = leaves[i];
            if (cell[0] >= r.x0 && cell[0] < r.x1 && cell[1] >= r.y0 && cell[1] < r.y1) {
                return static_cast<int>(i);
            }
        }
        return -1;
    }

    VoxelGrid voxelize() const {
        VoxelGrid gt(IVec3(nx, ny, nz), P.voxel_size, Vec3::Zero());
        auto fill = [&](const CellBox& box, float v) {
            IVec3 c;
            for (c[2] = box.lo[2]; c[2] < box.hi[2]; ++c[2])
                for (c[1] = box.lo[1]; c[1] < box.hi[1]; ++c[1])
                    for (c[0] = box.lo[0]; c[0] < box.hi[0]; ++c[0]) gt.at(c) = v;
        };
        fill({IVec3(0, 0, 0), IVec3(nx, ny, 1)}, 1.0f);  // floor slab
        for (const CellBox& w : shell_walls()) fill(w, 1.0f);
        for (const CellBox& w : internal_walls) fill(w, 1.0f);
        for (const CellBox& d : door_boxes) fill(d, 0.0f);
        for (const Furniture& f : furniture) fill(f.cells, 1.0f);
        return gt;
    }

    std::vector<CellBox> shell_walls() const {
        return {
            {IVec3(0, 0, 1), IVec3(nx, 1, nz)},
            {IVec3(0, ny - 1, 1), IVec3(nx, ny, nz)},
            {IVec3(0, 0, 1), IVec3(1, ny, nz)},
            {IVec3(nx - 1, 0, 1), IVec3(nx, ny, nz)},
        };
    }

    IVec3 center_of(const Rect& r) const {
        return IVec3((r.x0 + r.x1) / 2, (r.y0 + r.y1) / 2, sensor_cell(P.voxel_size));
    }

    bool centers_reachable(const VoxelGrid& gt) const {
        std::vector<uint8_t> nav = navigable_columns(gt);
        auto at = [&](int x, int y) { return nav[static_cast<size_t>(x) + static_cast<size_t>(nx) * static_cast<size_t>(y)]; };
        IVec3 start = center_of(leaves[0]);
        if (!at(start[0], start[1])) return false;
        std::vector<uint8_t> seen(static_cast<size_t>(nx) * static_cast<size_t>(ny), 0);
        std::deque<IVec3> queue{start};
        seen[static_cast<size_t>(start[0]) + static_cast<size_t>(nx) * static_cast<size_t>(start[1])] = 1;
        while (!queue.empty()) {
            IVec3 c = queue.front();
            queue.pop_front();
            const int dx[4] = {1, -1, 0, 0};
            const int dy[4] = {0, 0, 1, -1};
            for (int k = 0; k < 4; ++k) {
                int x = c[0] + dx[k], y = c[1] + dy[k];
                if (x < 0 || x >= nx || y < 0 || y >= ny) continue;
                size_t f = static_cast<size_t>(x) + static_cast<size_t>(nx) * static_cast<size_t>(y);
                if (seen[f] || !at(x, y)) continue;
                seen[f] = 1;
                queue.push_back(IVec3(x, y, 0));
            }
        }
        for (const Rect& r : leaves) {
            IVec3 c = center_of(r);
            if (!seen[static_cast<size_t>(c[0]) + static_cast<size_t>(nx) * static_cast<size_t>(c[1])]) {
                return false;
            }
        }
        return true;
    }

    bool place_furniture(Rng& rng) {
        VoxelGrid gt = voxelize();
        if (!centers_reachable(gt)) return false;
        for (size_t room = 0; room < leaves.size(); ++room) {
            const Rect& r = leaves[room];
            IVec3 center = center_of(r);
            CellBox center_guard{IVec3(center[0] - 1, center[1] - 1, 1),
                                 IVec3(center[0] + 2, center[1] + 2, nz)};
            int count = static_cast<int>(rng.uniform_int(P.furniture_min, P.furniture_max));
            for (int n = 0; n < count; ++n) {
                for (int attempt = 0; attempt < 10; ++attempt) {
                    int sx = std::max(1, cells_of(rng.uniform(P.furniture_extent_min,
                                                              P.furniture_extent_max),
                                                  P.voxel_size));
                    int sy = std::max(1, cells_of(rng.uniform(P.furniture_extent_min,
                                                              P.furniture_extent_max),
                                                  P.voxel_size));
                    int h = std::max(1, cells_of(rng.uniform(P.furniture_height_min,
                                                             P.furniture_height_max),
                                                 P.voxel_size));
                    if (r.x1 - 1 - sx < r.x0 + 1 || r.y1 - 1 - sy < r.y0 + 1) continue;
                    int x = static_cast<int>(rng.uniform_int(r.x0 + 1, r.x1 - 1 - sx));
                    int y = static_cast<int>(rng.uniform_int(r.y0 + 1, r.y1 - 1 - sy));
                    CellBox box{IVec3(x, y, 1), IVec3(x + sx, y + sy, 1 + std::min(h, nz - 1))};
                    if (box.intersects(center_guard)) continue;
                    bool clear = true;
                    for (const CellBox& m : door_margins) {
                        if (box.intersects(m)) clear = false;
                    }
                    for (const Furniture& f : furniture) {
                        if (box.intersects(f.cells)) clear = false;
                    }
                    if (!clear) continue;
                    furniture.push_back(Furniture{box});
                    VoxelGrid with = voxelize();
                    if (!centers_reachable(with)) {
                        furniture.pop_back();
                        continue;
                    }
                    break;
                }
            }
        }
        return centers_reachable(voxelize());
    }
};

}  // namespace

std::vector<uint8_t> navigable_columns(const VoxelGrid& gt) {
    const int nx = gt.dims()[0], ny = gt.dims()[1], nz = gt.dims()[2];
    const int zc = sensor_cell(gt.voxel_size());
    std::vector<uint8_t> nav(static_cast<size_t>(nx) * static_cast<size_t>(ny), 0);
    for (int y = 0; y < ny; ++y) {
        for (int x = 0; x < nx; ++x) {
            bool ok = true;
            for (int dx = -1; dx <= 1 && ok; ++dx) {
                for (int dy = -1; dy <= 1 && ok; ++dy) {
                    for (int dz = -1; dz <= 1 && ok; ++dz) {
                        IVec3 c(x + dx, y + dy, zc + dz);
                        if (!gt.in_bounds(c) || gt.at(c) != 0.0f) ok = false;
                    }
                }
            }
            nav[static_cast<size_t>(x) + static_cast<size_t>(nx) * static_cast<size_t>(y)] =
                ok ? 1 : 0;
        }
    }
    return nav;
}

SceneData generate_scene(uint64_t seed, const SceneParams& params) {
    if (params.room_count_min < 1 || params.room_count_max < params.room_count_min) {
        throw std::invalid_argument("generate_scene: bad room count range");
    }
    for (int attempt = 0; attempt < params.max_attempts; ++attempt) {
        Builder b(params, seed);
        Rng rng(sub_seed(seed, "scene-attempt", static_cast<uint64_t>(attempt)));
        b.leaves.push_back(Rect{1, 1, b.nx - 1, b.ny - 1});
        int target =
            static_cast<int>(rng.uniform_int(params.room_count_min, params.room_count_max));
        b.split_to(target, rng);
        if (static_cast<int>(b.leaves.size()) < params.room_count_min) continue;
        if (!b.place_furniture(rng)) continue;

        SceneSpec spec;
        spec.seed = seed;
        spec.voxel_size = params.voxel_size;
        spec.wall_height = params.wall_height;
        spec.grid_dims = IVec3(b.nx, b.ny, b.nz);
        spec.bounds.lo = Vec3::Zero();
        spec.bounds.hi = Vec3(b.nx * params.voxel_size, b.ny * params.voxel_size,
                              b.nz * params.voxel_size);
        for (size_t i = 0; i < b.leaves.size(); ++i) {
            const Rect& r = b.leaves[i];
            Room room;
            room.id = static_cast<int>(i);
            room.lo = IVec3(r.x0, r.y0, 0);
            room.hi = IVec3(r.x1, r.y1, b.nz);
            room.center_cell = b.center_of(r);
            spec.rooms.push_back(room);
        }
        for (size_t i = 0; i < b.door_boxes.size(); ++i) {
            Door door;
            door.id = static_cast<int>(spec.doors.size());
            door.cells = b.door_boxes[i];
            door.room_a = b.leaf_of(b.door_probes[i].first);
            door.room_b = b.leaf_of(b.door_probes[i].second);
            if (door.room_a < 0 || door.room_b < 0 || door.room_a == door.room_b) continue;
            spec.rooms[static_cast<size_t>(door.room_a)].door_ids.push_back(door.id);
            spec.rooms[static_cast<size_t>(door.room_b)].door_ids.push_back(door.id);
            spec.doors.push_back(door);
        }
        spec.walls = b.shell_walls();
        spec.walls.insert(spec.walls.end(), b.internal_walls.begin(), b.internal_walls.end());
        spec.furniture = b.furniture;
        return SceneData{std::move(spec), b.voxelize()};
    }
    throw std::runtime_error("generate_scene: no feasible layout within attempt budget");
}

}  // namespace occudiff
