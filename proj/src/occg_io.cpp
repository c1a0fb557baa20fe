#include "occudiff/occg_io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace occudiff {

namespace {

template <class T>
void write_raw(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("occg: truncated file");
    return v;
}

}  // namespace

void write_occg(const std::string& path, const VoxelGrid& grid, OccgDtype dtype) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("occg: cannot open for write: " + path);
    os.write("OCCG", 4);
    write_raw<uint32_t>(os, 1);
    for (int i = 0; i < 3; ++i) write_raw<uint32_t>(os, static_cast<uint32_t>(grid.dims()[i]));
    write_raw<float>(os, static_cast<float>(grid.voxel_size()));
    for (int i = 0; i < 3; ++i) write_raw<double>(os, grid.origin()[i]);
    write_raw<uint8_t>(os, static_cast<uint8_t>(dtype));
    if (dtype == OccgDtype::F32) {
        os.write(reinterpret_cast<const char*>(grid.values().data()),
                 static_cast<std::streamsize>(grid.values().size() * sizeof(float)));
    } else {
        for (float v : grid.values()) {
            if (v != 0.0f && v != 1.0f) {
                throw std::invalid_argument("occg: u8 dtype requires binary {0,1} values");
            }
            write_raw<uint8_t>(os, v == 1.0f ? 1 : 0);
        }
    }
    if (!os) throw std::runtime_error("occg: write failed: " + path);
}

VoxelGrid read_occg(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("occg: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "OCCG", 4) != 0) {
        throw std::runtime_error("occg: bad magic: " + path);
    }
    uint32_t version = read_raw<uint32_t>(is);
    if (version != 1) throw std::runtime_error("occg: unsupported version");
    IVec3 dims;
    for (int i = 0; i < 3; ++i) dims[i] = static_cast<int>(read_raw<uint32_t>(is));
    float voxel_size = read_raw<float>(is);
    Vec3 origin;
    for (int i = 0; i < 3; ++i) origin[i] = read_raw<double>(is);
    auto dtype = static_cast<OccgDtype>(read_raw<uint8_t>(is));

    VoxelGrid grid(dims, voxel_size, origin);
    if (dtype == OccgDtype::F32) {
        is.read(reinterpret_cast<char*>(grid.values().data()),
                static_cast<std::streamsize>(grid.values().size() * sizeof(float)));
        if (!is) throw std::runtime_error("occg: truncated data: " + path);
    } else if (dtype == OccgDtype::U8) {
        for (float& v : grid.values()) v = read_raw<uint8_t>(is) ? 1.0f : 0.0f;
    } else {
        throw std::runtime_error("occg: unknown dtype tag");
    }
    return grid;
}

void write_map_records(const std::string& path, const OccupancyMap& map) {
    std::vector<std::pair<IVec3, float>> records(map.cells().begin(), map.cells().end());
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
        if (a.first[2] != b.first[2]) return a.first[2] < b.first[2];
        if (a.first[1] != b.first[1]) return a.first[1] < b.first[1];
        return a.first[0] < b.first[0];
    });
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("map: cannot open for write: " + path);
    for (const auto& [idx, lo] : records) {
        for (int i = 0; i < 3; ++i) write_raw<int32_t>(os, idx[i]);
        write_raw<float>(os, lo);
    }
    if (!os) throw std::runtime_error("map: write failed: " + path);
}

void read_map_records(const std::string& path, OccupancyMap& map) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("map: cannot open: " + path);
    for (;;) {
        int32_t x;
        is.read(reinterpret_cast<char*>(&x), sizeof(int32_t));
        if (is.eof()) break;
        if (!is) throw std::runtime_error("map: truncated record");
        IVec3 idx;
        idx[0] = x;
        idx[1] = read_raw<int32_t>(is);
        idx[2] = read_raw<int32_t>(is);
        float lo = read_raw<float>(is);
        map.set_log_odds(idx, lo);
    }
}

void write_pts(const std::string& path, const std::vector<Vec3f>& points) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("pts: cannot open for write: " + path);
    write_raw<uint32_t>(os, static_cast<uint32_t>(points.size()));
    for (const Vec3f& p : points) {
        for (int i = 0; i < 3; ++i) write_raw<float>(os, p[i]);
    }
    if (!os) throw std::runtime_error("pts: write failed: " + path);
}

std::vector<Vec3f> read_pts(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("pts: cannot open: " + path);
    uint32_t count = read_raw<uint32_t>(is);
    std::vector<Vec3f> points(count);
    for (uint32_t i = 0; i < count; ++i) {
        for (int j = 0; j < 3; ++j) points[i][j] = read_raw<float>(is);
    }
    return points;
}

}  // namespace occudiff
