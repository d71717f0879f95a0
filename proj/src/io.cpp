// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/io.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "occ/binio.hpp"
#include "occ/error.hpp"

namespace occ::io {

using scene::PointCloud;

void write_cloud_binary(std::ostream& os, const PointCloud& cloud) {
    binio::put_magic(os, "GOPC");
    binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(cloud.size()));
    const auto& t = cloud.pose.translation;
    const auto& q = cloud.pose.rotation;
    for (double v : {t[0], t[1], t[2], q.w, q.x, q.y, q.z}) {
        binio::put_f32(os, static_cast<float>(v));
    }
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (double v : cloud.points[i]) {
            binio::put_f32(os, static_cast<float>(v));
        }
        binio::put_f32(os, static_cast<float>(cloud.intensity[i]));
    }
}

PointCloud read_cloud_binary(std::istream& is) {
    binio::expect_magic(is, "GOPC");
    const auto n = binio::get_uint<std::uint32_t>(is, "GOPC count");
    PointCloud pc;
    double pose[7];
    for (double& v : pose) {
        v = binio::get_f32(is, "GOPC pose");
    }
    pc.pose.translation = {pose[0], pose[1], pose[2]};
    pc.pose.rotation = {pose[3], pose[4], pose[5], pose[6]};
    pc.points.resize(n);
    pc.intensity.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (auto& c : pc.points[i]) {
            c = binio::get_f32(is, "GOPC point");
        }
        pc.intensity[i] = binio::get_f32(is, "GOPC intensity");
    }
    pc.validate();
    return pc;
}

void write_cloud_ascii(std::ostream& os, const PointCloud& cloud) {
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    const auto& t = cloud.pose.translation;
    const auto& q = cloud.pose.rotation;
    os << "# x y z intensity\n";
    os << "pose: " << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << q.w << ' ' << q.x << ' ' << q.y << ' ' << q.z
       << '\n';
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        os << p[0] << ' ' << p[1] << ' ' << p[2] << ' ' << cloud.intensity[i] << '\n';
    }
}

PointCloud read_cloud_ascii(std::istream& is) {
    PointCloud pc;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        std::istringstream ls(line.substr(first));
        if (line.compare(first, 5, "pose:") == 0) {
            ls.ignore(5);
            double v[7];
            for (double& x : v) {
                if (!(ls >> x)) throw DataError("bad pose line " + std::to_string(lineno));
            }
            pc.pose.translation = {v[0], v[1], v[2]};
            pc.pose.rotation = {v[3], v[4], v[5], v[6]};
            continue;
        }
        Vec3 p;
        double inten = 0.0;
        if (!(ls >> p[0] >> p[1] >> p[2] >> inten)) {
            throw DataError("bad point on line " + std::to_string(lineno));
        }
        pc.points.push_back(p);
        pc.intensity.push_back(inten);
    }
    pc.validate();
    return pc;
}

void save_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
    const bool binary = path.extension() == ".gopc";
    std::ofstream os(path, binary ? std::ios::binary : std::ios::out);
    if (!os) throw DataError("cannot open for writing: " + path.string());
    binary ? write_cloud_binary(os, cloud) : write_cloud_ascii(os, cloud);
}

PointCloud load_cloud(const std::filesystem::path& path) {
    const bool binary = path.extension() == ".gopc";
    std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
    if (!is) throw DataError("cannot open: " + path.string());
    return binary ? read_cloud_binary(is) : read_cloud_ascii(is);
}

void write_occupancy(std::ostream& os, const OccupancyGrid& g) {
    g.validate();
    binio::put_magic(os, "GOCC");
    for (int d : g.spec.dims) {
        binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    }
    binio::put_uint<std::uint32_t>(os, static_cast<std::uint32_t>(g.num_classes));
    for (double o : g.spec.origin) {
        binio::put_f32(os, static_cast<float>(o));
    }
    binio::put_f32(os, static_cast<float>(g.spec.voxel_size));
    binio::put_uint<std::uint8_t>(os, static_cast<std::uint8_t>(g.mode));
    if (g.mode == OccupancyGrid::Mode::Labels) {
        os.write(reinterpret_cast<const char*>(g.labels.data()), static_cast<std::streamsize>(g.labels.size()));
    } else {
        for (double v : g.logits) {
            binio::put_f32(os, static_cast<float>(v));
        }
    }
}

OccupancyGrid read_occupancy(std::istream& is) {
    binio::expect_magic(is, "GOCC");
    GridSpec spec;
    for (int& d : spec.dims) {
        d = static_cast<int>(binio::get_uint<std::uint32_t>(is, "GOCC dims"));
    }
    const auto c = static_cast<int>(binio::get_uint<std::uint32_t>(is, "GOCC classes"));
    for (double& o : spec.origin) {
        o = binio::get_f32(is, "GOCC origin");
    }
    spec.voxel_size = binio::get_f32(is, "GOCC voxel size");
    const auto mode = binio::get_uint<std::uint8_t>(is, "GOCC mode");
    if (mode > 1) throw DataError("GOCC mode must be 0 or 1");
    try {
        spec.validate();
    } catch (const ContractError& e) {
        throw DataError(std::string("GOCC header: ") + e.what());
    }
    if (c < 2 || c > 256) throw DataError("GOCC class count out of range");
    OccupancyGrid g;
    if (mode == 0) {
        g = OccupancyGrid::make_labels(spec, c);
        if (!is.read(reinterpret_cast<char*>(g.labels.data()), static_cast<std::streamsize>(g.labels.size()))) {
            throw DataError("truncated GOCC labels");
        }
        for (auto l : g.labels) {
            if (l >= c) throw DataError("GOCC label out of range");
        }
    } else {
        g = OccupancyGrid::make_logits(spec, c);
        for (double& v : g.logits) {
            v = binio::get_f32(is, "GOCC logits");
        }
    }
    return g;
}

void save_occupancy(const std::filesystem::path& path, const OccupancyGrid& grid) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path.string());
    write_occupancy(os, grid);
}

OccupancyGrid load_occupancy(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path.string());
    return read_occupancy(is);
}

} // namespace occ::io
