// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <iosfwd>

#include "occ/grid.hpp"
#include "occ/scene.hpp"

namespace occ::io {

// GOPC binary: magic "GOPC", u32 count, pose as 7 x f32 (tx ty tz qw qx qy qz),
// then count x (x, y, z, intensity) f32, little-endian. Coordinates are stored
// single precision, so only f32-representable clouds round-trip exactly.
void write_cloud_binary(std::ostream& os, const scene::PointCloud& cloud);
scene::PointCloud read_cloud_binary(std::istream& is);

// ASCII: optional "pose: tx ty tz qw qx qy qz" sidecar line, '#' comments, one
// "x y z intensity" per line. Values are printed with round-trip precision.
void write_cloud_ascii(std::ostream& os, const scene::PointCloud& cloud);
scene::PointCloud read_cloud_ascii(std::istream& is);

/// Picks the format from the extension: ".gopc" binary, anything else ASCII.
void save_cloud(const std::filesystem::path& path, const scene::PointCloud& cloud);
scene::PointCloud load_cloud(const std::filesystem::path& path);

// GOCC: magic "GOCC", u32 X, Y, Z, C, f32 origin x 3, f32 voxel_size, u8 mode
// (0 = labels, 1 = logits), then labels as u8 or logits as f32 (class fastest),
// voxels in x-major order.
void write_occupancy(std::ostream& os, const OccupancyGrid& grid);
OccupancyGrid read_occupancy(std::istream& is);
void save_occupancy(const std::filesystem::path& path, const OccupancyGrid& grid);
OccupancyGrid load_occupancy(const std::filesystem::path& path);

} // namespace occ::io
