// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "occ/geom.hpp"
#include "occ/grid.hpp"
#include "occ/tensor.hpp"

namespace occ::scene {

enum class ShapeKind { Box, Sphere, Ground };

/// Box: full edge lengths centered at the pose. Sphere: radius in extent[0].
/// Ground: horizontal slab whose top face sits at pose.translation.z, with xy
/// sizes extent[0..1] and thickness extent[2]; rotation is ignored.
struct Primitive {
    ShapeKind kind = ShapeKind::Box;
    Pose pose;
    Vec3 extent{1.0, 1.0, 1.0};
    int class_id = 1;
};

/// Class 0 is reserved for empty space.
struct World {
    std::vector<Primitive> primitives;
    int num_classes = 6;

    void validate() const;
};

/// Counts per primitive kind, plus placement bounds. Parsed from text such as
/// "1 ground + 2 boxes + 1 sphere".
struct SceneRecipe {
    int grounds = 1;
    int boxes = 6;
    int spheres = 2;
    double placement_half_extent = 7.5;  // |x|, |y| bound for primitive centers
    double corridor_half_width = 2.5;    // keep |y| < this clear for the sensor path
    Vec3 box_min{1.0, 1.0, 0.8};
    Vec3 box_max{3.0, 3.0, 2.5};
    double sphere_radius_min = 0.5;
    double sphere_radius_max = 1.2;
    double ground_height = 0.0;

    static SceneRecipe parse(const std::string& text);
};

World generate_scene(std::uint64_t seed, const SceneRecipe& recipe, const GridSpec& grid, int num_classes = 6);

bool contains(const Primitive& prim, const Vec3& p);
/// Smallest ray parameter t > 1e-9 with origin + t * dir on the surface.
std::optional<double> intersect(const Primitive& prim, const Vec3& origin, const Vec3& dir);

struct Hit {
    double t = 0.0;
    std::size_t primitive = 0;
};
/// First hit along the ray within max_t; ties resolve to the later primitive.
std::optional<Hit> cast_ray(const World& world, const Vec3& origin, const Vec3& dir, double max_t);

/// Each voxel gets the class of the last-listed primitive containing its center, else 0.
OccupancyGrid rasterize_ground_truth(const World& world, const GridSpec& grid);

struct PointCloud {
    std::vector<Vec3> points;
    std::vector<double> intensity;
    Pose pose;  // local-to-world

    std::size_t size() const { return points.size(); }
    void validate() const;
    std::vector<Vec3> world_points() const;
};

struct LidarPattern {
    int n_azimuth = 180;
    std::vector<double> elevations_deg{2.0, 0.0, -2.0, -4.0, -6.0, -8.0, -11.0, -15.0, -20.0, -26.0};
    double max_range = 30.0;
};

/// Return intensity for a class (material reflectivity), in [0, 1].
double class_reflectivity(int class_id);

/// One point per ray with a first hit, in the sensor frame; pose records sensor-to-world.
PointCloud simulate_lidar(const World& world, const Pose& sensor_pose, const LidarPattern& pattern);

/// World-frame concatenation of all sweeps; identity pose.
PointCloud aggregate_sweeps(std::span<const PointCloud> clouds);

/// K sensor poses on a straight line along +x at the given height; sweep K/2 sits at x = 0.
std::vector<Pose> sweep_poses(int count, double spacing, double height);

/// Pinhole camera, OpenCV axes (x right, y down, z forward).
struct Camera {
    double fx = 128.0, fy = 128.0, cx = 128.0, cy = 128.0;
    Pose world_to_camera;
    int width = 256, height = 256;

    void validate() const;
    Pose camera_to_world() const { return world_to_camera.inverse(); }
};

/// `count` cameras at `position`, yaw evenly spaced, 90 degree horizontal field of view.
std::vector<Camera> default_cameras(const Vec3& position, int count, int image_size);

std::array<double, 3> class_color(int class_id);

/// Per-camera RGB image as a [H, W, 3] tensor with values in [0, 1].
std::vector<ad::Tensor> render_views(const World& world, std::span<const Camera> cameras);

} // namespace occ::scene
