// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/scene.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "occ/error.hpp"
#include "occ/rng.hpp"

namespace occ::scene {

namespace {

constexpr double kRayEps = 1e-9;

struct Box {
    Vec3 center;
    Mat3 rot;  // local-to-world
    Vec3 half;
};

Box as_box(const Primitive& p) {
    if (p.kind == ShapeKind::Ground) {
        const auto& t = p.pose.translation;
        return {{t[0], t[1], t[2] - 0.5 * p.extent[2]},
                quat_to_rot(Quat{}),
                {0.5 * p.extent[0], 0.5 * p.extent[1], 0.5 * p.extent[2]}};
    }
    return {p.pose.translation, quat_to_rot(p.pose.rotation), 0.5 * p.extent};
}

std::optional<double> intersect_box(const Box& b, const Vec3& origin, const Vec3& dir) {
    const Vec3 o = mat_t_vec(b.rot, origin - b.center);
    const Vec3 d = mat_t_vec(b.rot, dir);
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (std::abs(d[a]) < 1e-15) {
            if (o[a] < -b.half[a] || o[a] > b.half[a]) {
                return std::nullopt;
            }
            continue;
        }
        double ta = (-b.half[a] - o[a]) / d[a];
        double tb = (b.half[a] - o[a]) / d[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t0 > t1) {
        return std::nullopt;
    }
    if (t0 > kRayEps) return t0;
    if (t1 > kRayEps) return t1;
    return std::nullopt;
}

std::optional<double> intersect_sphere(const Vec3& c, double r, const Vec3& origin, const Vec3& dir) {
    const Vec3 oc = origin - c;
    const double a = dot(dir, dir);
    const double b = 2.0 * dot(oc, dir);
    const double cc = dot(oc, oc) - r * r;
    const double disc = b * b - 4.0 * a * cc;
    if (disc < 0.0) {
        return std::nullopt;
    }
    const double sq = std::sqrt(disc);
    const double t0 = (-b - sq) / (2.0 * a);
    const double t1 = (-b + sq) / (2.0 * a);
    if (t0 > kRayEps) return t0;
    if (t1 > kRayEps) return t1;
    return std::nullopt;
}

int parse_count_kind(const std::string& item, SceneRecipe& r, bool& seen_any) {
    std::istringstream is(item);
    int n = -1;
    std::string kind;
    if (!(is >> n >> kind) || n < 0) {
        throw ContractError("bad scene recipe item: '" + item + "'");
    }
    std::transform(kind.begin(), kind.end(), kind.begin(), [](unsigned char c) { return std::tolower(c); });
    if (kind == "ground" || kind == "grounds") {
        r.grounds = n;
    } else if (kind == "box" || kind == "boxes") {
        r.boxes = n;
    } else if (kind == "sphere" || kind == "spheres") {
        r.spheres = n;
    } else {
        throw ContractError("unknown primitive kind in recipe: '" + kind + "'");
    }
    seen_any = true;
    return n;
}

} // namespace

SceneRecipe SceneRecipe::parse(const std::string& text) {
    SceneRecipe r;
    r.grounds = r.boxes = r.spheres = 0;
    bool seen = false;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto plus = text.find('+', start);
        const std::string item = text.substr(start, plus == std::string::npos ? std::string::npos : plus - start);
        if (item.find_first_not_of(" \t") != std::string::npos) {
            parse_count_kind(item, r, seen);
        }
        if (plus == std::string::npos) break;
        start = plus + 1;
    }
    require(seen, "empty scene recipe");
    return r;
}

void World::validate() const {
    require(num_classes >= 2 && num_classes <= 256, "world num_classes must be in [2, 256]");
    for (const auto& p : primitives) {
        require(p.extent[0] > 0.0 && p.extent[1] > 0.0 && p.extent[2] > 0.0, "primitive extents must be > 0");
        require(p.class_id >= 1 && p.class_id < num_classes, "primitive class_id must be in 1..|C|-1");
    }
}

World generate_scene(std::uint64_t seed, const SceneRecipe& recipe, const GridSpec& grid, int num_classes) {
    grid.validate();
    require(recipe.grounds >= 0 && recipe.boxes >= 0 && recipe.spheres >= 0, "recipe counts must be >= 0");
    require(recipe.box_min[0] > 0 && recipe.box_min[1] > 0 && recipe.box_min[2] > 0,
            "recipe box extents must be > 0");
    require(recipe.sphere_radius_min > 0, "recipe sphere radius must be > 0");
    for (int a = 0; a < 3; ++a) {
        require(recipe.box_max[a] >= recipe.box_min[a], "recipe box_max must be >= box_min");
    }
    require(recipe.sphere_radius_max >= recipe.sphere_radius_min, "recipe sphere radius range inverted");

    const Vec3 lo = grid.origin;
    const Vec3 hi = grid.extent_max();
    const double reach = recipe.placement_half_extent +
                         std::max(0.5 * std::hypot(recipe.box_max[0], recipe.box_max[1]) * (recipe.boxes > 0),
                                  recipe.sphere_radius_max * (recipe.spheres > 0));
    require(-reach >= lo[0] && reach <= hi[0] && -reach >= lo[1] && reach <= hi[1],
            "scene recipe bounds do not fit inside the grid extent");
    require(recipe.ground_height + recipe.box_max[2] <= hi[2] || recipe.boxes == 0,
            "scene recipe boxes are taller than the grid");
    require(recipe.corridor_half_width < recipe.placement_half_extent,
            "corridor leaves no room for primitives");

    World w;
    w.num_classes = num_classes;
    Rng rng = Rng(seed).split("scene");
    const int n_sem = num_classes - 1;
    auto object_class = [&]() {
        return n_sem <= 1 ? 1 : 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n_sem - 1)));
    };
    auto place = [&](double footprint) -> std::pair<double, double> {
        const double h = recipe.placement_half_extent;
        for (int attempt = 0; attempt < 10000; ++attempt) {
            const double x = rng.uniform(-h, h);
            const double y = rng.uniform(-h, h);
            if (std::abs(y) - footprint >= recipe.corridor_half_width) {
                return {x, y};
            }
        }
        throw ContractError("could not place primitive outside the sensor corridor");
    };

    for (int g = 0; g < recipe.grounds; ++g) {
        Primitive p;
        p.kind = ShapeKind::Ground;
        p.pose.translation = {0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), recipe.ground_height};
        p.extent = {2.0 * (hi[0] - lo[0]), 2.0 * (hi[1] - lo[1]), 1.0};
        p.class_id = 1;
        w.primitives.push_back(p);
    }
    for (int b = 0; b < recipe.boxes; ++b) {
        Primitive p;
        p.kind = ShapeKind::Box;
        for (int a = 0; a < 3; ++a) {
            p.extent[a] = rng.uniform(recipe.box_min[a], recipe.box_max[a]);
        }
        const auto [x, y] = place(0.5 * std::hypot(p.extent[0], p.extent[1]));
        p.pose.rotation = Quat::yaw(rng.uniform(0.0, std::numbers::pi));
        p.pose.translation = {x, y, recipe.ground_height + 0.5 * p.extent[2]};
        p.class_id = object_class();
        w.primitives.push_back(p);
    }
    for (int s = 0; s < recipe.spheres; ++s) {
        Primitive p;
        p.kind = ShapeKind::Sphere;
        const double r = rng.uniform(recipe.sphere_radius_min, recipe.sphere_radius_max);
        p.extent = {r, r, r};
        const auto [x, y] = place(r);
        p.pose.translation = {x, y, recipe.ground_height + r};
        p.class_id = object_class();
        w.primitives.push_back(p);
    }
    w.validate();
    return w;
}

bool contains(const Primitive& prim, const Vec3& p) {
    if (prim.kind == ShapeKind::Sphere) {
        return dist2(p, prim.pose.translation) <= prim.extent[0] * prim.extent[0];
    }
    const Box b = as_box(prim);
    const Vec3 l = mat_t_vec(b.rot, p - b.center);
    return std::abs(l[0]) <= b.half[0] && std::abs(l[1]) <= b.half[1] && std::abs(l[2]) <= b.half[2];
}

std::optional<double> intersect(const Primitive& prim, const Vec3& origin, const Vec3& dir) {
    if (prim.kind == ShapeKind::Sphere) {
        return intersect_sphere(prim.pose.translation, prim.extent[0], origin, dir);
    }
    return intersect_box(as_box(prim), origin, dir);
}

std::optional<Hit> cast_ray(const World& world, const Vec3& origin, const Vec3& dir, double max_t) {
    std::optional<Hit> best;
    for (std::size_t i = 0; i < world.primitives.size(); ++i) {
        const auto t = intersect(world.primitives[i], origin, dir);
        if (t && *t <= max_t && (!best || *t <= best->t)) {
            best = Hit{*t, i};
        }
    }
    return best;
}

OccupancyGrid rasterize_ground_truth(const World& world, const GridSpec& grid) {
    auto out = OccupancyGrid::make_labels(grid, world.num_classes);
    const auto n = static_cast<std::ptrdiff_t>(grid.num_voxels());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t v = 0; v < n; ++v) {
        const Vec3 c = grid.center(static_cast<std::size_t>(v));
        std::uint8_t label = 0;
        for (const auto& p : world.primitives) {
            if (contains(p, c)) {
                label = static_cast<std::uint8_t>(p.class_id);
            }
        }
        out.labels[static_cast<std::size_t>(v)] = label;
    }
    return out;
}

void PointCloud::validate() const {
    require(points.size() == intensity.size(), "point cloud needs one intensity per point");
    for (std::size_t i = 0; i < points.size(); ++i) {
        for (double c : points[i]) {
            if (!std::isfinite(c)) throw DataError("non-finite point coordinate");
        }
        if (!(intensity[i] >= 0.0 && intensity[i] <= 1.0)) {
            throw DataError("intensity outside [0, 1]");
        }
    }
}

std::vector<Vec3> PointCloud::world_points() const {
    const Mat3 r = quat_to_rot(pose.rotation);
    std::vector<Vec3> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        out[i] = mat_vec(r, points[i]) + pose.translation;
    }
    return out;
}

double class_reflectivity(int class_id) { return std::clamp(0.1 + 0.15 * class_id, 0.0, 1.0); }

PointCloud simulate_lidar(const World& world, const Pose& sensor_pose, const LidarPattern& pattern) {
    require(pattern.max_range > 0.0, "lidar max_range must be > 0");
    require(pattern.n_azimuth >= 1, "lidar needs at least one azimuth");
    const Mat3 r = quat_to_rot(sensor_pose.rotation);
    const std::size_t n_el = pattern.elevations_deg.size();
    const std::size_t n_rays = static_cast<std::size_t>(pattern.n_azimuth) * n_el;
    std::vector<std::optional<Hit>> hits(n_rays);
    std::vector<Vec3> dirs(n_rays);
    for (std::size_t i = 0; i < n_rays; ++i) {
        const double az = 2.0 * std::numbers::pi * static_cast<double>(i / n_el) / pattern.n_azimuth;
        const double el = pattern.elevations_deg[i % n_el] * std::numbers::pi / 180.0;
        dirs[i] = {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n_rays); ++i) {
        const auto k = static_cast<std::size_t>(i);
        hits[k] = cast_ray(world, sensor_pose.translation, mat_vec(r, dirs[k]), pattern.max_range);
    }
    PointCloud pc;
    pc.pose = sensor_pose;
    for (std::size_t i = 0; i < n_rays; ++i) {
        if (!hits[i]) continue;
        pc.points.push_back(hits[i]->t * dirs[i]);
        pc.intensity.push_back(class_reflectivity(world.primitives[hits[i]->primitive].class_id));
    }
    return pc;
}

PointCloud aggregate_sweeps(std::span<const PointCloud> clouds) {
    PointCloud out;
    for (const auto& c : clouds) {
        const auto wp = c.world_points();
        out.points.insert(out.points.end(), wp.begin(), wp.end());
        out.intensity.insert(out.intensity.end(), c.intensity.begin(), c.intensity.end());
    }
    return out;
}

std::vector<Pose> sweep_poses(int count, double spacing, double height) {
    require(count >= 1, "sweep count must be >= 1");
    std::vector<Pose> poses(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        poses[static_cast<std::size_t>(k)].translation = {(k - count / 2) * spacing, 0.0, height};
    }
    return poses;
}

void Camera::validate() const {
    require(fx > 0 && fy > 0, "camera focal lengths must be > 0");
    require(width >= 1 && height >= 1, "camera image size must be positive");
    require(cx >= 0 && cx < width && cy >= 0 && cy < height, "camera principal point outside the image");
}

std::vector<Camera> default_cameras(const Vec3& position, int count, int image_size) {
    require(count >= 1 && image_size >= 1, "need at least one camera and a positive image size");
    std::vector<Camera> cams;
    for (int c = 0; c < count; ++c) {
        const double yaw = 2.0 * std::numbers::pi * c / count;
        const Vec3 fwd{std::cos(yaw), std::sin(yaw), 0.0};
        const Vec3 right{std::sin(yaw), -std::cos(yaw), 0.0};
        const Vec3 down{0.0, 0.0, -1.0};
        // Columns of camera-to-world rotation are the camera axes in world coordinates.
        const Mat3 r_cw{{{right[0], down[0], fwd[0]}, {right[1], down[1], fwd[1]}, {right[2], down[2], fwd[2]}}};
        // Recover a quaternion from the rotation matrix (trace method; matrices here are proper rotations).
        const double tr = r_cw[0][0] + r_cw[1][1] + r_cw[2][2];
        Quat q;
        if (tr > 0) {
            const double s = 2.0 * std::sqrt(1.0 + tr);
            q = {0.25 * s, (r_cw[2][1] - r_cw[1][2]) / s, (r_cw[0][2] - r_cw[2][0]) / s, (r_cw[1][0] - r_cw[0][1]) / s};
        } else if (r_cw[0][0] > r_cw[1][1] && r_cw[0][0] > r_cw[2][2]) {
            const double s = 2.0 * std::sqrt(1.0 + r_cw[0][0] - r_cw[1][1] - r_cw[2][2]);
            q = {(r_cw[2][1] - r_cw[1][2]) / s, 0.25 * s, (r_cw[0][1] + r_cw[1][0]) / s, (r_cw[0][2] + r_cw[2][0]) / s};
        } else if (r_cw[1][1] > r_cw[2][2]) {
            const double s = 2.0 * std::sqrt(1.0 + r_cw[1][1] - r_cw[0][0] - r_cw[2][2]);
            q = {(r_cw[0][2] - r_cw[2][0]) / s, (r_cw[0][1] + r_cw[1][0]) / s, 0.25 * s, (r_cw[1][2] + r_cw[2][1]) / s};
        } else {
            const double s = 2.0 * std::sqrt(1.0 + r_cw[2][2] - r_cw[0][0] - r_cw[1][1]);
            q = {(r_cw[1][0] - r_cw[0][1]) / s, (r_cw[0][2] + r_cw[2][0]) / s, (r_cw[1][2] + r_cw[2][1]) / s, 0.25 * s};
        }
        Camera cam;
        cam.width = cam.height = image_size;
        cam.fx = cam.fy = 0.5 * image_size;  // tan(45 deg) = 1
        cam.cx = cam.cy = 0.5 * image_size;
        cam.world_to_camera = Pose{q.normalized(), position}.inverse();
        cams.push_back(cam);
    }
    return cams;
}

std::array<double, 3> class_color(int class_id) {
    static constexpr std::array<std::array<double, 3>, 6> palette{{
        {0.0, 0.0, 0.0},
        {0.55, 0.55, 0.55},
        {0.9, 0.2, 0.2},
        {0.2, 0.8, 0.3},
        {0.2, 0.35, 0.95},
        {0.95, 0.85, 0.2},
    }};
    if (class_id >= 0 && class_id < static_cast<int>(palette.size())) {
        return palette[static_cast<std::size_t>(class_id)];
    }
    const auto h = Rng::mix(static_cast<std::uint64_t>(class_id));
    return {0.2 + 0.8 * static_cast<double>(h & 0xFF) / 255.0, 0.2 + 0.8 * static_cast<double>((h >> 8) & 0xFF) / 255.0,
            0.2 + 0.8 * static_cast<double>((h >> 16) & 0xFF) / 255.0};
}

std::vector<ad::Tensor> render_views(const World& world, std::span<const Camera> cameras) {
    std::vector<ad::Tensor> images;
    for (const auto& cam : cameras) {
        cam.validate();
        const Pose c2w = cam.camera_to_world();
        const Mat3 r = quat_to_rot(c2w.rotation);
        const auto w = static_cast<std::size_t>(cam.width);
        const auto h = static_cast<std::size_t>(cam.height);
        ad::Tensor img({h, w, 3});
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t row = 0; row < static_cast<std::ptrdiff_t>(h); ++row) {
            for (std::size_t col = 0; col < w; ++col) {
                // Unnormalized direction with camera-frame z = 1, so the ray parameter is depth.
                const Vec3 d_cam{(static_cast<double>(col) + 0.5 - cam.cx) / cam.fx,
                                 (static_cast<double>(row) + 0.5 - cam.cy) / cam.fy, 1.0};
                const auto hit = cast_ray(world, c2w.translation, mat_vec(r, d_cam), 1e6);
                if (!hit) continue;
                const auto color = class_color(world.primitives[hit->primitive].class_id);
                const double shade = 1.0 / (1.0 + 0.03 * hit->t);
                const std::size_t base = (static_cast<std::size_t>(row) * w + col) * 3;
                for (int ch = 0; ch < 3; ++ch) {
                    img[base + static_cast<std::size_t>(ch)] = color[static_cast<std::size_t>(ch)] * shade;
                }
            }
        }
        images.push_back(std::move(img));
    }
    return images;
}

} // namespace occ::scene
