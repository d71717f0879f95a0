// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "occ/error.hpp"
#include "occ/scene.hpp"

namespace occ::scene {
namespace {

Primitive box_at(const Vec3& center, const Vec3& size, int cls, double yaw = 0.0) {
    Primitive p;
    p.kind = ShapeKind::Box;
    p.pose.translation = center;
    p.pose.rotation = Quat::yaw(yaw);
    p.extent = size;
    p.class_id = cls;
    return p;
}

Primitive sphere_at(const Vec3& center, double r, int cls) {
    Primitive p;
    p.kind = ShapeKind::Sphere;
    p.pose.translation = center;
    p.extent = {r, r, r};
    p.class_id = cls;
    return p;
}

Primitive ground_at(double z, double size = 100.0) {
    Primitive p;
    p.kind = ShapeKind::Ground;
    p.pose.translation = {0.0, 0.0, z};
    p.extent = {size, size, 1.0};
    p.class_id = 1;
    return p;
}

TEST(GenerateScene, RecipeCountsPrimitives) {
    const auto world = generate_scene(0, SceneRecipe::parse("1 ground + 2 boxes"), GridSpec{});
    EXPECT_EQ(world.primitives.size(), 3u);
    EXPECT_TRUE(std::any_of(world.primitives.begin(), world.primitives.end(),
                            [](const Primitive& p) { return p.kind == ShapeKind::Ground; }));
}

TEST(GenerateScene, DeterministicPerSeed) {
    const auto a = generate_scene(42, SceneRecipe{}, GridSpec{});
    const auto b = generate_scene(42, SceneRecipe{}, GridSpec{});
    ASSERT_EQ(a.primitives.size(), b.primitives.size());
    for (std::size_t i = 0; i < a.primitives.size(); ++i) {
        const auto& p = a.primitives[i];
        const auto& q = b.primitives[i];
        EXPECT_EQ(p.kind, q.kind);
        EXPECT_EQ(p.class_id, q.class_id);
        EXPECT_EQ(p.extent, q.extent);
        EXPECT_EQ(p.pose.translation, q.pose.translation);
        EXPECT_EQ(p.pose.rotation.w, q.pose.rotation.w);
        EXPECT_EQ(p.pose.rotation.z, q.pose.rotation.z);
    }
}

TEST(GenerateScene, ZeroBoxExtentIsRejected) {
    SceneRecipe r;
    r.box_min = {0.0, 1.0, 1.0};
    EXPECT_THROW(generate_scene(0, r, GridSpec{}), ContractError);
    World w;
    w.primitives.push_back(box_at({0, 0, 0}, {0, 1, 1}, 2));
    EXPECT_THROW(w.validate(), ContractError);
}

TEST(GenerateScene, RecipeParseErrors) {
    EXPECT_THROW(SceneRecipe::parse(""), ContractError);
    EXPECT_THROW(SceneRecipe::parse("2 cones"), ContractError);
    const auto r = SceneRecipe::parse("1 ground + 3 boxes + 1 sphere");
    EXPECT_EQ(r.grounds, 1);
    EXPECT_EQ(r.boxes, 3);
    EXPECT_EQ(r.spheres, 1);
}

TEST(Rasterize, EmptyWorldIsAllEmpty) {
    const auto g = rasterize_ground_truth(World{}, GridSpec{});
    EXPECT_TRUE(std::all_of(g.labels.begin(), g.labels.end(), [](auto l) { return l == 0; }));
}

TEST(Rasterize, UnitBoxMatchesPointInBoxOracle) {
    GridSpec spec;
    spec.origin = {-2.0, -2.0, -2.0};
    spec.dims = {8, 8, 8};
    const Vec3 c = spec.center(4, 4, 4);
    World w;
    w.primitives.push_back(box_at(c, {1.0, 1.0, 1.0}, 3));
    const auto g = rasterize_ground_truth(w, spec);
    int labeled = 0;
    for (std::size_t v = 0; v < spec.num_voxels(); ++v) {
        const Vec3 p = spec.center(v);
        const bool in = std::abs(p[0] - c[0]) <= 0.5 && std::abs(p[1] - c[1]) <= 0.5 && std::abs(p[2] - c[2]) <= 0.5;
        EXPECT_EQ(g.labels[v], in ? 3 : 0) << v;
        labeled += in;
    }
    EXPECT_EQ(g.labels[spec.index(4, 4, 4)], 3);
    EXPECT_EQ(labeled, 27);
}

TEST(Rasterize, GroundPlaneFillsExactlyOneLayer) {
    GridSpec spec;
    spec.origin = {-2.0, -2.0, -0.5};
    spec.dims = {8, 8, 4};
    World w;
    w.primitives.push_back(ground_at(0.0));
    const auto g = rasterize_ground_truth(w, spec);
    for (std::size_t v = 0; v < spec.num_voxels(); ++v) {
        EXPECT_EQ(g.labels[v], spec.coords(v)[2] == 0 ? 1 : 0);
    }
}

TEST(Rasterize, LastPrimitiveWins) {
    GridSpec spec;
    spec.origin = {-2.0, -2.0, -2.0};
    spec.dims = {8, 8, 8};
    World w;
    w.primitives.push_back(box_at({0, 0, 0}, {1, 1, 1}, 2));
    w.primitives.push_back(box_at({0, 0, 0}, {1, 1, 1}, 4));
    const auto a = rasterize_ground_truth(w, spec);
    EXPECT_EQ(a.labels[spec.index(4, 4, 4)], 4);
    EXPECT_EQ(rasterize_ground_truth(w, spec).labels, a.labels);
    std::swap(w.primitives[0], w.primitives[1]);
    EXPECT_EQ(rasterize_ground_truth(w, spec).labels[spec.index(4, 4, 4)], 2);
}

TEST(Lidar, OccludedSphereReturnsNoPoints) {
    World w;
    w.primitives.push_back(box_at({5.0, 0.0, 0.0}, {1.0, 6.0, 6.0}, 2));
    w.primitives.push_back(sphere_at({9.0, 0.0, 0.0}, 1.0, 3));
    LidarPattern pat;
    pat.n_azimuth = 360;
    pat.elevations_deg = {10.0, 5.0, 0.0, -5.0, -10.0};
    const auto cloud = simulate_lidar(w, Pose{}, pat);
    EXPECT_GT(cloud.size(), 0u);
    for (const auto& p : cloud.points) {
        EXPECT_GT(std::abs(norm(p - Vec3{9.0, 0.0, 0.0}) - 1.0), 1e-6);
    }
}

TEST(Lidar, GroundPlaneRingAtPlaneHeight) {
    World w;
    w.primitives.push_back(ground_at(0.0));
    LidarPattern pat;
    pat.n_azimuth = 8;
    pat.elevations_deg = {-30.0};
    Pose sensor;
    sensor.translation = {1.0, 2.0, 1.5};
    const auto cloud = simulate_lidar(w, sensor, pat);
    ASSERT_EQ(cloud.size(), 8u);
    // Ray-plane oracle: range 1.5 / sin(30 deg) along each direction.
    const double range = 1.5 / std::sin(std::numbers::pi / 6.0);
    for (const auto& wp : cloud.world_points()) {
        EXPECT_NEAR(wp[2], 0.0, 1e-9);
        EXPECT_NEAR(norm(wp - sensor.translation), range, 1e-9);
    }
}

TEST(Lidar, EmptyWorldGivesEmptyCloud) {
    EXPECT_EQ(simulate_lidar(World{}, Pose{}, LidarPattern{}).size(), 0u);
}

TEST(Lidar, FirstHitPropertyByRayMarching) {
    const auto world = generate_scene(3, SceneRecipe{}, GridSpec{});
    Pose sensor;
    sensor.translation = {0.0, 0.0, 1.5};
    LidarPattern pat;
    pat.n_azimuth = 90;
    const auto cloud = simulate_lidar(world, sensor, pat);
    ASSERT_GT(cloud.size(), 100u);
    const auto pts = cloud.world_points();
    for (const auto& p : pts) {
        const Vec3 d = p - sensor.translation;
        const double len = norm(d);
        for (double s = 0.0; s < len - 1e-3; s += 0.01) {
            const Vec3 q = sensor.translation + (s / len) * d;
            for (const auto& prim : world.primitives) {
                ASSERT_FALSE(contains(prim, q)) << "ray passes through a primitive before its hit";
            }
        }
    }
}

TEST(Aggregate, SingleSweepIsFrameTransform) {
    const auto world = generate_scene(1, SceneRecipe{}, GridSpec{});
    const auto poses = sweep_poses(1, 0.6, 1.5);
    std::vector<PointCloud> sweeps{simulate_lidar(world, poses[0], LidarPattern{})};
    const auto agg = aggregate_sweeps(sweeps);
    const auto wp = sweeps[0].world_points();
    ASSERT_EQ(agg.size(), wp.size());
    for (std::size_t i = 0; i < wp.size(); ++i) EXPECT_EQ(agg.points[i], wp[i]);
}

TEST(Aggregate, IdenticalSweepsDoubleCount) {
    const auto world = generate_scene(1, SceneRecipe{}, GridSpec{});
    Pose pose;
    pose.translation = {0.0, 0.0, 1.5};
    const auto s = simulate_lidar(world, pose, LidarPattern{});
    std::vector<PointCloud> sweeps{s, s};
    const auto agg = aggregate_sweeps(sweeps);
    ASSERT_EQ(agg.size(), 2 * s.size());
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(agg.points[i], agg.points[i + s.size()]);
}

TEST(Aggregate, SweepsRevealFacesHiddenFromFirstSweep) {
    World w;
    w.primitives.push_back(ground_at(0.0));
    w.primitives.push_back(box_at({0.0, 4.0, 1.0}, {2.0, 2.0, 2.0}, 2));
    const auto poses = sweep_poses(20, 0.6, 1.5);
    std::vector<PointCloud> sweeps;
    for (const auto& p : poses) sweeps.push_back(simulate_lidar(w, p, LidarPattern{}));
    // The +x face (x = 1) faces away from the first sensor at x = -6.
    auto on_far_face = [](const Vec3& p) {
        return std::abs(p[0] - 1.0) < 1e-6 && p[1] > 3.0 && p[1] < 5.0 && p[2] > 0.0;
    };
    const auto first = sweeps[0].world_points();
    EXPECT_EQ(std::count_if(first.begin(), first.end(), on_far_face), 0);
    const auto agg = aggregate_sweeps(sweeps);
    EXPECT_GT(std::count_if(agg.points.begin(), agg.points.end(), on_far_face), 0);

    // Superset as a multiset, in order.
    std::size_t off = 0;
    for (const auto& s : sweeps) {
        const auto wp = s.world_points();
        for (std::size_t i = 0; i < wp.size(); ++i) {
            EXPECT_LE(std::sqrt(dist2(agg.points[off + i], wp[i])), 1e-9);
        }
        off += wp.size();
    }
    EXPECT_EQ(off, agg.size());
}

TEST(Render, EmptyWorldIsBlack) {
    const auto cams = default_cameras({0, 0, 1.5}, 2, 32);
    for (const auto& img : render_views(World{}, cams)) {
        for (double v : img.vec()) EXPECT_EQ(v, 0.0);
    }
}

TEST(Render, BoxFillingFrustumShowsItsColor) {
    World w;
    w.primitives.push_back(box_at({0.0, 0.0, 0.0}, {20.0, 20.0, 20.0}, 4));
    const auto cams = default_cameras({0, 0, 0}, 1, 32);
    const auto img = render_views(w, cams)[0];
    const auto col = class_color(4);
    for (std::size_t px = 0; px < 32 * 32; ++px) {
        const double shade = img[px * 3] / col[0];
        EXPECT_GT(shade, 0.0);
        EXPECT_LE(shade, 1.0);
        for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(img[px * 3 + ch], shade * col[ch], 1e-12);
    }
}

TEST(Render, PixelAtProjectedSurfacePointHasPaletteColor) {
    World w;
    w.primitives.push_back(sphere_at({0.0, 5.0, 1.5}, 1.0, 3));
    const auto cams = default_cameras({0, 0, 1.5}, 4, 64);
    const auto imgs = render_views(w, cams);
    // Find the camera looking at +y and project the sphere's nearest surface point.
    const Vec3 surface{0.0, 4.0, 1.5};
    bool checked = false;
    for (std::size_t v = 0; v < cams.size(); ++v) {
        const auto pc = cams[v].world_to_camera.apply(surface);
        if (pc[2] <= 0) continue;
        const double u = cams[v].fx * pc[0] / pc[2] + cams[v].cx;
        const double vv = cams[v].fy * pc[1] / pc[2] + cams[v].cy;
        if (u < 0 || vv < 0 || u >= 64 || vv >= 64) continue;
        const auto px = static_cast<std::size_t>(vv) * 64 + static_cast<std::size_t>(u);
        const auto col = class_color(3);
        const double shade = imgs[v][px * 3] / col[0];
        EXPECT_GT(shade, 0.0);
        for (int ch = 0; ch < 3; ++ch) EXPECT_NEAR(imgs[v][px * 3 + ch], shade * col[ch], 1e-12);
        checked = true;
    }
    EXPECT_TRUE(checked);
}

TEST(PointCloud, ValidateRejectsBadIntensity) {
    PointCloud c;
    c.points = {{0, 0, 0}};
    c.intensity = {1.5};
    EXPECT_THROW(c.validate(), DataError);
}

} // namespace
} // namespace occ::scene
