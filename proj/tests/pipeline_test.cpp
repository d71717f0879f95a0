// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "occ/error.hpp"
#include "occ/io.hpp"
#include "occ/pipeline.hpp"
#include "occ/spatial.hpp"

namespace occ::pipe {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("occsplat_pipeline_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunConfig tiny() {
    RunConfig c;
    c.recipe = "1 ground + 3 boxes + 1 spheres";
    c.sweeps = 4;
    c.image_size = 64;
    c.views = 2;
    c.lcd.iterations = 5;
    c.lcd.steps = 2;
    c.init.num_gaussians = 64;
    c.gaf.d = 8;
    c.gaf.d_pc = 8;
    c.gaf.codebook = 4;
    c.gaf.ffn_hidden = 16;
    c.train.total_iters = 3;
    c.train.warmup = 1;
    return c;
}

TEST(Config, SetAndCanonicalRoundTrip) {
    RunConfig a;
    a.set("gaf.M", "16");
    a.set("grid.dims", "20, 20, 4");
    a.set("lcd.mode", "ancestral");
    a.set("gaf.ggs", "false");
    EXPECT_EQ(a.gaf.codebook, 16);
    EXPECT_EQ(a.grid.dims[0], 20);
    EXPECT_EQ(a.lcd.mode, lcd::SampleMode::Ancestral);
    EXPECT_FALSE(a.gaf.guided_sampling);
    RunConfig b;
    b.apply_text(a.canonical());
    EXPECT_EQ(a.canonical(), b.canonical());
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_NE(a.hash(), RunConfig{}.hash());
}

TEST(Config, TextCommentsAndOverrideOrder) {
    RunConfig c;
    c.apply_text("# comment\n\ntrain.lr = 1e-3  # trailing\ntrain.lr = 2e-3\n");
    EXPECT_EQ(c.train.lr, 2e-3);
}

TEST(Config, UnknownKeyAndBadValuesAreContractErrors) {
    RunConfig c;
    EXPECT_THROW(c.set("gaf.bogus", "1"), ContractError);
    EXPECT_THROW(c.set("gaf.M", "abc"), ContractError);
    EXPECT_THROW(c.set("gaf.ggs", "maybe"), ContractError);
    EXPECT_THROW(c.apply_text("no equals sign\n"), ContractError);
    c.set("init.N_G", "0");
    EXPECT_THROW(c.validate(), ContractError);
}

TEST(Config, HashIgnoresOutDirAndCoversEveryKey) {
    RunConfig a, b;
    b.out_dir = "elsewhere";
    EXPECT_EQ(a.hash(), b.hash());
    EXPECT_EQ(a.hash().size(), 16u);
    const auto entries = a.entries();
    for (const auto& k : config_keys()) {
        if (k == "out.dir") continue;
        EXPECT_NE(a.canonical().find(k + " = "), std::string::npos) << k;
        EXPECT_TRUE(entries.count(k)) << k;
    }
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
}

TEST(Config, ShippedPresetsParse) {
    const fs::path dir = fs::path(OCC_SOURCE_DIR) / "configs";
    RunConfig desk;
    desk.apply_file(dir / "desk.cfg");
    desk.validate();
    EXPECT_EQ(desk.hash(), RunConfig{}.hash());
    for (const char* name : {"paper_nuscenes.cfg", "paper_kitti360.cfg"}) {
        RunConfig p;
        p.apply_file(dir / name);
        EXPECT_NO_THROW(p.validate()) << name;
    }
    RunConfig nus;
    nus.apply_file(dir / "paper_nuscenes.cfg");
    EXPECT_EQ(nus.grid.dims, (std::array<int, 3>{200, 200, 16}));
    EXPECT_EQ(nus.init.num_gaussians, 25600);
}

TEST(Config, MissingFileIsDataError) {
    RunConfig c;
    EXPECT_THROW(c.apply_file("/nonexistent/occsplat.cfg"), DataError);
}

TEST(Pipeline, ReportsAreIdenticalAcrossRunsExceptWallTime) {
    RunConfig c = tiny();
    c.out_dir = fresh_dir("det_a");
    auto a = run_pipeline(c);
    c.out_dir = fresh_dir("det_b");
    auto b = run_pipeline(c);
    EXPECT_GE(a.metrics.iou, 0.0);
    EXPECT_LE(a.metrics.iou, 1.0);
    a.wall_ms = b.wall_ms = 0.0;
    EXPECT_EQ(a.to_json(), b.to_json());
}

TEST(Pipeline, ArtifactsAreByteIdenticalPerSeed) {
    RunConfig c = tiny();
    const fs::path da = fresh_dir("bytes_a"), db = fresh_dir("bytes_b");
    c.out_dir = da;
    (void)run_pipeline(c);
    c.out_dir = db;
    (void)run_pipeline(c);
    for (const char* f : {"gt.gocc", "raw.gopc", "target.gopc", "completed.gopc", "model.gowt", "pred.gocc"}) {
        const auto x = slurp(da / f);
        EXPECT_FALSE(x.empty()) << f;
        EXPECT_EQ(x, slurp(db / f)) << f;
    }
    const auto report = slurp(da / "report.json");
    EXPECT_NE(report.find("\"config_hash\""), std::string::npos);
    EXPECT_NE(report.find("\"per_class_iou\""), std::string::npos);
}

TEST(Pipeline, LcdDisabledUsesRawScan) {
    RunConfig c = tiny();
    c.lcd.enabled = false;
    c.out_dir = fresh_dir("nolcd");
    const auto rep = run_pipeline(c);
    EXPECT_EQ(rep.chamfer_raw, rep.chamfer_completed);
    EXPECT_EQ(slurp(c.out_dir / "raw.gopc"), slurp(c.out_dir / "completed.gopc"));
}

TEST(Pipeline, OracleCompletionWithOneStepReturnsTarget) {
    RunConfig c = tiny();
    c.lcd.steps = 1;
    const auto data = build_scene(c);
    const auto out = complete_with_oracle(c, data.raw, data.target);
    ASSERT_EQ(out.size(), data.target.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, std::sqrt(dist2(out.points[i], data.target.points[i])));
    EXPECT_LE(worst, 1e-9);
}

TEST(Pipeline, StageFailureNamesTheStage) {
    RunConfig c = tiny();
    c.out_dir = fresh_dir("fail");
    c.recipe = "1 widget";
    try {
        (void)run_pipeline(c);
        FAIL() << "expected a stage error";
    } catch (const ContractError& e) {
        EXPECT_NE(std::string(e.what()).find("stage "), std::string::npos) << e.what();
    }
}

TEST(Pipeline, GaussianFilesRoundTrip) {
    RunConfig c = tiny();
    const auto data = build_scene(c);
    const auto init = init_from_cloud(c, data.raw);
    const fs::path p = fresh_dir("gauss") / "g.gowt";
    save_gaussians(p, init.gaussians);
    const auto back = load_gaussians(p);
    ASSERT_EQ(back.size(), init.gaussians.size());
    EXPECT_EQ(back.num_classes, init.gaussians.num_classes);
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back.mu[i], init.gaussians.mu[i]);
        for (int a = 0; a < 3; ++a) EXPECT_NEAR(back.scale[i][a], init.gaussians.scale[i][a], 1e-12 * back.scale[i][a]);
    }
}

TEST(Pipeline, EvaluateIdenticalGridsIsOne) {
    RunConfig c = tiny();
    const auto data = build_scene(c);
    const auto m = evaluate(data.gt, data.gt);
    EXPECT_EQ(m.iou, 1.0);
    EXPECT_EQ(m.miou, 1.0);
}

} // namespace
} // namespace occ::pipe
