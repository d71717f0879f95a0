// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/pipeline.hpp"

#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "occ/error.hpp"
#include "occ/io.hpp"
#include "occ/ops.hpp"
#include "occ/spatial.hpp"

namespace occ::pipe {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    require(used == v.size() && !v.empty() && std::isfinite(x), "config " + key + ": not a number: '" + v + "'");
    return x;
}

long long to_int(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    long long x = 0;
    try {
        x = std::stoll(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    require(used == v.size() && !v.empty(), "config " + key + ": not an integer: '" + v + "'");
    return x;
}

int to_int32(const std::string& key, const std::string& v) {
    const long long x = to_int(key, v);
    require(x >= INT32_MIN && x <= INT32_MAX, "config " + key + ": out of range");
    return static_cast<int>(x);
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "on") return true;
    if (v == "false" || v == "0" || v == "off") return false;
    throw ContractError("config " + key + ": not a boolean: '" + v + "'");
}

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}
std::string fmt(int x) { return std::to_string(x); }
std::string fmt(bool x) { return x ? "true" : "false"; }

template <class T>
std::string fmt_list(const T& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ",";
        out += fmt(xs[i]);
    }
    return out;
}

struct Field {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

#define OCC_INT(path)                                                                             \
    Field {                                                                                       \
        [](const RunConfig& c) { return fmt(c.path); },                                           \
            [](RunConfig& c, const std::string& v) { c.path = to_int32(#path, v); }                \
    }
#define OCC_DOUBLE(path)                                                                          \
    Field {                                                                                       \
        [](const RunConfig& c) { return fmt(c.path); },                                           \
            [](RunConfig& c, const std::string& v) { c.path = to_double(#path, v); }               \
    }
#define OCC_BOOL(path)                                                                            \
    Field {                                                                                       \
        [](const RunConfig& c) { return fmt(c.path); },                                           \
            [](RunConfig& c, const std::string& v) { c.path = to_bool(#path, v); }                 \
    }

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        {"seed", {[](const RunConfig& c) { return std::to_string(c.seed); },
                  [](RunConfig& c, const std::string& v) {
                      const long long x = to_int("seed", v);
                      require(x >= 0, "config seed: must be >= 0");
                      c.seed = static_cast<std::uint64_t>(x);
                  }}},
        {"num_classes", OCC_INT(num_classes)},
        {"recipe", {[](const RunConfig& c) { return c.recipe; },
                    [](RunConfig& c, const std::string& v) {
                        (void)scene::SceneRecipe::parse(v);
                        c.recipe = v;
                    }}},
        {"grid.origin", {[](const RunConfig& c) { return fmt_list(c.grid.origin); },
                         [](RunConfig& c, const std::string& v) {
                             const auto items = split_list(v);
                             require(items.size() == 3, "config grid.origin: expected 3 values");
                             for (int a = 0; a < 3; ++a) c.grid.origin[a] = to_double("grid.origin", items[a]);
                         }}},
        {"grid.voxel_size", OCC_DOUBLE(grid.voxel_size)},
        {"grid.dims", {[](const RunConfig& c) { return fmt_list(c.grid.dims); },
                       [](RunConfig& c, const std::string& v) {
                           const auto items = split_list(v);
                           require(items.size() == 3, "config grid.dims: expected 3 values");
                           for (int a = 0; a < 3; ++a) c.grid.dims[a] = to_int32("grid.dims", items[a]);
                       }}},
        {"lidar.sweeps", OCC_INT(sweeps)},
        {"lidar.spacing", OCC_DOUBLE(sweep_spacing)},
        {"lidar.height", OCC_DOUBLE(sensor_height)},
        {"camera.views", OCC_INT(views)},
        {"camera.image_size", OCC_INT(image_size)},
        {"camera.height", OCC_DOUBLE(camera_height)},
        {"lcd.enabled", OCC_BOOL(lcd.enabled)},
        {"lcd.T", OCC_INT(lcd.T)},
        {"lcd.beta0", OCC_DOUBLE(lcd.beta0)},
        {"lcd.beta_T", OCC_DOUBLE(lcd.beta_T)},
        {"lcd.steps", OCC_INT(lcd.steps)},
        {"lcd.mode", {[](const RunConfig& c) {
                          return std::string(c.lcd.mode == lcd::SampleMode::Deterministic ? "deterministic"
                                                                                           : "ancestral");
                      },
                      [](RunConfig& c, const std::string& v) {
                          if (v == "deterministic") {
                              c.lcd.mode = lcd::SampleMode::Deterministic;
                          } else if (v == "ancestral") {
                              c.lcd.mode = lcd::SampleMode::Ancestral;
                          } else {
                              throw ContractError("config lcd.mode: expected deterministic or ancestral");
                          }
                      }}},
        {"lcd.n_out", OCC_INT(lcd.n_out)},
        {"lcd.epochs", OCC_INT(lcd.epochs)},
        {"lcd.iterations", OCC_INT(lcd.iterations)},
        {"lcd.batch", OCC_INT(lcd.batch)},
        {"lcd.lr", OCC_DOUBLE(lcd.lr)},
        {"lcd.warmup", OCC_INT(lcd.warmup)},
        {"lcd.layers", OCC_INT(lcd.mlp.layers)},
        {"lcd.hidden", OCC_INT(lcd.mlp.hidden)},
        {"lcd.knn", OCC_INT(lcd.mlp.knn)},
        {"init.N_G", OCC_INT(init.num_gaussians)},
        {"init.density_fraction", OCC_DOUBLE(init.density_fraction)},
        {"init.R_d", OCC_DOUBLE(init.suppress_radius)},
        {"init.scale_lo", OCC_DOUBLE(init.scale_lo)},
        {"init.scale_hi", OCC_DOUBLE(init.scale_hi)},
        {"gaf.d", OCC_INT(gaf.d)},
        {"gaf.d_pc", OCC_INT(gaf.d_pc)},
        {"gaf.strides", {[](const RunConfig& c) { return fmt_list(c.gaf.strides); },
                         [](RunConfig& c, const std::string& v) {
                             c.gaf.strides.clear();
                             for (const auto& s : split_list(v)) c.gaf.strides.push_back(to_int32("gaf.strides", s));
                         }}},
        {"gaf.R", {[](const RunConfig& c) { return fmt_list(c.gaf.radii); },
                   [](RunConfig& c, const std::string& v) {
                       c.gaf.radii.clear();
                       for (const auto& s : split_list(v)) c.gaf.radii.push_back(to_double("gaf.R", s));
                   }}},
        {"gaf.N_off", OCC_INT(gaf.n_off)},
        {"gaf.M", OCC_INT(gaf.codebook)},
        {"gaf.offset_hidden", OCC_INT(gaf.offset_hidden)},
        {"gaf.ffn_hidden", OCC_INT(gaf.ffn_hidden)},
        {"gaf.T_p", OCC_INT(gaf.max_points_per_voxel)},
        {"gaf.k", OCC_DOUBLE(gaf.k_geo)},
        {"gaf.gamma", OCC_DOUBLE(gaf.gamma)},
        {"gaf.kappa", OCC_DOUBLE(gaf.kappa)},
        {"gaf.delta_max", OCC_DOUBLE(gaf.delta_max)},
        {"gaf.s_min", OCC_DOUBLE(gaf.s_min)},
        {"gaf.iterations", OCC_INT(gaf.iterations)},
        {"gaf.ggs", OCC_BOOL(gaf.guided_sampling)},
        {"gaf.gvr", OCC_BOOL(gaf.vlad)},
        {"train.lr", OCC_DOUBLE(train.lr)},
        {"train.lr_min", OCC_DOUBLE(train.lr_min)},
        {"train.warmup", OCC_INT(train.warmup)},
        {"train.iters", OCC_INT(train.total_iters)},
        {"train.weight_decay", OCC_DOUBLE(train.weight_decay)},
        {"train.lovasz_weight", OCC_DOUBLE(train.lovasz_weight)},
        {"out.dir", {[](const RunConfig& c) { return c.out_dir.string(); },
                     [](RunConfig& c, const std::string& v) {
                         require(!v.empty(), "config out.dir: empty path");
                         c.out_dir = v;
                     }}},
    };
    return table;
}

#undef OCC_INT
#undef OCC_DOUBLE
#undef OCC_BOOL

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) { return Rng(root).split(tag)(); }

init::InitConfig init_config(const RunConfig& cfg) {
    init::InitConfig ic = cfg.init;
    ic.num_classes = cfg.num_classes;
    ic.seed = derive_seed(cfg.seed, "init");
    return ic;
}

gaf::GafConfig gaf_config(const RunConfig& cfg) {
    gaf::GafConfig gc = cfg.gaf;
    gc.num_classes = cfg.num_classes;
    return gc;
}

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
    const std::string prefix = std::string("stage ") + name + ": ";
    try {
        return f();
    } catch (const ContractError& e) {
        throw ContractError(prefix + e.what());
    } catch (const DataError& e) {
        throw DataError(prefix + e.what());
    } catch (const NumericError& e) {
        throw NumericError(prefix + e.what());
    } catch (const std::exception& e) {
        throw std::runtime_error(prefix + e.what());
    }
}

bool all_finite(const ad::Tensor& t) {
    for (double v : t.vec()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

} // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, f] : fields()) keys.push_back(k);
    return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto it = fields().find(key);
    require(it != fields().end(), "unknown config key '" + key + "'");
    it->second.set(*this, trim(value));
}

void RunConfig::apply_text(const std::string& text) {
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.resize(hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos, "config line " + std::to_string(lineno) + ": expected 'key = value'");
        set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
}

void RunConfig::apply_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    apply_text(ss.str());
}

std::map<std::string, std::string> RunConfig::entries() const {
    std::map<std::string, std::string> out;
    for (const auto& [k, f] : fields()) out[k] = f.get(*this);
    return out;
}

std::string RunConfig::canonical() const {
    std::string out;
    for (const auto& [k, v] : entries()) {
        if (k == "out.dir") continue;
        out += k + " = " + v + "\n";
    }
    return out;
}

std::string RunConfig::hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a64(canonical()));
    return buf;
}

void RunConfig::validate() const {
    grid.validate();
    require(num_classes >= 2 && num_classes <= 255, "num_classes must be in [2, 255]");
    (void)scene::SceneRecipe::parse(recipe);
    require(sweeps >= 1, "lidar.sweeps must be >= 1");
    require(sweep_spacing >= 0.0, "lidar.spacing must be >= 0");
    require(views >= 1, "camera.views must be >= 1");
    require(image_size >= 1, "camera.image_size must be >= 1");
    require(lcd.T >= 1, "lcd.T must be >= 1");
    require(lcd.beta0 > 0.0 && lcd.beta_T < 1.0 && lcd.beta0 <= lcd.beta_T, "lcd betas must satisfy 0 < beta0 <= beta_T < 1");
    require(lcd.steps >= 1 && lcd.steps <= lcd.T, "lcd.steps must be in [1, T]");
    require(lcd.n_out >= 0, "lcd.n_out must be >= 0");
    require(lcd.epochs >= 0 && lcd.iterations >= 0, "lcd epochs and iterations must be >= 0");
    require(lcd.batch >= 1, "lcd.batch must be >= 1");
    require(lcd.lr > 0.0, "lcd.lr must be > 0");
    require(lcd.warmup >= 0, "lcd.warmup must be >= 0");
    require(lcd.mlp.layers >= 2 && lcd.mlp.hidden >= 1 && lcd.mlp.knn >= 1, "lcd network sizes invalid");
    init_config(*this).validate();
    const gaf::GafConfig gc = gaf_config(*this);
    gc.validate();
    for (int s : gc.strides) {
        require(image_size % s == 0, "camera.image_size must be divisible by every gaf stride");
    }
    require(train.lr > 0.0 && train.lr_min >= 0.0 && train.lr_min <= train.lr, "train lr must satisfy 0 <= lr_min <= lr");
    require(train.warmup >= 0, "train.warmup must be >= 0");
    require(train.total_iters >= 0, "train.iters must be >= 0");
    require(train.weight_decay >= 0.0, "train.weight_decay must be >= 0");
    require(train.lovasz_weight >= 0.0, "train.lovasz_weight must be >= 0");
}

SceneData build_scene(const RunConfig& cfg) {
    SceneData d;
    d.world = scene::generate_scene(cfg.seed, scene::SceneRecipe::parse(cfg.recipe), cfg.grid, cfg.num_classes);
    d.gt = scene::rasterize_ground_truth(d.world, cfg.grid);
    const auto poses = scene::sweep_poses(cfg.sweeps, cfg.sweep_spacing, cfg.sensor_height);
    for (const auto& pose : poses) d.sweeps.push_back(scene::simulate_lidar(d.world, pose, scene::LidarPattern{}));
    const auto& mid = d.sweeps[d.sweeps.size() / 2];
    d.raw.points = mid.world_points();
    d.raw.intensity = mid.intensity;
    d.target = scene::aggregate_sweeps(d.sweeps);
    if (d.raw.size() == 0) throw DataError("the raw scan has no points");
    d.cameras = scene::default_cameras({0.0, 0.0, cfg.camera_height}, cfg.views, cfg.image_size);
    d.images = scene::render_views(d.world, d.cameras);
    return d;
}

scene::PointCloud complete_cloud(const RunConfig& cfg, const SceneData& data) {
    return complete_cloud(cfg, data.raw, data.target);
}

scene::PointCloud complete_with_oracle(const RunConfig& cfg, const scene::PointCloud& raw,
                                       const scene::PointCloud& target) {
    if (raw.size() == 0 || target.size() == 0) throw DataError("complete: empty input cloud");
    const lcd::NoiseSchedule sched = lcd::make_schedule(cfg.lcd.T, cfg.lcd.beta0, cfg.lcd.beta_T);
    lcd::OracleDenoiser oracle(target.world_points(), sched);
    const auto raw_pts = raw.world_points();
    lcd::Condition cond(raw_pts, raw.intensity);
    Rng rng = Rng(cfg.seed).split("lcd.sample");
    return lcd::reverse_sample(oracle, cond, sched, target.size(), cfg.lcd.steps, lcd::SampleMode::Deterministic, rng);
}

void save_gaussians(const std::filesystem::path& path, const splat::GaussianSet& set) {
    const auto t = splat::to_tensors(set);
    ad::ParamStore store;
    store.add("gaussians.mu", t.mu);
    store.add("gaussians.log_scale", t.log_scale);
    store.add("gaussians.rot", t.rot);
    store.add("gaussians.sem", t.sem);
    ad::save_checkpoint(path, store);
}

splat::GaussianSet load_gaussians(const std::filesystem::path& path) {
    const ad::ParamStore store = ad::load_checkpoint(path);
    for (const char* name : {"gaussians.mu", "gaussians.log_scale", "gaussians.rot", "gaussians.sem"}) {
        if (!store.contains(name)) throw DataError(path.string() + ": missing tensor " + name);
    }
    try {
        return splat::from_tensors(store.at("gaussians.mu"), store.at("gaussians.log_scale"), store.at("gaussians.rot"),
                                   store.at("gaussians.sem"));
    } catch (const ContractError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

init::InitResult init_from_cloud(const RunConfig& cfg, const scene::PointCloud& cloud) {
    if (cloud.size() == 0) throw DataError("init-gaussians: empty cloud");
    return init::init_gaussians(cloud.world_points(), init_config(cfg));
}

scene::PointCloud complete_cloud(const RunConfig& cfg, const scene::PointCloud& raw_cloud,
                                 const scene::PointCloud& target_cloud) {
    if (raw_cloud.size() == 0 || target_cloud.size() == 0) throw DataError("complete: empty input cloud");
    scene::PointCloud raw_world = raw_cloud;
    raw_world.points = raw_cloud.world_points();
    raw_world.pose = Pose{};
    if (!cfg.lcd.enabled) return raw_world;
    const auto target_pts = target_cloud.world_points();
    const lcd::NoiseSchedule sched = lcd::make_schedule(cfg.lcd.T, cfg.lcd.beta0, cfg.lcd.beta_T);
    lcd::MlpDenoiser net(sched, cfg.lcd.mlp, derive_seed(cfg.seed, "lcd.net"));
    lcd::TrainConfig tc;
    tc.epochs = cfg.lcd.epochs;
    tc.iterations = cfg.lcd.iterations;
    tc.batch = static_cast<std::size_t>(cfg.lcd.batch);
    tc.lr = cfg.lcd.lr;
    tc.warmup = cfg.lcd.warmup;
    tc.seed = derive_seed(cfg.seed, "lcd.train");
    const std::vector<lcd::TrainPair> corpus{{raw_world.points, target_pts}};
    lcd::train_denoiser(net, corpus, tc);
    lcd::Condition cond(raw_world.points, raw_world.intensity);
    Rng rng = Rng(cfg.seed).split("lcd.sample");
    const std::size_t n_out = cfg.lcd.n_out > 0 ? static_cast<std::size_t>(cfg.lcd.n_out) : 4 * raw_world.size();
    return lcd::reverse_sample(net, cond, sched, n_out, cfg.lcd.steps, cfg.lcd.mode, rng);
}

TrainingSet make_training_set(const RunConfig& cfg, const scene::PointCloud& completed,
                              const splat::GaussianSet& gaussians, const SceneData& data) {
    TrainingSet ts;
    ts.voxels = gaf::voxelize(completed.world_points(), completed.intensity, cfg.grid, cfg.gaf.max_points_per_voxel,
                              cfg.gaf.d_pc);
    if (ts.voxels.size() == 0) throw DataError("no completed point falls inside the grid");
    ts.rules = gaf::build_rulebook(ts.voxels);
    ts.initial = splat::to_tensors(gaussians);
    ts.images = data.images;
    ts.cameras = data.cameras;
    ts.labels = data.gt.to_labels();
    return ts;
}

namespace {

gaf::GaussianVars refined_vars(const ad::Bound& p, const TrainingSet& ts, const RunConfig& cfg) {
    ad::Tape& tape = p.tape();
    const gaf::GafConfig gc = gaf_config(cfg);
    gaf::GafInputs in;
    in.voxels = &ts.voxels;
    in.voxel_features = gaf::sparse_encode(tape.constant(ts.voxels.features), p, ts.rules);
    for (const auto& img : ts.images) in.pyramids.push_back(gaf::encode_image(img, p, gc));
    in.cameras = ts.cameras;
    const gaf::GaussianVars g{tape.constant(ts.initial.mu), tape.constant(ts.initial.log_scale),
                              tape.constant(ts.initial.rot), tape.constant(ts.initial.sem)};
    return gaf::gaf_forward(g, in, p, gc);
}

} // namespace

ad::Var forward_logits(const ad::Bound& p, const TrainingSet& ts, const RunConfig& cfg) {
    const gaf::GaussianVars out = refined_vars(p, ts, cfg);
    return splat::splat(out.mu, out.log_scale, out.rot, out.sem, cfg.grid);
}

TrainResult train(const RunConfig& cfg, const TrainingSet& ts, ad::ParamStore params) {
    TrainResult res;
    obj::AdamWConfig oc;
    oc.lr = cfg.train.lr;
    oc.weight_decay = cfg.train.weight_decay;
    obj::AdamW opt(oc);
    obj::LrSchedule sched;
    sched.peak = cfg.train.lr;
    sched.lr_min = cfg.train.lr_min;
    sched.warmup_iters = cfg.train.warmup;
    sched.total_iters = std::max(1, cfg.train.total_iters);
    for (int it = 0; it < cfg.train.total_iters; ++it) {
        ad::Tape tape;
        ad::Bound p(tape, params);
        ad::Var logits = forward_logits(p, ts, cfg);
        ad::Var loss = obj::cross_entropy(logits, ts.labels);
        if (cfg.train.lovasz_weight > 0.0) {
            loss = ad::add(loss, ad::scale(obj::lovasz_softmax(ad::softmax(logits), ts.labels), cfg.train.lovasz_weight));
        }
        const double value = loss.value().item();
        if (!std::isfinite(value)) {
            throw NumericError("non-finite training loss at iteration " + std::to_string(it));
        }
        tape.backward(loss);
        const auto grads = p.grads();
        for (const auto& [name, g] : grads) {
            if (!all_finite(g)) {
                throw NumericError("non-finite gradient for " + name + " at iteration " + std::to_string(it));
            }
        }
        opt.step(params, grads, obj::lr_at(it, sched));
        res.losses.push_back(value);
    }
    res.params = std::move(params);
    return res;
}

splat::GaussianSet refine(const ad::ParamStore& params, const TrainingSet& ts, const RunConfig& cfg) {
    ad::Tape tape;
    ad::Bound p(tape, params);
    const gaf::GaussianVars out = refined_vars(p, ts, cfg);
    return splat::from_tensors(out.mu.value(), out.log_scale.value(), out.rot.value(), out.sem.value());
}

OccupancyGrid predict(const ad::ParamStore& params, const TrainingSet& ts, const RunConfig& cfg) {
    ad::Tape tape;
    ad::Bound p(tape, params);
    const ad::Tensor& logits = forward_logits(p, ts, cfg).value();
    OccupancyGrid g = OccupancyGrid::make_labels(cfg.grid, cfg.num_classes);
    OccupancyGrid lg = OccupancyGrid::make_logits(cfg.grid, cfg.num_classes);
    lg.logits = logits.vec();
    for (double v : lg.logits) {
        if (!std::isfinite(v)) throw NumericError("non-finite predicted logit");
    }
    g.labels = lg.to_labels();
    return g;
}

Metrics evaluate(const OccupancyGrid& pred, const OccupancyGrid& gt) {
    if (!(pred.spec == gt.spec)) throw DataError("prediction and ground truth grids differ");
    if (pred.num_classes != gt.num_classes) throw DataError("prediction and ground truth class counts differ");
    const auto a = pred.to_labels();
    const auto b = gt.to_labels();
    Metrics m;
    m.iou = obj::iou(a, b);
    m.miou = obj::miou(a, b, gt.num_classes);
    m.per_class = obj::per_class_iou(a, b, gt.num_classes);
    return m;
}

std::string RunReport::to_json() const {
    auto metrics_json = [](const Metrics& m) {
        nlohmann::json j;
        j["iou"] = m.iou;
        j["miou"] = m.miou;
        nlohmann::json pc = nlohmann::json::object();
        for (const auto& c : m.per_class) pc[std::to_string(c.class_id)] = c.iou;
        j["per_class_iou"] = pc;
        return j;
    };
    nlohmann::json j = metrics_json(metrics);
    j["untrained"] = metrics_json(untrained);
    j["chamfer_raw"] = chamfer_raw;
    j["chamfer_completed"] = chamfer_completed;
    j["final_loss"] = final_loss;
    j["gaussians"] = gaussians;
    j["config_hash"] = config_hash;
    j["wall_ms"] = wall_ms;
    return j.dump(2) + "\n";
}

RunReport run_pipeline(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    stage("config", [&] { cfg.validate(); });
    std::filesystem::create_directories(cfg.out_dir);
    const auto& dir = cfg.out_dir;

    RunReport rep;
    rep.config_hash = cfg.hash();
    const SceneData data = stage("gen-scene", [&] { return build_scene(cfg); });
    stage("simulate-lidar", [&] {
        io::save_occupancy(dir / "gt.gocc", data.gt);
        io::save_cloud(dir / "raw.gopc", data.raw);
        io::save_cloud(dir / "target.gopc", data.target);
    });
    const scene::PointCloud completed = stage("complete", [&] { return complete_cloud(cfg, data.raw, data.target); });
    stage("complete", [&] {
        io::save_cloud(dir / "completed.gopc", completed);
        rep.chamfer_raw = chamfer(data.raw.points, data.target.points);
        rep.chamfer_completed = chamfer(completed.points, data.target.points);
    });
    const init::InitResult init = stage("init-gaussians", [&] { return init_from_cloud(cfg, completed); });
    rep.gaussians = init.gaussians.size();
    const TrainingSet ts = stage("init-gaussians", [&] { return make_training_set(cfg, completed, init.gaussians, data); });
    ad::ParamStore params = gaf::init_params(gaf_config(cfg), derive_seed(cfg.seed, "gaf.params"));
    rep.untrained = stage("predict", [&] { return evaluate(predict(params, ts, cfg), data.gt); });
    TrainResult trained = stage("train", [&] { return train(cfg, ts, std::move(params)); });
    rep.final_loss = trained.losses.empty() ? 0.0 : trained.losses.back();
    stage("train", [&] { ad::save_checkpoint(dir / "model.gowt", trained.params); });
    const OccupancyGrid pred = stage("predict", [&] { return predict(trained.params, ts, cfg); });
    stage("predict", [&] { io::save_occupancy(dir / "pred.gocc", pred); });
    rep.metrics = stage("eval", [&] { return evaluate(pred, data.gt); });
    rep.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    stage("eval", [&] {
        std::ofstream out(dir / "report.json");
        if (!out) throw DataError("cannot write " + (dir / "report.json").string());
        out << rep.to_json();
    });
    return rep;
}

} // namespace occ::pipe
