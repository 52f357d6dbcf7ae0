#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "raydf/config.hpp"
#include "raydf/dataset.hpp"
#include "raydf/eval.hpp"
#include "raydf/geometry.hpp"
#include "raydf/rng.hpp"
#include "raydf/scene.hpp"
#include "raydf/training.hpp"

namespace fs = std::filesystem;
using namespace raydf;

namespace {

// FNV-1a, used for the reproducibility manifest
std::string file_checksum(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::uint64_t h = 1469598103934665603ull;
  char c;
  while (is.get(c)) {
    h ^= (unsigned char)c;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

struct DirLock {
  fs::path path;
  explicit DirLock(const fs::path& dir) : path(dir / ".lock") {
    fs::create_directories(dir);
    std::FILE* f = std::fopen(path.c_str(), "wx");
    if (!f)
      throw std::runtime_error("output directory is locked by another run: " +
                               path.string());
    std::fclose(f);
  }
  ~DirLock() { std::error_code ec; fs::remove(path, ec); }
};

struct Workspace {
  config::RunConfig cfg;
  fs::path out;

  fs::path scan_path(bool test, int i) const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%03d.scan", test ? "test" : "train", i);
    return out / buf;
  }
};

std::vector<DepthScan> load_scans(const Workspace& ws, bool test) {
  std::vector<DepthScan> scans;
  for (int i = 0;; ++i) {
    const fs::path p = ws.scan_path(test, i);
    if (!fs::exists(p)) break;
    DepthScan s = dataset::read_scan(p.string());
    s.id = (std::uint32_t)i;
    scans.push_back(std::move(s));
  }
  if (scans.empty())
    throw io_error("no " + std::string(test ? "test" : "train") +
                   " scans in " + ws.out.string() + "; run generate first");
  return scans;
}

int cmd_generate(Workspace& ws) {
  const auto scn = config::build_scene(ws.cfg);
  const auto views = config::build_trajectory(ws.cfg);
  fs::create_directories(ws.out);
  DirLock lock(ws.out);

  std::vector<std::string> files;
  int n_train = 0, n_test = 0;
  std::vector<DepthScan> train_scans;
  for (const auto& view : views) {
    DepthScan scan = scene::render_depth_scan(
        scn, view.camera, ws.cfg.depth_noise_sigma,
        mix_seed(ws.cfg.seed, 0xDE9 + n_train + n_test));
    int& counter = view.is_test ? n_test : n_train;
    scan.id = (std::uint32_t)counter;
    const fs::path p = ws.scan_path(view.is_test, counter++);
    dataset::write_scan(p.string(), scan);
    files.push_back(p.filename().string());
    if (!view.is_test) train_scans.push_back(std::move(scan));
  }

  const auto store = dataset::convert_scans(train_scans, scn.bounding,
                                            ws.cfg.sparsity,
                                            mix_seed(ws.cfg.seed, 0xDA7A));
  dataset::write_store((ws.out / "store.bin").string(), store);
  files.push_back("store.bin");
  // the effective config lives inside the output directory, so the run is
  // relocatable: serialize it with out = .
  config::RunConfig effective = ws.cfg;
  effective.out_dir = ".";
  config::save_config((ws.out / "config_effective.txt").string(), effective);
  files.push_back("config_effective.txt");

  std::ofstream manifest(ws.out / "manifest.txt");
  for (const auto& f : files)
    manifest << f << ' ' << file_checksum(ws.out / f) << '\n';

  std::cout << "generated " << n_train << " train + " << n_test
            << " test scans, " << store.records.size() << " samples\n";
  return 0;
}

training::ClassifierTrainResult run_stage1(const Workspace& ws) {
  const auto scans = load_scans(ws, false);
  const BoundingSphere sphere{Vec3::Zero(), ws.cfg.sphere_diameter};
  auto pairs = dataset::build_visibility_pairs(
      scans, sphere, ws.cfg.classifier.epsilon, ws.cfg.classifier.pair_budget,
      mix_seed(ws.cfg.seed, 0x9A125));
  training::ClassifierConfig cc = ws.cfg.classifier;
  cc.seed = mix_seed(ws.cfg.seed, 0xC1F);
  auto result = training::train_classifier(pairs, cc);
  training::save_classifier((ws.out / "classifier.ckpt").string(),
                            result.classifier);
  std::cout << "stage1: pairs=" << pairs.size()
            << " pos_frac=" << result.metrics.positive_fraction
            << " held-out accuracy=" << result.metrics.accuracy
            << "% F1=" << result.metrics.f1 << "%\n";
  return result;
}

double held_out_ade(const Workspace& ws, const nn::MlpF& net) {
  const auto test_scans = load_scans(ws, true);
  const BoundingSphere sphere{Vec3::Zero(), ws.cfg.sphere_diameter};
  double sum = 0.0;
  for (const auto& scan : test_scans) sum += eval::ade_cm(net, scan, sphere);
  return sum / (double)test_scans.size();
}

int run_stage2(const Workspace& ws) {
  const auto store = dataset::read_store((ws.out / "store.bin").string());
  training::DistanceConfig dc = ws.cfg.distance;
  dc.seed = mix_seed(ws.cfg.seed, 0xD15);
  std::ofstream log(ws.out / "train_log.txt");
  dc.log = &log;

  training::Classifier clf;
  training::VisibilityScorer scorer;
  if (dc.M > 0) {
    const fs::path cp = ws.out / "classifier.ckpt";
    if (!fs::exists(cp))
      throw std::runtime_error(
          "MissingClassifier: distance stage with M > 0 requires " +
          cp.string());
    clf = training::load_classifier(cp.string());
    scorer = training::make_classifier_scorer(clf);
  }

  std::vector<Eigen::Vector3f> colors;
  if (dc.radiance) {
    // recover per-record albedo from the analytic scene
    const auto scn = config::build_scene(ws.cfg);
    colors.reserve(store.records.size());
    for (const auto& rec : store.records)
      colors.push_back(scene::albedo_at(
                           scn, dataset::denormalize_point(rec.point,
                                                           store.sphere),
                           1e-4)
                           .cast<float>());
  }

  auto result = training::train_distance(store, dc.M > 0 ? &scorer : nullptr,
                                         dc, dc.radiance ? &colors : nullptr);
  nn::save_checkpoint((ws.out / "distance.ckpt").string(), result.model.net);
  if (result.model.radiance)
    nn::save_checkpoint((ws.out / "radiance.ckpt").string(),
                        *result.model.radiance);

  const double ade = held_out_ade(ws, result.model.net);
  std::cout << "stage2: final train loss=" << result.epoch_loss.back()
            << " held-out ADE=" << ade << " cm\n";
  return 0;
}

int cmd_train(Workspace& ws, const std::string& stage) {
  DirLock lock(ws.out);
  if (stage == "classifier" || stage == "both") run_stage1(ws);
  if (stage == "distance" || stage == "both") return run_stage2(ws);
  if (stage != "classifier" && stage != "distance" && stage != "both")
    throw io_error("--stage must be classifier, distance or both");
  return 0;
}

int cmd_render(Workspace& ws, const std::string& checkpoint,
               const std::string& pose, int size) {
  const auto net = nn::load_checkpoint(
      checkpoint.empty() ? (ws.out / "distance.ckpt").string() : checkpoint);
  const BoundingSphere sphere{Vec3::Zero(), ws.cfg.sphere_diameter};
  fs::create_directories(ws.out);

  std::vector<Camera> cams;
  if (!pose.empty()) {
    std::stringstream ss(pose);
    Vec3 p;
    char comma;
    ss >> p.x() >> comma >> p.y() >> comma >> p.z();
    if (!ss) throw io_error("--pose expects x,y,z");
    const int res = size > 0 ? size : ws.cfg.image_size;
    cams.push_back(scene::look_at(p, sphere.center,
                                  ws.cfg.focal * res / ws.cfg.image_size, res,
                                  res));
  } else {
    for (const auto& view : config::build_trajectory(ws.cfg))
      if (view.is_test) cams.push_back(view.camera);
  }

  std::vector<eval::RenderedView> views;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    views.push_back(
        eval::render_view(net, cams[i], sphere, ws.cfg.outlier_threshold));
    const double dt = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    const auto& view = views.back();
    std::cout << "view " << i << ": " << view.width << "x" << view.height
              << ", evaluations=" << view.eval_count << ", wall-clock=" << dt
              << " s\n";

    char name[32];
    std::snprintf(name, sizeof(name), "render_%03zu", i);
    std::vector<Eigen::MatrixXf> channels(4);
    channels[0] = view.distance.cast<float>();
    for (int c = 0; c < 3; ++c) {
      channels[c + 1].resize(view.height, view.width);
      for (int u = 0; u < view.height; ++u)
        for (int v = 0; v < view.width; ++v)
          channels[c + 1](u, v) =
              (float)view.normals[u * view.width + v][c];
    }
    eval::write_raster((ws.out / (std::string(name) + ".raster")).string(),
                       channels);
    eval::write_pgm_preview((ws.out / (std::string(name) + ".pgm")).string(),
                            view.depth);
  }
  eval::export_pointcloud(views, (ws.out / "render.ply").string());
  return 0;
}

int cmd_eval(Workspace& ws, const std::string& checkpoint) {
  const auto net = nn::load_checkpoint(
      checkpoint.empty() ? (ws.out / "distance.ckpt").string() : checkpoint);
  const BoundingSphere sphere{Vec3::Zero(), ws.cfg.sphere_diameter};
  const auto test_scans = load_scans(ws, true);

  double ade_sum = 0.0;
  std::vector<eval::RenderedView> views;
  for (const auto& scan : test_scans) {
    views.push_back(eval::render_view(net, scan.camera, sphere,
                                      ws.cfg.outlier_threshold));
    ade_sum += eval::ade_cm(views.back(), scan, sphere);
  }
  const double ade = ade_sum / (double)test_scans.size();

  // outlier-cleaned predicted cloud vs points sampled on the true surface
  const auto scn = config::build_scene(ws.cfg);
  auto pred_pts = eval::collect_points(views);
  std::vector<Vec3> pred;
  const std::size_t stride =
      std::max<std::size_t>(1, pred_pts.size() / (std::size_t)ws.cfg.eval_points);
  for (std::size_t i = 0; i < pred_pts.size(); i += stride)
    pred.push_back(pred_pts[i].first);
  const auto gt_pts = scene::sample_surface_points(
      scn, ws.cfg.eval_points, mix_seed(ws.cfg.seed, 0xCD));
  const auto [cd_mean, cd_median] = eval::chamfer_grid(pred, gt_pts);

  double acc = -1.0, f1 = -1.0;
  const fs::path cp = ws.out / "classifier.ckpt";
  if (fs::exists(cp)) {
    const auto clf = training::load_classifier(cp.string());
    const auto pairs = dataset::build_visibility_pairs(
        test_scans, sphere, ws.cfg.classifier.epsilon,
        (std::size_t)ws.cfg.eval_pairs, mix_seed(ws.cfg.seed, 0xE7A1));
    std::vector<float> scores;
    std::vector<int> labels;
    for (std::size_t b = 0; b < pairs.size(); b += 8192) {
      const std::size_t e = std::min(b + (std::size_t)8192, pairs.size());
      training::MatrixF r1(4, (Eigen::Index)(e - b)), r2(4, (Eigen::Index)(e - b)),
          pt(3, (Eigen::Index)(e - b));
      for (std::size_t i = b; i < e; ++i) {
        r1.col((Eigen::Index)(i - b)) = pairs[i].ray1;
        r2.col((Eigen::Index)(i - b)) = pairs[i].ray2;
        pt.col((Eigen::Index)(i - b)) = pairs[i].point1;
      }
      const auto s = training::classifier_forward(clf, r1, r2, pt);
      for (Eigen::Index i = 0; i < s.cols(); ++i) {
        scores.push_back(s(0, i));
        labels.push_back(pairs[b + (std::size_t)i].label);
      }
    }
    std::tie(acc, f1) = eval::classifier_metrics(scores, labels);
  }

  std::ostringstream report;
  report << "ADE_cm = " << ade << '\n';
  report << "CD_mean = " << cd_mean << '\n';
  report << "CD_median = " << cd_median << '\n';
  if (acc >= 0.0) {
    report << "Accuracy_pct = " << acc << '\n';
    report << "F1_pct = " << f1 << '\n';
  }
  std::ofstream(ws.out / "metrics.txt") << report.str();
  std::cout << report.str();
  return 0;
}

int cmd_ablate(Workspace& ws, const std::string& sweep) {
  fs::create_directories(ws.out);
  DirLock lock(ws.out);
  const auto scn = config::build_scene(ws.cfg);
  const auto views = config::build_trajectory(ws.cfg);
  std::vector<DepthScan> train_scans, test_scans;
  for (const auto& v : views) {
    DepthScan scan = scene::render_depth_scan(scn, v.camera);
    auto& dst = v.is_test ? test_scans : train_scans;
    scan.id = (std::uint32_t)dst.size();
    dst.push_back(std::move(scan));
  }
  const BoundingSphere sphere = scn.bounding;

  // shared data and (when needed) a shared classifier
  const auto store = dataset::convert_scans(train_scans, sphere,
                                            ws.cfg.sparsity,
                                            mix_seed(ws.cfg.seed, 0xDA7A));
  training::Classifier clf;
  training::VisibilityScorer scorer;
  const bool needs_classifier = sweep != "no-classifier" || true;
  if (needs_classifier) {
    auto pairs = dataset::build_visibility_pairs(
        train_scans, sphere, ws.cfg.classifier.epsilon,
        ws.cfg.classifier.pair_budget, mix_seed(ws.cfg.seed, 0x9A125));
    training::ClassifierConfig cc = ws.cfg.classifier;
    cc.seed = mix_seed(ws.cfg.seed, 0xC1F);
    clf = training::train_classifier(pairs, cc).classifier;
    scorer = training::make_classifier_scorer(clf);
  }

  auto run_variant = [&](training::DistanceConfig dc,
                         const dataset::SampleStore& st) {
    dc.seed = mix_seed(ws.cfg.seed, 0xD15);
    auto result = training::train_distance(st, dc.M > 0 ? &scorer : nullptr, dc);
    double ade = 0.0;
    for (const auto& scan : test_scans)
      ade += eval::ade_cm(result.model.net, scan, sphere);
    return ade / (double)test_scans.size();
  };

  std::ostringstream table;
  table << std::left << std::setw(24) << "variant" << "ADE (cm)\n";
  auto row = [&](const std::string& name, double ade) {
    table << std::left << std::setw(24) << name << ade << '\n';
  };

  training::DistanceConfig base = ws.cfg.distance;
  if (sweep == "no-classifier") {
    training::DistanceConfig off = base;
    off.M = 0;
    row("w/o classifier (M=0)", run_variant(off, store));
    row("full", run_variant(base, store));
  } else if (sweep == "M") {
    for (int m : {10, 20, 40}) {
      training::DistanceConfig dc = base;
      dc.M = m;
      row("M=" + std::to_string(m), run_variant(dc, store));
    }
  } else if (sweep == "noise") {
    for (double s2 : {0.0, 0.1, 0.5, 1.0}) {
      training::DistanceConfig dc = base;
      dc.noise_var = s2;
      std::ostringstream name;
      name << "noise s2=" << s2;
      row(name.str(), run_variant(dc, store));
    }
  } else if (sweep == "sparsity") {
    for (double sp : {0.01, 0.05, 0.1, 1.0}) {
      const auto st = dataset::convert_scans(train_scans, sphere, sp,
                                             mix_seed(ws.cfg.seed, 0xDA7A));
      std::ostringstream name;
      name << "sparsity=" << sp;
      row(name.str(), run_variant(base, st));
    }
  } else if (sweep == "loss") {
    for (auto norm : {training::LossNorm::L1, training::LossNorm::L2}) {
      training::DistanceConfig dc = base;
      dc.norm = norm;
      row(norm == training::LossNorm::L1 ? "l1" : "l2",
          run_variant(dc, store));
    }
  } else {
    throw io_error(
        "--sweep must be one of: no-classifier, M, noise, sparsity, loss");
  }

  std::ofstream(ws.out / ("ablate_" + sweep + ".txt")) << table.str();
  std::cout << table.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ray-surface distance field pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path, out_dir, stage = "both", checkpoint, sweep, pose;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int size = 0;
  app.add_option("--config", config_path, "config file (dotted keys)");
  app.add_option("--out", out_dir, "output directory");
  app.add_option_function<std::uint64_t>(
         "--seed", [&](std::uint64_t s) { seed = s; seed_set = true; },
         "global seed");

  auto* generate = app.add_subcommand("generate", "render scans + sample store");
  auto* train = app.add_subcommand("train", "run training stages");
  train->add_option("--stage", stage, "classifier | distance | both");
  auto* render = app.add_subcommand("render", "render views from a checkpoint");
  render->add_option("--checkpoint", checkpoint,
                     "distance checkpoint (default: <out>/distance.ckpt)");
  render->add_option("--pose", pose, "camera position x,y,z");
  render->add_option("--size", size, "override raster size");
  auto* evalc = app.add_subcommand("eval", "metric report on test scans");
  evalc->add_option("--checkpoint", checkpoint, "distance checkpoint");
  auto* ablate = app.add_subcommand("ablate", "run an ablation sweep");
  ablate->add_option("--sweep", sweep,
                     "no-classifier | M | noise | sparsity | loss")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    Workspace ws;
    if (!config_path.empty()) ws.cfg = config::load_config(config_path);
    if (seed_set) ws.cfg.seed = seed;
    if (!out_dir.empty()) ws.cfg.out_dir = out_dir;
    ws.out = ws.cfg.out_dir;

    if (generate->parsed()) return cmd_generate(ws);
    if (train->parsed()) return cmd_train(ws, stage);
    if (render->parsed()) return cmd_render(ws, checkpoint, pose, size);
    if (evalc->parsed()) return cmd_eval(ws, checkpoint);
    if (ablate->parsed()) return cmd_ablate(ws, sweep);
    return 1;
  } catch (const io_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    std::cerr << "error: " << msg << '\n';
    if (msg.find("NonFinite") != std::string::npos) return 3;
    return 2;
  }
}
