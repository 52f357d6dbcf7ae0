#include "raydf/config.hpp"

#include <fstream>
#include <sstream>

namespace raydf::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

std::string join(const std::vector<double>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw io_error("config line " + std::to_string(lineno) +
                     ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }

  std::string taken;  // keeps the last consumed value alive
  auto take = [&](const char* key) -> const std::string* {
    const auto it = kv.find(key);
    if (it == kv.end()) return nullptr;
    taken = it->second;
    kv.erase(it);
    return &taken;
  };
  auto num = [&](const char* key, double& dst) {
    if (const auto* v = take(key)) dst = std::stod(*v);
  };
  auto integer = [&](const char* key, int& dst) {
    if (const auto* v = take(key)) dst = std::stoi(*v);
  };
  auto boolean = [&](const char* key, bool& dst) {
    if (const auto* v = take(key)) dst = std::stoi(*v) != 0;
  };

  if (const auto* v = take("seed")) cfg.seed = std::stoull(*v);
  if (const auto* v = take("out")) cfg.out_dir = *v;
  if (const auto* v = take("scene.name")) cfg.scene_name = *v;
  for (int i = 0;; ++i) {
    const auto it = kv.find("scene.primitive." + std::to_string(i));
    if (it == kv.end()) break;
    cfg.scene_primitives.push_back(it->second);
    kv.erase(it);
  }
  num("scene.diameter", cfg.sphere_diameter);
  num("traj.radius", cfg.orbit_radius);
  if (const auto* v = take("traj.elevations_deg"))
    cfg.elevations_deg = parse_list(*v);
  integer("traj.azimuths", cfg.azimuths);
  integer("traj.test_every", cfg.test_every);
  integer("image.size", cfg.image_size);
  num("image.focal", cfg.focal);
  num("data.sparsity", cfg.sparsity);
  num("data.depth_noise", cfg.depth_noise_sigma);

  integer("classifier.epochs", cfg.classifier.epochs);
  integer("classifier.batch", cfg.classifier.batch_size);
  num("classifier.lr_max", cfg.classifier.lr_max);
  if (const auto* v = take("classifier.pairs"))
    cfg.classifier.pair_budget = std::stoull(*v);
  num("classifier.epsilon", cfg.classifier.epsilon);
  integer("classifier.hidden", cfg.classifier.hidden);
  integer("classifier.trunk_layers", cfg.classifier.trunk_layers);
  num("classifier.positive_weight", cfg.classifier.positive_weight);

  integer("distance.epochs", cfg.distance.epochs);
  integer("distance.batch", cfg.distance.batch_size);
  num("distance.lr_init", cfg.distance.lr_init);
  num("distance.lr_final", cfg.distance.lr_final);
  integer("distance.M", cfg.distance.M);
  if (const auto* v = take("distance.loss")) {
    if (*v == "l1") cfg.distance.norm = training::LossNorm::L1;
    else if (*v == "l2") cfg.distance.norm = training::LossNorm::L2;
    else throw io_error("distance.loss must be l1 or l2");
  }
  num("distance.noise", cfg.distance.noise_var);
  boolean("distance.threshold_scores", cfg.distance.threshold_scores);
  boolean("distance.radiance", cfg.distance.radiance);
  num("distance.radiance_weight", cfg.distance.radiance_weight);
  if (const auto* v = take("distance.hidden")) {
    const auto widths = parse_list(*v);
    int layers = (int)cfg.distance.hidden.size() + 1;
    if (widths.size() == 1) {
      cfg.distance.hidden.assign(layers - 1, (int)widths[0]);
    }
  }
  if (const auto* v = take("distance.layers")) {
    const int layers = std::stoi(*v);
    const int width = cfg.distance.hidden.empty() ? 256 : cfg.distance.hidden[0];
    cfg.distance.hidden.assign(std::max(1, layers - 1), width);
  }
  num("render.outlier_threshold", cfg.outlier_threshold);
  integer("eval.points", cfg.eval_points);
  integer("eval.pairs", cfg.eval_pairs);
  if (!kv.empty())
    throw io_error("unknown config key: " + kv.begin()->first);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw io_error("cannot open config: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

std::string config_to_text(const RunConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "seed = " << cfg.seed << '\n';
  os << "out = " << cfg.out_dir << '\n';
  os << "scene.name = " << cfg.scene_name << '\n';
  for (std::size_t i = 0; i < cfg.scene_primitives.size(); ++i)
    os << "scene.primitive." << i << " = " << cfg.scene_primitives[i] << '\n';
  os << "scene.diameter = " << cfg.sphere_diameter << '\n';
  os << "traj.radius = " << cfg.orbit_radius << '\n';
  os << "traj.elevations_deg = " << join(cfg.elevations_deg) << '\n';
  os << "traj.azimuths = " << cfg.azimuths << '\n';
  os << "traj.test_every = " << cfg.test_every << '\n';
  os << "image.size = " << cfg.image_size << '\n';
  os << "image.focal = " << cfg.focal << '\n';
  os << "data.sparsity = " << cfg.sparsity << '\n';
  os << "data.depth_noise = " << cfg.depth_noise_sigma << '\n';
  os << "classifier.epochs = " << cfg.classifier.epochs << '\n';
  os << "classifier.batch = " << cfg.classifier.batch_size << '\n';
  os << "classifier.lr_max = " << cfg.classifier.lr_max << '\n';
  os << "classifier.pairs = " << cfg.classifier.pair_budget << '\n';
  os << "classifier.epsilon = " << cfg.classifier.epsilon << '\n';
  os << "classifier.hidden = " << cfg.classifier.hidden << '\n';
  os << "classifier.trunk_layers = " << cfg.classifier.trunk_layers << '\n';
  os << "classifier.positive_weight = " << cfg.classifier.positive_weight
     << '\n';
  os << "distance.epochs = " << cfg.distance.epochs << '\n';
  os << "distance.batch = " << cfg.distance.batch_size << '\n';
  os << "distance.lr_init = " << cfg.distance.lr_init << '\n';
  os << "distance.lr_final = " << cfg.distance.lr_final << '\n';
  os << "distance.M = " << cfg.distance.M << '\n';
  os << "distance.loss = "
     << (cfg.distance.norm == training::LossNorm::L1 ? "l1" : "l2") << '\n';
  os << "distance.noise = " << cfg.distance.noise_var << '\n';
  os << "distance.threshold_scores = " << (cfg.distance.threshold_scores ? 1 : 0)
     << '\n';
  os << "distance.radiance = " << (cfg.distance.radiance ? 1 : 0) << '\n';
  os << "distance.radiance_weight = " << cfg.distance.radiance_weight << '\n';
  os << "distance.hidden = "
     << (cfg.distance.hidden.empty() ? 256 : cfg.distance.hidden[0]) << '\n';
  os << "distance.layers = " << cfg.distance.hidden.size() + 1 << '\n';
  os << "render.outlier_threshold = " << cfg.outlier_threshold << '\n';
  os << "eval.points = " << cfg.eval_points << '\n';
  os << "eval.pairs = " << cfg.eval_pairs << '\n';
  return os.str();
}

void save_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for writing: " + path);
  os << config_to_text(cfg);
}

scene::Scene build_scene(const RunConfig& cfg) {
  scene::Scene s;
  if (cfg.scene_primitives.empty()) {
    s = scene::make_scene(cfg.scene_name);
  } else {
    for (const auto& spec : cfg.scene_primitives) {
      std::stringstream ss(spec);
      std::string kind;
      ss >> kind;
      if (kind == "sphere") {
        scene::SpherePrim p{};
        ss >> p.center.x() >> p.center.y() >> p.center.z() >> p.radius;
        s.primitives.push_back(p);
      } else if (kind == "box") {
        scene::BoxPrim p{};
        ss >> p.min.x() >> p.min.y() >> p.min.z() >> p.max.x() >> p.max.y() >>
            p.max.z();
        s.primitives.push_back(p);
      } else if (kind == "plane") {
        scene::PlanePrim p{};
        ss >> p.normal.x() >> p.normal.y() >> p.normal.z() >> p.offset >>
            p.extent;
        p.normal.normalize();
        s.primitives.push_back(p);
      } else {
        throw io_error("unknown primitive kind: " + kind);
      }
      if (!ss) throw io_error("malformed primitive spec: " + spec);
    }
  }
  s.bounding = {Vec3::Zero(), cfg.sphere_diameter};
  if (!scene::scene_inside_bounds(s))
    throw std::runtime_error(
        "scene.diameter too small: scene does not fit inside the bounding "
        "sphere");
  return s;
}

std::vector<scene::PosedView> build_trajectory(const RunConfig& cfg) {
  BoundingSphere sphere{Vec3::Zero(), cfg.sphere_diameter};
  std::vector<double> elev_rad;
  for (double e : cfg.elevations_deg) elev_rad.push_back(e * EIGEN_PI / 180.0);
  auto views = scene::orbit_trajectory(sphere, cfg.orbit_radius, elev_rad,
                                       cfg.azimuths, cfg.focal, cfg.image_size,
                                       cfg.image_size, cfg.test_every);
  for (const auto& v : views)
    if ((v.camera.translation - sphere.center).norm() <= sphere.radius())
      throw std::runtime_error("traj.radius places cameras inside the sphere");
  return views;
}

}  // namespace raydf::config
