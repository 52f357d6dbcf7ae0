#pragma once

#include <map>
#include <string>
#include <vector>

#include "raydf/scene.hpp"
#include "raydf/training.hpp"

namespace raydf::config {

/// One experiment: scene, trajectory, raster size and both stage configs.
/// Defaults reproduce the reference desk-scale experiment.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "run";

  std::string scene_name = "two-spheres";       // catalog name, or empty
  std::vector<std::string> scene_primitives;    // explicit primitive specs
  double sphere_diameter = 2.5;

  double orbit_radius = 2.0;
  std::vector<double> elevations_deg = {-20.0, 10.0, 35.0};
  int azimuths = 10;
  int test_every = 3;

  int image_size = 64;
  double focal = 64.0;
  double sparsity = 1.0;
  double depth_noise_sigma = 0.0;

  training::ClassifierConfig classifier;
  training::DistanceConfig distance;

  double outlier_threshold = 5.0;
  int eval_points = 10000;    // per point set for the Chamfer distance
  int eval_pairs = 20000;     // labeled pairs for classifier metrics
};

/// Parses the dotted-key plain-text format ("a.b = value", '#' comments).
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

/// Serializes every effective key; load_config(save) reproduces the config.
std::string config_to_text(const RunConfig& cfg);
void save_config(const std::string& path, const RunConfig& cfg);

/// Scene from the config (catalog name or explicit primitives) with the
/// configured bounding sphere. Throws when the scene does not fit inside.
scene::Scene build_scene(const RunConfig& cfg);

std::vector<scene::PosedView> build_trajectory(const RunConfig& cfg);

}  // namespace raydf::config
