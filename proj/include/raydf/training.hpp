#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "raydf/dataset.hpp"
#include "raydf/nn.hpp"
#include "raydf/types.hpp"

namespace raydf::training {

using MatrixF = nn::Matrix<float>;
using VectorF = nn::Vector<float>;

/// Dual-ray visibility classifier: a shared ray encoder g applied to both
/// rays and averaged (order-invariant by construction), a point encoder k,
/// and a trunk ending in a sigmoid score.
struct Classifier {
  nn::Mlp<float> ray_encoder;    // 4 -> hidden, single sine layer
  nn::Mlp<float> point_encoder;  // 3 -> hidden, single sine layer
  nn::Mlp<float> trunk;          // 2*hidden -> ... -> 1, sigmoid head
};

Classifier init_classifier(int hidden, int trunk_layers, std::uint64_t seed);

/// Scores in (0,1); columns are pairs. Bitwise symmetric under swapping
/// rays1/rays2.
MatrixF classifier_forward(const Classifier& clf, const MatrixF& rays1,
                           const MatrixF& rays2, const MatrixF& points1);

void save_classifier(const std::string& path, const Classifier& clf);
Classifier load_classifier(const std::string& path);

struct ClassifierConfig {
  int epochs = 5;
  int batch_size = 2048;
  double lr_max = 1e-4;
  std::size_t pair_budget = 200000;
  double epsilon = 0.010;  // meters
  std::uint64_t seed = 0;
  int hidden = 128;
  int trunk_layers = 4;
  double positive_weight = 1.0;        // optional class reweighting
  std::string checkpoint_dir;          // per-epoch checkpoints when nonempty
};

struct ClassifierMetrics {
  double accuracy = 0.0;  // percent, held-out split
  double f1 = 0.0;        // percent, positive class
  double positive_fraction = 0.0;
  std::vector<double> loss_curve;  // per-epoch mean training loss
};

struct ClassifierTrainResult {
  Classifier classifier;
  ClassifierMetrics metrics;
};

/// Stage 1: binary cross-entropy on labeled pairs, cyclic learning rate,
/// metrics on a held-out 10% split. Throws "SingleClassData" when only one
/// label class is present.
ClassifierTrainResult train_classifier(
    const std::vector<dataset::VisibilityPair>& pairs,
    const ClassifierConfig& config);

// ---------------------------------------------------------------------------
// Stage 2

enum class LossNorm { L1, L2 };

struct DistanceConfig {
  int epochs = 10;
  int batch_size = 8192;
  double lr_init = 1e-5;
  double lr_final = 1e-8;
  int M = 20;                  // multi-view rays per primary; 0 = no classifier
  LossNorm norm = LossNorm::L1;
  double noise_var = 0.0;      // Gaussian noise variance added to scores
  bool threshold_scores = false;  // ablation: binarize scores at 0.5
  bool radiance = false;
  double radiance_weight = 1.0;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {256, 256, 256, 256};  // distance-net hidden sizes
  float omega0 = 30.0f;
  std::string checkpoint_dir;
  std::ostream* log = nullptr;  // one line per step: step, lr, loss, ADE
};

/// One primary training sample with its M sampled multi-view companions.
struct MultiViewSample {
  dataset::NormalizedRay primary;
  float target = 0.0f;          // normalized distance
  Eigen::Vector3f point;        // normalized hit point
  std::vector<dataset::NormalizedRay> rays;
  std::vector<float> distances;  // normalized d_tilde per ray
  std::vector<float> scores;     // visibility score per ray, in [0, 1]
};

/// Batch visibility scoring: (rays1 4xN, rays2 4xN, points 3xN) -> 1xN.
using VisibilityScorer =
    std::function<MatrixF(const MatrixF&, const MatrixF&, const MatrixF&)>;

VisibilityScorer make_classifier_scorer(const Classifier& clf);

/// Samples M rays through each record's hit point, scores them with the
/// scorer and optionally perturbs scores with clipped Gaussian noise.
std::vector<MultiViewSample> build_multiview_batch(
    const dataset::SampleStore& store, const std::vector<std::size_t>& indices,
    const VisibilityScorer& scorer, int M, double noise_var,
    std::uint64_t rng_seed);

struct MultiViewLoss {
  double value = 0.0;
  Eigen::VectorXf grad;  // d(loss)/d(prediction), length M+1
};

/// Visibility-weighted consistency loss for one sample:
/// (|d_hat - d| + sum_m v_m |d_hat_m - d_m|) / (sum_m v_m + 1),
/// absolute error replaced by squared error under L2.
MultiViewLoss multiview_loss(const MultiViewSample& sample,
                             const Eigen::VectorXf& predictions,
                             LossNorm norm);

struct DistanceModel {
  nn::MlpF net;                        // sine trunk + linear distance head
  std::optional<nn::MlpF> radiance;    // 2 layers from the last hidden, sigmoid
};

struct DistanceTrainResult {
  DistanceModel model;
  std::vector<double> epoch_loss;  // per-epoch mean training loss
};

/// Stage 2 training loop. `scorer` may be null only when M = 0. `colors`
/// (normalized record-aligned RGB) is required when config.radiance is set.
DistanceTrainResult train_distance(
    const dataset::SampleStore& store, const VisibilityScorer* scorer,
    const DistanceConfig& config,
    const std::vector<Eigen::Vector3f>* colors = nullptr);

}  // namespace raydf::training
