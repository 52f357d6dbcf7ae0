#pragma once

#include <string>
#include <utility>
#include <vector>

#include "raydf/nn.hpp"
#include "raydf/types.hpp"

namespace raydf::eval {

/// One rendered depth/normal view. Every sphere-intersecting pixel costs
/// exactly one network evaluation; eval_count records the total.
struct RenderedView {
  int width = 0;
  int height = 0;
  Eigen::MatrixXd distance;        // meters from sphere entry; -1 on invalid
  Eigen::MatrixXd depth;           // camera-frame z-depth; 0 on invalid
  std::vector<Vec3> points;        // world-space surface points (row-major)
  std::vector<Vec3> normals;       // unit normals; zero where unavailable
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> valid;
  Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> outlier;
  long eval_count = 0;
};

/// Renders a view with one forward evaluation per intersecting pixel and
/// derives per-pixel normals from input gradients. A pixel is flagged as an
/// outlier when the pre-normalization normal magnitude exceeds the threshold.
RenderedView render_view(const nn::MlpF& net, const Camera& cam,
                         const BoundingSphere& sphere,
                         double outlier_threshold = 5.0);

/// Mean absolute ray-surface distance error in centimeters over pixels valid
/// in both the rendered view and the ground-truth scan.
double ade_cm(const RenderedView& pred, const DepthScan& gt,
              const BoundingSphere& sphere);

/// ADE of raw network predictions against a scan (no normals needed);
/// identical masking to ade_cm.
double ade_cm(const nn::MlpF& net, const DepthScan& gt,
              const BoundingSphere& sphere);

/// Symmetric Chamfer distance over squared nearest-neighbor distances:
/// (mean, median) over the pooled A->B and B->A distances. Brute force.
std::pair<double, double> chamfer(const std::vector<Vec3>& a,
                                  const std::vector<Vec3>& b);

/// Grid-accelerated variant; exact (equals the brute-force result).
std::pair<double, double> chamfer_grid(const std::vector<Vec3>& a,
                                       const std::vector<Vec3>& b);

/// Confusion-matrix accuracy and positive-class F1 (both percent) of scores
/// thresholded at 0.5.
std::pair<double, double> classifier_metrics(const std::vector<float>& scores,
                                             const std::vector<int>& labels);

/// Un-flagged valid pixels of the views as world points with normals.
std::vector<std::pair<Vec3, Vec3>> collect_points(
    const std::vector<RenderedView>& views);

/// ASCII PLY (x y z nx ny nz) of all un-flagged pixels, deterministic order.
void export_pointcloud(const std::vector<RenderedView>& views,
                       const std::string& path);

/// Multi-channel float raster ("RAYD"-family, with a channel-count field).
void write_raster(const std::string& path,
                  const std::vector<Eigen::MatrixXf>& channels);
std::vector<Eigen::MatrixXf> read_raster(const std::string& path);

/// 16-bit PGM preview with linear depth scaling; the scale is recorded in a
/// sidecar text file at path + ".txt".
void write_pgm_preview(const std::string& path, const Eigen::MatrixXd& depth);

}  // namespace raydf::eval
