#include "raydf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "raydf/dataset.hpp"
#include "raydf/geometry.hpp"

namespace raydf::eval {

RenderedView render_view(const nn::MlpF& net, const Camera& cam,
                         const BoundingSphere& sphere,
                         double outlier_threshold) {
  RenderedView view;
  view.width = cam.width;
  view.height = cam.height;
  view.distance = Eigen::MatrixXd::Constant(cam.height, cam.width, -1.0);
  view.depth = Eigen::MatrixXd::Zero(cam.height, cam.width);
  view.points.assign((std::size_t)cam.height * cam.width, Vec3::Zero());
  view.normals.assign((std::size_t)cam.height * cam.width, Vec3::Zero());
  view.valid.setZero(cam.height, cam.width);
  view.outlier.setZero(cam.height, cam.width);

  // gather intersecting pixels
  std::vector<int> px;
  std::vector<geometry::ParamRay> prays;
  px.reserve((std::size_t)cam.height * cam.width);
  for (int u = 0; u < cam.height; ++u)
    for (int v = 0; v < cam.width; ++v) {
      const auto pr = geometry::pixel_ray(u, v, cam, sphere);
      if (!pr) continue;
      px.push_back(u * cam.width + v);
      prays.push_back(*pr);
    }
  if (px.empty()) return view;

  const Eigen::Index n = (Eigen::Index)px.size();
  nn::Matrix<float> X(4, n);
  for (Eigen::Index i = 0; i < n; ++i)
    X.col(i) = dataset::normalize_ray(prays[i].ray);

  // single batched evaluation: one forward (with cached activations for the
  // input-gradient pass) per intersecting pixel
  const auto cache = nn::forward_cached(net, X);
  view.eval_count = n;
  const nn::Matrix<float> ones = nn::Matrix<float>::Ones(1, n);
  const auto grads = nn::backward(net, cache, ones);

  const double D = sphere.diameter;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int u = px[i] / cam.width, v = px[i] % cam.width;
    const double d_hat =
        std::clamp((double)cache.post.back()(0, i), 0.0, 1.0);
    const double dist = D * d_hat;
    view.distance(u, v) = dist;
    view.depth(u, v) =
        geometry::distance_to_depth(dist, u, v, cam, prays[i].d0);
    const auto frame = geometry::ray_to_points(prays[i].ray, sphere);
    view.points[px[i]] = frame->entry + dist * frame->direction;
    view.valid(u, v) = 1;

    const Vec4 g = grads.input.col(i).cast<double>();
    const auto nr =
        geometry::derive_normal(prays[i].ray, d_hat, g, sphere, prays[i].d0);
    if (nr) {
      view.normals[px[i]] = nr->normal;
      if (nr->magnitude > outlier_threshold) view.outlier(u, v) = 1;
    }
    // pole/degenerate rays keep a zero normal and stay un-flagged
  }
  return view;
}

namespace {

// gt distances (meters from sphere entry) for every valid pixel; -1 elsewhere
Eigen::MatrixXd scan_distances(const DepthScan& gt,
                               const BoundingSphere& sphere) {
  const Camera& cam = gt.camera;
  Eigen::MatrixXd out = Eigen::MatrixXd::Constant(cam.height, cam.width, -1.0);
  for (int u = 0; u < cam.height; ++u)
    for (int v = 0; v < cam.width; ++v) {
      if (gt.raster(u, v) <= 0.0f) continue;
      const auto pr = geometry::pixel_ray(u, v, cam, sphere);
      if (!pr) continue;
      const auto d =
          geometry::depth_to_distance(gt.raster(u, v), u, v, cam, pr->d0);
      if (d) out(u, v) = *d;
    }
  return out;
}

}  // namespace

double ade_cm(const RenderedView& pred, const DepthScan& gt,
              const BoundingSphere& sphere) {
  if (pred.width != gt.camera.width || pred.height != gt.camera.height)
    throw shape_error("ade_cm: resolution mismatch");
  const Eigen::MatrixXd gtd = scan_distances(gt, sphere);
  double sum = 0.0;
  long count = 0;
  for (int u = 0; u < pred.height; ++u)
    for (int v = 0; v < pred.width; ++v) {
      if (!pred.valid(u, v) || gtd(u, v) < 0.0) continue;
      sum += std::abs(pred.distance(u, v) - gtd(u, v));
      ++count;
    }
  if (count == 0) throw std::runtime_error("EmptyMask");
  return 100.0 * sum / count;
}

double ade_cm(const nn::MlpF& net, const DepthScan& gt,
              const BoundingSphere& sphere) {
  const Camera& cam = gt.camera;
  std::vector<double> gtd;
  std::vector<Eigen::Vector4f> rays;
  for (int u = 0; u < cam.height; ++u)
    for (int v = 0; v < cam.width; ++v) {
      if (gt.raster(u, v) <= 0.0f) continue;
      const auto pr = geometry::pixel_ray(u, v, cam, sphere);
      if (!pr) continue;
      const auto d =
          geometry::depth_to_distance(gt.raster(u, v), u, v, cam, pr->d0);
      if (!d) continue;
      gtd.push_back(*d);
      rays.push_back(dataset::normalize_ray(pr->ray));
    }
  if (gtd.empty()) throw std::runtime_error("EmptyMask");
  nn::Matrix<float> X(4, (Eigen::Index)rays.size());
  for (std::size_t i = 0; i < rays.size(); ++i) X.col((Eigen::Index)i) = rays[i];
  const auto pred = nn::forward(net, X);
  const double D = sphere.diameter;
  double sum = 0.0;
  for (std::size_t i = 0; i < gtd.size(); ++i) {
    const double d_hat =
        std::clamp((double)pred(0, (Eigen::Index)i), 0.0, 1.0);
    sum += std::abs(D * d_hat - gtd[i]);
  }
  return 100.0 * sum / (double)gtd.size();
}

// ---------------------------------------------------------------------------
// Chamfer distance

namespace {

// n_first marks the boundary between the two directions' distances; summing
// each block separately keeps the mean exactly symmetric in (a, b)
std::pair<double, double> pool_stats(std::vector<double>& d2,
                                     std::size_t n_first) {
  double sum_a = 0.0, sum_b = 0.0;
  for (std::size_t i = 0; i < d2.size(); ++i)
    (i < n_first ? sum_a : sum_b) += d2[i];
  const double mean = (std::min(sum_a, sum_b) + std::max(sum_a, sum_b)) /
                      (double)d2.size();
  std::sort(d2.begin(), d2.end());
  const std::size_t n = d2.size();
  const double median =
      n % 2 ? d2[n / 2] : 0.5 * (d2[n / 2 - 1] + d2[n / 2]);
  return {mean, median};
}

void nn_bruteforce(const std::vector<Vec3>& from, const std::vector<Vec3>& to,
                   std::vector<double>& out) {
  for (const Vec3& p : from) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& q : to) best = std::min(best, (p - q).squaredNorm());
    out.push_back(best);
  }
}

struct PointGrid {
  double cell = 1.0;
  Vec3 origin = Vec3::Zero();
  std::unordered_map<std::uint64_t, std::vector<int>> cells;
  const std::vector<Vec3>* points = nullptr;

  static std::uint64_t key(int x, int y, int z) {
    auto u = [](int v) { return (std::uint64_t)(std::uint32_t)(v + 1000000); };
    return u(x) | (u(y) << 21) | (u(z) << 42);
  }

  explicit PointGrid(const std::vector<Vec3>& pts) : points(&pts) {
    Vec3 lo = pts.front(), hi = pts.front();
    for (const Vec3& p : pts) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    origin = lo;
    const double extent = std::max((hi - lo).maxCoeff(), 1e-9);
    const double target = std::cbrt((double)pts.size());
    cell = std::max(extent / std::max(target, 1.0), 1e-9);
    for (int i = 0; i < (int)pts.size(); ++i) {
      const Vec3 c = (pts[i] - origin) / cell;
      cells[key((int)std::floor(c.x()), (int)std::floor(c.y()),
                (int)std::floor(c.z()))]
          .push_back(i);
    }
  }

  // exact nearest squared distance by expanding ring search
  double nearest_sq(const Vec3& p) const {
    const Vec3 c = (p - origin) / cell;
    const int cx = (int)std::floor(c.x()), cy = (int)std::floor(c.y()),
              cz = (int)std::floor(c.z());
    double best = std::numeric_limits<double>::infinity();
    for (int ring = 0;; ++ring) {
      // once a candidate is known, stop when the nearest possible point in
      // the next ring cannot beat it
      if (std::isfinite(best)) {
        const double safe = (double)(ring - 1) * cell;
        if (ring > 0 && safe >= 0.0 && best <= safe * safe) break;
      }
      bool any_cell = false;
      for (int dx = -ring; dx <= ring; ++dx)
        for (int dy = -ring; dy <= ring; ++dy)
          for (int dz = -ring; dz <= ring; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring)
              continue;
            const auto it = cells.find(key(cx + dx, cy + dy, cz + dz));
            if (it == cells.end()) continue;
            any_cell = true;
            for (int i : it->second)
              best = std::min(best, (p - (*points)[i]).squaredNorm());
          }
      if (!any_cell && ring > 2000) break;  // degenerate guard
      (void)any_cell;
    }
    return best;
  }
};

}  // namespace

std::pair<double, double> chamfer(const std::vector<Vec3>& a,
                                  const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw std::runtime_error("EmptySet");
  std::vector<double> d2;
  d2.reserve(a.size() + b.size());
  nn_bruteforce(a, b, d2);
  const std::size_t n_first = d2.size();
  nn_bruteforce(b, a, d2);
  return pool_stats(d2, n_first);
}

std::pair<double, double> chamfer_grid(const std::vector<Vec3>& a,
                                       const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw std::runtime_error("EmptySet");
  std::vector<double> d2;
  d2.reserve(a.size() + b.size());
  {
    PointGrid grid(b);
    for (const Vec3& p : a) d2.push_back(grid.nearest_sq(p));
  }
  const std::size_t n_first = d2.size();
  {
    PointGrid grid(a);
    for (const Vec3& p : b) d2.push_back(grid.nearest_sq(p));
  }
  return pool_stats(d2, n_first);
}

std::pair<double, double> classifier_metrics(const std::vector<float>& scores,
                                             const std::vector<int>& labels) {
  if (scores.empty() || scores.size() != labels.size())
    throw std::runtime_error("EmptySet");
  long tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= 0.5f;
    const bool truth = labels[i] != 0;
    if (pred && truth) ++tp;
    else if (pred) ++fp;
    else if (truth) ++fn;
    else ++tn;
  }
  const double acc = 100.0 * (tp + tn) / (double)scores.size();
  const double denom = 2.0 * tp + fp + fn;
  const double f1 = denom > 0.0 ? 100.0 * 2.0 * tp / denom : 0.0;
  return {acc, f1};
}

std::vector<std::pair<Vec3, Vec3>> collect_points(
    const std::vector<RenderedView>& views) {
  std::vector<std::pair<Vec3, Vec3>> pts;
  for (const auto& view : views)
    for (int u = 0; u < view.height; ++u)
      for (int v = 0; v < view.width; ++v)
        if (view.valid(u, v) && !view.outlier(u, v))
          pts.emplace_back(view.points[u * view.width + v],
                           view.normals[u * view.width + v]);
  return pts;
}

void export_pointcloud(const std::vector<RenderedView>& views,
                       const std::string& path) {
  const auto pts = collect_points(views);
  if (pts.empty()) throw io_error("export_pointcloud: no valid points");
  std::ofstream os(path);
  if (!os) throw io_error("cannot open for writing: " + path);
  os << "ply\nformat ascii 1.0\nelement vertex " << pts.size()
     << "\nproperty float x\nproperty float y\nproperty float z\n"
        "property float nx\nproperty float ny\nproperty float nz\n"
        "end_header\n";
  os.precision(9);
  for (const auto& [p, n] : pts)
    os << (float)p.x() << ' ' << (float)p.y() << ' ' << (float)p.z() << ' '
       << (float)n.x() << ' ' << (float)n.y() << ' ' << (float)n.z() << '\n';
  if (!os) throw io_error("write failed: " + path);
}

// ---------------------------------------------------------------------------
// raster / preview output

namespace {
template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw io_error("TruncatedFile");
  return v;
}
}  // namespace

void write_raster(const std::string& path,
                  const std::vector<Eigen::MatrixXf>& channels) {
  if (channels.empty()) throw io_error("write_raster: no channels");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path);
  os.write("RAYD", 4);
  put(os, (std::uint32_t)2);  // raster flavor of the RAYD family
  put(os, (std::uint32_t)channels.size());
  put(os, (std::uint32_t)channels[0].rows());
  put(os, (std::uint32_t)channels[0].cols());
  for (const auto& ch : channels)
    for (Eigen::Index u = 0; u < ch.rows(); ++u)
      for (Eigen::Index v = 0; v < ch.cols(); ++v) put(os, ch(u, v));
}

std::vector<Eigen::MatrixXf> read_raster(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open for reading: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is) throw io_error("TruncatedFile");
  if (std::memcmp(magic, "RAYD", 4) != 0) throw io_error("BadMagic");
  if (get<std::uint32_t>(is) != 2) throw io_error("VersionMismatch");
  const auto nch = get<std::uint32_t>(is);
  const auto rows = get<std::uint32_t>(is);
  const auto cols = get<std::uint32_t>(is);
  std::vector<Eigen::MatrixXf> channels(nch);
  for (auto& ch : channels) {
    ch.resize(rows, cols);
    for (std::uint32_t u = 0; u < rows; ++u)
      for (std::uint32_t v = 0; v < cols; ++v) ch(u, v) = get<float>(is);
  }
  return channels;
}

void write_pgm_preview(const std::string& path, const Eigen::MatrixXd& depth) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (Eigen::Index u = 0; u < depth.rows(); ++u)
    for (Eigen::Index v = 0; v < depth.cols(); ++v)
      if (depth(u, v) > 0.0) {
        lo = std::min(lo, depth(u, v));
        hi = std::max(hi, depth(u, v));
      }
  if (!std::isfinite(lo)) lo = 0.0;
  const double span = hi > lo ? hi - lo : 1.0;

  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path);
  os << "P5\n" << depth.cols() << ' ' << depth.rows() << "\n65535\n";
  for (Eigen::Index u = 0; u < depth.rows(); ++u)
    for (Eigen::Index v = 0; v < depth.cols(); ++v) {
      std::uint16_t g = 0;
      if (depth(u, v) > 0.0)
        g = (std::uint16_t)std::lround(65535.0 * (1.0 - (depth(u, v) - lo) / span));
      const std::uint8_t bytes[2] = {(std::uint8_t)(g >> 8), (std::uint8_t)g};
      os.write(reinterpret_cast<const char*>(bytes), 2);
    }

  std::ofstream sidecar(path + ".txt");
  sidecar << "linear depth scaling\nmin_depth = " << lo
          << "\nmax_depth = " << (lo + span)
          << "\ngray = 65535 * (1 - (depth - min) / (max - min)), 0 = miss\n";
}

}  // namespace raydf::eval
