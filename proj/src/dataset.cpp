#include "raydf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "raydf/geometry.hpp"
#include "raydf/rng.hpp"

namespace raydf::dataset {

NormalizedRay normalize_ray(const Ray& ray) {
  const double tol = 1e-9;
  auto check_theta = [&](double t) {
    if (t < -tol || t > EIGEN_PI + tol)
      throw std::out_of_range("normalize_ray: theta outside [0, pi]");
  };
  auto check_phi = [&](double p) {
    if (p <= -EIGEN_PI - tol || p > EIGEN_PI + tol)
      throw std::out_of_range("normalize_ray: phi outside (-pi, pi]");
  };
  check_theta(ray.theta_in);
  check_theta(ray.theta_out);
  check_phi(ray.phi_in);
  check_phi(ray.phi_out);
  return NormalizedRay(
      static_cast<float>(2.0 * ray.theta_in / EIGEN_PI - 1.0),
      static_cast<float>(ray.phi_in / EIGEN_PI),
      static_cast<float>(2.0 * ray.theta_out / EIGEN_PI - 1.0),
      static_cast<float>(ray.phi_out / EIGEN_PI));
}

Ray denormalize_ray(const NormalizedRay& nray) {
  for (int i = 0; i < 4; ++i)
    if (nray[i] < -1.0f - 1e-6f || nray[i] > 1.0f + 1e-6f)
      throw std::out_of_range("denormalize_ray: input outside [-1, 1]");
  Ray ray;
  ray.theta_in = (nray[0] + 1.0) * EIGEN_PI / 2.0;
  ray.phi_in = nray[1] * EIGEN_PI;
  ray.theta_out = (nray[2] + 1.0) * EIGEN_PI / 2.0;
  ray.phi_out = nray[3] * EIGEN_PI;
  return ray;
}

Eigen::Vector3f normalize_point(const Vec3& p, const BoundingSphere& sphere) {
  return ((p - sphere.center) / sphere.radius()).cast<float>();
}

Vec3 denormalize_point(const Eigen::Vector3f& pn,
                       const BoundingSphere& sphere) {
  return sphere.center + sphere.radius() * pn.cast<double>();
}

namespace {

struct PixelSample {
  NormalizedRay nray;
  double distance = 0.0;  // meters from sphere entry
  Vec3 entry;
  Vec3 point;
};

// Converts one pixel; false when the pixel is a miss, does not reach the
// sphere, or carries a depth inconsistent with it.
bool convert_pixel(const DepthScan& scan, int u, int v,
                   const BoundingSphere& sphere, PixelSample& out) {
  const float raw = scan.raster(u, v);
  if (raw <= 0.0f) return false;
  const auto pr = geometry::pixel_ray(u, v, scan.camera, sphere);
  if (!pr) return false;
  const auto d = geometry::depth_to_distance(raw, u, v, scan.camera, pr->d0);
  if (!d || *d > sphere.diameter) return false;
  const auto frame = geometry::ray_to_points(pr->ray, sphere);
  if (!frame) return false;
  out.nray = normalize_ray(pr->ray);
  out.distance = *d;
  out.entry = frame->entry;
  out.point = frame->entry + *d * frame->direction;
  return true;
}

}  // namespace

SampleStore convert_scans(const std::vector<DepthScan>& scans,
                          const BoundingSphere& sphere, double sparsity,
                          std::uint64_t rng_seed) {
  if (scans.empty()) throw io_error("EmptyStore: no scans given");
  SampleStore store;
  store.sphere = sphere;
  for (std::size_t s = 0; s < scans.size(); ++s) {
    const DepthScan& scan = scans[s];
    const int W = scan.camera.width;
    std::vector<std::pair<std::uint32_t, PixelSample>> valid;
    for (int u = 0; u < scan.camera.height; ++u)
      for (int v = 0; v < W; ++v) {
        PixelSample ps;
        if (convert_pixel(scan, u, v, sphere, ps))
          valid.emplace_back(static_cast<std::uint32_t>(u * W + v), ps);
      }
    std::size_t keep = valid.size();
    if (sparsity < 1.0) {
      keep = static_cast<std::size_t>(
          std::llround(sparsity * static_cast<double>(valid.size())));
      std::mt19937_64 rng(mix_seed(rng_seed, s));
      std::shuffle(valid.begin(), valid.end(), rng);
      // keep the on-disk/record order stable regardless of the shuffle
      std::sort(valid.begin(), valid.begin() + keep,
                [](const auto& a, const auto& b) { return a.first < b.first; });
    }
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& [pixel, ps] = valid[i];
      StoreRecord rec;
      rec.ray = ps.nray;
      rec.distance = static_cast<float>(ps.distance / sphere.diameter);
      rec.point = normalize_point(ps.point, sphere);
      rec.scan_id = scan.id;
      rec.pixel = pixel;
      store.records.push_back(rec);
    }
  }
  if (store.records.empty())
    throw io_error("EmptyStore: no valid pixels survived");
  return store;
}

std::vector<VisibilityPair> build_visibility_pairs(
    const std::vector<DepthScan>& scans, const BoundingSphere& sphere,
    double epsilon, std::size_t budget, std::uint64_t rng_seed) {
  if (scans.size() < 2) throw io_error("InsufficientScans");

  // cache per-scan converted pixels (index -1 marks invalid)
  std::vector<std::vector<int>> index(scans.size());
  std::vector<std::vector<PixelSample>> cache(scans.size());
  std::vector<std::vector<std::uint32_t>> valid_pixels(scans.size());
  for (std::size_t s = 0; s < scans.size(); ++s) {
    const int H = scans[s].camera.height, W = scans[s].camera.width;
    index[s].assign(H * W, -1);
    for (int u = 0; u < H; ++u)
      for (int v = 0; v < W; ++v) {
        PixelSample ps;
        if (convert_pixel(scans[s], u, v, sphere, ps)) {
          index[s][u * W + v] = static_cast<int>(cache[s].size());
          cache[s].push_back(ps);
          valid_pixels[s].push_back(u * W + v);
        }
      }
  }

  std::mt19937_64 rng(mix_seed(rng_seed, 0x70617273));
  std::uniform_int_distribution<std::size_t> pick_scan(0, scans.size() - 1);
  std::vector<VisibilityPair> pairs;
  pairs.reserve(budget);
  std::size_t attempts = 0;
  const std::size_t max_attempts = 50 * budget + 1000;
  while (pairs.size() < budget && attempts++ < max_attempts) {
    const std::size_t k = pick_scan(rng);
    if (valid_pixels[k].empty()) continue;
    std::uniform_int_distribution<std::size_t> pick_px(
        0, valid_pixels[k].size() - 1);
    const PixelSample& src = cache[k][index[k][valid_pixels[k][pick_px(rng)]]];
    std::size_t j = pick_scan(rng);
    if (j == k) continue;

    const auto rp = geometry::reproject(src.point, scans[j].camera);
    if (!rp || !rp->in_frame) continue;
    const int u = static_cast<int>(std::lround(rp->u));
    const int v = static_cast<int>(std::lround(rp->v));
    const int W = scans[j].camera.width;
    const int ci = index[j][u * W + v];
    if (ci < 0) continue;  // sentinel pixel in the target scan
    const PixelSample& tgt = cache[j][ci];

    const double d_tilde = (src.point - tgt.entry).norm();
    VisibilityPair pair;
    pair.ray1 = src.nray;
    pair.ray2 = tgt.nray;
    pair.point1 = normalize_point(src.point, sphere);
    pair.label = std::abs(d_tilde - tgt.distance) <= epsilon ? 1 : 0;
    pairs.push_back(pair);
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// binary formats

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

void check_magic(std::istream& is, const char expect[4]) {
  char m[4];
  is.read(m, 4);
  if (!is) throw io_error("TruncatedFile");
  if (std::memcmp(m, expect, 4) != 0) throw io_error("BadMagic");
}

constexpr std::uint32_t kVersion = 1;

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open for writing: " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open for reading: " + path);
  return is;
}

}  // namespace

void write_scan(const std::string& path, const DepthScan& scan) {
  auto os = open_out(path);
  os.write("RAYD", 4);
  put(os, kVersion);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) put(os, scan.camera.rotation(r, c));
  for (int i = 0; i < 3; ++i) put(os, scan.camera.translation[i]);
  put(os, scan.camera.focal);
  put(os, scan.camera.cx);
  put(os, scan.camera.cy);
  put(os, static_cast<std::uint32_t>(scan.camera.height));
  put(os, static_cast<std::uint32_t>(scan.camera.width));
  for (int u = 0; u < scan.camera.height; ++u)
    for (int v = 0; v < scan.camera.width; ++v) put(os, scan.raster(u, v));
}

DepthScan read_scan(const std::string& path) {
  auto is = open_in(path);
  check_magic(is, "RAYD");
  if (get<std::uint32_t>(is) != kVersion) throw io_error("VersionMismatch");
  DepthScan scan;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) scan.camera.rotation(r, c) = get<double>(is);
  for (int i = 0; i < 3; ++i) scan.camera.translation[i] = get<double>(is);
  scan.camera.focal = get<double>(is);
  scan.camera.cx = get<double>(is);
  scan.camera.cy = get<double>(is);
  scan.camera.height = static_cast<int>(get<std::uint32_t>(is));
  scan.camera.width = static_cast<int>(get<std::uint32_t>(is));
  scan.raster.resize(scan.camera.height, scan.camera.width);
  for (int u = 0; u < scan.camera.height; ++u)
    for (int v = 0; v < scan.camera.width; ++v)
      scan.raster(u, v) = get<float>(is);
  return scan;
}

void write_store(const std::string& path, const SampleStore& store) {
  auto os = open_out(path);
  os.write("RAYS", 4);
  put(os, kVersion);
  for (int i = 0; i < 3; ++i) put(os, store.sphere.center[i]);
  put(os, store.sphere.diameter);
  put(os, static_cast<std::uint64_t>(store.records.size()));
  for (const auto& rec : store.records) {
    for (int i = 0; i < 4; ++i) put(os, rec.ray[i]);
    put(os, rec.distance);
    for (int i = 0; i < 3; ++i) put(os, rec.point[i]);
    put(os, rec.scan_id);
    put(os, rec.pixel);
  }
}

SampleStore read_store(const std::string& path) {
  auto is = open_in(path);
  check_magic(is, "RAYS");
  if (get<std::uint32_t>(is) != kVersion) throw io_error("VersionMismatch");
  SampleStore store;
  for (int i = 0; i < 3; ++i) store.sphere.center[i] = get<double>(is);
  store.sphere.diameter = get<double>(is);
  const auto count = get<std::uint64_t>(is);
  store.records.resize(count);
  for (auto& rec : store.records) {
    for (int i = 0; i < 4; ++i) rec.ray[i] = get<float>(is);
    rec.distance = get<float>(is);
    for (int i = 0; i < 3; ++i) rec.point[i] = get<float>(is);
    rec.scan_id = get<std::uint32_t>(is);
    rec.pixel = get<std::uint32_t>(is);
  }
  return store;
}

}  // namespace raydf::dataset
