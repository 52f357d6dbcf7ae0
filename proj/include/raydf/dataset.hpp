#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "raydf/types.hpp"

namespace raydf::dataset {

/// Ray angles mapped to [-1, 1]: theta -> 2*theta/pi - 1, phi -> phi/pi.
using NormalizedRay = Eigen::Vector4f;

NormalizedRay normalize_ray(const Ray& ray);
Ray denormalize_ray(const NormalizedRay& nray);

struct StoreRecord {
  NormalizedRay ray;
  float distance = 0.0f;          // normalized by the sphere diameter, [0, 1]
  Eigen::Vector3f point;          // hit point normalized to [-1, 1]^3
  std::uint32_t scan_id = 0;
  std::uint32_t pixel = 0;        // row-major pixel index in the source scan
};

struct SampleStore {
  BoundingSphere sphere;
  std::vector<StoreRecord> records;
};

struct VisibilityPair {
  NormalizedRay ray1;
  NormalizedRay ray2;
  Eigen::Vector3f point1;  // ray1's hit point, normalized
  std::uint8_t label = 0;
};

/// Per-pixel depth-to-ray-distance conversion over all scans. sparsity < 1
/// keeps a uniformly random fraction of valid pixels per scan (exact count
/// by shuffled truncation). Throws io_error("EmptyStore") when nothing
/// survives.
SampleStore convert_scans(const std::vector<DepthScan>& scans,
                          const BoundingSphere& sphere, double sparsity,
                          std::uint64_t rng_seed);

/// Labeled dual-ray pairs by cross-scan reprojection: a pair is co-visible
/// when the reprojected depth agrees with the stored depth within epsilon.
/// Out-of-frame and sentinel-pixel reprojections are discarded. Deterministic in rng_seed; at most `budget` pairs.
std::vector<VisibilityPair> build_visibility_pairs(
    const std::vector<DepthScan>& scans, const BoundingSphere& sphere,
    double epsilon, std::size_t budget, std::uint64_t rng_seed);

/// Point coordinates mapped by the sphere center and radius to [-1, 1]^3.
Eigen::Vector3f normalize_point(const Vec3& p, const BoundingSphere& sphere);
Vec3 denormalize_point(const Eigen::Vector3f& pn, const BoundingSphere& sphere);

// Binary formats (little-endian). Scan: magic "RAYD"; store: magic "RAYS".
void write_scan(const std::string& path, const DepthScan& scan);
DepthScan read_scan(const std::string& path);
void write_store(const std::string& path, const SampleStore& store);
SampleStore read_store(const std::string& path);

}  // namespace raydf::dataset
