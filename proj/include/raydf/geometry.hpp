#pragma once

#include <cstdint>
#include <vector>

#include "raydf/types.hpp"

namespace raydf::geometry {

/// Ray expressed in sphere angles together with d0, the distance from the
/// original ray origin to the sphere entry point.
struct ParamRay {
  Ray ray;
  double d0 = 0.0;
};

/// Cartesian form of a Ray: entry/exit points on the sphere and the unit
/// direction from entry to exit.
struct RayFrame {
  Vec3 entry;
  Vec3 exit;
  Vec3 direction;
};

struct Reprojection {
  double u = 0.0;  // continuous row
  double v = 0.0;  // continuous column
  double z = 0.0;  // depth in the target camera frame
  bool in_frame = false;
};

/// A multi-view ray through a fixed surface point with its entry-to-point
/// distance.
struct MultiViewRay {
  Ray ray;
  double distance = 0.0;  // meters from sphere entry to the point
};

/// Spherical angles of a unit vector: x = sin(t)cos(p), y = sin(t)sin(p),
/// z = cos(t), theta in [0, pi], phi in (-pi, pi].
inline void to_angles(const Vec3& unit, double& theta, double& phi) {
  theta = std::acos(std::clamp(unit.z(), -1.0, 1.0));
  phi = std::atan2(unit.y(), unit.x());
  if (phi <= -EIGEN_PI) phi = EIGEN_PI;
}

inline Vec3 from_angles(double theta, double phi) {
  const double st = std::sin(theta);
  return {st * std::cos(phi), st * std::sin(phi), std::cos(theta)};
}

/// Encodes the line (origin, direction) by its two sphere intersections.
/// Fails with NoIntersection when the line misses or grazes the sphere and
/// OriginInside when the origin is strictly inside.
Expected<ParamRay> parameterize_ray(const Vec3& origin, const Vec3& direction,
                                    const BoundingSphere& sphere);

/// Inverse of parameterize_ray up to the entry point.
Expected<RayFrame> ray_to_points(const Ray& ray, const BoundingSphere& sphere);

/// Converts a raw (z-)depth at pixel (u, v) to the along-ray distance
/// measured from the sphere entry point.
Expected<double> depth_to_distance(double raw_depth, double u, double v,
                                   const Camera& cam, double d0);

/// Inverse of depth_to_distance: entry-relative distance back to raw z-depth.
double distance_to_depth(double distance, double u, double v,
                         const Camera& cam, double d0);

/// Back-projects pixel (u, v) through the camera and parameterizes the ray.
Expected<ParamRay> pixel_ray(double u, double v, const Camera& cam,
                             const BoundingSphere& sphere);

/// Unit world-space direction of pixel (u, v).
Vec3 pixel_direction(double u, double v, const Camera& cam);

/// Projects world point p into camera k, returning continuous pixel
/// coordinates and the camera-frame depth.
Expected<Reprojection> reproject(const Vec3& p, const Camera& cam);

/// Draws M uniformly distributed ray directions through p; each ray enters
/// the bounding sphere on the side opposite its direction. Deterministic in
/// rng_seed. Directions nearly tangent to the sphere at entry are redrawn.
Expected<std::vector<MultiViewRay>> sample_multiview_rays(
    const Vec3& p, int M, const BoundingSphere& sphere, std::uint64_t rng_seed);

/// Distance between the two surface points named by two samples; zero iff
/// both rays hit the same point.
double transformation_residual(const RaySample& s1, const RaySample& s2,
                               const BoundingSphere& sphere);

/// Surface normal from the field's input gradient: chain-rules grad through
/// the ray parameterization Jacobian (central differences, step 1e-6 rad)
/// and evaluates the radial-graph tangent cross product. d_hat is the
/// normalized distance in [0, 1], grad its gradient w.r.t. the four
/// normalized ray inputs.
Expected<NormalResult> derive_normal(const Ray& ray, double d_hat,
                                     const Vec4& grad,
                                     const BoundingSphere& sphere, double d0);

}  // namespace raydf::geometry
