#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "raydf/types.hpp"

namespace raydf::scene {

struct SpherePrim {
  Vec3 center;
  double radius;
  Vec3 albedo = Vec3(0.7, 0.7, 0.7);
};

struct BoxPrim {
  Vec3 min;
  Vec3 max;
  Vec3 albedo = Vec3(0.7, 0.7, 0.7);
};

/// Finite disk: points q with normal.q = offset and |q - offset*normal| <=
/// extent.
struct PlanePrim {
  Vec3 normal;     // unit
  double offset;   // signed distance of the plane from the origin
  double extent;   // disk radius
  Vec3 albedo = Vec3(0.7, 0.7, 0.7);
};

using Primitive = std::variant<SpherePrim, BoxPrim, PlanePrim>;

struct Scene {
  std::vector<Primitive> primitives;
  BoundingSphere bounding;
};

struct Hit {
  double t = 0.0;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
  Vec3 albedo = Vec3::Zero();
};

/// Nearest positive-t intersection across all primitives; nullopt on miss.
std::optional<Hit> cast_ray(const Scene& scene, const Vec3& origin,
                            const Vec3& direction);

/// Rasterizes exact z-depths for the camera; miss pixels carry 0.
/// noise_sigma > 0 adds Gaussian depth noise (meters) to hit pixels.
DepthScan render_depth_scan(const Scene& scene, const Camera& cam,
                            double noise_sigma = 0.0,
                            std::uint64_t noise_seed = 0);

/// Flat-albedo raster aligned with render_depth_scan (0 on miss).
std::vector<Vec3> render_albedo_scan(const Scene& scene, const Camera& cam);

/// Ground-truth dual-ray visibility by direct ray casting: 1 iff ray2's
/// first hit lies within epsilon of p along the ray.
int oracle_visibility(const Scene& scene, const Ray& ray1, const Vec3& p,
                      const Ray& ray2, double epsilon);

struct PosedView {
  Camera camera;
  bool is_test = false;
};

/// Camera at `position` looking at `target`, +y world as the up hint.
Camera look_at(const Vec3& position, const Vec3& target, double focal,
               int width, int height);

/// Orbit trajectory around the bounding sphere center: one ring of cameras
/// per elevation, interleaving test views every `test_every` azimuth steps
/// (0 disables test tagging).
std::vector<PosedView> orbit_trajectory(const BoundingSphere& sphere,
                                        double orbit_radius,
                                        const std::vector<double>& elevations,
                                        int azimuth_count, double focal,
                                        int width, int height,
                                        int test_every = 3);

/// Built-in catalog: "sphere", "two-spheres", "box", "box+sphere", "cornell".
Scene make_scene(const std::string& name);

/// True when every primitive lies strictly inside the bounding sphere.
bool scene_inside_bounds(const Scene& scene);

/// Flat albedo of the primitive whose surface contains p (within tol);
/// zero vector when no primitive matches.
Vec3 albedo_at(const Scene& scene, const Vec3& p, double tol = 1e-6);

/// N points uniformly sampled on the union surface (area-weighted over
/// primitives; samples occluded inside other primitives are rejected).
std::vector<Vec3> sample_surface_points(const Scene& scene, int count,
                                        std::uint64_t rng_seed);

}  // namespace raydf::scene
