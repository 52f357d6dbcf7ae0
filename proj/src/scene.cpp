#include "raydf/scene.hpp"

#include <cmath>
#include <random>

#include "raydf/geometry.hpp"

namespace raydf::scene {

namespace {

constexpr double kHitEps = 1e-12;

std::optional<Hit> cast_sphere(const SpherePrim& s, const Vec3& o,
                               const Vec3& w) {
  const Vec3 oc = o - s.center;
  const double b = oc.dot(w);
  const double disc = b * b - (oc.squaredNorm() - s.radius * s.radius);
  if (disc <= 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  double t = -b - sq;
  if (t <= kHitEps) t = -b + sq;
  if (t <= kHitEps) return std::nullopt;
  Hit h;
  h.t = t;
  h.point = o + t * w;
  h.normal = (h.point - s.center) / s.radius;
  h.albedo = s.albedo;
  return h;
}

std::optional<Hit> cast_box(const BoxPrim& b, const Vec3& o, const Vec3& w) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int near_axis = -1, far_axis = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(w[a]) < 1e-15) {
      if (o[a] < b.min[a] || o[a] > b.max[a]) return std::nullopt;
      continue;
    }
    double t0 = (b.min[a] - o[a]) / w[a];
    double t1 = (b.max[a] - o[a]) / w[a];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_near) { t_near = t0; near_axis = a; }
    if (t1 < t_far) { t_far = t1; far_axis = a; }
    if (t_near > t_far) return std::nullopt;
  }
  double t = t_near;
  int axis = near_axis;
  if (t <= kHitEps) { t = t_far; axis = far_axis; }
  if (t <= kHitEps || axis < 0) return std::nullopt;
  Hit h;
  h.t = t;
  h.point = o + t * w;
  h.normal = Vec3::Zero();
  const double mid = 0.5 * (b.min[axis] + b.max[axis]);
  h.normal[axis] = h.point[axis] > mid ? 1.0 : -1.0;
  h.albedo = b.albedo;
  return h;
}

std::optional<Hit> cast_plane(const PlanePrim& p, const Vec3& o,
                              const Vec3& w) {
  const double denom = p.normal.dot(w);
  if (std::abs(denom) < 1e-15) return std::nullopt;
  const double t = (p.offset - p.normal.dot(o)) / denom;
  if (t <= kHitEps) return std::nullopt;
  const Vec3 q = o + t * w;
  if ((q - p.offset * p.normal).norm() > p.extent) return std::nullopt;
  Hit h;
  h.t = t;
  h.point = q;
  h.normal = denom < 0.0 ? p.normal : Vec3(-p.normal);
  h.albedo = p.albedo;
  return h;
}

bool inside_primitive(const Primitive& prim, const Vec3& q) {
  if (const auto* s = std::get_if<SpherePrim>(&prim))
    return (q - s->center).norm() < s->radius - 1e-9;
  if (const auto* b = std::get_if<BoxPrim>(&prim))
    return (q.array() > b->min.array() + 1e-9).all() &&
           (q.array() < b->max.array() - 1e-9).all();
  return false;  // planes have no interior
}

}  // namespace

std::optional<Hit> cast_ray(const Scene& scene, const Vec3& origin,
                            const Vec3& direction) {
  std::optional<Hit> best;
  for (const auto& prim : scene.primitives) {
    std::optional<Hit> h = std::visit(
        [&](const auto& p) -> std::optional<Hit> {
          using P = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<P, SpherePrim>)
            return cast_sphere(p, origin, direction);
          else if constexpr (std::is_same_v<P, BoxPrim>)
            return cast_box(p, origin, direction);
          else
            return cast_plane(p, origin, direction);
        },
        prim);
    if (h && (!best || h->t < best->t)) best = h;
  }
  return best;
}

DepthScan render_depth_scan(const Scene& scene, const Camera& cam,
                            double noise_sigma, std::uint64_t noise_seed) {
  DepthScan scan;
  scan.camera = cam;
  scan.raster = Eigen::MatrixXf::Zero(cam.height, cam.width);
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int u = 0; u < cam.height; ++u) {
    for (int v = 0; v < cam.width; ++v) {
      const Vec3 dir = geometry::pixel_direction(u, v, cam);
      const auto hit = cast_ray(scene, cam.translation, dir);
      if (!hit) continue;
      const double du = u - cam.cy, dv = v - cam.cx;
      const double cos_obliq =
          cam.focal / std::sqrt(du * du + dv * dv + cam.focal * cam.focal);
      double depth = hit->t * cos_obliq;
      if (noise_sigma > 0.0) depth += noise_sigma * gauss(rng);
      scan.raster(u, v) = static_cast<float>(std::max(depth, 0.0));
    }
  }
  return scan;
}

std::vector<Vec3> render_albedo_scan(const Scene& scene, const Camera& cam) {
  std::vector<Vec3> colors(cam.height * cam.width, Vec3::Zero());
  for (int u = 0; u < cam.height; ++u)
    for (int v = 0; v < cam.width; ++v) {
      const auto hit =
          cast_ray(scene, cam.translation, geometry::pixel_direction(u, v, cam));
      if (hit) colors[u * cam.width + v] = hit->albedo;
    }
  return colors;
}

int oracle_visibility(const Scene& scene, const Ray& /*ray1*/, const Vec3& p,
                      const Ray& ray2, double epsilon) {
  const auto frame = geometry::ray_to_points(ray2, scene.bounding);
  if (!frame) return 0;
  const double d_tilde = (p - frame->entry).norm();
  const auto hit = cast_ray(scene, frame->entry, frame->direction);
  if (!hit) return 0;
  return std::abs(d_tilde - hit->t) <= epsilon ? 1 : 0;
}

Camera look_at(const Vec3& position, const Vec3& target, double focal,
               int width, int height) {
  Camera cam;
  const Vec3 z = (target - position).normalized();
  Vec3 up(0.0, 1.0, 0.0);
  if (std::abs(up.dot(z)) > 1.0 - 1e-6) up = Vec3(1.0, 0.0, 0.0);
  const Vec3 x = up.cross(z).normalized();
  const Vec3 y = z.cross(x);
  cam.rotation.col(0) = x;
  cam.rotation.col(1) = y;
  cam.rotation.col(2) = z;
  cam.translation = position;
  cam.focal = focal;
  cam.width = width;
  cam.height = height;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  return cam;
}

std::vector<PosedView> orbit_trajectory(const BoundingSphere& sphere,
                                        double orbit_radius,
                                        const std::vector<double>& elevations,
                                        int azimuth_count, double focal,
                                        int width, int height,
                                        int test_every) {
  std::vector<PosedView> views;
  int index = 0;
  for (double elev : elevations) {
    for (int i = 0; i < azimuth_count; ++i, ++index) {
      const bool is_test = test_every > 0 && index % test_every == test_every - 1;
      // test poses sit half an azimuth step off the training ring
      const double az = (i + (is_test ? 0.5 : 0.0)) * 2.0 * EIGEN_PI /
                        azimuth_count;
      const Vec3 pos =
          sphere.center + orbit_radius * Vec3(std::cos(elev) * std::cos(az),
                                              std::sin(elev),
                                              std::cos(elev) * std::sin(az));
      views.push_back({look_at(pos, sphere.center, focal, width, height),
                       is_test});
    }
  }
  return views;
}

Scene make_scene(const std::string& name) {
  Scene s;
  s.bounding = {Vec3::Zero(), 2.5};
  if (name == "sphere") {
    s.primitives.push_back(SpherePrim{Vec3::Zero(), 0.5, Vec3(0.8, 0.3, 0.2)});
  } else if (name == "two-spheres") {
    s.primitives.push_back(
        SpherePrim{Vec3(-0.45, 0.0, 0.0), 0.4, Vec3(0.8, 0.3, 0.2)});
    s.primitives.push_back(
        SpherePrim{Vec3(0.5, 0.1, 0.0), 0.3, Vec3(0.2, 0.4, 0.8)});
  } else if (name == "box") {
    s.primitives.push_back(BoxPrim{Vec3(-0.5, -0.4, -0.45),
                                   Vec3(0.5, 0.4, 0.45), Vec3(0.3, 0.7, 0.3)});
  } else if (name == "box+sphere") {
    s.primitives.push_back(BoxPrim{Vec3(-0.65, -0.45, -0.4),
                                   Vec3(-0.05, 0.25, 0.3), Vec3(0.3, 0.7, 0.3)});
    s.primitives.push_back(
        SpherePrim{Vec3(0.35, 0.2, 0.0), 0.3, Vec3(0.8, 0.3, 0.2)});
  } else if (name == "cornell") {
    const double off = 0.7, ext = 0.8;
    s.primitives.push_back(PlanePrim{Vec3(0, 1, 0), -off, ext, Vec3(0.7, 0.7, 0.7)});
    s.primitives.push_back(PlanePrim{Vec3(0, -1, 0), -off, ext, Vec3(0.7, 0.7, 0.7)});
    s.primitives.push_back(PlanePrim{Vec3(0, 0, -1), -off, ext, Vec3(0.7, 0.7, 0.7)});
    s.primitives.push_back(PlanePrim{Vec3(1, 0, 0), -off, ext, Vec3(0.8, 0.2, 0.2)});
    s.primitives.push_back(PlanePrim{Vec3(-1, 0, 0), -off, ext, Vec3(0.2, 0.8, 0.2)});
    s.primitives.push_back(BoxPrim{Vec3(-0.45, -0.7, -0.3),
                                   Vec3(-0.05, -0.1, 0.1), Vec3(0.9, 0.9, 0.9)});
    s.primitives.push_back(BoxPrim{Vec3(0.1, -0.7, -0.1),
                                   Vec3(0.45, -0.35, 0.25), Vec3(0.9, 0.9, 0.9)});
  } else {
    throw std::runtime_error("unknown scene: " + name);
  }
  return s;
}

bool scene_inside_bounds(const Scene& scene) {
  const double R = scene.bounding.radius();
  for (const auto& prim : scene.primitives) {
    double reach = 0.0;
    if (const auto* sp = std::get_if<SpherePrim>(&prim)) {
      reach = (sp->center - scene.bounding.center).norm() + sp->radius;
    } else if (const auto* b = std::get_if<BoxPrim>(&prim)) {
      for (int i = 0; i < 8; ++i) {
        Vec3 corner((i & 1) ? b->max.x() : b->min.x(),
                    (i & 2) ? b->max.y() : b->min.y(),
                    (i & 4) ? b->max.z() : b->min.z());
        reach = std::max(reach, (corner - scene.bounding.center).norm());
      }
    } else if (const auto* p = std::get_if<PlanePrim>(&prim)) {
      // farthest rim point of the disk: extent acts in-plane only
      const Vec3 v = p->offset * p->normal - scene.bounding.center;
      const double vn = v.dot(p->normal);
      const double vt = (v - vn * p->normal).norm();
      reach = std::sqrt(vn * vn + (vt + p->extent) * (vt + p->extent));
    }
    if (reach >= R) return false;
  }
  return true;
}

Vec3 albedo_at(const Scene& scene, const Vec3& p, double tol) {
  double best = tol;
  Vec3 out = Vec3::Zero();
  for (const auto& prim : scene.primitives) {
    double dist = std::numeric_limits<double>::infinity();
    Vec3 alb;
    if (const auto* s = std::get_if<SpherePrim>(&prim)) {
      dist = std::abs((p - s->center).norm() - s->radius);
      alb = s->albedo;
    } else if (const auto* b = std::get_if<BoxPrim>(&prim)) {
      const Vec3 c = p.cwiseMax(b->min).cwiseMin(b->max);
      double outside = (p - c).norm();
      // distance to the nearest face from inside
      double inside = std::min({(p - b->min).minCoeff(), (b->max - p).minCoeff()});
      dist = outside > 0.0 ? outside : std::abs(inside);
      alb = b->albedo;
    } else if (const auto* pl = std::get_if<PlanePrim>(&prim)) {
      if ((p - pl->offset * pl->normal).norm() <= pl->extent + tol)
        dist = std::abs(pl->normal.dot(p) - pl->offset);
      alb = pl->albedo;
    }
    if (dist < best) {
      best = dist;
      out = alb;
    }
  }
  return out;
}

std::vector<Vec3> sample_surface_points(const Scene& scene, int count,
                                        std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<double> areas;
  double total = 0.0;
  for (const auto& prim : scene.primitives) {
    double a = 0.0;
    if (const auto* s = std::get_if<SpherePrim>(&prim)) {
      a = 4.0 * EIGEN_PI * s->radius * s->radius;
    } else if (const auto* b = std::get_if<BoxPrim>(&prim)) {
      const Vec3 e = b->max - b->min;
      a = 2.0 * (e.x() * e.y() + e.y() * e.z() + e.x() * e.z());
    } else if (const auto* p = std::get_if<PlanePrim>(&prim)) {
      a = EIGEN_PI * p->extent * p->extent;
    }
    areas.push_back(a);
    total += a;
  }

  std::vector<Vec3> points;
  points.reserve(count);
  int guard = 0;
  while ((int)points.size() < count && guard++ < 100 * count) {
    double pick = uni(rng) * total;
    size_t idx = 0;
    while (idx + 1 < areas.size() && pick > areas[idx]) pick -= areas[idx++];
    const Primitive& prim = scene.primitives[idx];
    Vec3 q;
    if (const auto* s = std::get_if<SpherePrim>(&prim)) {
      Vec3 dir(gauss(rng), gauss(rng), gauss(rng));
      if (dir.norm() < 1e-12) continue;
      q = s->center + s->radius * dir.normalized();
    } else if (const auto* b = std::get_if<BoxPrim>(&prim)) {
      const Vec3 e = b->max - b->min;
      const double f[3] = {e.y() * e.z(), e.x() * e.z(), e.x() * e.y()};
      double pa = uni(rng) * (f[0] + f[1] + f[2]);
      int axis = pa < f[0] ? 0 : (pa < f[0] + f[1] ? 1 : 2);
      q = b->min + Vec3(uni(rng) * e.x(), uni(rng) * e.y(), uni(rng) * e.z());
      q[axis] = uni(rng) < 0.5 ? b->min[axis] : b->max[axis];
    } else if (const auto* p = std::get_if<PlanePrim>(&prim)) {
      // disk sample in the plane's tangent frame
      Vec3 t1 = p->normal.unitOrthogonal();
      Vec3 t2 = p->normal.cross(t1);
      const double r = p->extent * std::sqrt(uni(rng));
      const double a = 2.0 * EIGEN_PI * uni(rng);
      q = p->offset * p->normal + r * (std::cos(a) * t1 + std::sin(a) * t2);
    } else {
      continue;
    }
    bool buried = false;
    for (size_t j = 0; j < scene.primitives.size(); ++j)
      if (j != idx && inside_primitive(scene.primitives[j], q)) {
        buried = true;
        break;
      }
    if (!buried) points.push_back(q);
  }
  return points;
}

}  // namespace raydf::scene
