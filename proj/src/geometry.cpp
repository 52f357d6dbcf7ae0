#include "raydf/geometry.hpp"

#include <cmath>
#include <random>

namespace raydf {

const char* to_string(GeomError e) {
  switch (e) {
    case GeomError::NoIntersection: return "NoIntersection";
    case GeomError::OriginInside: return "OriginInside";
    case GeomError::DegenerateRay: return "DegenerateRay";
    case GeomError::NegativeResult: return "NegativeResult";
    case GeomError::BehindCamera: return "BehindCamera";
    case GeomError::PointOutsideSphere: return "PointOutsideSphere";
    case GeomError::DegenerateGradient: return "DegenerateGradient";
    case GeomError::PoleSingularity: return "PoleSingularity";
    case GeomError::OutOfRange: return "OutOfRange";
  }
  return "Unknown";
}

namespace geometry {

namespace {

// Roots of |oc + t w|^2 = r^2 for unit w. Returns false when the line
// misses or grazes the sphere.
bool sphere_roots(const Vec3& oc, const Vec3& w, double r, double& t0,
                  double& t1) {
  const double b = oc.dot(w);
  const double disc = b * b - (oc.squaredNorm() - r * r);
  if (disc <= 1e-14 * r * r) return false;
  const double s = std::sqrt(disc);
  t0 = -b - s;
  t1 = -b + s;
  return true;
}

}  // namespace

Expected<ParamRay> parameterize_ray(const Vec3& origin, const Vec3& direction,
                                    const BoundingSphere& sphere) {
  const double r = sphere.radius();
  const Vec3 oc = origin - sphere.center;
  if (oc.norm() < r * (1.0 - 1e-12)) return GeomError::OriginInside;
  double t_in, t_out;
  if (!sphere_roots(oc, direction, r, t_in, t_out))
    return GeomError::NoIntersection;
  if (t_out <= 0.0) return GeomError::NoIntersection;  // pointing away
  if (t_in < 0.0) t_in = 0.0;                          // origin on the sphere

  const Vec3 p_in = origin + t_in * direction;
  const Vec3 p_out = origin + t_out * direction;
  ParamRay out;
  to_angles((p_in - sphere.center) / r, out.ray.theta_in, out.ray.phi_in);
  to_angles((p_out - sphere.center) / r, out.ray.theta_out, out.ray.phi_out);
  out.d0 = t_in;
  return out;
}

Expected<RayFrame> ray_to_points(const Ray& ray, const BoundingSphere& sphere) {
  const double r = sphere.radius();
  RayFrame f;
  f.entry = sphere.center + r * from_angles(ray.theta_in, ray.phi_in);
  f.exit = sphere.center + r * from_angles(ray.theta_out, ray.phi_out);
  const Vec3 chord = f.exit - f.entry;
  const double len = chord.norm();
  if (len < 1e-12) return GeomError::DegenerateRay;
  f.direction = chord / len;
  return f;
}

Expected<double> depth_to_distance(double raw_depth, double u, double v,
                                   const Camera& cam, double d0) {
  const double du = u - cam.cy;
  const double dv = v - cam.cx;
  const double d =
      raw_depth * std::sqrt(du * du + dv * dv + cam.focal * cam.focal) /
          cam.focal -
      d0;
  if (d < 0.0) return GeomError::NegativeResult;
  return d;
}

double distance_to_depth(double distance, double u, double v,
                         const Camera& cam, double d0) {
  const double du = u - cam.cy;
  const double dv = v - cam.cx;
  return (distance + d0) * cam.focal /
         std::sqrt(du * du + dv * dv + cam.focal * cam.focal);
}

Vec3 pixel_direction(double u, double v, const Camera& cam) {
  // K^-1 (u, v, 1): u is the row (y axis), v the column (x axis).
  const Vec3 m0 = cam.rotation * Vec3((v - cam.cx) / cam.focal,
                                      (u - cam.cy) / cam.focal, 1.0);
  return m0.normalized();
}

Expected<ParamRay> pixel_ray(double u, double v, const Camera& cam,
                             const BoundingSphere& sphere) {
  return parameterize_ray(cam.translation, pixel_direction(u, v, cam), sphere);
}

Expected<Reprojection> reproject(const Vec3& p, const Camera& cam) {
  const Vec3 q = cam.rotation.transpose() * (p - cam.translation);
  if (q.z() <= 0.0) return GeomError::BehindCamera;
  Reprojection rp;
  rp.z = q.z();
  rp.u = cam.focal * q.y() / q.z() + cam.cy;
  rp.v = cam.focal * q.x() / q.z() + cam.cx;
  rp.in_frame = rp.u >= 0.0 && rp.u <= cam.height - 1 && rp.v >= 0.0 &&
                rp.v <= cam.width - 1;
  return rp;
}

Expected<std::vector<MultiViewRay>> sample_multiview_rays(
    const Vec3& p, int M, const BoundingSphere& sphere,
    std::uint64_t rng_seed) {
  const double r = sphere.radius();
  const Vec3 pc = p - sphere.center;
  if (pc.norm() >= r) return GeomError::PointOutsideSphere;

  std::mt19937_64 rng(rng_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<MultiViewRay> rays;
  rays.reserve(M);
  while ((int)rays.size() < M) {
    Vec3 w(gauss(rng), gauss(rng), gauss(rng));
    const double n = w.norm();
    if (n < 1e-12) continue;
    w /= n;
    double t0, t1;
    if (!sphere_roots(pc, w, r, t0, t1)) continue;
    const Vec3 entry = p + t0 * w;  // intersection opposite w (t0 < 0)
    // redraw directions nearly tangent to the sphere at entry
    if (std::abs(w.dot((entry - sphere.center) / r)) < 1e-6) continue;
    MultiViewRay mv;
    Ray& ray = mv.ray;
    to_angles((entry - sphere.center) / r, ray.theta_in, ray.phi_in);
    const Vec3 exit = p + t1 * w;
    to_angles((exit - sphere.center) / r, ray.theta_out, ray.phi_out);
    mv.distance = -t0;
    rays.push_back(mv);
  }
  return rays;
}

double transformation_residual(const RaySample& s1, const RaySample& s2,
                               const BoundingSphere& sphere) {
  const RayFrame f1 = ray_to_points(s1.ray, sphere).value();
  const RayFrame f2 = ray_to_points(s2.ray, sphere).value();
  const Vec3 p1 = f1.entry + s1.distance * f1.direction;
  const Vec3 p2 = f2.entry + s2.distance * f2.direction;
  return (p1 - p2).norm();
}

namespace {

inline double wrap_angle(double a) {
  if (a > EIGEN_PI) a -= 2.0 * EIGEN_PI;
  if (a <= -EIGEN_PI) a += 2.0 * EIGEN_PI;
  return a;
}

// Difference of two ray parameterizations with longitude wrap-around.
inline Vec4 ray_delta(const Ray& a, const Ray& b) {
  return {a.theta_in - b.theta_in, wrap_angle(a.phi_in - b.phi_in),
          a.theta_out - b.theta_out, wrap_angle(a.phi_out - b.phi_out)};
}

}  // namespace

Expected<NormalResult> derive_normal(const Ray& ray, double d_hat,
                                     const Vec4& grad,
                                     const BoundingSphere& sphere, double d0) {
  const auto frame = ray_to_points(ray, sphere);
  if (!frame) return frame.error();
  const Vec3 m = frame->direction;

  double theta_m, phi_m;
  to_angles(m, theta_m, phi_m);
  const double st = std::sin(theta_m);
  if (st < 1e-9) return GeomError::PoleSingularity;

  // gradient w.r.t. raw angles (inputs are normalized: 2t/pi - 1, p/pi)
  const Vec4 g(grad[0] * 2.0 / EIGEN_PI, grad[1] / EIGEN_PI,
               grad[2] * 2.0 / EIGEN_PI, grad[3] / EIGEN_PI);

  // Jacobian of (r, d0) w.r.t. the direction angles by central differences,
  // with the ray origin held fixed.
  const Vec3 origin = frame->entry - d0 * m;
  const double h = 1e-6;
  const auto probe = [&](double th, double ph) {
    return parameterize_ray(origin, from_angles(th, ph), sphere);
  };
  const auto tp = probe(theta_m + h, phi_m), tm = probe(theta_m - h, phi_m);
  const auto pp = probe(theta_m, phi_m + h), pm = probe(theta_m, phi_m - h);
  if (!tp || !tm || !pp || !pm) return GeomError::DegenerateGradient;
  const Vec4 dr_dtheta = ray_delta(tp->ray, tm->ray) / (2.0 * h);
  const Vec4 dr_dphi = ray_delta(pp->ray, pm->ray) / (2.0 * h);
  const double dd0_dtheta = (tp->d0 - tm->d0) / (2.0 * h);
  const double dd0_dphi = (pp->d0 - pm->d0) / (2.0 * h);

  const double D = sphere.diameter;
  const double R = D * d_hat + d0;
  const double dR_dtheta = D * g.dot(dr_dtheta) + dd0_dtheta;
  const double dR_dphi = D * g.dot(dr_dphi) + dd0_dphi;

  const double ct = std::cos(theta_m);
  const double sp = std::sin(phi_m), cp = std::cos(phi_m);
  const Vec3 dm_dtheta(ct * cp, ct * sp, -st);
  const Vec3 dm_dphi(-st * sp, st * cp, 0.0);

  const Vec3 t_theta = dR_dtheta * m + R * dm_dtheta;
  const Vec3 t_phi = dR_dphi * m + R * dm_dphi;
  const Vec3 cross = t_phi.cross(t_theta);
  const double mag = cross.norm();
  if (mag < 1e-12) return GeomError::DegenerateGradient;
  return NormalResult{cross / mag, mag};
}

}  // namespace geometry
}  // namespace raydf
