#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "raydf/dataset.hpp"
#include "raydf/geometry.hpp"
#include "raydf/rng.hpp"
#include "raydf/scene.hpp"

using namespace raydf;
using namespace raydf::geometry;

namespace {

const BoundingSphere kUnit{Vec3::Zero(), 2.0};  // radius 1
constexpr double kPi = EIGEN_PI;

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vec3 v(g(rng), g(rng), g(rng));
  return v.normalized();
}

// random valid ray: origin outside the sphere, direction through a point
// well inside it
ParamRay random_param_ray(std::mt19937_64& rng, const BoundingSphere& sphere) {
  std::uniform_real_distribution<double> uni(-0.6, 0.6);
  for (;;) {
    const Vec3 origin =
        sphere.center + (sphere.radius() * 2.5) * random_unit(rng);
    const Vec3 inside =
        sphere.center + sphere.radius() * Vec3(uni(rng), uni(rng), uni(rng));
    const Vec3 dir = (inside - origin).normalized();
    const auto pr = parameterize_ray(origin, dir, sphere);
    if (pr) return *pr;
  }
}

Camera make_cam(const Mat3& R, const Vec3& t, double f, int size) {
  Camera cam;
  cam.rotation = R;
  cam.translation = t;
  cam.focal = f;
  cam.cx = (size - 1) / 2.0;
  cam.cy = (size - 1) / 2.0;
  cam.width = cam.height = size;
  return cam;
}

}  // namespace

TEST_CASE("parameterize_ray axis-aligned") {
  const auto pr = parameterize_ray({0, 0, -2}, {0, 0, 1}, kUnit);
  REQUIRE(pr.ok());
  CHECK(pr->ray.theta_in == doctest::Approx(kPi).epsilon(1e-12));
  CHECK(pr->ray.phi_in == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(pr->ray.theta_out == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(pr->ray.phi_out == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(pr->d0 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("parameterize_ray equatorial") {
  const auto pr = parameterize_ray({-2, 0, 0}, {1, 0, 0}, kUnit);
  REQUIRE(pr.ok());
  CHECK(pr->ray.theta_in == doctest::Approx(kPi / 2).epsilon(1e-12));
  CHECK(pr->ray.phi_in == doctest::Approx(kPi).epsilon(1e-12));
  CHECK(pr->ray.theta_out == doctest::Approx(kPi / 2).epsilon(1e-12));
  CHECK(pr->ray.phi_out == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(pr->d0 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("parameterize_ray failures") {
  CHECK(parameterize_ray({0, 0, -2}, {1, 0, 0}, kUnit).error() ==
        GeomError::NoIntersection);
  CHECK(parameterize_ray({0, 0, 0.2}, {0, 0, 1}, kUnit).error() ==
        GeomError::OriginInside);
  // tangent counts as a miss
  CHECK(parameterize_ray({-2, 0, 1}, {1, 0, 0}, kUnit).error() ==
        GeomError::NoIntersection);
}

TEST_CASE("ray_to_points trivials") {
  const auto f1 = ray_to_points({kPi, 0, 0, 0}, kUnit);
  REQUIRE(f1.ok());
  CHECK((f1->entry - Vec3(0, 0, -1)).norm() < 1e-12);
  CHECK((f1->exit - Vec3(0, 0, 1)).norm() < 1e-12);
  CHECK((f1->direction - Vec3(0, 0, 1)).norm() < 1e-12);

  const auto f2 = ray_to_points({kPi / 2, kPi, kPi / 2, 0}, kUnit);
  REQUIRE(f2.ok());
  CHECK((f2->direction - Vec3(1, 0, 0)).norm() < 1e-12);

  CHECK(ray_to_points({kPi / 2, 0, kPi / 2, 0}, kUnit).error() ==
        GeomError::DegenerateRay);
}

TEST_CASE("parameterize/ray_to_points round-trip on 1000 random rays") {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto pr = random_param_ray(rng, kUnit);
    const auto frame = ray_to_points(pr.ray, kUnit);
    REQUIRE(frame.ok());
    const auto back =
        parameterize_ray(frame->entry - pr.d0 * frame->direction,
                         frame->direction, kUnit);
    REQUIRE(back.ok());
    const auto frame2 = ray_to_points(back->ray, kUnit);
    REQUIRE(frame2.ok());
    worst = std::max(worst, (frame2->direction - frame->direction).norm());
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("depth_to_distance") {
  Camera cam = make_cam(Mat3::Identity(), {0, 0, -2}, 100, 201);

  SUBCASE("principal point") {
    const auto d = depth_to_distance(1.5, cam.cy, cam.cx, cam, 1.0);
    REQUIRE(d.ok());
    CHECK(*d == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("45 degree pixel") {
    const auto d = depth_to_distance(1.0, cam.cy, cam.cx + 100, cam, 0.0);
    REQUIRE(d.ok());
    CHECK(*d == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
  }
  SUBCASE("negative result") {
    CHECK(depth_to_distance(0.5, cam.cy, cam.cx, cam, 1.0).error() ==
          GeomError::NegativeResult);
  }
  SUBCASE("inverse pair") {
    const double u = 37.0, v = 151.0, d0 = 0.8;
    const auto d = depth_to_distance(2.1, u, v, cam, d0);
    REQUIRE(d.ok());
    CHECK(distance_to_depth(*d, u, v, cam, d0) ==
          doctest::Approx(2.1).epsilon(1e-12));
  }
}

TEST_CASE("pixel_ray") {
  Camera cam = make_cam(Mat3::Identity(), {0, 0, -2}, 64, 64);

  SUBCASE("principal point matches the axis ray") {
    const auto pr = pixel_ray(cam.cy, cam.cx, cam, kUnit);
    REQUIRE(pr.ok());
    CHECK(pr->ray.theta_in == doctest::Approx(kPi).epsilon(1e-12));
    CHECK(pr->ray.theta_out == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(pr->d0 == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("all pixels intersect when the sphere fills the frustum") {
    // pushed back so the half-FOV (~26.6 deg) cone is inside the sphere cone
    Camera far_cam = make_cam(Mat3::Identity(), {0, 0, -4}, 64, 64);
    BoundingSphere big{Vec3::Zero(), 2 * 3.0};
    for (int u = 0; u < 64; ++u)
      for (int v = 0; v < 64; ++v)
        CHECK(pixel_ray(u, v, far_cam, big).ok());
  }
  SUBCASE("distinct pixels give distinct rays") {
    const auto a = pixel_ray(30, 30, cam, kUnit);
    const auto b = pixel_ray(30, 31, cam, kUnit);
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    const bool same = a->ray.theta_in == b->ray.theta_in &&
                      a->ray.phi_in == b->ray.phi_in &&
                      a->ray.theta_out == b->ray.theta_out &&
                      a->ray.phi_out == b->ray.phi_out;
    CHECK(!same);
  }
}

TEST_CASE("reproject") {
  Camera cam = make_cam(Mat3::Identity(), {0, 0, 0}, 80, 101);

  SUBCASE("optical axis point lands on the principal point") {
    const auto r = reproject({0, 0, 1}, cam);
    REQUIRE(r.ok());
    CHECK(r->u == doctest::Approx(cam.cy).epsilon(1e-12));
    CHECK(r->v == doctest::Approx(cam.cx).epsilon(1e-12));
    CHECK(r->z == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r->in_frame);
  }
  SUBCASE("back-project then reproject round-trips") {
    std::mt19937_64 rng(5);
    // oblique pose
    const Vec3 pos(1.2, -0.8, -2.0);
    Camera posed = scene::look_at(pos, Vec3::Zero(), 80, 101, 101);
    std::uniform_real_distribution<double> uni(10.0, 90.0);
    for (int i = 0; i < 100; ++i) {
      const double u = uni(rng), v = uni(rng), depth = 1.0 + uni(rng) / 50.0;
      const Vec3 dir = pixel_direction(u, v, posed);
      // scale so the camera-frame z equals `depth`
      const Vec3 cam_dir = posed.rotation.transpose() * dir;
      const Vec3 p = posed.translation + (depth / cam_dir.z()) * dir;
      const auto r = reproject(p, posed);
      REQUIRE(r.ok());
      CHECK(r->u == doctest::Approx(u).epsilon(1e-6));
      CHECK(r->v == doctest::Approx(v).epsilon(1e-6));
      CHECK(r->z == doctest::Approx(depth).epsilon(1e-9));
    }
  }
  SUBCASE("behind camera") {
    CHECK(reproject({0, 0, -1}, cam).error() == GeomError::BehindCamera);
  }
}

TEST_CASE("sample_multiview_rays") {
  SUBCASE("center point: every d_tilde is the radius") {
    const auto rays = sample_multiview_rays(Vec3::Zero(), 64, kUnit, 3);
    REQUIRE(rays.ok());
    REQUIRE(rays->size() == 64);
    for (const auto& mv : *rays)
      CHECK(mv.distance == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("deterministic per seed") {
    const auto a = sample_multiview_rays({0.3, -0.1, 0.2}, 32, kUnit, 77);
    const auto b = sample_multiview_rays({0.3, -0.1, 0.2}, 32, kUnit, 77);
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    for (std::size_t i = 0; i < a->size(); ++i) {
      CHECK((*a)[i].distance == (*b)[i].distance);
      CHECK((*a)[i].ray.theta_in == (*b)[i].ray.theta_in);
      CHECK((*a)[i].ray.phi_out == (*b)[i].ray.phi_out);
    }
  }
  SUBCASE("outside point rejected") {
    CHECK(sample_multiview_rays({0, 0, 1.5}, 4, kUnit, 0).error() ==
          GeomError::PointOutsideSphere);
  }
  SUBCASE("mean chord distance matches a Monte-Carlo oracle") {
    const Vec3 p(0.5, 0, 0);
    const int M = 100000;
    const auto rays = sample_multiview_rays(p, M, kUnit, 19);
    REQUIRE(rays.ok());
    double mean = 0.0;
    for (const auto& mv : *rays) mean += mv.distance / M;

    // independent brute-force integral of |p - entry| over uniform directions
    std::mt19937_64 rng(0xBEEF);
    double oracle = 0.0;
    for (int i = 0; i < M; ++i) {
      const Vec3 w = random_unit(rng);
      // entry point opposite w: p + t w with the negative root
      const double b = p.dot(w);
      const double t = -b - std::sqrt(b * b - (p.squaredNorm() - 1.0));
      oracle += (t * w).norm() / M;
    }
    CHECK(mean == doctest::Approx(oracle).epsilon(0.01));
  }
  SUBCASE("octant uniformity of directions") {
    const Vec3 p(0.2, -0.3, 0.1);
    const int M = 100000;
    const auto rays = sample_multiview_rays(p, M, kUnit, 23);
    REQUIRE(rays.ok());
    int counts[8] = {0};
    for (const auto& mv : *rays) {
      const auto frame = ray_to_points(mv.ray, kUnit);
      REQUIRE(frame.ok());
      const Vec3& w = frame->direction;
      counts[(w.x() > 0) * 4 + (w.y() > 0) * 2 + (w.z() > 0)]++;
    }
    const double slack = 4.0 * std::sqrt((double)M);
    for (int o = 0; o < 8; ++o)
      CHECK(std::abs(counts[o] - M / 8.0) <= slack);
  }
}

TEST_CASE("transformation_residual") {
  SUBCASE("identity") {
    std::mt19937_64 rng(3);
    const auto pr = random_param_ray(rng, kUnit);
    const auto frame = ray_to_points(pr.ray, kUnit);
    RaySample s;
    s.ray = pr.ray;
    s.distance = 0.7;
    s.point = frame->entry + 0.7 * frame->direction;
    CHECK(transformation_residual(s, s, kUnit) == 0.0);
  }
  SUBCASE("co-visible oracle rays agree (10^4 pairs)") {
    const auto scn = scene::make_scene("two-spheres");
    std::mt19937_64 rng(41);
    double worst = 0.0;
    int done = 0;
    while (done < 10000) {
      // hit the scene from a random outer point
      const Vec3 origin = scn.bounding.center +
                          scn.bounding.radius() * 1.8 * random_unit(rng);
      const Vec3 target =
          scn.bounding.center + 0.3 * scn.bounding.radius() * random_unit(rng);
      const Vec3 dir = (target - origin).normalized();
      const auto hit = scene::cast_ray(scn, origin, dir);
      if (!hit) continue;
      const auto pr1 = parameterize_ray(origin, dir, scn.bounding);
      if (!pr1) continue;
      // second ray through the same point from another exterior origin
      const Vec3 origin2 = scn.bounding.center +
                           scn.bounding.radius() * 2.2 * random_unit(rng);
      const Vec3 dir2 = (hit->point - origin2).normalized();
      const auto pr2 = parameterize_ray(origin2, dir2, scn.bounding);
      if (!pr2) continue;
      const auto f1 = ray_to_points(pr1->ray, scn.bounding);
      const auto f2 = ray_to_points(pr2->ray, scn.bounding);
      if (!f1 || !f2) continue;
      RaySample s1{pr1->ray, (hit->point - f1->entry).norm(), hit->point,
                   pr1->d0};
      RaySample s2{pr2->ray, (hit->point - f2->entry).norm(), hit->point,
                   pr2->d0};
      worst = std::max(worst,
                       transformation_residual(s1, s2, scn.bounding));
      ++done;
    }
    CHECK(worst < 1e-9);
  }
  SUBCASE("opposite cube faces stay an edge apart") {
    scene::Scene cube;
    cube.primitives.push_back(
        scene::BoxPrim{Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5)});
    cube.bounding = {Vec3::Zero(), 2.5};
    const auto h1 = scene::cast_ray(cube, {-2, 0.1, 0.05}, {1, 0, 0});
    const auto h2 = scene::cast_ray(cube, {2, 0.1, 0.05}, {-1, 0, 0});
    REQUIRE(h1);
    REQUIRE(h2);
    const auto p1 =
        parameterize_ray({-2, 0.1, 0.05}, {1, 0, 0}, cube.bounding);
    const auto p2 =
        parameterize_ray({2, 0.1, 0.05}, {-1, 0, 0}, cube.bounding);
    const auto f1 = ray_to_points(p1->ray, cube.bounding);
    const auto f2 = ray_to_points(p2->ray, cube.bounding);
    RaySample s1{p1->ray, (h1->point - f1->entry).norm(), h1->point, p1->d0};
    RaySample s2{p2->ray, (h2->point - f2->entry).norm(), h2->point, p2->d0};
    CHECK(transformation_residual(s1, s2, cube.bounding) >=
          1.0 - 1e-9);
  }
}

namespace {

// analytic normalized-distance field of a scene, differentiated by central
// finite differences over the 4 normalized ray inputs
Vec4 fd_gradient(const scene::Scene& scn, const Ray& ray, double* d_hat_out) {
  const double D = scn.bounding.diameter;
  constexpr double pi = EIGEN_PI;
  // field over double-precision normalized inputs
  auto field = [&](const Vec4& nr) {
    const Ray r{(nr[0] + 1.0) * pi / 2.0, nr[1] * pi,
                (nr[2] + 1.0) * pi / 2.0, nr[3] * pi};
    const auto frame = ray_to_points(r, scn.bounding).value();
    const auto hit = scene::cast_ray(scn, frame.entry, frame.direction);
    REQUIRE(hit);
    return (hit->point - frame.entry).norm() / D;
  };
  const Vec4 n0(2.0 * ray.theta_in / pi - 1.0, ray.phi_in / pi,
                2.0 * ray.theta_out / pi - 1.0, ray.phi_out / pi);
  if (d_hat_out) *d_hat_out = field(n0);
  const double h = 1e-6;
  Vec4 g;
  for (int i = 0; i < 4; ++i) {
    Vec4 np = n0, nm = n0;
    np[i] += h;
    nm[i] -= h;
    g[i] = (field(np) - field(nm)) / (2.0 * h);
  }
  return g;
}

double angular_error(const Vec3& a, const Vec3& b) {
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0));
}

}  // namespace

TEST_CASE("derive_normal on the analytic sphere field") {
  scene::Scene scn;
  scn.primitives.push_back(scene::SpherePrim{Vec3::Zero(), 0.5});
  scn.bounding = kUnit;

  SUBCASE("near-axial ray recovers the polar normal") {
    // tilted a hair off -z so the ray direction avoids the coordinate pole
    const Vec3 origin(0.002, 0.001, 2.0);
    const Vec3 dir = (Vec3(0.001, 0.0005, 0) - origin).normalized();
    const auto pr = parameterize_ray(origin, dir, scn.bounding);
    REQUIRE(pr.ok());
    double d_hat = 0.0;
    const Vec4 g = fd_gradient(scn, pr->ray, &d_hat);
    const auto nr = derive_normal(pr->ray, d_hat, g, scn.bounding, pr->d0);
    REQUIRE(nr.ok());
    const auto frame = ray_to_points(pr->ray, scn.bounding);
    const Vec3 hit_point = frame->entry + d_hat * 2.0 * frame->direction;
    CHECK(angular_error(nr->normal, hit_point.normalized()) < 1e-4);
    CHECK(angular_error(nr->normal, Vec3(0, 0, 1)) < 5e-3);
  }

  SUBCASE("1000 random viewing rays within 1e-4 rad") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> uni(-0.3, 0.3);
    int tested = 0;
    double worst = 0.0;
    while (tested < 1000) {
      const Vec3 origin = 2.0 * random_unit(rng);
      const Vec3 aim = 0.4 * Vec3(uni(rng), uni(rng), uni(rng));
      const Vec3 dir = (aim - origin).normalized();
      const auto hit = scene::cast_ray(scn, origin, dir);
      if (!hit) continue;
      const auto pr = parameterize_ray(origin, dir, scn.bounding);
      if (!pr) continue;
      double d_hat = 0.0;
      const Vec4 g = fd_gradient(scn, pr->ray, &d_hat);
      const auto nr = derive_normal(pr->ray, d_hat, g, scn.bounding, pr->d0);
      if (!nr.ok()) continue;  // pole rays excluded by contract
      worst = std::max(worst, angular_error(nr->normal,
                                            hit->point.normalized()));
      ++tested;
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("derive_normal constant field gives the anti-ray normal") {
  // A zero input gradient describes a surface at constant offset behind the
  // sphere entry. Along center-directed rays d0 is stationary in the ray
  // direction, so that surface is locally a sphere around the camera and the
  // normal must be the anti-ray direction.
  std::mt19937_64 rng(31);
  for (int i = 0; i < 20; ++i) {
    const Vec3 origin = 2.5 * random_unit(rng);
    const Vec3 dir = -origin.normalized();
    const auto pr = parameterize_ray(origin, dir, kUnit);
    REQUIRE(pr.ok());
    const auto frame = ray_to_points(pr->ray, kUnit);
    if (std::sin(pr->ray.theta_in) < 1e-6) continue;  // polar direction
    const auto nr = derive_normal(pr->ray, 0.3, Vec4::Zero(), kUnit, pr->d0);
    REQUIRE(nr.ok());
    CHECK((nr->normal + frame->direction).norm() < 1e-6);
  }
}

TEST_CASE("derive_normal on the oblique plane") {
  scene::Scene scn;
  scn.primitives.push_back(scene::PlanePrim{Vec3(0, 0, 1), 0.0, 0.8});
  scn.bounding = kUnit;
  // 45-degree view onto z = 0
  const Vec3 origin(0, -1.5, 1.5);
  const Vec3 dir = (Vec3(0.05, 0.1, 0) - origin).normalized();
  const auto pr = parameterize_ray(origin, dir, scn.bounding);
  REQUIRE(pr.ok());
  double d_hat = 0.0;
  const Vec4 g = fd_gradient(scn, pr->ray, &d_hat);
  const auto nr = derive_normal(pr->ray, d_hat, g, scn.bounding, pr->d0);
  REQUIRE(nr.ok());
  CHECK(angular_error(nr->normal, Vec3(0, 0, 1)) < 1e-4);
}

TEST_CASE("derive_normal pole and degenerate cases") {
  // exactly polar direction
  const auto pr = parameterize_ray({0, 0, -2}, {0, 0, 1}, kUnit);
  REQUIRE(pr.ok());
  const auto nr = derive_normal(pr->ray, 0.25, Vec4::Zero(), kUnit, pr->d0);
  CHECK(!nr.ok());
  CHECK(nr.error() == GeomError::PoleSingularity);
}

TEST_CASE("normal magnitude grows with the input gradient") {
  std::mt19937_64 rng(57);
  const auto pr = random_param_ray(rng, kUnit);
  const auto small =
      derive_normal(pr.ray, 0.4, Vec4(0.01, 0.01, 0.01, 0.01), kUnit, pr.d0);
  const auto large =
      derive_normal(pr.ray, 0.4, Vec4(10, 10, 10, 10), kUnit, pr.d0);
  REQUIRE(small.ok());
  REQUIRE(large.ok());
  CHECK(large->magnitude > small->magnitude);
  CHECK(std::abs(small->normal.norm() - 1.0) < 1e-9);
}
