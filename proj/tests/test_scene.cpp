#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "raydf/geometry.hpp"
#include "raydf/scene.hpp"

using namespace raydf;
using namespace raydf::scene;

namespace {

Scene unit_sphere_scene() {
  Scene s;
  s.primitives.push_back(SpherePrim{Vec3::Zero(), 1.0});
  s.bounding = {Vec3::Zero(), 3.0};
  return s;
}

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Vec3 v(g(rng), g(rng), g(rng));
  return v.normalized();
}

}  // namespace

TEST_CASE("cast_ray primitives") {
  SUBCASE("unit sphere head-on") {
    const auto h = cast_ray(unit_sphere_scene(), {0, 0, -2}, {0, 0, 1});
    REQUIRE(h);
    CHECK(h->t == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((h->point - Vec3(0, 0, -1)).norm() < 1e-12);
    CHECK((h->normal - Vec3(0, 0, -1)).norm() < 1e-12);
  }
  SUBCASE("box face") {
    Scene s;
    s.primitives.push_back(BoxPrim{Vec3(-1, -1, -1), Vec3(1, 1, 1)});
    s.bounding = {Vec3::Zero(), 4.0};
    const auto h = cast_ray(s, {-2, 0, 0}, {1, 0, 0});
    REQUIRE(h);
    CHECK(h->t == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((h->normal - Vec3(-1, 0, 0)).norm() < 1e-12);
  }
  SUBCASE("miss") {
    CHECK(!cast_ray(unit_sphere_scene(), {0, 0, -2}, {0, 1, 0}));
  }
  SUBCASE("nearest of several primitives wins") {
    Scene s;
    s.primitives.push_back(SpherePrim{Vec3(0, 0, 2), 0.5});
    s.primitives.push_back(SpherePrim{Vec3(0, 0, 0), 0.5});
    s.bounding = {Vec3::Zero(), 6.0};
    const auto h = cast_ray(s, {0, 0, -2}, {0, 0, 1});
    REQUIRE(h);
    CHECK(h->t == doctest::Approx(1.5).epsilon(1e-12));
  }
  SUBCASE("finite plane extent") {
    Scene s;
    s.primitives.push_back(PlanePrim{Vec3(0, 0, 1), 0.0, 0.5});
    s.bounding = {Vec3::Zero(), 3.0};
    CHECK(cast_ray(s, {0.3, 0, 1}, {0, 0, -1}));
    CHECK(!cast_ray(s, {0.7, 0, 1}, {0, 0, -1}));
  }
  SUBCASE("hit points satisfy the implicit equation") {
    const auto scn = make_scene("two-spheres");
    std::mt19937_64 rng(7);
    int done = 0;
    while (done < 500) {
      const Vec3 o = scn.bounding.center + 2.0 * random_unit(rng);
      const Vec3 d = (scn.bounding.center + 0.3 * random_unit(rng) - o)
                         .normalized();
      const auto h = cast_ray(scn, o, d);
      if (!h) continue;
      bool on_surface = false;
      for (const auto& prim : scn.primitives) {
        const auto* sp = std::get_if<SpherePrim>(&prim);
        if (sp &&
            std::abs((h->point - sp->center).norm() - sp->radius) < 1e-10)
          on_surface = true;
      }
      CHECK(on_surface);
      ++done;
    }
  }
}

TEST_CASE("render_depth_scan") {
  const auto scn = unit_sphere_scene();
  Camera cam = look_at({0, 0, -2.5}, {0, 0, 0}, 64, 64, 64);

  SUBCASE("center pixel depth") {
    const DepthScan scan = render_depth_scan(scn, cam);
    // principal point falls between pixels (cx = 31.5); probe it directly
    Camera probe = cam;
    probe.cx = probe.cy = 32.0;
    const DepthScan scan2 = render_depth_scan(scn, probe);
    CHECK(scan2.raster(32, 32) == doctest::Approx(1.5).epsilon(1e-6));
    CHECK(scan.raster.rows() == 64);
    CHECK(scan.raster.cols() == 64);
  }
  SUBCASE("empty scene renders zeros") {
    Scene empty;
    empty.bounding = {Vec3::Zero(), 3.0};
    const DepthScan scan = render_depth_scan(empty, cam);
    CHECK(scan.raster.isZero(0.0f));
  }
  SUBCASE("depth -> distance -> cast self-consistency") {
    const DepthScan scan = render_depth_scan(scn, cam);
    for (int u = 0; u < 64; ++u)
      for (int v = 0; v < 64; ++v) {
        if (scan.raster(u, v) <= 0.0f) continue;
        const auto pr = geometry::pixel_ray(u, v, cam, scn.bounding);
        REQUIRE(pr.ok());
        const auto d = geometry::depth_to_distance((double)scan.raster(u, v),
                                                   u, v, cam, pr->d0);
        REQUIRE(d.ok());
        const Vec3 dir = geometry::pixel_direction(u, v, cam);
        const auto hit = cast_ray(scn, cam.translation, dir);
        REQUIRE(hit);
        const auto frame = geometry::ray_to_points(pr->ray, scn.bounding);
        const double cast_d = (hit->point - frame->entry).norm();
        // raster stores float32 depth; compare at float precision
        CHECK(*d == doctest::Approx(cast_d).epsilon(1e-6));
      }
  }
  SUBCASE("pose equivariance under a rigid motion") {
    // rotate scene and camera together by 90 degrees about z
    Mat3 R;
    R = Eigen::AngleAxisd(EIGEN_PI / 2, Vec3::UnitZ());
    Scene rotated;
    rotated.bounding = scn.bounding;
    rotated.primitives.push_back(
        SpherePrim{R * Vec3::Zero(), 1.0});
    Camera cam2 = cam;
    cam2.rotation = R * cam.rotation;
    cam2.translation = R * cam.translation;
    const DepthScan a = render_depth_scan(scn, cam);
    const DepthScan b = render_depth_scan(rotated, cam2);
    CHECK(((a.raster - b.raster).cwiseAbs().maxCoeff()) < 1e-9f);
  }
  SUBCASE("noise flag perturbs hit pixels deterministically") {
    const DepthScan clean = render_depth_scan(scn, cam);
    const DepthScan n1 = render_depth_scan(scn, cam, 0.01, 99);
    const DepthScan n2 = render_depth_scan(scn, cam, 0.01, 99);
    CHECK(n1.raster == n2.raster);
    CHECK(n1.raster != clean.raster);
    // miss pixels stay sentinel
    for (int u = 0; u < 64; ++u)
      for (int v = 0; v < 64; ++v)
        if (clean.raster(u, v) == 0.0f) CHECK(n1.raster(u, v) == 0.0f);
  }
}

TEST_CASE("oracle_visibility") {
  const auto scn = unit_sphere_scene();

  SUBCASE("a ray is visible to itself") {
    const Vec3 o(0, 0, -2.5);
    const Vec3 dir(0, 0, 1);
    const auto hit = cast_ray(scn, o, dir);
    const auto pr = geometry::parameterize_ray(o, dir, scn.bounding);
    REQUIRE(hit);
    REQUIRE(pr.ok());
    CHECK(oracle_visibility(scn, pr->ray, hit->point, pr->ray, 0.010) == 1);
  }
  SUBCASE("occluded opposite box face") {
    Scene s;
    s.primitives.push_back(BoxPrim{Vec3(-0.5, -0.5, -0.5), Vec3(0.5, 0.5, 0.5)});
    s.bounding = {Vec3::Zero(), 3.0};
    const Vec3 o1(0.1, 0.05, 2.0);
    const Vec3 d1 = (Vec3(0.1, 0.05, 0.5) - o1).normalized();
    const auto h1 = cast_ray(s, o1, d1);
    REQUIRE(h1);
    const auto r1 = geometry::parameterize_ray(o1, d1, s.bounding);
    // approach the same point from -z: the -z face occludes it
    const Vec3 o2(0.1, 0.05, -2.0);
    const Vec3 d2 = (h1->point - o2).normalized();
    const auto r2 = geometry::parameterize_ray(o2, d2, s.bounding);
    REQUIRE(r1.ok());
    REQUIRE(r2.ok());
    CHECK(oracle_visibility(s, r1->ray, h1->point, r2->ray, 0.010) == 0);
  }
  SUBCASE("convex body: every outward-hemisphere approach sees the point") {
    std::mt19937_64 rng(13);
    const Vec3 o(0, 0, -2.5);
    const Vec3 dir(0, 0, 1);
    const auto hit = cast_ray(scn, o, dir);
    const auto r1 = geometry::parameterize_ray(o, dir, scn.bounding);
    REQUIRE(hit);
    REQUIRE(r1.ok());
    int done = 0;
    while (done < 1000) {
      const Vec3 w = random_unit(rng);
      if (w.dot(hit->normal) >= -0.05) continue;  // not clearly outward
      // ray arriving at the point along w
      const Vec3 o2 = hit->point - 2.0 * w;
      if ((o2 - scn.bounding.center).norm() <= scn.bounding.radius()) continue;
      const auto r2 = geometry::parameterize_ray(o2, w, scn.bounding);
      if (!r2) continue;
      CHECK(oracle_visibility(scn, r1->ray, hit->point, r2->ray, 0.010) == 1);
      ++done;
    }
  }
}

TEST_CASE("trajectory and catalog") {
  SUBCASE("orbit trajectory splits train/test and stays outside") {
    const BoundingSphere sphere{Vec3::Zero(), 2.5};
    const auto views = orbit_trajectory(sphere, 2.0, {-20.0 * EIGEN_PI / 180,
                                                      10.0 * EIGEN_PI / 180,
                                                      35.0 * EIGEN_PI / 180},
                                        10, 64, 64, 64, 3);
    CHECK(views.size() == 30);
    int tests = 0;
    for (const auto& v : views) {
      CHECK((v.camera.translation - sphere.center).norm() >
            sphere.radius());
      tests += v.is_test ? 1 : 0;
    }
    CHECK(tests == 10);
  }
  SUBCASE("catalog scenes fit their bounds") {
    for (const char* name :
         {"sphere", "two-spheres", "box", "box+sphere", "cornell"}) {
      const auto scn = make_scene(name);
      CHECK(scene_inside_bounds(scn));
      CHECK(!scn.primitives.empty());
    }
    CHECK_THROWS(make_scene("no-such-scene"));
  }
  SUBCASE("look_at aims the optical axis at the target") {
    Camera cam = look_at({1.0, 0.5, -2.0}, {0, 0, 0}, 64, 64, 64);
    const Vec3 axis = cam.rotation.col(2);
    CHECK((axis - (-Vec3(1.0, 0.5, -2.0).normalized())).norm() < 1e-12);
    // rotation is orthonormal
    CHECK((cam.rotation * cam.rotation.transpose() - Mat3::Identity())
              .norm() < 1e-12);
  }
}

TEST_CASE("surface sampling and albedo lookup") {
  const auto scn = make_scene("two-spheres");
  const auto pts = sample_surface_points(scn, 2000, 21);
  CHECK(pts.size() == 2000);
  for (const auto& p : pts) {
    bool on = false;
    for (const auto& prim : scn.primitives) {
      const auto* sp = std::get_if<SpherePrim>(&prim);
      if (sp && std::abs((p - sp->center).norm() - sp->radius) < 1e-9)
        on = true;
    }
    CHECK(on);
    CHECK(albedo_at(scn, p).norm() > 0.0);
  }
  // repeatable
  const auto pts2 = sample_surface_points(scn, 2000, 21);
  CHECK(pts == pts2);
}
