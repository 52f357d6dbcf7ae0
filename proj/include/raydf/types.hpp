#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>

namespace raydf {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

// Value-level failures of geometric operations. I/O and shape errors throw
// instead (see io_error / shape_error below).
enum class GeomError {
  NoIntersection,
  OriginInside,
  DegenerateRay,
  NegativeResult,
  BehindCamera,
  PointOutsideSphere,
  DegenerateGradient,
  PoleSingularity,
  OutOfRange,
};

const char* to_string(GeomError e);

/// Minimal expected-like wrapper for operations whose failure is a data
/// condition, not a bug.
template <typename T>
class Expected {
 public:
  Expected(T value) : v_(std::move(value)) {}
  Expected(GeomError err) : v_(err) {}

  bool ok() const { return std::holds_alternative<T>(v_); }
  explicit operator bool() const { return ok(); }

  const T& operator*() const& { return std::get<T>(v_); }
  T& operator*() & { return std::get<T>(v_); }
  const T* operator->() const { return &std::get<T>(v_); }

  GeomError error() const { return std::get<GeomError>(v_); }

  const T& value() const {
    if (!ok())
      throw std::runtime_error(std::string("geometry error: ") +
                               to_string(error()));
    return std::get<T>(v_);
  }

 private:
  std::variant<T, GeomError> v_;
};

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct shape_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Fixed sphere bounding the whole scene; rays are parameterized by their
/// two intersections with it.
struct BoundingSphere {
  Vec3 center = Vec3::Zero();
  double diameter = 1.0;

  double radius() const { return 0.5 * diameter; }
};

/// Oriented line encoded by the spherical angles of its entry and exit
/// points on the bounding sphere. theta in [0, pi], phi in (-pi, pi].
struct Ray {
  double theta_in = 0.0;
  double phi_in = 0.0;
  double theta_out = 0.0;
  double phi_out = 0.0;
};

/// Pinhole camera. rotation/translation map camera coordinates to world
/// coordinates; the camera origin is `translation`. Pixel (u, v) uses u as
/// the row index (paired with cy) and v as the column index (paired with cx).
struct Camera {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double focal = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
};

/// A posed raw-depth raster. Depth is perpendicular z-depth in meters;
/// 0 marks a miss.
struct DepthScan {
  Camera camera;
  Eigen::MatrixXf raster;  // height x width, row-major semantics (u, v)
  std::uint32_t id = 0;
};

/// One converted training record: a ray, its surface distance measured from
/// the sphere entry point, the hit point and the camera-to-entry offset.
struct RaySample {
  Ray ray;
  double distance = 0.0;    // meters from sphere entry, in [0, D]
  Vec3 point = Vec3::Zero();
  double entry_offset = 0.0;  // d0: camera origin to sphere entry
};

/// Output of the normal derivation: unit normal plus the norm of the
/// pre-normalization cross product (used for outlier flagging).
struct NormalResult {
  Vec3 normal = Vec3::Zero();
  double magnitude = 0.0;
};

}  // namespace raydf
