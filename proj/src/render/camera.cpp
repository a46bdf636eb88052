#include "render/camera.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "common/random.hpp"

namespace s3d {

CameraPose CameraPose::make(double azimuth, double elevation, double distance) {
  if (!(distance > 0.0)) throw InvalidArgument("camera: distance must be positive");
  if (!(elevation >= -90.0 && elevation <= 90.0)) {
    throw InvalidArgument("camera: elevation must lie in [-90,90], got " + std::to_string(elevation));
  }
  if (!std::isfinite(azimuth)) throw InvalidArgument("camera: azimuth must be finite");
  double az = std::fmod(azimuth, 360.0);
  if (az < 0.0) az += 360.0;
  if (az >= 360.0) az = 0.0;
  return {az, elevation, distance};
}

void RenderConfig::validate() const {
  // Powers of two from 16 (gradient-check scale) to 256.
  const bool ok_res = resolution == 16 || resolution == 32 || resolution == 64 || resolution == 128 || resolution == 256;
  if (!ok_res) throw InvalidArgument("render: resolution must be one of 16/32/64/128/256, got " + std::to_string(resolution));
  if (!(sigma > 0.0)) throw InvalidArgument("render: sigma must be positive");
  if (!(fov_degrees > 0.0 && fov_degrees < 180.0)) throw InvalidArgument("render: field of view must lie in (0,180)");
  if (!(near_plane > 0.0 && far_plane > near_plane)) throw InvalidArgument("render: need 0 < near < far");
}

namespace {
Vec3 normalized(const Vec3& v) {
  const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  return {v[0] / n, v[1] / n, v[2] / n};
}
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
}  // namespace

CameraFrame camera_frame(const CameraPose& pose, double fov_degrees) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double az = pose.azimuth * deg, el = pose.elevation * deg;
  CameraFrame f{};
  f.eye = {pose.distance * std::cos(el) * std::sin(az), pose.distance * std::sin(el),
           pose.distance * std::cos(el) * std::cos(az)};
  f.forward = normalized({-f.eye[0], -f.eye[1], -f.eye[2]});
  Vec3 world_up{0, 1, 0};
  // Straight up or down: fall back to the azimuth direction as "up".
  if (std::abs(std::cos(el)) < 1e-9) world_up = {-std::sin(az) * std::copysign(1.0, el), 0, -std::cos(az) * std::copysign(1.0, el)};
  f.right = normalized(cross(f.forward, world_up));
  f.up = cross(f.right, f.forward);
  f.tan_half_fov = std::tan(0.5 * fov_degrees * deg);
  return f;
}

std::vector<CameraPose> sample_poses(std::size_t n, std::uint64_t seed, const PoseRange& range) {
  if (n == 0) throw InvalidArgument("sample_poses: n must be at least 1");
  if (!(range.azimuth_hi > range.azimuth_lo) || !(range.elevation_hi > range.elevation_lo)) {
    throw InvalidArgument("sample_poses: azimuth and elevation ranges must be non-empty");
  }
  if (range.elevation_lo < -90.0 || range.elevation_hi > 90.0) {
    throw InvalidArgument("sample_poses: elevation range must lie within [-90,90]");
  }
  Rng rng(seed);
  std::vector<CameraPose> poses;
  poses.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double az = rng.uniform(range.azimuth_lo, range.azimuth_hi);
    const double el = rng.uniform(range.elevation_lo, range.elevation_hi);
    poses.push_back(CameraPose::make(az, el, range.distance));
  }
  return poses;
}

}  // namespace s3d
