#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mesh/mesh.hpp"

namespace s3d {

/// View on the origin from a sphere of given radius. Azimuth rotates about
/// +y starting from +z, elevation lifts toward +y; up is +y.
struct CameraPose {
  double azimuth = 0.0;    // degrees, normalised to [0,360)
  double elevation = 0.0;  // degrees, [-90,90]
  double distance = 2.0;   // world units, > 0

  /// Normalises azimuth and checks the invariants.
  static CameraPose make(double azimuth, double elevation, double distance);
  bool operator==(const CameraPose&) const = default;
};

struct RenderConfig {
  int resolution = 64;                     // square images
  double sigma = 1e-4;                     // softness, normalised units squared
  double fov_degrees = 30.0;
  double near_plane = 0.1;
  double far_plane = 100.0;

  void validate() const;
};

inline constexpr double kDefaultCameraDistance = 2.0;

struct CameraFrame {
  Vec3 eye, right, up, forward;
  double tan_half_fov;
};

CameraFrame camera_frame(const CameraPose& pose, double fov_degrees);

struct PoseRange {
  double azimuth_lo = 0.0, azimuth_hi = 360.0;
  double elevation_lo = -10.0, elevation_hi = 40.0;
  double distance = kDefaultCameraDistance;
};

/// i.i.d. uniform poses over the ranges, deterministic in seed.
std::vector<CameraPose> sample_poses(std::size_t n, std::uint64_t seed, const PoseRange& range = {});

}  // namespace s3d
