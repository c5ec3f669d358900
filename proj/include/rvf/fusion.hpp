#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rvf/geom.hpp"

namespace rvf {

enum class Source : std::uint8_t { lidar = 0, radar = 1, densified = 2 };

struct LidarPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double i = 0.0;
};

/// Radar return. `vx`, `vy` are the Cartesian components of the measured
/// radial velocity.
struct RadarPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double rcs = 0.0;
  double vx = 0.0;
  double vy = 0.0;
};

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
};

/// Pinhole camera image. The extrinsic pose maps the camera body frame
/// (x forward, y left, z up) into the ego frame; the optical frame is the
/// usual z forward, x right, y down.
struct CameraFrame {
  int width = 0;
  int height = 0;
  std::vector<double> rgb;  // row-major, 3 values per pixel
  CameraIntrinsics intrinsics;
  Pose extrinsics;

  void validate() const;
  const double* pixel(int u, int v) const { return rgb.data() + 3 * (static_cast<std::size_t>(v) * width + u); }
  double* pixel(int u, int v) { return rgb.data() + 3 * (static_cast<std::size_t>(v) * width + u); }
};

/// One early-fusion point: the ten sensor features. The voxel stage adds
/// the three local offsets.
struct FusedPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double i = 0.0;
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  double rcs = 0.0;
  double vx = 0.0;
  double vy = 0.0;
  Source source = Source::lidar;
  double time_lag = 0.0;  // seconds behind the newest sweep; not a network feature
};

FusedPoint from_lidar(const LidarPoint& p);
FusedPoint from_radar(const RadarPoint& p);

struct Sweep {
  std::vector<FusedPoint> cloud;
  Pose ego_pose;  // ego frame -> world
  double timestamp = 0.0;
};

struct ImageProjection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;  // optical-axis depth
  bool valid = false;
};

std::vector<ImageProjection> project_to_image(std::span<const Vec3> points, const CameraFrame& cam);

/// Nearest-pixel colour for lidar points inside the image; points outside
/// keep black and are retained.
std::vector<FusedPoint> colorize(std::span<const LidarPoint> lidar, const CameraFrame& cam);

/// Paints lidar-sourced points of an already fused cloud in place.
void paint_lidar_points(std::span<FusedPoint> cloud, const CameraFrame& cam);

struct PlanarVelocity {
  double vx = 0.0;
  double vy = 0.0;
};

PlanarVelocity radial_to_cartesian(double range, double azimuth, double radial_velocity);

/// Brings the newest `n` sweeps into the frame of the last one and
/// concatenates them, oldest first. Radar velocities are rotated along.
std::vector<FusedPoint> accumulate_sweeps(std::span<const Sweep> sweeps, std::size_t n);

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> depth;  // 0 marks empty

  double at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
  double& at(int u, int v) { return depth[static_cast<std::size_t>(v) * width + u]; }
};

inline constexpr double kMaxCompletionDepth = 100.0;

/// Sparse depth image from lidar, keeping the nearest return per pixel.
DepthImage sparse_depth_image(std::span<const LidarPoint> lidar, const CameraFrame& cam);

/// Morphological densification: invert, dilate with the 5x5 diamond, close
/// with the 5x5 full kernel, re-invert. Pixels that held a lidar return keep
/// their original depth.
DepthImage complete_depth(const DepthImage& sparse);

/// Densified cloud from the completed depth image, coloured from the camera.
std::vector<FusedPoint> depth_complete(std::span<const LidarPoint> lidar, const CameraFrame& cam);

}  // namespace rvf
