#include "rvf/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rvf {

void CameraFrame::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("camera: empty image");
  if (intrinsics.fx <= 0.0 || intrinsics.fy <= 0.0) {
    throw std::invalid_argument("camera: focal lengths must be positive");
  }
  if (rgb.size() != 3 * static_cast<std::size_t>(width) * height) {
    throw std::invalid_argument("camera: rgb buffer size mismatch");
  }
}

FusedPoint from_lidar(const LidarPoint& p) {
  FusedPoint f;
  f.x = p.x;
  f.y = p.y;
  f.z = p.z;
  f.i = p.i;
  f.source = Source::lidar;
  return f;
}

FusedPoint from_radar(const RadarPoint& p) {
  FusedPoint f;
  f.x = p.x;
  f.y = p.y;
  f.z = p.z;
  f.rcs = p.rcs;
  f.vx = p.vx;
  f.vy = p.vy;
  f.source = Source::radar;
  return f;
}

namespace {

ImageProjection project_one(const Vec3& p, const CameraFrame& cam, const Pose& ego_to_body) {
  const Vec3 q = ego_to_body.apply(p);
  ImageProjection out;
  const double xc = -q.y;
  const double yc = -q.z;
  const double zc = q.x;
  out.depth = zc;
  if (!(zc > 0.0)) return out;
  out.u = cam.intrinsics.fx * xc / zc + cam.intrinsics.cx;
  out.v = cam.intrinsics.fy * yc / zc + cam.intrinsics.cy;
  out.valid = out.u >= 0.0 && out.u < cam.width && out.v >= 0.0 && out.v < cam.height;
  return out;
}

Vec3 back_project(double u, double v, double depth, const CameraFrame& cam) {
  const double xc = (u - cam.intrinsics.cx) * depth / cam.intrinsics.fx;
  const double yc = (v - cam.intrinsics.cy) * depth / cam.intrinsics.fy;
  return cam.extrinsics.apply({depth, -xc, -yc});
}

}  // namespace

std::vector<ImageProjection> project_to_image(std::span<const Vec3> points, const CameraFrame& cam) {
  cam.validate();
  const Pose ego_to_body = cam.extrinsics.inverse();
  std::vector<ImageProjection> out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(project_one(p, cam, ego_to_body));
  return out;
}

void paint_lidar_points(std::span<FusedPoint> cloud, const CameraFrame& cam) {
  cam.validate();
  const Pose ego_to_body = cam.extrinsics.inverse();
  for (FusedPoint& p : cloud) {
    if (p.source != Source::lidar) continue;
    const ImageProjection proj = project_one({p.x, p.y, p.z}, cam, ego_to_body);
    if (!proj.valid) {
      p.r = p.g = p.b = 0.0;
      continue;
    }
    const double* px = cam.pixel(static_cast<int>(proj.u), static_cast<int>(proj.v));
    p.r = px[0];
    p.g = px[1];
    p.b = px[2];
  }
}

std::vector<FusedPoint> colorize(std::span<const LidarPoint> lidar, const CameraFrame& cam) {
  std::vector<FusedPoint> out;
  out.reserve(lidar.size());
  for (const LidarPoint& p : lidar) out.push_back(from_lidar(p));
  paint_lidar_points(out, cam);
  return out;
}

PlanarVelocity radial_to_cartesian(double range, double azimuth, double radial_velocity) {
  if (!(range > 0.0)) throw std::invalid_argument("radial_to_cartesian: range must be positive");
  return {radial_velocity * std::cos(azimuth), radial_velocity * std::sin(azimuth)};
}

std::vector<FusedPoint> accumulate_sweeps(std::span<const Sweep> sweeps, std::size_t n) {
  if (n == 0) throw std::invalid_argument("accumulate_sweeps: n must be at least 1");
  if (sweeps.empty()) return {};
  for (std::size_t k = 1; k < sweeps.size(); ++k) {
    if (!(sweeps[k].timestamp > sweeps[k - 1].timestamp)) {
      throw std::invalid_argument("accumulate_sweeps: timestamps must increase");
    }
  }
  const std::size_t count = std::min(n, sweeps.size());
  const Sweep& latest = sweeps.back();
  const Pose world_to_latest = latest.ego_pose.inverse();

  std::size_t total = 0;
  for (std::size_t k = sweeps.size() - count; k < sweeps.size(); ++k) total += sweeps[k].cloud.size();
  std::vector<FusedPoint> out;
  out.reserve(total);

  for (std::size_t k = sweeps.size() - count; k < sweeps.size(); ++k) {
    const Sweep& s = sweeps[k];
    const double lag = latest.timestamp - s.timestamp;
    if (k + 1 == sweeps.size()) {
      for (FusedPoint p : s.cloud) {
        p.time_lag = 0.0;
        out.push_back(p);
      }
      continue;
    }
    const Pose to_latest = world_to_latest.compose(s.ego_pose);
    for (FusedPoint p : s.cloud) {
      const Vec3 q = to_latest.apply({p.x, p.y, p.z});
      const Vec2 v = to_latest.rotate({p.vx, p.vy});
      p.x = q.x;
      p.y = q.y;
      p.z = q.z;
      p.vx = v.x;
      p.vy = v.y;
      p.time_lag = lag;
      out.push_back(p);
    }
  }
  return out;
}

DepthImage sparse_depth_image(std::span<const LidarPoint> lidar, const CameraFrame& cam) {
  cam.validate();
  DepthImage img{cam.width, cam.height, std::vector<double>(static_cast<std::size_t>(cam.width) * cam.height, 0.0)};
  const Pose ego_to_body = cam.extrinsics.inverse();
  for (const LidarPoint& p : lidar) {
    const ImageProjection proj = project_one({p.x, p.y, p.z}, cam, ego_to_body);
    if (!proj.valid || proj.depth >= kMaxCompletionDepth) continue;
    double& d = img.at(static_cast<int>(proj.u), static_cast<int>(proj.v));
    if (d == 0.0 || proj.depth < d) d = proj.depth;
  }
  return img;
}

namespace {

enum class Morph { dilate, erode };

std::vector<double> morph5(const std::vector<double>& in, int w, int h, bool diamond, Morph op) {
  std::vector<double> out(in.size());
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      double acc = in[static_cast<std::size_t>(v) * w + u];
      for (int dv = -2; dv <= 2; ++dv) {
        for (int du = -2; du <= 2; ++du) {
          if (diamond && std::abs(du) + std::abs(dv) > 2) continue;
          const int uu = u + du;
          const int vv = v + dv;
          if (uu < 0 || uu >= w || vv < 0 || vv >= h) continue;
          const double x = in[static_cast<std::size_t>(vv) * w + uu];
          acc = op == Morph::dilate ? std::max(acc, x) : std::min(acc, x);
        }
      }
      out[static_cast<std::size_t>(v) * w + u] = acc;
    }
  }
  return out;
}

}  // namespace

DepthImage complete_depth(const DepthImage& sparse) {
  const int w = sparse.width;
  const int h = sparse.height;
  std::vector<double> inv(sparse.depth.size(), 0.0);
  for (std::size_t k = 0; k < inv.size(); ++k) {
    if (sparse.depth[k] > 0.0) inv[k] = kMaxCompletionDepth - sparse.depth[k];
  }
  inv = morph5(inv, w, h, /*diamond=*/true, Morph::dilate);
  inv = morph5(inv, w, h, /*diamond=*/false, Morph::dilate);
  inv = morph5(inv, w, h, /*diamond=*/false, Morph::erode);

  DepthImage out{w, h, std::vector<double>(sparse.depth.size(), 0.0)};
  for (std::size_t k = 0; k < inv.size(); ++k) {
    if (sparse.depth[k] > 0.0) {
      out.depth[k] = sparse.depth[k];
    } else if (inv[k] > 0.0) {
      out.depth[k] = kMaxCompletionDepth - inv[k];
    }
  }
  return out;
}

std::vector<FusedPoint> depth_complete(std::span<const LidarPoint> lidar, const CameraFrame& cam) {
  if (lidar.empty()) return {};
  const DepthImage dense = complete_depth(sparse_depth_image(lidar, cam));
  std::vector<FusedPoint> out;
  for (int v = 0; v < dense.height; ++v) {
    for (int u = 0; u < dense.width; ++u) {
      const double d = dense.at(u, v);
      if (d <= 0.0) continue;
      const Vec3 p = back_project(u + 0.5, v + 0.5, d, cam);
      FusedPoint f;
      f.x = p.x;
      f.y = p.y;
      f.z = p.z;
      const double* px = cam.pixel(u, v);
      f.r = px[0];
      f.g = px[1];
      f.b = px[2];
      f.source = Source::densified;
      out.push_back(f);
    }
  }
  return out;
}

}  // namespace rvf
