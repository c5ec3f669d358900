#pragma once

#include <array>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

namespace rvf {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// Oriented 3D box. `l` runs along the heading, `w` across it; yaw rotates
/// about the vertical axis and lives in [-pi, pi).
struct BBox3D {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double w = 1.0;
  double l = 1.0;
  double h = 1.0;
  double yaw = 0.0;
};

/// Rigid yaw-only transform: rotate about z, then translate.
struct Pose {
  double tx = 0.0;
  double ty = 0.0;
  double tz = 0.0;
  double yaw = 0.0;

  Vec3 apply(const Vec3& p) const;
  /// Rotation only, for direction vectors such as velocities.
  Vec2 rotate(const Vec2& v) const;
  Pose inverse() const;
  /// (*this) o rhs: apply rhs first, then *this.
  Pose compose(const Pose& rhs) const;
};

/// Maps any finite angle into [-pi, pi). Throws std::invalid_argument on
/// non-finite input.
double wrap_angle(double theta);

/// Throws std::invalid_argument if any extent is nonpositive or a field is
/// not finite.
void validate_box(const BBox3D& box);

/// Corners of the BEV footprint, counter-clockwise.
std::array<Vec2, 4> bev_corners(const BBox3D& box);

/// Area of intersection over area of union of the two BEV footprints.
double bev_iou(const BBox3D& a, const BBox3D& b);

double center_distance(const BBox3D& a, const BBox3D& b);

/// Greedy non-maximum suppression in BEV. Returns kept indices in
/// descending score order; equal scores keep the lower index first.
std::vector<std::size_t> nms(std::span<const BBox3D> boxes,
                             std::span<const double> scores,
                             double iou_threshold);

std::vector<Vec3> transform_points(std::span<const Vec3> points, const Pose& pose);

BBox3D transform_box(const BBox3D& box, const Pose& pose);

/// Area of the convex polygon clipped from `subject` by convex `clip`
/// (Sutherland-Hodgman). Both polygons must be counter-clockwise.
double convex_intersection_area(std::span<const Vec2> subject,
                                std::span<const Vec2> clip);

bool point_in_bev_box(const BBox3D& box, double px, double py);

}  // namespace rvf
