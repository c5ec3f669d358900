#include "rvf/geom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace rvf {

Vec3 Pose::apply(const Vec3& p) const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {c * p.x - s * p.y + tx, s * p.x + c * p.y + ty, p.z + tz};
}

Vec2 Pose::rotate(const Vec2& v) const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

Pose Pose::inverse() const {
  const double c = std::cos(yaw);
  const double s = std::sin(yaw);
  // R^T * (-t)
  return {-(c * tx + s * ty), -(-s * tx + c * ty), -tz, wrap_angle(-yaw)};
}

Pose Pose::compose(const Pose& rhs) const {
  const Vec3 t = apply({rhs.tx, rhs.ty, rhs.tz});
  return {t.x, t.y, t.z, wrap_angle(yaw + rhs.yaw)};
}

double wrap_angle(double theta) {
  if (!std::isfinite(theta)) {
    throw std::invalid_argument("wrap_angle: non-finite angle");
  }
  if (theta >= -kPi && theta < kPi) {
    return theta;
  }
  double r = theta - kTwoPi * std::floor((theta + kPi) / kTwoPi);
  if (r >= kPi) r -= kTwoPi;
  if (r < -kPi) r += kTwoPi;
  return r;
}

void validate_box(const BBox3D& b) {
  for (double v : {b.x, b.y, b.z, b.w, b.l, b.h, b.yaw}) {
    if (!std::isfinite(v)) throw std::invalid_argument("box: non-finite field");
  }
  if (b.w <= 0.0 || b.l <= 0.0 || b.h <= 0.0) {
    throw std::invalid_argument("box: extents must be positive");
  }
}

std::array<Vec2, 4> bev_corners(const BBox3D& b) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const double hl = 0.5 * b.l;
  const double hw = 0.5 * b.w;
  // local (along, across) offsets, counter-clockwise
  const std::array<Vec2, 4> local{{{hl, -hw}, {hl, hw}, {-hl, hw}, {-hl, -hw}}};
  std::array<Vec2, 4> out{};
  for (std::size_t k = 0; k < 4; ++k) {
    out[k] = {b.x + c * local[k].x - s * local[k].y, b.y + s * local[k].x + c * local[k].y};
  }
  return out;
}

namespace {

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

Vec2 line_intersection(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  const double a1 = p2.y - p1.y;
  const double b1 = p1.x - p2.x;
  const double c1 = a1 * p1.x + b1 * p1.y;
  const double a2 = q2.y - q1.y;
  const double b2 = q1.x - q2.x;
  const double c2 = a2 * q1.x + b2 * q1.y;
  const double det = a1 * b2 - a2 * b1;
  if (det == 0.0) return p2;
  return {(c1 * b2 - c2 * b1) / det, (a1 * c2 - a2 * c1) / det};
}

double polygon_area(std::span<const Vec2> poly) {
  double acc = 0.0;
  for (std::size_t k = 0; k < poly.size(); ++k) {
    const Vec2& p = poly[k];
    const Vec2& q = poly[(k + 1) % poly.size()];
    acc += p.x * q.y - q.x * p.y;
  }
  return 0.5 * std::abs(acc);
}

}  // namespace

double convex_intersection_area(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  std::vector<Vec2> output(subject.begin(), subject.end());
  for (std::size_t e = 0; e < clip.size() && !output.empty(); ++e) {
    const Vec2& c0 = clip[e];
    const Vec2& c1 = clip[(e + 1) % clip.size()];
    std::vector<Vec2> input;
    input.swap(output);
    for (std::size_t k = 0; k < input.size(); ++k) {
      const Vec2& cur = input[k];
      const Vec2& prev = input[(k + input.size() - 1) % input.size()];
      const bool cur_in = cross(c0, c1, cur) >= 0.0;
      const bool prev_in = cross(c0, c1, prev) >= 0.0;
      if (cur_in) {
        if (!prev_in) output.push_back(line_intersection(prev, cur, c0, c1));
        output.push_back(cur);
      } else if (prev_in) {
        output.push_back(line_intersection(prev, cur, c0, c1));
      }
    }
  }
  if (output.size() < 3) return 0.0;
  return polygon_area(output);
}

double bev_iou(const BBox3D& a, const BBox3D& b) {
  validate_box(a);
  validate_box(b);
  const double ra = 0.5 * std::hypot(a.w, a.l);
  const double rb = 0.5 * std::hypot(b.w, b.l);
  if (std::hypot(a.x - b.x, a.y - b.y) >= ra + rb) return 0.0;

  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  // Clip the box with the lower address-independent key by the other, so
  // that iou(a, b) and iou(b, a) run the identical floating-point path.
  const bool swap = std::tie(a.x, a.y, a.w, a.l, a.yaw) > std::tie(b.x, b.y, b.w, b.l, b.yaw);
  const double inter = swap ? convex_intersection_area(cb, ca) : convex_intersection_area(ca, cb);
  const double area_a = a.w * a.l;
  const double area_b = b.w * b.l;
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double center_distance(const BBox3D& a, const BBox3D& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

std::vector<std::size_t> nms(std::span<const BBox3D> boxes, std::span<const double> scores,
                             double iou_threshold) {
  if (boxes.size() != scores.size()) {
    throw std::invalid_argument("nms: boxes and scores differ in length");
  }
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return scores[i] > scores[j]; });
  std::vector<std::size_t> kept;
  std::vector<bool> suppressed(boxes.size(), false);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (suppressed[i]) continue;
    kept.push_back(i);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (!suppressed[j] && bev_iou(boxes[i], boxes[j]) >= iou_threshold) suppressed[j] = true;
    }
  }
  return kept;
}

std::vector<Vec3> transform_points(std::span<const Vec3> points, const Pose& pose) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(pose.apply(p));
  return out;
}

BBox3D transform_box(const BBox3D& box, const Pose& pose) {
  const Vec3 c = pose.apply({box.x, box.y, box.z});
  BBox3D out = box;
  out.x = c.x;
  out.y = c.y;
  out.z = c.z;
  out.yaw = wrap_angle(box.yaw + pose.yaw);
  return out;
}

bool point_in_bev_box(const BBox3D& box, double px, double py) {
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double dx = px - box.x;
  const double dy = py - box.y;
  const double along = c * dx + s * dy;
  const double across = -s * dx + c * dy;
  return std::abs(along) <= 0.5 * box.l && std::abs(across) <= 0.5 * box.w;
}

}  // namespace rvf
