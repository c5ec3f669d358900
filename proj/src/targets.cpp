#include "rvf/targets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rvf {

AnchorGrid AnchorGrid::from(const GridConfig& grid, int stride) {
  grid.validate();
  if (stride < 1) throw std::invalid_argument("anchor grid: stride must be at least 1");
  AnchorGrid g;
  g.nx = (grid.nx() + stride - 1) / stride;
  g.ny = (grid.ny() + stride - 1) / stride;
  g.x0 = grid.x_min;
  g.y0 = grid.y_min;
  g.cell = grid.voxel_xy * stride;
  return g;
}

std::vector<Anchor> generate_anchors(const AnchorGrid& grid, const AnchorConfig& dims) {
  std::vector<Anchor> out;
  out.reserve(grid.num_anchors());
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      const double x = grid.x0 + (ix + 0.5) * grid.cell;
      const double y = grid.y0 + (iy + 0.5) * grid.cell;
      out.push_back({x, y, dims.z, dims.w, dims.l, dims.h, 0.0});
      out.push_back({x, y, dims.z, dims.w, dims.l, dims.h, 0.5 * kPi});
    }
  }
  return out;
}

std::vector<Anchor> generate_anchors(const GridConfig& grid, const AnchorConfig& dims, int stride) {
  return generate_anchors(AnchorGrid::from(grid, stride), dims);
}

void MatchConfig::validate() const {
  if (!(iou_neg <= iou_pos)) throw std::invalid_argument("match: iou_neg must not exceed iou_pos");
  if (dist_pos < 0.0) throw std::invalid_argument("match: negative distance threshold");
}

Label anchor_label(double max_iou, double min_distance, const MatchConfig& cfg) {
  const bool near = cfg.use_distance && min_distance <= cfg.dist_pos;
  if (max_iou >= cfg.iou_pos || near) return Label::positive;
  if (max_iou < cfg.iou_neg && !near) return Label::negative;
  return Label::ignore;
}

TargetAssignment match_anchors(std::span<const Anchor> anchors, std::span<const BBox3D> gt_boxes,
                               const MatchConfig& cfg, YawMode yaw_mode) {
  cfg.validate();
  const std::size_t n = anchors.size();
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> best_iou(n, 0.0);
  std::vector<double> best_iou_dist(n, kInf);
  std::vector<int> best_gt(n, -1);
  std::vector<double> min_dist(n, kInf);
  std::vector<double> nearest_dist(n, kInf);  // tie-break distance when all IoUs are zero
  std::vector<int> nearest_gt(n, -1);

  std::vector<int> forced(gt_boxes.size(), -1);
  std::vector<double> forced_iou(gt_boxes.size(), 0.0);

  for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
    const BBox3D& gt = gt_boxes[g];
    validate_box(gt);
    const double gt_radius = 0.5 * std::hypot(gt.w, gt.l);
    for (std::size_t a = 0; a < n; ++a) {
      const Anchor& an = anchors[a];
      const double dist = std::hypot(an.x - gt.x, an.y - gt.y);
      const double reach = gt_radius + 0.5 * std::hypot(an.w, an.l);
      if (dist >= reach && dist > cfg.dist_pos) continue;
      const double iou = dist >= reach ? 0.0 : bev_iou(an.box(), gt);
      min_dist[a] = std::min(min_dist[a], dist);
      if (dist < nearest_dist[a]) {
        nearest_dist[a] = dist;
        nearest_gt[a] = static_cast<int>(g);
      }
      if (iou > best_iou[a] || (iou == best_iou[a] && iou > 0.0 && dist < best_iou_dist[a])) {
        best_iou[a] = iou;
        best_iou_dist[a] = dist;
        best_gt[a] = static_cast<int>(g);
      }
      if (iou > forced_iou[g]) {
        forced_iou[g] = iou;
        forced[g] = static_cast<int>(a);
      }
    }
  }

  TargetAssignment t;
  t.labels.assign(n, Label::negative);
  t.matched_gt.assign(n, -1);
  t.reg_targets.assign(n, {});
  t.dir_targets.assign(n, 0);
  for (std::size_t a = 0; a < n; ++a) {
    t.labels[a] = anchor_label(best_iou[a], min_dist[a], cfg);
    if (t.labels[a] == Label::positive) t.matched_gt[a] = best_gt[a] >= 0 ? best_gt[a] : nearest_gt[a];
  }
  if (cfg.force_best_anchor) {
    std::vector<double> claim(n, -1.0);
    for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
      const int a = forced[g];
      if (a < 0 || forced_iou[g] <= claim[a]) continue;
      claim[a] = forced_iou[g];
      t.labels[a] = Label::positive;
      t.matched_gt[a] = static_cast<int>(g);
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (t.labels[a] == Label::positive) {
      ++t.num_positive;
      const auto reg = encode_regression(gt_boxes[t.matched_gt[a]], anchors[a], yaw_mode);
      t.reg_targets[a] = reg;
      if (yaw_mode == YawMode::sine_bin) {
        t.dir_targets[a] = static_cast<std::uint8_t>(encode_yaw(gt_boxes[t.matched_gt[a]].yaw, anchors[a].yaw).c_dir);
      }
    } else if (t.labels[a] == Label::negative) {
      ++t.num_negative;
    }
  }
  return t;
}

YawTarget encode_yaw(double theta_gt, double theta_anchor) {
  const double d = theta_gt - theta_anchor;
  const double wrapped = wrap_angle(d);
  return {std::sin(d), (wrapped >= -0.5 * kPi && wrapped < 0.5 * kPi) ? 1 : 0};
}

std::array<double, kRegDims> encode_regression(const BBox3D& gt, const Anchor& a, YawMode yaw_mode) {
  validate_box(gt);
  validate_box(a.box());
  const double diag = std::hypot(a.w, a.l);
  std::array<double, kRegDims> r{};
  r[0] = (gt.x - a.x) / diag;
  r[1] = (gt.y - a.y) / diag;
  r[2] = (gt.z - a.z) / a.h;
  r[3] = std::log(gt.w / a.w);
  r[4] = std::log(gt.l / a.l);
  r[5] = std::log(gt.h / a.h);
  r[6] = yaw_mode == YawMode::sine_bin ? encode_yaw(gt.yaw, a.yaw).e_theta : wrap_angle(gt.yaw - a.yaw);
  return r;
}

BBox3D decode_box(const Anchor& a, std::span<const double> reg, double dir_prob, YawMode yaw_mode) {
  if (reg.size() != kRegDims) throw std::invalid_argument("decode_box: expected 7 regression values");
  const double diag = std::hypot(a.w, a.l);
  BBox3D b;
  b.x = a.x + reg[0] * diag;
  b.y = a.y + reg[1] * diag;
  b.z = a.z + reg[2] * a.h;
  b.w = a.w * std::exp(reg[3]);
  b.l = a.l * std::exp(reg[4]);
  b.h = a.h * std::exp(reg[5]);
  if (yaw_mode == YawMode::simple) {
    b.yaw = wrap_angle(a.yaw + reg[6]);
    return b;
  }
  const double s = std::clamp(reg[6], -1.0, 1.0);
  b.yaw = dir_prob >= 0.5 ? wrap_angle(a.yaw + std::asin(s)) : wrap_angle(a.yaw + kPi - std::asin(s));
  return b;
}

}  // namespace rvf
