#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "rvf/geom.hpp"
#include "rvf/voxel.hpp"

namespace rvf {

/// Car prior shared by every anchor.
struct AnchorConfig {
  double w = 1.9;
  double l = 4.6;
  double h = 1.7;
  double z = -1.0;
};

struct Anchor {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double w = 0.0;
  double l = 0.0;
  double h = 0.0;
  double yaw = 0.0;  // 0 or pi/2

  BBox3D box() const { return {x, y, z, w, l, h, yaw}; }
};

inline constexpr int kAnchorsPerCell = 2;
inline constexpr int kRegDims = 7;

/// BEV cell layout of the anchors (and of the network heads). `stride` is
/// the total down-sampling of the conv trunk relative to the voxel grid.
struct AnchorGrid {
  int nx = 0;
  int ny = 0;
  double x0 = 0.0;
  double y0 = 0.0;
  double cell = 0.0;

  static AnchorGrid from(const GridConfig& grid, int stride = 1);
  std::size_t num_anchors() const { return static_cast<std::size_t>(nx) * ny * kAnchorsPerCell; }
};

/// Anchor index = (iy * nx + ix) * 2 + r, r = 0 for yaw 0 and 1 for yaw pi/2.
std::vector<Anchor> generate_anchors(const AnchorGrid& grid, const AnchorConfig& dims);
std::vector<Anchor> generate_anchors(const GridConfig& grid, const AnchorConfig& dims, int stride = 1);

enum class YawMode : std::uint8_t {
  sine_bin,  // sin(theta_d) regression plus direction bin
  simple,    // wrapped theta_d regressed directly, no direction bin
};

enum class Label : std::int8_t { ignore = -1, negative = 0, positive = 1 };

struct MatchConfig {
  double iou_pos = 0.35;
  double iou_neg = 0.30;
  double dist_pos = 0.5;
  bool use_distance = true;     // false reproduces the IoU-only ablation
  bool force_best_anchor = true;

  void validate() const;
};

struct TargetAssignment {
  std::vector<Label> labels;
  std::vector<int> matched_gt;                  // -1 unless positive
  std::vector<std::array<double, kRegDims>> reg_targets;  // zero unless positive
  std::vector<std::uint8_t> dir_targets;        // zero unless positive
  std::size_t num_positive = 0;
  std::size_t num_negative = 0;
};

/// Label from the best IoU and the nearest centre distance over all gts.
Label anchor_label(double max_iou, double min_distance, const MatchConfig& cfg);

TargetAssignment match_anchors(std::span<const Anchor> anchors, std::span<const BBox3D> gt_boxes,
                               const MatchConfig& cfg = {}, YawMode yaw_mode = YawMode::sine_bin);

struct YawTarget {
  double e_theta = 0.0;
  int c_dir = 0;
};

YawTarget encode_yaw(double theta_gt, double theta_anchor);

std::array<double, kRegDims> encode_regression(const BBox3D& gt, const Anchor& a,
                                               YawMode yaw_mode = YawMode::sine_bin);

BBox3D decode_box(const Anchor& a, std::span<const double> reg, double dir_prob,
                  YawMode yaw_mode = YawMode::sine_bin);

}  // namespace rvf
