#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "rvf/geom.hpp"

namespace rvf {

struct Detection {
  BBox3D box;
  double score = 0.0;
};

inline constexpr std::array<double, 4> kDistanceThresholds{0.5, 1.0, 2.0, 4.0};
inline constexpr int kRecallSamples = 101;
inline constexpr double kMinRecall = 0.1;
inline constexpr double kMinPrecision = 0.1;

struct MatchResult {
  std::vector<bool> true_positive;  // per detection, in input order
  std::vector<int> matched_gt;      // -1 for false positives
};

/// Greedy matching of score-sorted detections to the nearest unmatched
/// ground truth within `dist_threshold` (BEV centre distance).
MatchResult match_detections(std::span<const Detection> dets, std::span<const BBox3D> gts, double dist_threshold);

/// Detections and ground truth of one frame.
struct EvalFrame {
  std::vector<Detection> dets;
  std::vector<BBox3D> gts;
};

struct PrCurve {
  double threshold = 0.0;
  std::vector<double> recall;     // raw operating points
  std::vector<double> precision;
  std::array<double, kRecallSamples> interpolated{};  // precision at recall k / 100
};

struct EvalResult {
  std::array<double, kDistanceThresholds.size()> ap_per_threshold{};
  double mean_ap = 0.0;
  double aoe = 0.0;       // NaN when there are no true positives at 2 m
  std::size_t aoe_count = 0;
  std::vector<PrCurve> pr_curves;
};

/// Area-based AP from interpolated precision at 101 recall points: the
/// precision floor is subtracted and clipped, points at or below the recall
/// floor are dropped, and the mean is rescaled so a perfect detector gets 1.
/// Frames are matched independently; scores are ranked across all frames.
/// Throws std::invalid_argument when there is no ground truth at all.
EvalResult average_precision(std::span<const EvalFrame> frames);

/// AP from an interpolated precision curve (101 samples).
double ap_from_interpolated(const std::array<double, kRecallSamples>& precision);

/// Mean absolute wrapped yaw error over true positives at the 2 m threshold.
/// Returns NaN (count 0) without true positives.
double average_orientation_error(std::span<const EvalFrame> frames, std::size_t* count = nullptr,
                                 double tp_threshold = 2.0);

/// Full evaluation: AP at every threshold plus AOE.
EvalResult evaluate(std::span<const EvalFrame> frames);

}  // namespace rvf
