#include "rvf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace rvf {

MatchResult match_detections(std::span<const Detection> dets, std::span<const BBox3D> gts, double dist_threshold) {
  MatchResult r;
  r.true_positive.assign(dets.size(), false);
  r.matched_gt.assign(dets.size(), -1);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    int best = -1;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double dist = center_distance(dets[d].box, gts[g]);
      if (dist <= dist_threshold && dist < best_dist) {
        best_dist = dist;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      taken[best] = true;
      r.true_positive[d] = true;
      r.matched_gt[d] = best;
    }
  }
  return r;
}

namespace {

std::vector<Detection> sorted_by_score(std::span<const Detection> dets) {
  std::vector<Detection> out(dets.begin(), dets.end());
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) { return a.score > b.score; });
  return out;
}

std::size_t count_gts(std::span<const EvalFrame> frames) {
  std::size_t n = 0;
  for (const EvalFrame& f : frames) n += f.gts.size();
  return n;
}

PrCurve pr_curve(std::span<const EvalFrame> frames, double threshold, std::size_t num_gt) {
  struct Ranked {
    double score;
    bool tp;
  };
  std::vector<Ranked> ranked;
  for (const EvalFrame& f : frames) {
    const auto dets = sorted_by_score(f.dets);
    const MatchResult m = match_detections(dets, f.gts, threshold);
    for (std::size_t d = 0; d < dets.size(); ++d) ranked.push_back({dets[d].score, m.true_positive[d]});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) { return a.score > b.score; });

  PrCurve c;
  c.threshold = threshold;
  std::size_t tp = 0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (ranked[k].tp) ++tp;
    c.recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
    c.precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
  }
  // Running max from the right gives max precision at recall >= r.
  std::vector<double> envelope(c.precision);
  for (std::size_t k = envelope.size(); k-- > 1;) envelope[k - 1] = std::max(envelope[k - 1], envelope[k]);
  std::size_t j = 0;
  for (int s = 0; s < kRecallSamples; ++s) {
    const double r = static_cast<double>(s) / static_cast<double>(kRecallSamples - 1);
    while (j < c.recall.size() && c.recall[j] < r) ++j;
    c.interpolated[s] = j < c.recall.size() ? envelope[j] : 0.0;
  }
  return c;
}

}  // namespace

double ap_from_interpolated(const std::array<double, kRecallSamples>& precision) {
  const int first = static_cast<int>(std::lround(kMinRecall * (kRecallSamples - 1))) + 1;
  // Normalized by the same sum for a perfect curve, so that one scores exactly 1.
  double acc = 0.0, perfect = 0.0;
  for (int s = first; s < kRecallSamples; ++s) {
    acc += std::max(precision[s] - kMinPrecision, 0.0);
    perfect += 1.0 - kMinPrecision;
  }
  return acc / perfect;
}

EvalResult average_precision(std::span<const EvalFrame> frames) {
  const std::size_t num_gt = count_gts(frames);
  if (num_gt == 0) throw std::invalid_argument("average_precision: no ground truth");
  EvalResult r;
  double acc = 0.0;
  for (std::size_t t = 0; t < kDistanceThresholds.size(); ++t) {
    PrCurve c = pr_curve(frames, kDistanceThresholds[t], num_gt);
    r.ap_per_threshold[t] = ap_from_interpolated(c.interpolated);
    acc += r.ap_per_threshold[t];
    r.pr_curves.push_back(std::move(c));
  }
  r.mean_ap = acc / static_cast<double>(kDistanceThresholds.size());
  r.aoe = std::numeric_limits<double>::quiet_NaN();
  return r;
}

double average_orientation_error(std::span<const EvalFrame> frames, std::size_t* count, double tp_threshold) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const EvalFrame& f : frames) {
    const auto dets = sorted_by_score(f.dets);
    const MatchResult m = match_detections(dets, f.gts, tp_threshold);
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (!m.true_positive[d]) continue;
      acc += std::abs(wrap_angle(dets[d].box.yaw - f.gts[m.matched_gt[d]].yaw));
      ++n;
    }
  }
  if (count) *count = n;
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : acc / static_cast<double>(n);
}

EvalResult evaluate(std::span<const EvalFrame> frames) {
  EvalResult r = average_precision(frames);
  r.aoe = average_orientation_error(frames, &r.aoe_count);
  return r;
}

}  // namespace rvf
