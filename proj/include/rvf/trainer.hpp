#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rvf/losses.hpp"
#include "rvf/metrics.hpp"
#include "rvf/net.hpp"
#include "rvf/scenegen.hpp"
#include "rvf/targets.hpp"
#include "rvf/voxel.hpp"

namespace rvf {

/// Which sensors feed the network. Absent sensors contribute no points and
/// their feature columns are zeroed.
struct Modality {
  bool lidar = true;
  bool rgb = true;
  bool radar = true;

  /// Comma-separated subset of "lidar", "rgb", "radar".
  static Modality parse(const std::string& s);
  std::string str() const;
  FeatureMask mask() const { return FeatureMask::from_modalities(lidar, rgb, radar); }
};

bool operator==(const Modality& a, const Modality& b);

/// Fused, ego-motion compensated cloud of frame `index` and the `sweeps - 1`
/// frames before it (fewer at the start of a scene).
std::vector<FusedPoint> fuse_frame(std::span<const Frame> scene, int index, int sweeps, const Modality& modality);

/// Ground-truth boxes that carry at least one lidar or radar return.
std::vector<BBox3D> visible_boxes(const Frame& frame);

/// One training or evaluation example.
struct Sample {
  std::vector<FusedPoint> cloud;
  std::vector<BBox3D> gts;
  std::string scene;
  int frame = 0;
  double timestamp = 0.0;
  WeatherMode weather = WeatherMode::clear;
};

struct AugmentConfig {
  bool enabled = true;
  double max_rotation = kPi / 4.0;
  double translation_sigma = 0.2;
  double scale_min = 0.95;
  double scale_max = 1.05;

  void validate() const;
};

/// Global similarity transform p -> scale * R(yaw) p + (tx, ty, 0).
struct GlobalTransform {
  double yaw = 0.0;
  double tx = 0.0;
  double ty = 0.0;
  double scale = 1.0;
};

GlobalTransform sample_transform(const AugmentConfig& cfg, std::mt19937_64& rng);

/// Applies the transform to the points, radar velocities (rotation and
/// scale only) and gt boxes in place.
void augment(std::vector<FusedPoint>& cloud, std::vector<BBox3D>& boxes, const GlobalTransform& t);

struct TrainConfig {
  int epochs = 50;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  AugmentConfig augment;
  double score_threshold = 0.3;
  double nms_iou = 0.1;
  int sweeps = 3;
  LossWeights loss;
  GridConfig grid;
  NetConfig net;
  AnchorConfig anchors;
  MatchConfig match;
  Modality modality;
  YawMode yaw_mode = YawMode::sine_bin;
  int patience = 10;     // epochs without validation improvement; 0 disables
  int eval_every = 1;    // validation period in epochs

  void validate() const;
};

/// Voxel batch of a cloud; `seed` drives the per-voxel point capping.
VoxelBatch prepare_batch(std::span<const FusedPoint> cloud, const TrainConfig& cfg, std::uint64_t seed);

/// Adaptive-moment optimizer with bias correction.
class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double epsilon);
  void step(ad::ParamStore& params);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  double dir = 0.0;
  double val_ap = std::numeric_limits<double>::quiet_NaN();  // NaN when not evaluated
};

struct TrainResult {
  ad::ParamStore best;   // parameters of the best validation epoch
  ad::ParamStore last;
  std::vector<EpochRecord> curve;
  int best_epoch = 0;
  double best_ap = std::numeric_limits<double>::quiet_NaN();
  bool early_stopped = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Seeded training loop, batch size 1. Samples without ground truth are
/// skipped. Without validation samples the last epoch counts as best.
/// Throws NumericError when the loss becomes non-finite.
TrainResult train(std::span<const Sample> train_set, std::span<const Sample> val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Scores and boxes from raw head outputs: sigmoid threshold, decode, NMS.
std::vector<Detection> decode_detections(const NetworkOutput& out, std::span<const Anchor> anchors,
                                         double score_threshold, double nms_iou, YawMode yaw_mode);

std::vector<Detection> infer(const RvfNet& net, std::span<const FusedPoint> cloud, const TrainConfig& cfg);

/// Mean AP of the network over a sample set.
EvalResult evaluate_samples(const RvfNet& net, std::span<const Sample> samples, const TrainConfig& cfg);

}  // namespace rvf
