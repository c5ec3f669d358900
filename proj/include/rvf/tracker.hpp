#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rvf/geom.hpp"
#include "rvf/metrics.hpp"

namespace rvf {

inline constexpr int kStateDim = 9;  // x, y, z, yaw, w, l, h, vx, vy
inline constexpr int kMeasDim = 7;   // x, y, z, yaw, w, l, h
inline constexpr int kYawIndex = 3;

using StateVector = Eigen::Matrix<double, kStateDim, 1>;
using StateMatrix = Eigen::Matrix<double, kStateDim, kStateDim>;
using MeasVector = Eigen::Matrix<double, kMeasDim, 1>;
using MeasMatrix = Eigen::Matrix<double, kMeasDim, kMeasDim>;

struct TrackState {
  StateVector mean = StateVector::Zero();
  StateMatrix cov = StateMatrix::Identity();
  int id = -1;
  int age = 0;
  int hits = 0;
  int misses = 0;
  double timestamp = 0.0;
  double score_sum = 0.0;
  int score_count = 0;

  BBox3D box() const;
  double score() const { return score_count > 0 ? score_sum / score_count : 0.0; }
};

struct UkfConfig {
  double alpha = 1e-3;
  double beta = 2.0;
  double kappa = 0.0;
  StateVector process_noise = (StateVector() << 0.1, 0.1, 0.01, 0.05, 0.001, 0.001, 0.001, 1.0, 1.0).finished();
  MeasVector lidar_noise = (MeasVector() << 0.05, 0.05, 0.05, 0.05, 0.01, 0.01, 0.01).finished();
  double radar_noise_scale = 4.0;
  StateVector initial_variance = (StateVector() << 1.0, 1.0, 1.0, 0.5, 0.1, 0.1, 0.1, 25.0, 25.0).finished();
  double gate = 2.0;
  int birth_hits = 2;
  int death_misses = 3;
  bool report_coasting = false;  // also emit confirmed tracks without a match this timestep

  void validate() const;
};

/// Scaled unscented transform through the constant-velocity model; adds
/// Q * dt. Throws std::runtime_error if the covariance is not PD.
TrackState ukf_predict(const TrackState& t, double dt, const UkfConfig& cfg);

/// Direct observation of the seven box parameters with noise covariance R.
/// The yaw innovation is wrapped to [-pi, pi).
TrackState ukf_update(const TrackState& t, const BBox3D& z, const MeasMatrix& r, const UkfConfig& cfg);

struct Association {
  std::vector<std::pair<std::size_t, std::size_t>> matches;  // (track index, detection index)
  std::vector<std::size_t> unmatched_tracks;
  std::vector<std::size_t> unmatched_dets;
};

/// Greedy globally-nearest pairing on BEV centre distance within `gate`.
/// Ties resolve by track id, then detection index.
Association associate(std::span<const TrackState> tracks, std::span<const Detection> dets, double gate);

struct DetectionStream {
  std::string name;
  MeasMatrix noise = MeasMatrix::Identity();
  std::vector<std::vector<Detection>> steps;  // one list per timestep
};

struct TrackedBox {
  int id = -1;
  BBox3D box;
  double score = 0.0;
};

/// Multi-stream tracker over a time-ordered sequence: per timestep every
/// stream in order predicts, associates, updates, spawns. A track counts one
/// hit per timestep with any match and one miss per timestep without; it is
/// confirmed at `birth_hits` and retired at `death_misses`. Confirmed tracks
/// are emitted on timesteps where they were matched, and on every timestep
/// with `report_coasting`.
class LateFusionTracker {
 public:
  explicit LateFusionTracker(UkfConfig cfg);

  /// Processes one timestep and returns the confirmed live tracks.
  std::vector<TrackedBox> step(double timestamp, std::span<const DetectionStream* const> streams, std::size_t index);

  const std::vector<TrackState>& tracks() const { return tracks_; }

 private:
  UkfConfig cfg_;
  std::vector<TrackState> tracks_;
  int next_id_ = 0;
};

std::vector<std::vector<TrackedBox>> run_late_fusion(std::span<const double> timestamps,
                                                     std::span<const DetectionStream> streams,
                                                     const UkfConfig& cfg);

MeasMatrix lidar_measurement_noise(const UkfConfig& cfg);
MeasMatrix radar_measurement_noise(const UkfConfig& cfg);

}  // namespace rvf
