#include "rvf/tracker.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace rvf {

BBox3D TrackState::box() const {
  return {mean(0), mean(1), mean(2), mean(4), mean(5), mean(6), wrap_angle(mean(kYawIndex))};
}

void UkfConfig::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("ukf: alpha must be positive");
  if (!(gate > 0.0)) throw std::invalid_argument("ukf: gate must be positive");
  if ((process_noise.array() <= 0.0).any() || (lidar_noise.array() <= 0.0).any() ||
      (initial_variance.array() <= 0.0).any() || !(radar_noise_scale > 0.0)) {
    throw std::invalid_argument("ukf: noise terms must be positive");
  }
  if (birth_hits < 1 || death_misses < 1) throw std::invalid_argument("ukf: birth/death counts must be positive");
}

MeasMatrix lidar_measurement_noise(const UkfConfig& cfg) { return cfg.lidar_noise.asDiagonal(); }

MeasMatrix radar_measurement_noise(const UkfConfig& cfg) {
  return (cfg.lidar_noise * cfg.radar_noise_scale).asDiagonal();
}

namespace {

constexpr int kSigma = 2 * kStateDim + 1;

struct Weights {
  double lambda = 0.0;
  double mean0 = 0.0;
  double cov0 = 0.0;
  double rest = 0.0;
};

Weights ut_weights(const UkfConfig& cfg) {
  const double n = kStateDim;
  Weights w;
  w.lambda = cfg.alpha * cfg.alpha * (n + cfg.kappa) - n;
  w.mean0 = w.lambda / (n + w.lambda);
  w.cov0 = w.mean0 + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
  w.rest = 1.0 / (2.0 * (n + w.lambda));
  return w;
}

StateMatrix symmetrize(const StateMatrix& p) { return 0.5 * (p + p.transpose()); }

Eigen::Matrix<double, kStateDim, kSigma> sigma_points(const StateVector& mean, const StateMatrix& cov,
                                                      const Weights& w) {
  const double n = kStateDim;
  Eigen::LLT<StateMatrix> llt((n + w.lambda) * cov);
  if (llt.info() != Eigen::Success) {
    llt.compute((n + w.lambda) * symmetrize(cov));
    if (llt.info() != Eigen::Success) throw std::runtime_error("ukf: covariance is not positive definite");
  }
  const StateMatrix l = llt.matrixL();
  Eigen::Matrix<double, kStateDim, kSigma> x;
  x.col(0) = mean;
  for (int i = 0; i < kStateDim; ++i) {
    x.col(1 + i) = mean + l.col(i);
    x.col(1 + kStateDim + i) = mean - l.col(i);
  }
  return x;
}

void check_pd(const StateMatrix& p) {
  Eigen::LLT<StateMatrix> llt(p);
  if (llt.info() != Eigen::Success) throw std::runtime_error("ukf: covariance lost positive definiteness");
}

}  // namespace

TrackState ukf_predict(const TrackState& t, double dt, const UkfConfig& cfg) {
  if (!(dt >= 0.0)) throw std::invalid_argument("ukf_predict: dt must be nonnegative");
  const Weights w = ut_weights(cfg);
  auto x = sigma_points(t.mean, t.cov, w);
  for (int i = 0; i < kSigma; ++i) {
    x(0, i) += x(7, i) * dt;
    x(1, i) += x(8, i) * dt;
  }
  // Mean as anchor + weighted deviations: avoids cancelling the large
  // opposite-signed weights of small alpha.
  StateVector mean = x.col(0);
  StateVector acc = StateVector::Zero();
  Eigen::Matrix<double, kStateDim, kSigma> dev;
  for (int i = 0; i < kSigma; ++i) {
    dev.col(i) = x.col(i) - x.col(0);
    dev(kYawIndex, i) = wrap_angle(dev(kYawIndex, i));
    if (i > 0) acc += w.rest * dev.col(i);
  }
  mean += acc;
  StateMatrix cov = StateMatrix::Zero();
  for (int i = 0; i < kSigma; ++i) {
    StateVector d = dev.col(i) - acc;
    d(kYawIndex) = wrap_angle(d(kYawIndex));
    cov += (i == 0 ? w.cov0 : w.rest) * d * d.transpose();
  }
  cov += StateMatrix(cfg.process_noise.asDiagonal()) * dt;
  mean(kYawIndex) = wrap_angle(mean(kYawIndex));

  TrackState out = t;
  out.mean = mean;
  out.cov = symmetrize(cov);
  check_pd(out.cov);
  out.timestamp = t.timestamp + dt;
  return out;
}

TrackState ukf_update(const TrackState& t, const BBox3D& z, const MeasMatrix& r, const UkfConfig& cfg) {
  for (double v : {z.x, z.y, z.z, z.w, z.l, z.h, z.yaw}) {
    if (!std::isfinite(v)) throw std::invalid_argument("ukf_update: non-finite measurement");
  }
  const Weights w = ut_weights(cfg);
  const auto x = sigma_points(t.mean, t.cov, w);
  // h(x) selects the first seven components.
  Eigen::Matrix<double, kMeasDim, kSigma> zdev;
  Eigen::Matrix<double, kStateDim, kSigma> xdev;
  for (int i = 0; i < kSigma; ++i) {
    xdev.col(i) = x.col(i) - x.col(0);
    xdev(kYawIndex, i) = wrap_angle(xdev(kYawIndex, i));
    zdev.col(i) = xdev.col(i).head<kMeasDim>();
  }
  MeasVector zacc = MeasVector::Zero();
  StateVector xacc = StateVector::Zero();
  for (int i = 1; i < kSigma; ++i) {
    zacc += w.rest * zdev.col(i);
    xacc += w.rest * xdev.col(i);
  }
  MeasVector zmean = x.col(0).head<kMeasDim>() + zacc;
  MeasMatrix s = r;
  Eigen::Matrix<double, kStateDim, kMeasDim> c = Eigen::Matrix<double, kStateDim, kMeasDim>::Zero();
  for (int i = 0; i < kSigma; ++i) {
    const double wc = i == 0 ? w.cov0 : w.rest;
    const MeasVector dz = zdev.col(i) - zacc;
    const StateVector dx = xdev.col(i) - xacc;
    s += wc * dz * dz.transpose();
    c += wc * dx * dz.transpose();
  }
  Eigen::LLT<MeasMatrix> sllt(0.5 * (s + s.transpose()));
  if (sllt.info() != Eigen::Success) throw std::runtime_error("ukf_update: innovation covariance is not PD");

  MeasVector meas;
  meas << z.x, z.y, z.z, z.yaw, z.w, z.l, z.h;
  MeasVector innovation = meas - zmean;
  innovation(kYawIndex) = wrap_angle(innovation(kYawIndex));

  const Eigen::Matrix<double, kStateDim, kMeasDim> gain = sllt.solve(c.transpose()).transpose();
  TrackState out = t;
  out.mean = x.col(0) + xacc + gain * innovation;
  out.mean(kYawIndex) = wrap_angle(out.mean(kYawIndex));
  out.cov = symmetrize(t.cov - gain * s * gain.transpose());
  check_pd(out.cov);
  return out;
}

Association associate(std::span<const TrackState> tracks, std::span<const Detection> dets, double gate) {
  if (!(gate > 0.0)) throw std::invalid_argument("associate: gate must be positive");
  struct Pair {
    double dist;
    int track_id;
    std::size_t det;
    std::size_t track;
  };
  std::vector<Pair> pairs;
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    for (std::size_t d = 0; d < dets.size(); ++d) {
      const double dist = std::hypot(tracks[t].mean(0) - dets[d].box.x, tracks[t].mean(1) - dets[d].box.y);
      if (dist <= gate) pairs.push_back({dist, tracks[t].id, d, t});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::tie(a.dist, a.track_id, a.det) < std::tie(b.dist, b.track_id, b.det);
  });
  Association a;
  std::vector<bool> track_used(tracks.size(), false);
  std::vector<bool> det_used(dets.size(), false);
  for (const Pair& p : pairs) {
    if (track_used[p.track] || det_used[p.det]) continue;
    track_used[p.track] = true;
    det_used[p.det] = true;
    a.matches.emplace_back(p.track, p.det);
  }
  std::sort(a.matches.begin(), a.matches.end());
  for (std::size_t t = 0; t < tracks.size(); ++t) {
    if (!track_used[t]) a.unmatched_tracks.push_back(t);
  }
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (!det_used[d]) a.unmatched_dets.push_back(d);
  }
  return a;
}

LateFusionTracker::LateFusionTracker(UkfConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::vector<TrackedBox> LateFusionTracker::step(double timestamp, std::span<const DetectionStream* const> streams,
                                                std::size_t index) {
  std::vector<bool> matched(tracks_.size(), false);
  for (const DetectionStream* stream : streams) {
    if (index >= stream->steps.size()) continue;
    const std::vector<Detection>& dets = stream->steps[index];
    for (TrackState& t : tracks_) {
      const double dt = timestamp - t.timestamp;
      if (dt < 0.0) throw std::invalid_argument("tracker: timestamps must not decrease");
      t = ukf_predict(t, dt, cfg_);
      t.timestamp = timestamp;
    }
    const Association a = associate(tracks_, dets, cfg_.gate);
    for (const auto& [ti, di] : a.matches) {
      tracks_[ti] = ukf_update(tracks_[ti], dets[di].box, stream->noise, cfg_);
      tracks_[ti].score_sum += dets[di].score;
      tracks_[ti].score_count += 1;
      matched[ti] = true;
    }
    for (std::size_t di : a.unmatched_dets) {
      TrackState t;
      const BBox3D& b = dets[di].box;
      t.mean << b.x, b.y, b.z, b.yaw, b.w, b.l, b.h, 0.0, 0.0;
      t.cov = cfg_.initial_variance.asDiagonal();
      t.id = next_id_++;
      t.timestamp = timestamp;
      t.score_sum = dets[di].score;
      t.score_count = 1;
      tracks_.push_back(t);
      matched.push_back(true);  // birth counts as the first hit
    }
  }
  for (std::size_t k = 0; k < tracks_.size(); ++k) {
    tracks_[k].age += 1;
    if (matched[k]) {
      tracks_[k].hits += 1;
      tracks_[k].misses = 0;
    } else {
      tracks_[k].misses += 1;
    }
  }
  std::erase_if(tracks_, [&](const TrackState& t) { return t.misses >= cfg_.death_misses; });

  std::vector<TrackedBox> out;
  for (const TrackState& t : tracks_) {
    if (t.hits >= cfg_.birth_hits && (t.misses == 0 || cfg_.report_coasting)) out.push_back({t.id, t.box(), t.score()});
  }
  return out;
}

std::vector<std::vector<TrackedBox>> run_late_fusion(std::span<const double> timestamps,
                                                     std::span<const DetectionStream> streams,
                                                     const UkfConfig& cfg) {
  for (std::size_t k = 1; k < timestamps.size(); ++k) {
    if (!(timestamps[k] > timestamps[k - 1])) throw std::invalid_argument("late fusion: timestamps must increase");
  }
  LateFusionTracker tracker(cfg);
  std::vector<const DetectionStream*> ptrs;
  for (const DetectionStream& s : streams) ptrs.push_back(&s);
  std::vector<std::vector<TrackedBox>> out;
  out.reserve(timestamps.size());
  for (std::size_t k = 0; k < timestamps.size(); ++k) out.push_back(tracker.step(timestamps[k], ptrs, k));
  return out;
}

}  // namespace rvf
