#include "rvf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "rvf/errors.hpp"

namespace rvf {

Modality Modality::parse(const std::string& s) {
  Modality m{false, false, false};
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "lidar") {
      m.lidar = true;
    } else if (item == "rgb") {
      m.rgb = true;
    } else if (item == "radar") {
      m.radar = true;
    } else {
      throw std::invalid_argument("unknown modality: " + item);
    }
  }
  if (!m.lidar && !m.radar) throw std::invalid_argument("modality needs lidar or radar");
  if (m.rgb && !m.lidar) throw std::invalid_argument("rgb is carried by lidar points and needs lidar");
  return m;
}

std::string Modality::str() const {
  std::string s;
  for (const auto& [on, name] : {std::pair{lidar, "lidar"}, std::pair{rgb, "rgb"}, std::pair{radar, "radar"}}) {
    if (!on) continue;
    if (!s.empty()) s += ",";
    s += name;
  }
  return s;
}

bool operator==(const Modality& a, const Modality& b) {
  return a.lidar == b.lidar && a.rgb == b.rgb && a.radar == b.radar;
}

std::vector<FusedPoint> fuse_frame(std::span<const Frame> scene, int index, int sweeps, const Modality& modality) {
  if (index < 0 || index >= static_cast<int>(scene.size())) throw std::out_of_range("fuse_frame: bad frame index");
  if (sweeps < 1) throw std::invalid_argument("fuse_frame: sweeps must be positive");
  const int first = std::max(0, index - sweeps + 1);
  std::vector<Sweep> list;
  for (int k = first; k <= index; ++k) {
    const Frame& f = scene[k];
    Sweep s;
    s.ego_pose = f.ego_pose;
    s.timestamp = f.timestamp;
    if (modality.lidar) s.cloud = colorize(f.lidar, f.camera);
    if (modality.radar) {
      for (const RadarPoint& p : f.radar) s.cloud.push_back(from_radar(p));
    }
    list.push_back(std::move(s));
  }
  return accumulate_sweeps(list, list.size());
}

std::vector<BBox3D> visible_boxes(const Frame& frame) {
  std::vector<BBox3D> out;
  for (const GtObject& o : frame.objects) {
    if (o.num_lidar + o.num_radar > 0) out.push_back(o.box);
  }
  return out;
}

void AugmentConfig::validate() const {
  if (!(max_rotation >= 0.0) || !(translation_sigma >= 0.0)) {
    throw std::invalid_argument("augment: ranges must be nonnegative");
  }
  if (!(scale_min > 0.0 && scale_min <= scale_max)) throw std::invalid_argument("augment: invalid scale range");
}

GlobalTransform sample_transform(const AugmentConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  GlobalTransform t;
  if (!cfg.enabled) return t;
  if (cfg.max_rotation > 0.0) t.yaw = std::uniform_real_distribution<double>(-cfg.max_rotation, cfg.max_rotation)(rng);
  if (cfg.translation_sigma > 0.0) {
    std::normal_distribution<double> n(0.0, cfg.translation_sigma);
    t.tx = n(rng);
    t.ty = n(rng);
  }
  if (cfg.scale_max > cfg.scale_min) t.scale = std::uniform_real_distribution<double>(cfg.scale_min, cfg.scale_max)(rng);
  return t;
}

void augment(std::vector<FusedPoint>& cloud, std::vector<BBox3D>& boxes, const GlobalTransform& t) {
  const double c = std::cos(t.yaw), s = std::sin(t.yaw);
  for (FusedPoint& p : cloud) {
    const double x = p.x, y = p.y;
    p.x = t.scale * (c * x - s * y) + t.tx;
    p.y = t.scale * (s * x + c * y) + t.ty;
    p.z = t.scale * p.z;
    const double vx = p.vx, vy = p.vy;
    p.vx = t.scale * (c * vx - s * vy);
    p.vy = t.scale * (s * vx + c * vy);
  }
  for (BBox3D& b : boxes) {
    const double x = b.x, y = b.y;
    b.x = t.scale * (c * x - s * y) + t.tx;
    b.y = t.scale * (s * x + c * y) + t.ty;
    b.z *= t.scale;
    b.w *= t.scale;
    b.l *= t.scale;
    b.h *= t.scale;
    b.yaw = wrap_angle(b.yaw + t.yaw);
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train: epochs must be at least 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("train: learning rate must be nonnegative");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw std::invalid_argument("train: invalid optimizer moments");
  }
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0) || !(nms_iou >= 0.0 && nms_iou <= 1.0)) {
    throw std::invalid_argument("train: thresholds must lie in [0, 1]");
  }
  if (sweeps < 1) throw std::invalid_argument("train: sweeps must be positive");
  if (patience < 0 || eval_every < 1) throw std::invalid_argument("train: invalid validation schedule");
  augment.validate();
  loss.validate();
  grid.validate();
  net.validate();
  match.validate();
}

VoxelBatch prepare_batch(std::span<const FusedPoint> cloud, const TrainConfig& cfg, std::uint64_t seed) {
  std::vector<Voxel> voxels = voxelize(cloud, cfg.grid);
  cap_voxels(voxels, seed, cfg.grid.max_points);
  recenter_offsets(voxels, cfg.grid);
  return make_voxel_batch(voxels, cfg.modality.mask());
}

Adam::Adam(double lr, double beta1, double beta2, double epsilon) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::step(ad::ParamStore& params) {
  auto& entries = params.entries();
  if (m_.empty()) {
    for (const auto& [name, t] : entries) {
      m_.emplace_back(t.numel(), 0.0);
      v_.emplace_back(t.numel(), 0.0);
    }
  }
  if (m_.size() != entries.size()) throw std::logic_error("adam: parameter set changed");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < entries.size(); ++k) {
    ad::Tensor& p = entries[k].second;
    const auto g = p.grad();
    if (g.empty()) continue;
    auto w = p.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

std::vector<Detection> decode_detections(const NetworkOutput& out, std::span<const Anchor> anchors,
                                         double score_threshold, double nms_iou, YawMode yaw_mode) {
  if (out.cls.numel() != anchors.size()) throw std::invalid_argument("decode_detections: anchor count mismatch");
  const auto cls = out.cls.data();
  const auto reg = out.reg.data();
  const auto dir = out.dir.data();
  std::vector<BBox3D> boxes;
  std::vector<double> scores;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    const double score = 1.0 / (1.0 + std::exp(-cls[a]));
    if (!(score >= score_threshold)) continue;
    const double dir_prob = 1.0 / (1.0 + std::exp(-dir[a]));
    const BBox3D b = decode_box(anchors[a], reg.subspan(a * kRegDims, kRegDims), dir_prob, yaw_mode);
    if (!std::isfinite(b.w) || !std::isfinite(b.l) || !std::isfinite(b.h) || !std::isfinite(b.x) ||
        !std::isfinite(b.y) || !std::isfinite(b.z)) {
      continue;
    }
    boxes.push_back(b);
    scores.push_back(score);
  }
  std::vector<Detection> dets;
  for (std::size_t k : nms(boxes, scores, nms_iou)) dets.push_back({boxes[k], scores[k]});
  return dets;
}

namespace {

constexpr std::uint64_t kEvalStream = 0xe7a1;
constexpr std::uint64_t kShuffleStream = 0x5f1e;

}  // namespace

std::vector<Detection> infer(const RvfNet& net, std::span<const FusedPoint> cloud, const TrainConfig& cfg) {
  const VoxelBatch batch = prepare_batch(cloud, cfg, derive_seed(cfg.seed, kEvalStream));
  const NetworkOutput out = net.forward(batch);
  const auto anchors = generate_anchors(net.anchor_grid(), cfg.anchors);
  return decode_detections(out, anchors, cfg.score_threshold, cfg.nms_iou, cfg.yaw_mode);
}

EvalResult evaluate_samples(const RvfNet& net, std::span<const Sample> samples, const TrainConfig& cfg) {
  std::vector<EvalFrame> frames;
  frames.reserve(samples.size());
  for (const Sample& s : samples) frames.push_back({infer(net, s.cloud, cfg), s.gts});
  return evaluate(frames);
}

TrainResult train(std::span<const Sample> train_set, std::span<const Sample> val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  std::vector<const Sample*> usable;
  for (const Sample& s : train_set) {
    if (!s.gts.empty()) usable.push_back(&s);
  }
  if (usable.empty()) throw std::invalid_argument("train: no training frame contains a vehicle");
  std::size_t val_gts = 0;
  for (const Sample& s : val_set) val_gts += s.gts.size();

  RvfNet net(cfg.net, cfg.grid, cfg.seed);
  const auto anchors = generate_anchors(net.anchor_grid(), cfg.anchors);
  Adam adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);

  TrainResult result;
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(usable.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, kShuffleStream, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    for (std::size_t idx : order) {
      const Sample& s = *usable[idx];
      const std::uint64_t frame_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), idx + 1);
      std::mt19937_64 rng(frame_seed);
      std::vector<FusedPoint> cloud = s.cloud;
      std::vector<BBox3D> gts = s.gts;
      augment(cloud, gts, sample_transform(cfg.augment, rng));
      const VoxelBatch batch = prepare_batch(cloud, cfg, frame_seed);
      const TargetAssignment targets = match_anchors(anchors, gts, cfg.match, cfg.yaw_mode);
      const NetworkOutput out = net.forward(batch);
      const LossBreakdown loss = total_loss(out, targets, cfg.loss, cfg.yaw_mode);
      const double value = loss.total.item();
      if (!std::isfinite(value)) {
        std::ostringstream os;
        os << "training diverged: non-finite loss at epoch " << epoch << ", scene " << s.scene << " frame "
           << s.frame;
        throw NumericError(os.str());
      }
      net.params().zero_grad();
      ad::backward(loss.total);
      adam.step(net.params());
      rec.loss += value;
      rec.cls += loss.cls;
      rec.reg += loss.reg;
      rec.dir += loss.dir;
    }
    const double n = static_cast<double>(usable.size());
    rec.loss /= n;
    rec.cls /= n;
    rec.reg /= n;
    rec.dir /= n;

    const bool evaluate_now = val_gts > 0 && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
    if (evaluate_now) {
      rec.val_ap = evaluate_samples(net, val_set, cfg).mean_ap;
      if (std::isnan(result.best_ap) || rec.val_ap > result.best_ap) {
        result.best_ap = rec.val_ap;
        result.best_epoch = epoch;
        result.best = net.params().clone();
        since_best = 0;
      }
    }
    if (val_gts > 0 && result.best_epoch != epoch) since_best += 1;
    result.curve.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (cfg.patience > 0 && val_gts > 0 && since_best >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  result.last = net.params().clone();
  if (val_gts == 0) {
    result.best = net.params().clone();
    result.best_epoch = result.curve.back().epoch;
  }
  return result;
}

}  // namespace rvf
