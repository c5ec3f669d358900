// Acceptance run: one PASS/FAIL line per criterion. Optional arguments select
// criteria by number, e.g. `acceptance 1 2 5`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gradcheck.hpp"
#include "kf_oracle.hpp"
#include "micro.hpp"
#include "oracles.hpp"
#include "rvf/commands.hpp"
#include "rvf/losses.hpp"
#include "rvf/metrics.hpp"
#include "rvf/tracker.hpp"
#include "rvf/voxel.hpp"
#include "tiny.hpp"

using namespace rvf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "rvf_acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// ---- 1 ----------------------------------------------------------------------

Outcome yaw_codec() {
  const Anchor base{10.0, 2.0, -1.0, 1.9, 4.6, 1.7, 0.0};
  double worst = 0.0;
  for (YawMode mode : {YawMode::sine_bin, YawMode::simple}) {
    for (double anchor_yaw : {0.0, 0.5 * kPi}) {
      Anchor a = base;
      a.yaw = anchor_yaw;
      for (int k = 0; k < 360; ++k) {
        const double theta = -kPi + 2.0 * kPi * k / 360.0;
        BBox3D gt = a.box();
        gt.yaw = theta;
        const auto reg = encode_regression(gt, a, mode);
        const double dir = encode_yaw(theta, anchor_yaw).c_dir == 1 ? 1.0 : 0.0;
        const BBox3D back = decode_box(a, reg, dir, mode);
        worst = std::max(worst, std::abs(wrap_angle(back.yaw - theta)));
      }
    }
  }
  return {worst < 1e-9, fmt("max round-trip yaw error %.3g rad over 360 yaws x 2 anchors x 2 modes", worst)};
}

// ---- 2 ----------------------------------------------------------------------

// Total loss with one positive anchor `r` and theta_d measured from its yaw.
double loss_at(double theta_d, int r) {
  const AnchorGrid ag{1, 1, 0.0, 0.0, 1.0};
  const auto anchors = generate_anchors(ag, AnchorConfig{});
  BBox3D gt = anchors[r].box();
  gt.yaw = anchors[r].yaw + theta_d;
  TargetAssignment t = match_anchors(anchors, std::vector<BBox3D>{gt}, MatchConfig{}, YawMode::sine_bin);
  if (t.labels[1 - r] == Label::positive) --t.num_positive;
  t.labels[1 - r] = Label::ignore;
  NetworkOutput out;
  out.cls = ad::Tensor::constant({1, 1, 2}, {1.5, -0.5});
  std::vector<double> reg(14);
  for (std::size_t k = 0; k < reg.size(); ++k) reg[k] = 0.1 * static_cast<double>(k % 7) - 0.2;
  out.reg = ad::Tensor::constant({1, 1, 2, 7}, reg);
  out.dir = ad::Tensor::constant({1, 1, 2}, {0.4, -0.3});
  return total_loss(out, t, LossWeights{}).total.item();
}

Outcome loss_continuity() {
  double gap = 0.0;
  for (int r : {0, 1}) gap = std::max(gap, std::abs(loss_at(kPi - 1e-6, r) - loss_at(-kPi + 1e-6, r)));
  const YawTarget a = encode_yaw(kPi / 6.0, 0.0);
  const YawTarget b = encode_yaw(5.0 * kPi / 6.0, 0.0);
  const bool pair_ok = std::abs(a.e_theta - 0.5) < 1e-12 && std::abs(b.e_theta - 0.5) < 1e-12 && a.c_dir == 1 &&
                       b.c_dir == 0;
  return {gap < 1e-4 && pair_ok,
          fmt("|L(pi-1e-6) - L(-pi+1e-6)| = %.3g; targets (%.3f, %d) vs (%.3f, %d)", gap, a.e_theta, a.c_dir,
              b.e_theta, b.c_dir)};
}

// ---- 3 ----------------------------------------------------------------------

Outcome gradients() {
  const std::vector<std::pair<std::string, std::function<gradcheck::Result(std::uint64_t)>>> layers{
      {"vfe", micro::vfe_case},
      {"subm3d", micro::subm_case},
      {"conv2d", micro::conv2d_case},
      {"heads", micro::head_case},
      {"loss", [](std::uint64_t s) { return micro::loss_case(s, s % 2 ? YawMode::sine_bin : YawMode::simple); }},
  };
  bool ok = true;
  std::string detail;
  for (const auto& [name, run] : layers) {
    std::size_t failed = 0, checked = 0, instances = 0;
    for (std::uint64_t s = 1; s <= 20; ++s) {
      const gradcheck::Result r = run(1000 + s);
      failed += r.failed;
      checked += r.checked;
      instances += r.checked > 0 ? 1 : 0;
    }
    ok = ok && failed == 0 && instances == 20;
    detail += fmt("%s %zu/%zu ", name.c_str(), checked - failed, checked);
  }
  return {ok, detail + "entries within rel 1e-4 (20 instances each)"};
}

// ---- 4 ----------------------------------------------------------------------

Outcome sparse_dense() {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> count(1, 64);
  const int extent = 4, cin = 3, cout = 4;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto sites = micro::random_sites(rng, extent, count(rng));
    const auto feats = micro::normal_values(rng, sites.size() * cin);
    const auto kernel = micro::normal_values(rng, 27 * cin * cout);
    const auto bias = micro::normal_values(rng, cout);
    std::vector<double> volume(extent * extent * extent * cin, 0.0);
    const auto cell = [&](const VoxelCoord& c) {
      return (static_cast<std::size_t>(c.ix) * extent + c.iy) * extent + c.iz;
    };
    for (std::size_t m = 0; m < sites.size(); ++m) {
      for (int i = 0; i < cin; ++i) volume[cell(sites[m]) * cin + i] = feats[m * cin + i];
    }
    const auto dense = oracle::dense_conv3d(volume, extent, cin, kernel, bias, cout);
    const auto rules = std::make_shared<const ad::Rulebook>(ad::Rulebook::build(sites));
    const auto out = ad::submanifold_conv3d(ad::Tensor::constant({static_cast<int>(sites.size()), cin}, feats), rules,
                                            ad::Tensor::constant({27, cin, cout}, kernel),
                                            ad::Tensor::constant({cout}, bias));
    for (std::size_t m = 0; m < sites.size(); ++m) {
      for (int c = 0; c < cout; ++c) {
        worst = std::max(worst, std::abs(out.data()[m * cout + c] - dense[cell(sites[m]) * cout + c]));
      }
    }
  }
  return {worst < 1e-9, fmt("max deviation %.3g over 100 random 4x4x4 occupancies", worst)};
}

// ---- 5 ----------------------------------------------------------------------

Outcome rotated_iou() {
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> shift(-3.0, 3.0);
  double worst = 0.0;
  int overlapping = 0;
  for (int k = 0; k < 1000; ++k) {
    const BBox3D a = oracle::random_box(rng, 5.0);
    BBox3D b = oracle::random_box(rng, 0.0);
    b.x = a.x + shift(rng);
    b.y = a.y + shift(rng);
    const double iou = bev_iou(a, b);
    overlapping += iou > 0.0 ? 1 : 0;
    worst = std::max(worst, std::abs(iou - oracle::monte_carlo_iou(a, b, 1000000, 9000 + k)));
  }
  const BBox3D unit{0.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0};
  const BBox3D far{10.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0};
  const BBox3D half{1.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0};  // overlap 2, union 6
  const double e1 = std::abs(bev_iou(unit, unit) - 1.0);
  const double e2 = std::abs(bev_iou(unit, far));
  const double e3 = std::abs(bev_iou(unit, half) - 1.0 / 3.0);
  const bool exact = e1 < 1e-9 && e2 < 1e-9 && e3 < 1e-9;
  return {worst < 1e-2 && exact,
          fmt("max |IoU - MC| %.3g over 1000 pairs (%d overlapping); analytic errors %.1g %.1g %.1g", worst,
              overlapping, e1, e2, e3)};
}

// ---- 6 ----------------------------------------------------------------------

Outcome overfit() {
  RunConfig cfg = tiny::run_config(6);
  cfg.train.epochs = 200;
  cfg.train.augment.enabled = false;
  cfg.train.eval_every = 5;
  cfg.train.patience = 0;
  const std::vector<Sample> frames = tiny::samples(cfg, 4, 5);
  int first_hit = -1;
  const TrainResult r = train(frames, frames, cfg.train, [&](const EpochRecord& e) {
    if (first_hit < 0 && e.val_ap >= 0.9) first_hit = e.epoch;
  });
  const RvfNet best(cfg.train.net, cfg.train.grid, r.best.clone());
  const double ap = evaluate_samples(best, frames, cfg.train).mean_ap;
  return {frames.size() == 20 && ap >= 0.9,
          fmt("%zu frames, best mean AP %.4f at epoch %d, first >= 0.9 at epoch %d", frames.size(), ap, r.best_epoch,
              first_hit)};
}

// ---- 7 and 8 ------------------------------------------------------------------

RunConfig fusion_benchmark(std::uint64_t seed) {
  RunConfig cfg = tiny::run_config(seed);
  cfg.dataset.num_scenes = 20;
  cfg.dataset.train_ratio = 0.5;
  cfg.dataset.val_ratio = 0.5;
  cfg.dataset.train_weather = {WeatherMode::clear, WeatherMode::rain};
  cfg.dataset.val_weather = {WeatherMode::rain};
  cfg.dataset.scenes.degraded_fraction = 0.5;
  cfg.dataset.scenes.degraded_visibility = 0.0;
  cfg.train.epochs = 120;
  cfg.train.eval_every = 5;
  cfg.train.patience = 0;
  return cfg;
}

struct BenchRow {
  double lidar = 0.0;
  double fusion = 0.0;
  double tracked_lidar = 0.0;
  double tracked_late = 0.0;
  double tracked_early = 0.0;
};

const std::vector<BenchRow>& benchmark() {
  static std::optional<std::vector<BenchRow>> rows;
  if (rows) return *rows;
  rows.emplace();
  for (std::uint64_t seed : {1, 2, 3}) {
    const RunConfig cfg = fusion_benchmark(seed);
    const fs::path root = scratch("fusion_" + std::to_string(seed));
    cmd_generate(cfg, root / "data");
    std::map<std::string, double> ap;
    for (const auto& [variant, dir] : {std::pair{"lidar", "lidar"}, {"lidar,radar", "lidar+radar"}, {"radar", "radar"}}) {
      RunConfig v = cfg;
      v.train.modality = Modality::parse(variant);
      cmd_train(v, root / "data", root / dir);
      ap[variant] = cmd_eval(root / dir, root / "data").mean_ap;
    }
    TrackOptions opts;
    opts.lidar_run = root / "lidar";
    opts.radar_run = root / "radar";
    opts.early_run = root / "lidar+radar";
    BenchRow row;
    row.lidar = ap["lidar"];
    row.fusion = ap["lidar,radar"];
    for (const TrackedRow& t : cmd_track(cfg, root / "data", opts, root / "track")) {
      if (t.name == "tracked_lidar") row.tracked_lidar = t.result.mean_ap;
      if (t.name == "tracked_late_fusion") row.tracked_late = t.result.mean_ap;
      if (t.name == "tracked_early_fusion") row.tracked_early = t.result.mean_ap;
    }
    std::printf("  seed %llu: AP lidar %.4f, lidar+radar %.4f, radar %.4f; tracked lidar %.4f, late %.4f, early %.4f\n",
                static_cast<unsigned long long>(seed), row.lidar, row.fusion, ap["radar"], row.tracked_lidar,
                row.tracked_late, row.tracked_early);
    std::fflush(stdout);
    rows->push_back(row);
    fs::remove_all(root);
  }
  return *rows;
}

Outcome fusion_direction() {
  int wins = 0;
  std::string detail;
  for (const BenchRow& r : benchmark()) {
    wins += r.fusion > r.lidar ? 1 : 0;
    detail += fmt("%.3f vs %.3f; ", r.fusion, r.lidar);
  }
  return {wins >= 2, fmt("lidar+radar beats lidar on %d/3 seeds (", wins) + detail.substr(0, detail.size() - 2) + ")"};
}

Outcome late_vs_early() {
  int wins = 0;
  std::string detail;
  for (const BenchRow& r : benchmark()) {
    wins += r.tracked_early > r.tracked_late ? 1 : 0;
    detail += fmt("%.3f vs %.3f; ", r.tracked_early, r.tracked_late);
  }
  return {wins >= 2,
          fmt("tracked early beats tracked late fusion on %d/3 seeds (", wins) + detail.substr(0, detail.size() - 2) +
              ")"};
}

// ---- 9 ----------------------------------------------------------------------

Outcome ukf() {
  const UkfConfig cfg;
  std::mt19937_64 rng(909);
  std::normal_distribution<double> d(0.0, 1.0);
  std::uniform_real_distribution<double> step(0.0, 0.5);
  double worst = 0.0, min_eig = 1e300;
  for (int k = 0; k < 1000; ++k) {
    TrackState t;
    for (int i = 0; i < kStateDim; ++i) t.mean(i) = d(rng);
    t.mean(kYawIndex) *= 0.2;
    t.cov = oracle::random_spd(rng);
    StateVector x = t.mean;
    StateMatrix p = t.cov;

    const double dt = step(rng);
    t = ukf_predict(t, dt, cfg);
    oracle::kf_predict(x, p, dt, cfg);
    worst = std::max({worst, (t.mean - x).cwiseAbs().maxCoeff(), (t.cov - p).cwiseAbs().maxCoeff()});

    MeasVector z = x.head<kMeasDim>();
    for (int i = 0; i < kMeasDim; ++i) z(i) += 0.3 * d(rng);
    z(kYawIndex) = 0.2 * d(rng);
    const MeasMatrix r = k % 2 ? radar_measurement_noise(cfg) : lidar_measurement_noise(cfg);
    t = ukf_update(t, oracle::to_box(z), r, cfg);
    oracle::kf_update(x, p, z, r);
    worst = std::max({worst, (t.mean - x).cwiseAbs().maxCoeff(), (t.cov - p).cwiseAbs().maxCoeff()});
    min_eig = std::min(min_eig, Eigen::SelfAdjointEigenSolver<StateMatrix>(t.cov).eigenvalues().minCoeff());
  }

  // Noise-free constant-velocity target.
  DetectionStream stream{"lidar", MeasMatrix::Identity() * 1e-9, {}};
  std::vector<double> ts;
  for (int k = 0; k < 5; ++k) {
    ts.push_back(0.1 * k);
    stream.steps.push_back({{{12.0 + 0.6 * k, 3.0 - 0.4 * k, -1.0, 1.9, 4.6, 1.7, 0.3}, 0.9}});
  }
  const auto out = run_late_fusion(ts, std::vector<DetectionStream>{stream}, cfg);
  double conv = out[1].empty() ? 1e300 : 0.0;
  for (std::size_t k = 1; k < out.size() && !out[1].empty(); ++k) {
    const BBox3D& truth = stream.steps[k][0].box;
    conv = std::max(conv, out[k].size() == 1 ? std::hypot(out[k][0].box.x - truth.x, out[k][0].box.y - truth.y) : 1e300);
  }
  return {worst < 1e-9 && min_eig > 0.0 && conv < 1e-6,
          fmt("max deviation from linear KF %.3g over 1000 random steps, min eigenvalue %.3g, position error after 2 "
              "updates %.3g",
              worst, min_eig, conv)};
}

// ---- 10 ---------------------------------------------------------------------

Outcome metric_oracle() {
  // 2 gts, 1 TP at precision 1: interpolated precision is 1 up to recall 0.5.
  // Of the 90 recall points above 0.1, 40 carry (1 - 0.1); normalized by 90 * 0.9.
  const double hand = 40.0 * 0.9 / (90.0 * 0.9);
  std::vector<EvalFrame> frames(1);
  frames[0].gts = {{5.0, 0.0, -1.0, 1.9, 4.6, 1.7, 0.0}, {20.0, 5.0, -1.0, 1.9, 4.6, 1.7, 0.0}};
  frames[0].dets = {{frames[0].gts[0], 0.8}};
  const EvalResult hand_case = evaluate(frames);
  double err = 0.0;
  for (double ap : hand_case.ap_per_threshold) err = std::max(err, std::abs(ap - hand));

  std::vector<EvalFrame> perfect(3);
  for (int k = 0; k < 3; ++k) {
    for (int j = 0; j < 3; ++j) {
      const BBox3D b{5.0 + 8.0 * j, 3.0 * k, -1.0, 1.9, 4.6, 1.7, 0.2 * j};
      perfect[k].gts.push_back(b);
      perfect[k].dets.push_back({b, 0.3 + 0.1 * j});
    }
  }
  const EvalResult p = evaluate(perfect);

  std::vector<EvalFrame> flipped(1);
  flipped[0].gts = {{5.0, 0.0, -1.0, 1.9, 4.6, 1.7, 0.0}, {15.0, 0.0, -1.0, 1.9, 4.6, 1.7, 0.0}};
  flipped[0].dets = {{{5.0, 0.0, -1.0, 1.9, 4.6, 1.7, kPi / 6.0}, 0.9}, {{15.0, 0.0, -1.0, 1.9, 4.6, 1.7, -kPi / 6.0}, 0.8}};
  const double aoe_sixth = average_orientation_error(flipped);
  flipped[0].dets[0].box.yaw = kPi;
  flipped[0].dets[1].box.yaw = -kPi;
  const double aoe_pi = average_orientation_error(flipped);

  const bool ok = err < 1e-12 && p.mean_ap == 1.0 && p.aoe == 0.0 && std::abs(aoe_sixth - kPi / 6.0) < 1e-12 &&
                  std::abs(aoe_pi - kPi) < 1e-12;
  return {ok, fmt("hand case AP %.15f vs %.15f; perfect AP %.1f; AOE %.6f, %.6f, %.6f", hand_case.mean_ap, hand,
                  p.mean_ap, p.aoe, aoe_sixth, aoe_pi)};
}

// ---- 11 ---------------------------------------------------------------------

Outcome radar_capping() {
  std::mt19937_64 rng(1111);
  std::uniform_int_distribution<int> nl(0, 100), nr(0, 60);
  int violations = 0, radar_limited = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    int lidar = nl(rng), radar = nr(rng);
    if (lidar + radar <= 40) lidar += 41 - (lidar + radar);
    std::vector<Source> sources(lidar, Source::lidar);
    sources.insert(sources.end(), radar, Source::radar);
    std::shuffle(sources.begin(), sources.end(), rng);
    Voxel v;
    for (std::size_t k = 0; k < sources.size(); ++k) {
      FusedPoint p;
      p.source = sources[k];
      v.points.push_back({p, 0.0, 0.0, 0.0, k});
    }
    const Voxel c = cap_voxel(v, rng, 40);
    const auto kept_radar =
        std::count_if(c.points.begin(), c.points.end(), [](const VoxelPoint& q) { return q.point.source == Source::radar; });
    const bool radar_dropped = kept_radar < radar;
    const bool other_kept = static_cast<int>(c.points.size()) > kept_radar;
    violations += radar_dropped && other_kept ? 1 : 0;
    radar_limited += radar > 40 ? 1 : 0;
  }
  return {violations == 0,
          fmt("%d violations in 1000 voxels over 40 points (%d with more than 40 radar points)", violations,
              radar_limited)};
}

// ---- 12 ---------------------------------------------------------------------

Outcome determinism() {
  RunConfig cfg = tiny::run_config(12);
  cfg.dataset.num_scenes = 4;
  cfg.dataset.scenes.duration = 1.0;
  cfg.train.epochs = 2;
  std::vector<std::string> metrics, checkpoints;
  for (const char* pass : {"a", "b"}) {
    const fs::path root = scratch(std::string("determinism_") + pass);
    cmd_generate(cfg, root / "data");
    cmd_train(cfg, root / "data", root / "run");
    cmd_eval(root / "run", root / "data");
    metrics.push_back(slurp(root / "run" / "metrics_val.csv"));
    checkpoints.push_back(slurp(root / "run" / "checkpoint_best.bin"));
    fs::remove_all(root);
  }
  const bool same = !metrics[0].empty() && metrics[0] == metrics[1];
  return {same, fmt("metrics_val.csv %s (%zu bytes), checkpoints %s", same ? "byte-identical" : "DIFFER",
                    metrics[0].size(), checkpoints[0] == checkpoints[1] ? "byte-identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, yaw_codec},      {2, loss_continuity},  {3, gradients},     {4, sparse_dense},
      {5, rotated_iou},    {6, overfit},          {7, fusion_direction}, {8, late_vs_early},
      {9, ukf},            {10, metric_oracle},   {11, radar_capping}, {12, determinism},
  };
  std::set<int> selected;
  for (int k = 1; k < argc; ++k) selected.insert(std::stoi(argv[k]));

  int failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %s  %s (%.1f s)\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  fs::remove_all(fs::temp_directory_path() / "rvf_acceptance");
  return failed == 0 ? 0 : 1;
}
