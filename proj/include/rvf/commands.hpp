#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rvf/config.hpp"
#include "rvf/dataset.hpp"
#include "rvf/metrics.hpp"
#include "rvf/net.hpp"
#include "rvf/tracker.hpp"

namespace rvf {

/// Generates the dataset and its manifest. Throws ConfigError if `out_dir`
/// exists and is not empty unless `force` is set.
Manifest cmd_generate(const RunConfig& cfg, const std::filesystem::path& out_dir, bool force = false);

/// Trains on the train split, validates on the val split and writes
/// config.json, run.json, epochs.csv, loss.svg and the checkpoints.
TrainResult cmd_train(const RunConfig& cfg, const std::filesystem::path& data_dir,
                      const std::filesystem::path& run_dir);

struct EvalOptions {
  std::string split = "val";  // train, val or all
  bool oracle = false;        // ground truth fed back as detections
  bool empty = false;         // detector that never fires
};

/// Writes metrics_<split>.csv and pr_<split>.svg into the run directory and
/// returns the overall result.
EvalResult cmd_eval(const std::filesystem::path& run_dir, const std::filesystem::path& data_dir,
                    const EvalOptions& opts = {});

/// Trains and evaluates every modality variant on the shared dataset and
/// writes compare.csv (rows: variants, columns: clear/rain/night mean AP).
void cmd_compare(const RunConfig& cfg, const std::filesystem::path& data_dir, const std::filesystem::path& out_dir);

struct TrackOptions {
  std::optional<std::filesystem::path> lidar_run;
  std::optional<std::filesystem::path> radar_run;
  std::optional<std::filesystem::path> early_run;
  bool oracle = false;
  std::string split = "val";
};

struct TrackedRow {
  std::string name;
  EvalResult result;
};

/// Tracks the given detector streams over the split's scenes and writes
/// tracked.csv plus tracked_boxes.csv into `out_dir`.
std::vector<TrackedRow> cmd_track(const RunConfig& cfg, const std::filesystem::path& data_dir, const TrackOptions& opts,
                                  const std::filesystem::path& out_dir);

// ---- helpers shared with the tests ------------------------------------------

struct LoadedScene {
  SceneRecord record;
  std::vector<Frame> frames;
};

std::vector<LoadedScene> load_split(const std::filesystem::path& data_dir, const Manifest& m, const std::string& split);

std::vector<Sample> make_samples(const LoadedScene& scene, const TrainConfig& cfg);

struct LoadedRun {
  RunConfig cfg;
  RvfNet net;
};

/// Reads config.json and checkpoint_best.bin; DataError if missing or if the
/// checkpoint was written for another configuration.
LoadedRun load_run(const std::filesystem::path& run_dir);

/// Detections per frame of one scene.
std::vector<std::vector<Detection>> detect_scene(const RvfNet& net, const TrainConfig& cfg, const LoadedScene& scene);

/// Tracks the streams through a scene and pairs the confirmed boxes with the
/// frame's visible ground truth.
std::vector<EvalFrame> track_scene(const LoadedScene& scene, std::span<const DetectionStream> streams,
                                   const UkfConfig& ukf, std::vector<std::vector<TrackedBox>>* tracks = nullptr);

std::string format_metric(double v);

}  // namespace rvf
