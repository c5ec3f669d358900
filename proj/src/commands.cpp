#include "rvf/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "rvf/errors.hpp"
#include "rvf/svg.hpp"

namespace rvf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string scene_name(int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04d", k);
  return buf;
}

std::string csv_header(const RunConfig& cfg) {
  return std::string("# ") + kToolVersion + " config " + hex64(config_hash(cfg)) + "\n";
}

void check_area(const Manifest& m, const RunConfig& cfg) {
  const SceneArea a = cfg.area();
  if (m.area.x_min != a.x_min || m.area.x_max != a.x_max || m.area.y_min != a.y_min || m.area.y_max != a.y_max) {
    throw ConfigError("dataset area does not match the configured grid extent");
  }
}

std::vector<Detection> as_detections(const std::vector<BBox3D>& boxes) {
  std::vector<Detection> out;
  for (const BBox3D& b : boxes) out.push_back({b, 1.0});
  return out;
}

std::string metric_row(const EvalResult& r) {
  std::string s;
  for (double ap : r.ap_per_threshold) s += format_metric(ap) + ",";
  s += format_metric(r.mean_ap) + "," + format_metric(r.aoe) + "," + std::to_string(r.aoe_count);
  return s;
}

std::size_t count_gts(std::span<const EvalFrame> frames) {
  std::size_t n = 0;
  for (const EvalFrame& f : frames) n += f.gts.size();
  return n;
}

const std::array<WeatherMode, 3> kWeathers{WeatherMode::clear, WeatherMode::rain, WeatherMode::night};

/// Mean AP per weather mode; NaN where a mode has no ground truth.
std::map<WeatherMode, double> ap_by_weather(const std::vector<std::pair<WeatherMode, std::vector<EvalFrame>>>& groups) {
  std::map<WeatherMode, double> out;
  for (WeatherMode w : kWeathers) {
    std::vector<EvalFrame> frames;
    for (const auto& [mode, fs_] : groups) {
      if (mode == w) frames.insert(frames.end(), fs_.begin(), fs_.end());
    }
    out[w] = count_gts(frames) > 0 ? average_precision(frames).mean_ap : std::nan("");
  }
  return out;
}

std::vector<EvalFrame> detector_frames(const RvfNet& net, const TrainConfig& cfg, const LoadedScene& scene) {
  const auto dets = detect_scene(net, cfg, scene);
  std::vector<EvalFrame> out;
  for (std::size_t k = 0; k < scene.frames.size(); ++k) out.push_back({dets[k], visible_boxes(scene.frames[k])});
  return out;
}

std::string variant_dir(std::size_t index, const std::string& variant) {
  std::string v = variant;
  for (char& c : v) {
    if (c == ',') c = '+';
  }
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02zu_", index);
  return std::string(buf) + v;
}

}  // namespace

std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

Manifest cmd_generate(const RunConfig& cfg, const fs::path& out_dir, bool force) {
  cfg.validate();
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!force) throw ConfigError("output directory " + out_dir.string() + " is not empty (use --force)");
    fs::remove(out_dir / "manifest.json");
    for (const auto& entry : fs::directory_iterator(out_dir)) {
      if (entry.is_directory() && entry.path().filename().string().rfind("scene_", 0) == 0) fs::remove_all(entry.path());
    }
  }
  fs::create_directories(out_dir);

  const int n = cfg.dataset.num_scenes;
  const int n_train = static_cast<int>(std::lround(n * cfg.dataset.train_ratio));
  SceneGenConfig sg = cfg.dataset.scenes;
  sg.area = cfg.area();

  Manifest m;
  m.tool_version = kToolVersion;
  m.config_hash = dataset_hash(cfg);
  m.area = cfg.area();
  for (int k = 0; k < n; ++k) {
    const bool is_train = k < n_train;
    const auto& modes = is_train ? cfg.dataset.train_weather : cfg.dataset.val_weather;
    const int local = is_train ? k : k - n_train;
    SceneRecord rec;
    rec.name = scene_name(k);
    rec.split = is_train ? "train" : "val";
    rec.seed = derive_seed(cfg.seed, 0xda7a, static_cast<std::uint64_t>(k));
    rec.weather = modes[static_cast<std::size_t>(local) % modes.size()];
    const SceneSpec spec = sample_scene(sg, cfg.sensors, rec.seed, rec.weather);
    const auto frames = render_scene(spec, cfg.sensors, cfg.weather(rec.weather), sg.area);
    rec.num_frames = static_cast<int>(frames.size());
    write_scene(out_dir / rec.name, rec, frames);
    m.scenes.push_back(rec);
  }
  write_manifest(out_dir, m);
  return m;
}

std::vector<LoadedScene> load_split(const fs::path& data_dir, const Manifest& m, const std::string& split) {
  if (split != "train" && split != "val" && split != "all") throw ConfigError("split must be train, val or all");
  std::vector<LoadedScene> out;
  for (const SceneRecord& r : m.scenes) {
    if (split != "all" && r.split != split) continue;
    out.push_back({r, read_scene(data_dir / r.name, r.num_frames)});
  }
  return out;
}

std::vector<Sample> make_samples(const LoadedScene& scene, const TrainConfig& cfg) {
  std::vector<Sample> out;
  for (std::size_t k = 0; k < scene.frames.size(); ++k) {
    Sample s;
    s.cloud = fuse_frame(scene.frames, static_cast<int>(k), cfg.sweeps, cfg.modality);
    s.gts = visible_boxes(scene.frames[k]);
    s.scene = scene.record.name;
    s.frame = static_cast<int>(k);
    s.timestamp = scene.frames[k].timestamp;
    s.weather = scene.record.weather;
    out.push_back(std::move(s));
  }
  return out;
}

TrainResult cmd_train(const RunConfig& cfg, const fs::path& data_dir, const fs::path& run_dir) {
  cfg.validate();
  const Manifest m = read_manifest(data_dir);
  check_area(m, cfg);
  std::vector<Sample> train_set, val_set;
  for (const LoadedScene& s : load_split(data_dir, m, "train")) {
    auto part = make_samples(s, cfg.train);
    train_set.insert(train_set.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  for (const LoadedScene& s : load_split(data_dir, m, "val")) {
    auto part = make_samples(s, cfg.train);
    val_set.insert(val_set.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  if (train_set.empty()) throw DataError("dataset has no training scenes");

  fs::create_directories(run_dir);
  write_text_file(run_dir / "config.json", to_json(cfg).dump(1) + "\n");
  TrainResult result;
  try {
    result = train(train_set, val_set, cfg.train);
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }

  std::ostringstream csv;
  csv << csv_header(cfg) << "epoch,loss,cls,reg,dir,val_ap\n";
  PlotSeries loss{"train loss", {}, {}}, ap{"val mean AP", {}, {}};
  for (const EpochRecord& e : result.curve) {
    csv << e.epoch << "," << format_metric(e.loss) << "," << format_metric(e.cls) << "," << format_metric(e.reg) << ","
        << format_metric(e.dir) << "," << format_metric(e.val_ap) << "\n";
    loss.x.push_back(e.epoch);
    loss.y.push_back(e.loss);
    ap.x.push_back(e.epoch);
    ap.y.push_back(e.val_ap);
  }
  write_text_file(run_dir / "epochs.csv", csv.str());
  const std::vector<PlotSeries> series{loss, ap};
  write_text_file(run_dir / "loss.svg", line_plot_svg("Training curves", "epoch", "value", series));
  const std::uint64_t h = config_hash(cfg);
  save_checkpoint(run_dir / "checkpoint_best.bin", result.best, h);
  save_checkpoint(run_dir / "checkpoint_last.bin", result.last, h);
  json run = {{"tool_version", kToolVersion},
              {"config_hash", hex64(h)},
              {"dataset_hash", hex64(m.config_hash)},
              {"seed", cfg.seed},
              {"epochs_run", result.curve.size()},
              {"best_epoch", result.best_epoch},
              {"best_val_ap", std::isnan(result.best_ap) ? json(nullptr) : json(result.best_ap)},
              {"early_stopped", result.early_stopped},
              {"train_frames", train_set.size()},
              {"val_frames", val_set.size()}};
  write_text_file(run_dir / "run.json", run.dump(1) + "\n");
  return result;
}

LoadedRun load_run(const fs::path& run_dir) {
  if (!fs::exists(run_dir / "config.json")) throw DataError("no config.json in run directory " + run_dir.string());
  if (!fs::exists(run_dir / "checkpoint_best.bin")) throw DataError("missing checkpoint in " + run_dir.string());
  RunConfig cfg = load_config((run_dir / "config.json").string());
  Checkpoint ck;
  try {
    ck = load_checkpoint(run_dir / "checkpoint_best.bin");
  } catch (const std::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  if (ck.config_hash != config_hash(cfg)) throw DataError("checkpoint was written for a different configuration");
  try {
    return {cfg, RvfNet(cfg.train.net, cfg.train.grid, std::move(ck.params))};
  } catch (const std::exception& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
}

std::vector<std::vector<Detection>> detect_scene(const RvfNet& net, const TrainConfig& cfg, const LoadedScene& scene) {
  std::vector<std::vector<Detection>> out;
  for (std::size_t k = 0; k < scene.frames.size(); ++k) {
    out.push_back(infer(net, fuse_frame(scene.frames, static_cast<int>(k), cfg.sweeps, cfg.modality), cfg));
  }
  return out;
}

EvalResult cmd_eval(const fs::path& run_dir, const fs::path& data_dir, const EvalOptions& opts) {
  if (opts.oracle && opts.empty) throw ConfigError("--oracle and --empty are exclusive");
  const LoadedRun run = load_run(run_dir);
  const Manifest m = read_manifest(data_dir);
  check_area(m, run.cfg);
  const auto scenes = load_split(data_dir, m, opts.split);

  std::vector<std::pair<WeatherMode, std::vector<EvalFrame>>> groups;
  std::vector<EvalFrame> all;
  for (const LoadedScene& s : scenes) {
    std::vector<EvalFrame> frames;
    if (opts.oracle || opts.empty) {
      for (const Frame& f : s.frames) {
        const auto gts = visible_boxes(f);
        frames.push_back({opts.oracle ? as_detections(gts) : std::vector<Detection>{}, gts});
      }
    } else {
      frames = detector_frames(run.net, run.cfg.train, s);
    }
    all.insert(all.end(), frames.begin(), frames.end());
    groups.emplace_back(s.record.weather, std::move(frames));
  }
  if (count_gts(all) == 0) throw DataError("split " + opts.split + " has no ground truth");
  const EvalResult overall = evaluate(all);

  std::ostringstream csv;
  csv << csv_header(run.cfg) << "split,weather,frames,gts,ap_0.5,ap_1.0,ap_2.0,ap_4.0,mean_ap,aoe,aoe_count\n";
  csv << opts.split << ",all," << all.size() << "," << count_gts(all) << "," << metric_row(overall) << "\n";
  for (WeatherMode w : kWeathers) {
    std::vector<EvalFrame> frames;
    for (const auto& [mode, f] : groups) {
      if (mode == w) frames.insert(frames.end(), f.begin(), f.end());
    }
    if (count_gts(frames) == 0) continue;
    csv << opts.split << "," << to_string(w) << "," << frames.size() << "," << count_gts(frames) << ","
        << metric_row(evaluate(frames)) << "\n";
  }
  std::string suffix = opts.split;
  if (opts.oracle) suffix += "_oracle";
  if (opts.empty) suffix += "_empty";
  write_text_file(run_dir / ("metrics_" + suffix + ".csv"), csv.str());

  std::vector<PlotSeries> series;
  for (const PrCurve& c : overall.pr_curves) {
    PlotSeries s;
    char label[32];
    std::snprintf(label, sizeof label, "%.1f m", c.threshold);
    s.label = label;
    for (int k = 0; k < kRecallSamples; ++k) {
      s.x.push_back(k / static_cast<double>(kRecallSamples - 1));
      s.y.push_back(c.interpolated[k]);
    }
    series.push_back(std::move(s));
  }
  write_text_file(run_dir / ("pr_" + suffix + ".svg"),
                  line_plot_svg("Interpolated precision / recall (" + suffix + ")", "recall", "precision", series,
                                0.0, 1.0, 0.0, 1.0));
  return overall;
}

std::vector<EvalFrame> track_scene(const LoadedScene& scene, std::span<const DetectionStream> streams,
                                   const UkfConfig& ukf, std::vector<std::vector<TrackedBox>>* tracks) {
  std::vector<double> timestamps;
  for (const Frame& f : scene.frames) timestamps.push_back(f.timestamp);
  std::vector<std::vector<TrackedBox>> tracked;
  try {
    tracked = run_late_fusion(timestamps, streams, ukf);
  } catch (const std::invalid_argument& e) {
    throw DataError("scene " + scene.record.name + ": " + e.what());
  }
  std::vector<EvalFrame> out;
  for (std::size_t k = 0; k < scene.frames.size(); ++k) {
    EvalFrame f;
    for (const TrackedBox& t : tracked[k]) f.dets.push_back({t.box, t.score});
    f.gts = visible_boxes(scene.frames[k]);
    out.push_back(std::move(f));
  }
  if (tracks) *tracks = std::move(tracked);
  return out;
}

std::vector<TrackedRow> cmd_track(const RunConfig& cfg, const fs::path& data_dir, const TrackOptions& opts,
                                  const fs::path& out_dir) {
  cfg.validate();
  const Manifest m = read_manifest(data_dir);
  const auto scenes = load_split(data_dir, m, opts.split);
  std::optional<LoadedRun> lidar, radar, early;
  if (opts.lidar_run) lidar = load_run(*opts.lidar_run);
  if (opts.radar_run) radar = load_run(*opts.radar_run);
  if (opts.early_run) early = load_run(*opts.early_run);
  if (!lidar && !radar && !early && !opts.oracle) throw ConfigError("track: no detector runs given");
  if (radar && !lidar) throw ConfigError("track: late fusion needs a lidar run next to the radar run");

  const MeasMatrix r_lidar = lidar_measurement_noise(cfg.tracker);
  const MeasMatrix r_radar = radar_measurement_noise(cfg.tracker);
  struct Plan {
    std::string name;
    std::vector<std::pair<const LoadedRun*, MeasMatrix>> streams;
    bool oracle = false;
  };
  std::vector<Plan> plans;
  if (lidar) plans.push_back({"tracked_lidar", {{&*lidar, r_lidar}}, false});
  if (lidar && radar) plans.push_back({"tracked_late_fusion", {{&*lidar, r_lidar}, {&*radar, r_radar}}, false});
  if (early) plans.push_back({"tracked_early_fusion", {{&*early, r_lidar}}, false});
  if (opts.oracle) plans.push_back({"tracked_oracle", {}, true});

  // Detections are computed once per run and scene.
  std::map<std::pair<const LoadedRun*, std::size_t>, std::vector<std::vector<Detection>>> cache;
  auto dets_for = [&](const LoadedRun* run, std::size_t s) -> const std::vector<std::vector<Detection>>& {
    auto key = std::make_pair(run, s);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, detect_scene(run->net, run->cfg.train, scenes[s])).first;
    return it->second;
  };

  fs::create_directories(out_dir);
  std::ostringstream boxes;
  boxes << csv_header(cfg) << "row,scene,frame,track,x,y,z,w,l,h,yaw,score\n";
  std::vector<TrackedRow> rows;
  for (const Plan& plan : plans) {
    std::vector<EvalFrame> all;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
      std::vector<DetectionStream> streams;
      if (plan.oracle) {
        DetectionStream st{"oracle", r_lidar, {}};
        for (const Frame& f : scenes[s].frames) st.steps.push_back(as_detections(visible_boxes(f)));
        streams.push_back(std::move(st));
      }
      for (const auto& [run, noise] : plan.streams) streams.push_back({run->cfg.train.modality.str(), noise, dets_for(run, s)});
      std::vector<std::vector<TrackedBox>> tracks;
      auto frames = track_scene(scenes[s], streams, cfg.tracker, &tracks);
      for (std::size_t k = 0; k < tracks.size(); ++k) {
        for (const TrackedBox& t : tracks[k]) {
          boxes << plan.name << "," << scenes[s].record.name << "," << k << "," << t.id << ","
                << format_metric(t.box.x) << "," << format_metric(t.box.y) << "," << format_metric(t.box.z) << ","
                << format_metric(t.box.w) << "," << format_metric(t.box.l) << "," << format_metric(t.box.h) << ","
                << format_metric(t.box.yaw) << "," << format_metric(t.score) << "\n";
        }
      }
      all.insert(all.end(), frames.begin(), frames.end());
    }
    if (count_gts(all) == 0) throw DataError("split " + opts.split + " has no ground truth");
    rows.push_back({plan.name, evaluate(all)});
  }

  std::ostringstream csv;
  csv << csv_header(cfg) << "row,ap_0.5,ap_1.0,ap_2.0,ap_4.0,mean_ap,aoe,aoe_count\n";
  for (const TrackedRow& r : rows) csv << r.name << "," << metric_row(r.result) << "\n";
  write_text_file(out_dir / "tracked.csv", csv.str());
  write_text_file(out_dir / "tracked_boxes.csv", boxes.str());
  return rows;
}

void cmd_compare(const RunConfig& cfg, const fs::path& data_dir, const fs::path& out_dir) {
  cfg.validate();
  const Manifest m = read_manifest(data_dir);
  check_area(m, cfg);
  const auto val = load_split(data_dir, m, "val");
  fs::create_directories(out_dir);

  std::ostringstream csv;
  csv << csv_header(cfg) << "variant,clear,rain,night\n";
  auto emit = [&](const std::string& name, const std::map<WeatherMode, double>& ap) {
    csv << '"' << name << '"';
    for (WeatherMode w : kWeathers) csv << "," << format_metric(ap.at(w));
    csv << "\n";
  };

  std::map<std::string, fs::path> trained;
  auto train_variant = [&](const std::string& variant, const fs::path& dir) {
    RunConfig v = cfg;
    v.train.modality = Modality::parse(variant);
    cmd_train(v, data_dir, dir);
    trained.emplace(Modality::parse(variant).str(), dir);
    return load_run(dir);
  };
  auto detector_ap = [&](const LoadedRun& run) {
    std::vector<std::pair<WeatherMode, std::vector<EvalFrame>>> groups;
    for (const LoadedScene& s : val) groups.emplace_back(s.record.weather, detector_frames(run.net, run.cfg.train, s));
    return ap_by_weather(groups);
  };

  std::optional<fs::path> early_dir;
  for (std::size_t k = 0; k < cfg.compare_variants.size(); ++k) {
    const std::string& variant = cfg.compare_variants[k];
    const fs::path dir = out_dir / variant_dir(k, variant);
    const LoadedRun run = train_variant(variant, dir);
    emit(variant, detector_ap(run));
    if (run.cfg.train.modality.lidar && run.cfg.train.modality.radar) early_dir = dir;
  }

  if (cfg.compare_late_fusion) {
    auto ensure = [&](const std::string& variant) {
      const std::string key = Modality::parse(variant).str();
      if (!trained.count(key)) train_variant(variant, out_dir / ("late_" + key));
      return load_run(trained.at(key));
    };
    const LoadedRun lidar = ensure("lidar");
    const LoadedRun radar = ensure("radar");
    const MeasMatrix r_lidar = lidar_measurement_noise(cfg.tracker);
    const MeasMatrix r_radar = radar_measurement_noise(cfg.tracker);
    std::vector<std::pair<WeatherMode, std::vector<EvalFrame>>> late, early;
    std::optional<LoadedRun> early_run;
    if (early_dir) early_run = load_run(*early_dir);
    for (const LoadedScene& s : val) {
      std::vector<DetectionStream> streams{{"lidar", r_lidar, detect_scene(lidar.net, lidar.cfg.train, s)},
                                           {"radar", r_radar, detect_scene(radar.net, radar.cfg.train, s)}};
      late.emplace_back(s.record.weather, track_scene(s, streams, cfg.tracker));
      if (early_run) {
        std::vector<DetectionStream> one{{"early", r_lidar, detect_scene(early_run->net, early_run->cfg.train, s)}};
        early.emplace_back(s.record.weather, track_scene(s, one, cfg.tracker));
      }
    }
    emit("tracked late fusion", ap_by_weather(late));
    if (early_run) emit("tracked early fusion", ap_by_weather(early));
  }
  write_text_file(out_dir / "compare.csv", csv.str());
}

}  // namespace rvf
