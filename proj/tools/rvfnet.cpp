// rvfnet: dataset generation, training, evaluation, ablation comparison and
// tracking from the command line.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.

#include <cstdlib>
#include <fstream>
#include <optional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rvf/commands.hpp"
#include "rvf/errors.hpp"

namespace {

struct ConfigFlags {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::optional<int> num_scenes;
  std::optional<int> sweeps;
  std::optional<double> learning_rate;
  std::string modality;
  std::string yaw_loss;
  std::string weather;
};

void add_config_flags(CLI::App* app, ConfigFlags& f) {
  app->add_option("--config", f.config_path, "JSON run configuration");
  app->add_option("--set", f.sets, "Override any config key: --set train.epochs=20")->type_name("KEY=VALUE");
  app->add_option("--seed", f.seed, "seed");
  app->add_option("--epochs", f.epochs, "train.epochs");
  app->add_option("--num-scenes", f.num_scenes, "dataset.num_scenes");
  app->add_option("--sweeps", f.sweeps, "train.sweeps");
  app->add_option("--learning-rate", f.learning_rate, "train.learning_rate");
  app->add_option("--modality", f.modality, "train.modality, e.g. lidar,rgb,radar");
  app->add_option("--yaw-loss", f.yaw_loss, "train.yaw_loss: sine_bin or simple");
  app->add_option("--weather", f.weather, "Weather of every scene: clear, rain or night");
}

rvf::RunConfig resolve_config(const ConfigFlags& f) {
  nlohmann::json overrides = nlohmann::json::object();
  if (!f.config_path.empty()) {
    std::ifstream is(f.config_path);
    if (!is) throw rvf::ConfigError("cannot read config file " + f.config_path);
    try {
      overrides = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw rvf::ConfigError("malformed config " + f.config_path + ": " + e.what());
    }
  }
  for (const std::string& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw rvf::ConfigError("--set expects KEY=VALUE, got " + s);
    rvf::set_config_value(overrides, s.substr(0, eq), s.substr(eq + 1));
  }
  if (f.seed) overrides["seed"] = *f.seed;
  if (f.epochs) overrides["train"]["epochs"] = *f.epochs;
  if (f.num_scenes) overrides["dataset"]["num_scenes"] = *f.num_scenes;
  if (f.sweeps) overrides["train"]["sweeps"] = *f.sweeps;
  if (f.learning_rate) overrides["train"]["learning_rate"] = *f.learning_rate;
  if (!f.modality.empty()) overrides["train"]["modality"] = f.modality;
  if (!f.yaw_loss.empty()) overrides["train"]["yaw_loss"] = f.yaw_loss;
  if (!f.weather.empty()) {
    overrides["dataset"]["train_weather"] = nlohmann::json::array({f.weather});
    overrides["dataset"]["val_weather"] = nlohmann::json::array({f.weather});
  }
  return rvf::config_from_json(overrides);
}

std::string default_data_root() {
  const char* env = std::getenv("RVF_DATA_ROOT");
  return env && *env ? env : "data";
}

void print_metrics(const std::string& label, const rvf::EvalResult& r) {
  std::cout << label << ": mean AP " << rvf::format_metric(r.mean_ap) << " (";
  for (std::size_t k = 0; k < rvf::kDistanceThresholds.size(); ++k) {
    std::cout << (k ? ", " : "") << rvf::kDistanceThresholds[k] << " m " << rvf::format_metric(r.ap_per_threshold[k]);
  }
  std::cout << "), AOE " << rvf::format_metric(r.aoe) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radar/lidar/camera early-fusion detector toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", rvf::kToolVersion);

  ConfigFlags gen_flags, train_flags, compare_flags, track_flags, show_flags;
  std::string gen_out = default_data_root();
  bool force = false;
  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset");
  add_config_flags(gen, gen_flags);
  gen->add_option("--out", gen_out, "Dataset directory (default $RVF_DATA_ROOT or ./data)");
  gen->add_flag("--force", force, "Replace an existing dataset");

  std::string train_data = default_data_root(), train_run = "runs/default";
  auto* tr = app.add_subcommand("train", "Train a detector");
  add_config_flags(tr, train_flags);
  tr->add_option("--data", train_data, "Dataset directory");
  tr->add_option("--run", train_run, "Run directory");

  std::string eval_run = "runs/default", eval_data = default_data_root();
  rvf::EvalOptions eval_opts;
  auto* ev = app.add_subcommand("eval", "Evaluate a trained run");
  ev->add_option("--run", eval_run, "Run directory");
  ev->add_option("--data", eval_data, "Dataset directory");
  ev->add_option("--split", eval_opts.split, "train, val or all")->check(CLI::IsMember({"train", "val", "all"}));
  ev->add_flag("--oracle", eval_opts.oracle, "Feed ground truth back as detections");
  ev->add_flag("--empty", eval_opts.empty, "Detector that never fires");

  std::string compare_data = default_data_root(), compare_out = "runs/compare";
  auto* cmp = app.add_subcommand("compare", "Train and evaluate every modality variant");
  add_config_flags(cmp, compare_flags);
  cmp->add_option("--data", compare_data, "Dataset directory");
  cmp->add_option("--out", compare_out, "Output directory");

  std::string track_data = default_data_root(), track_out = "runs/track";
  std::string lidar_run, radar_run, early_run;
  rvf::TrackOptions track_opts;
  auto* trk = app.add_subcommand("track", "Track detector outputs and report tracked AP");
  add_config_flags(trk, track_flags);
  trk->add_option("--data", track_data, "Dataset directory");
  trk->add_option("--lidar-run", lidar_run, "Lidar-only run directory");
  trk->add_option("--radar-run", radar_run, "Radar-only run directory");
  trk->add_option("--early-run", early_run, "Early-fusion run directory");
  trk->add_flag("--oracle", track_opts.oracle, "Also track ground-truth detections");
  trk->add_option("--split", track_opts.split, "train, val or all")->check(CLI::IsMember({"train", "val", "all"}));
  trk->add_option("--out", track_out, "Output directory");

  auto* show = app.add_subcommand("print-config", "Print the resolved configuration");
  add_config_flags(show, show_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      const rvf::Manifest m = rvf::cmd_generate(resolve_config(gen_flags), gen_out, force);
      std::cout << "wrote " << gen_out << ": " << m.count("train") << " train scenes (" << m.frame_count("train")
                << " frames), " << m.count("val") << " val scenes (" << m.frame_count("val") << " frames)\n";
    } else if (tr->parsed()) {
      const rvf::TrainResult r = rvf::cmd_train(resolve_config(train_flags), train_data, train_run);
      std::cout << "trained " << r.curve.size() << " epochs, best epoch " << r.best_epoch << ", best val AP "
                << rvf::format_metric(r.best_ap) << (r.early_stopped ? " (early stop)" : "") << "\n";
    } else if (ev->parsed()) {
      print_metrics(eval_opts.split, rvf::cmd_eval(eval_run, eval_data, eval_opts));
    } else if (cmp->parsed()) {
      rvf::cmd_compare(resolve_config(compare_flags), compare_data, compare_out);
      std::cout << "wrote " << (std::filesystem::path(compare_out) / "compare.csv").string() << "\n";
    } else if (trk->parsed()) {
      if (!lidar_run.empty()) track_opts.lidar_run = lidar_run;
      if (!radar_run.empty()) track_opts.radar_run = radar_run;
      if (!early_run.empty()) track_opts.early_run = early_run;
      for (const auto& row : rvf::cmd_track(resolve_config(track_flags), track_data, track_opts, track_out)) {
        print_metrics(row.name, row.result);
      }
    } else if (show->parsed()) {
      std::cout << rvf::to_json(resolve_config(show_flags)).dump(2) << "\n";
    }
  } catch (const rvf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const rvf::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const rvf::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
