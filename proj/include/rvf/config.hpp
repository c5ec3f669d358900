#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "rvf/scenegen.hpp"
#include "rvf/tracker.hpp"
#include "rvf/trainer.hpp"

namespace rvf {

inline constexpr const char* kToolVersion = "rvfnet 1.0.0";

struct DatasetConfig {
  int num_scenes = 10;
  double train_ratio = 0.8;
  double val_ratio = 0.2;
  std::vector<WeatherMode> train_weather{WeatherMode::clear};  // cycled over scenes
  std::vector<WeatherMode> val_weather{WeatherMode::clear};
  SceneGenConfig scenes;  // area is taken from the grid
};

struct RunConfig {
  std::uint64_t seed = 7;
  DatasetConfig dataset;
  SensorSpec sensors;
  WeatherSpec rain = WeatherSpec::preset(WeatherMode::rain);
  WeatherSpec night = WeatherSpec::preset(WeatherMode::night);
  TrainConfig train;  // grid and net live here
  UkfConfig tracker;
  std::vector<std::string> compare_variants{"lidar", "radar", "lidar,radar", "lidar,rgb,radar"};
  bool compare_late_fusion = true;

  WeatherSpec weather(WeatherMode m) const;
  SceneArea area() const;
  void validate() const;
};

/// Full key tree with every value filled in.
nlohmann::json to_json(const RunConfig& cfg);

/// Overlays `overrides` on the defaults. Unknown keys and type mismatches
/// throw ConfigError.
RunConfig config_from_json(const nlohmann::json& overrides);

RunConfig load_config(const std::string& path);

/// Sets one dotted key ("train.epochs") from its textual value, parsed as
/// JSON when possible and as a string otherwise.
void set_config_value(nlohmann::json& overrides, const std::string& dotted_key, const std::string& value);

/// FNV-1a 64 of the canonical serialization.
std::uint64_t hash_json(const nlohmann::json& j);
std::uint64_t config_hash(const RunConfig& cfg);
/// Hash over the keys that determine the generated data.
std::uint64_t dataset_hash(const RunConfig& cfg);

std::string hex64(std::uint64_t v);

}  // namespace rvf
