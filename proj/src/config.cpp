#include "rvf/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "rvf/errors.hpp"

namespace rvf {

using nlohmann::json;

namespace {

json weather_list(const std::vector<WeatherMode>& v) {
  json a = json::array();
  for (WeatherMode m : v) a.push_back(to_string(m));
  return a;
}

std::vector<WeatherMode> weather_list_from(const json& j) {
  std::vector<WeatherMode> out;
  for (const json& e : j) out.push_back(weather_from_string(e.get<std::string>()));
  return out;
}

template <int N>
json vec_json(const Eigen::Matrix<double, N, 1>& v) {
  json a = json::array();
  for (int k = 0; k < N; ++k) a.push_back(v(k));
  return a;
}

template <int N>
Eigen::Matrix<double, N, 1> vec_from(const json& j, const char* key) {
  if (!j.is_array() || static_cast<int>(j.size()) != N) {
    throw ConfigError(std::string(key) + " must hold " + std::to_string(N) + " numbers");
  }
  Eigen::Matrix<double, N, 1> v;
  for (int k = 0; k < N; ++k) v(k) = j[k].get<double>();
  return v;
}

json weather_json(const WeatherSpec& w) {
  return {{"lidar_dropout_add", w.lidar_dropout_add},
          {"lidar_noise_mult", w.lidar_noise_mult},
          {"camera_gain", w.camera_gain},
          {"camera_noise_add", w.camera_noise_add}};
}

WeatherSpec weather_spec_from(const json& j, WeatherMode mode) {
  WeatherSpec w;
  w.mode = mode;
  w.lidar_dropout_add = j.at("lidar_dropout_add").get<double>();
  w.lidar_noise_mult = j.at("lidar_noise_mult").get<double>();
  w.camera_gain = j.at("camera_gain").get<double>();
  w.camera_noise_add = j.at("camera_noise_add").get<double>();
  return w;
}

std::string yaw_mode_str(YawMode m) { return m == YawMode::simple ? "simple" : "sine_bin"; }

YawMode yaw_mode_from(const std::string& s) {
  if (s == "sine_bin") return YawMode::sine_bin;
  if (s == "simple") return YawMode::simple;
  throw ConfigError("train.yaw_loss must be sine_bin or simple, got " + s);
}

bool same_kind(const json& base, const json& v) {
  if (base.is_number()) {
    if (!v.is_number()) return false;
    if (base.is_number_integer() && v.is_number_float()) return std::floor(v.get<double>()) == v.get<double>();
    return true;
  }
  return base.type() == v.type();
}

void overlay(json& base, const json& over, const std::string& path) {
  if (!over.is_object()) throw ConfigError("config section " + (path.empty() ? "<root>" : path) + " must be an object");
  for (auto it = over.begin(); it != over.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key: " + key);
    json& slot = base[it.key()];
    if (slot.is_object()) {
      overlay(slot, it.value(), key);
    } else if (!same_kind(slot, it.value())) {
      throw ConfigError("config key " + key + " has the wrong type");
    } else if (slot.is_number_integer() && it.value().is_number_float()) {
      slot = static_cast<std::int64_t>(it.value().get<double>());
    } else {
      slot = it.value();
    }
  }
}

RunConfig parse_full(const json& j) {
  RunConfig c;
  c.seed = j.at("seed").get<std::uint64_t>();

  const json& d = j.at("dataset");
  c.dataset.num_scenes = d.at("num_scenes").get<int>();
  c.dataset.train_ratio = d.at("split").at(0).get<double>();
  c.dataset.val_ratio = d.at("split").at(1).get<double>();
  if (d.at("split").size() != 2) throw ConfigError("dataset.split must hold [train, val]");
  c.dataset.train_weather = weather_list_from(d.at("train_weather"));
  c.dataset.val_weather = weather_list_from(d.at("val_weather"));
  SceneGenConfig& sg = c.dataset.scenes;
  sg.duration = d.at("duration").get<double>();
  sg.frame_rate = d.at("frame_rate").get<double>();
  sg.min_actors = d.at("min_actors").get<int>();
  sg.max_actors = d.at("max_actors").get<int>();
  sg.max_actor_speed = d.at("max_actor_speed").get<double>();
  sg.static_fraction = d.at("static_fraction").get<double>();
  sg.max_ego_speed = d.at("max_ego_speed").get<double>();
  sg.max_ego_yaw_rate = d.at("max_ego_yaw_rate").get<double>();
  sg.degraded_fraction = d.at("degraded_fraction").get<double>();
  sg.degraded_visibility = d.at("degraded_visibility").get<double>();

  const json& s = j.at("sensors");
  const json& l = s.at("lidar");
  c.sensors.lidar.beams = l.at("beams").get<int>();
  c.sensors.lidar.elevation_min = l.at("elevation_min").get<double>();
  c.sensors.lidar.elevation_max = l.at("elevation_max").get<double>();
  c.sensors.lidar.azimuth_resolution = l.at("azimuth_resolution").get<double>();
  c.sensors.lidar.azimuth_fov = l.at("azimuth_fov").get<double>();
  c.sensors.lidar.max_range = l.at("max_range").get<double>();
  c.sensors.lidar.range_noise = l.at("range_noise").get<double>();
  c.sensors.lidar.dropout = l.at("dropout").get<double>();
  const json& r = s.at("radar");
  c.sensors.radar.lambda = r.at("lambda").get<double>();
  c.sensors.radar.position_noise = r.at("position_noise").get<double>();
  c.sensors.radar.clutter_rate = r.at("clutter_rate").get<double>();
  c.sensors.radar.rcs_mean = r.at("rcs_mean").get<double>();
  c.sensors.radar.rcs_sigma = r.at("rcs_sigma").get<double>();
  c.sensors.radar.velocity_noise = r.at("velocity_noise").get<double>();
  c.sensors.radar.max_range = r.at("max_range").get<double>();
  c.sensors.radar.azimuth_fov = r.at("azimuth_fov").get<double>();
  const json& cam = s.at("camera");
  c.sensors.camera.width = cam.at("width").get<int>();
  c.sensors.camera.height = cam.at("height").get<int>();
  c.sensors.camera.intrinsics = {cam.at("fx").get<double>(), cam.at("fy").get<double>(), cam.at("cx").get<double>(),
                                 cam.at("cy").get<double>()};
  c.sensors.camera.pixel_noise = cam.at("pixel_noise").get<double>();
  c.sensors.camera.background = cam.at("background").get<double>();
  c.sensors.camera.color_ambiguity = cam.at("color_ambiguity").get<bool>();
  c.sensors.ground_z = s.at("ground_z").get<double>();

  c.rain = weather_spec_from(j.at("weather").at("rain"), WeatherMode::rain);
  c.night = weather_spec_from(j.at("weather").at("night"), WeatherMode::night);

  GridConfig& g = c.train.grid;
  const json& gj = j.at("grid");
  g.x_min = gj.at("x_min").get<double>();
  g.x_max = gj.at("x_max").get<double>();
  g.y_min = gj.at("y_min").get<double>();
  g.y_max = gj.at("y_max").get<double>();
  g.z_min = gj.at("z_min").get<double>();
  g.z_max = gj.at("z_max").get<double>();
  g.voxel_xy = gj.at("voxel_xy").get<double>();
  g.voxel_z = gj.at("voxel_z").get<double>();
  g.max_points = gj.at("max_points").get<int>();
  const std::string offsets = gj.at("offsets").get<std::string>();
  if (offsets == "center") {
    g.offsets = OffsetMode::center;
  } else if (offsets == "centroid") {
    g.offsets = OffsetMode::centroid;
  } else {
    throw ConfigError("grid.offsets must be center or centroid");
  }

  NetConfig& n = c.train.net;
  const json& nj = j.at("net");
  n.vfe_units = nj.at("vfe_units").get<std::vector<int>>();
  n.sparse_channels = nj.at("sparse_channels").get<std::vector<int>>();
  n.trunk_channels = nj.at("trunk_channels").get<std::vector<int>>();
  n.trunk_strides = nj.at("trunk_strides").get<std::vector<int>>();
  n.cls_prior = nj.at("cls_prior").get<double>();

  TrainConfig& t = c.train;
  const json& tj = j.at("train");
  t.seed = c.seed;
  t.epochs = tj.at("epochs").get<int>();
  t.learning_rate = tj.at("learning_rate").get<double>();
  t.beta1 = tj.at("beta1").get<double>();
  t.beta2 = tj.at("beta2").get<double>();
  t.epsilon = tj.at("epsilon").get<double>();
  t.score_threshold = tj.at("score_threshold").get<double>();
  t.nms_iou = tj.at("nms_iou").get<double>();
  t.sweeps = tj.at("sweeps").get<int>();
  t.patience = tj.at("patience").get<int>();
  t.eval_every = tj.at("eval_every").get<int>();
  t.modality = Modality::parse(tj.at("modality").get<std::string>());
  t.yaw_mode = yaw_mode_from(tj.at("yaw_loss").get<std::string>());
  const json& aj = tj.at("augment");
  t.augment.enabled = aj.at("enabled").get<bool>();
  t.augment.max_rotation = aj.at("max_rotation").get<double>();
  t.augment.translation_sigma = aj.at("translation_sigma").get<double>();
  t.augment.scale_min = aj.at("scale_min").get<double>();
  t.augment.scale_max = aj.at("scale_max").get<double>();
  const json& lj = tj.at("loss");
  t.loss = {lj.at("cls").get<double>(), lj.at("reg").get<double>(), lj.at("dir").get<double>()};
  const json& mj = tj.at("match");
  t.match.iou_pos = mj.at("iou_pos").get<double>();
  t.match.iou_neg = mj.at("iou_neg").get<double>();
  t.match.dist_pos = mj.at("dist_pos").get<double>();
  t.match.use_distance = mj.at("use_distance").get<bool>();
  t.match.force_best_anchor = mj.at("force_best_anchor").get<bool>();
  const json& anj = tj.at("anchor");
  t.anchors = {anj.at("w").get<double>(), anj.at("l").get<double>(), anj.at("h").get<double>(),
               anj.at("z").get<double>()};

  UkfConfig& u = c.tracker;
  const json& uj = j.at("tracker");
  u.alpha = uj.at("alpha").get<double>();
  u.beta = uj.at("beta").get<double>();
  u.kappa = uj.at("kappa").get<double>();
  u.process_noise = vec_from<kStateDim>(uj.at("process_noise"), "tracker.process_noise");
  u.lidar_noise = vec_from<kMeasDim>(uj.at("lidar_noise"), "tracker.lidar_noise");
  u.radar_noise_scale = uj.at("radar_noise_scale").get<double>();
  u.initial_variance = vec_from<kStateDim>(uj.at("initial_variance"), "tracker.initial_variance");
  u.gate = uj.at("gate").get<double>();
  u.birth_hits = uj.at("birth_hits").get<int>();
  u.death_misses = uj.at("death_misses").get<int>();
  u.report_coasting = uj.at("report_coasting").get<bool>();

  c.compare_variants = j.at("compare").at("variants").get<std::vector<std::string>>();
  c.compare_late_fusion = j.at("compare").at("late_fusion").get<bool>();
  return c;
}

}  // namespace

WeatherSpec RunConfig::weather(WeatherMode m) const {
  if (m == WeatherMode::rain) return rain;
  if (m == WeatherMode::night) return night;
  return WeatherSpec::preset(WeatherMode::clear);
}

SceneArea RunConfig::area() const {
  return {train.grid.x_min, train.grid.x_max, train.grid.y_min, train.grid.y_max};
}

void RunConfig::validate() const {
  try {
    if (dataset.num_scenes < 1) throw std::invalid_argument("dataset.num_scenes must be positive");
    if (!(dataset.train_ratio >= 0.0 && dataset.val_ratio >= 0.0) ||
        std::abs(dataset.train_ratio + dataset.val_ratio - 1.0) > 1e-9) {
      throw std::invalid_argument("dataset.split ratios must be nonnegative and sum to 1");
    }
    if (dataset.train_weather.empty() || dataset.val_weather.empty()) {
      throw std::invalid_argument("dataset weather lists must not be empty");
    }
    SceneGenConfig sg = dataset.scenes;
    sg.area = area();
    sg.validate();
    sensors.validate();
    rain.validate();
    night.validate();
    train.validate();
    tracker.validate();
    for (const std::string& v : compare_variants) Modality::parse(v);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  const SceneGenConfig& sg = c.dataset.scenes;
  j["dataset"] = {{"num_scenes", c.dataset.num_scenes},
                  {"split", {c.dataset.train_ratio, c.dataset.val_ratio}},
                  {"train_weather", weather_list(c.dataset.train_weather)},
                  {"val_weather", weather_list(c.dataset.val_weather)},
                  {"duration", sg.duration},
                  {"frame_rate", sg.frame_rate},
                  {"min_actors", sg.min_actors},
                  {"max_actors", sg.max_actors},
                  {"max_actor_speed", sg.max_actor_speed},
                  {"static_fraction", sg.static_fraction},
                  {"max_ego_speed", sg.max_ego_speed},
                  {"max_ego_yaw_rate", sg.max_ego_yaw_rate},
                  {"degraded_fraction", sg.degraded_fraction},
                  {"degraded_visibility", sg.degraded_visibility}};
  const SensorSpec& s = c.sensors;
  j["sensors"] = {{"lidar",
                   {{"beams", s.lidar.beams},
                    {"elevation_min", s.lidar.elevation_min},
                    {"elevation_max", s.lidar.elevation_max},
                    {"azimuth_resolution", s.lidar.azimuth_resolution},
                    {"azimuth_fov", s.lidar.azimuth_fov},
                    {"max_range", s.lidar.max_range},
                    {"range_noise", s.lidar.range_noise},
                    {"dropout", s.lidar.dropout}}},
                  {"radar",
                   {{"lambda", s.radar.lambda},
                    {"position_noise", s.radar.position_noise},
                    {"clutter_rate", s.radar.clutter_rate},
                    {"rcs_mean", s.radar.rcs_mean},
                    {"rcs_sigma", s.radar.rcs_sigma},
                    {"velocity_noise", s.radar.velocity_noise},
                    {"max_range", s.radar.max_range},
                    {"azimuth_fov", s.radar.azimuth_fov}}},
                  {"camera",
                   {{"width", s.camera.width},
                    {"height", s.camera.height},
                    {"fx", s.camera.intrinsics.fx},
                    {"fy", s.camera.intrinsics.fy},
                    {"cx", s.camera.intrinsics.cx},
                    {"cy", s.camera.intrinsics.cy},
                    {"pixel_noise", s.camera.pixel_noise},
                    {"background", s.camera.background},
                    {"color_ambiguity", s.camera.color_ambiguity}}},
                  {"ground_z", s.ground_z}};
  j["weather"] = {{"rain", weather_json(c.rain)}, {"night", weather_json(c.night)}};
  const GridConfig& g = c.train.grid;
  j["grid"] = {{"x_min", g.x_min},       {"x_max", g.x_max},     {"y_min", g.y_min},
               {"y_max", g.y_max},       {"z_min", g.z_min},     {"z_max", g.z_max},
               {"voxel_xy", g.voxel_xy}, {"voxel_z", g.voxel_z}, {"max_points", g.max_points},
               {"offsets", g.offsets == OffsetMode::centroid ? "centroid" : "center"}};
  const NetConfig& n = c.train.net;
  j["net"] = {{"vfe_units", n.vfe_units},
              {"sparse_channels", n.sparse_channels},
              {"trunk_channels", n.trunk_channels},
              {"trunk_strides", n.trunk_strides},
              {"cls_prior", n.cls_prior}};
  const TrainConfig& t = c.train;
  j["train"] = {{"epochs", t.epochs},
                {"learning_rate", t.learning_rate},
                {"beta1", t.beta1},
                {"beta2", t.beta2},
                {"epsilon", t.epsilon},
                {"score_threshold", t.score_threshold},
                {"nms_iou", t.nms_iou},
                {"sweeps", t.sweeps},
                {"patience", t.patience},
                {"eval_every", t.eval_every},
                {"modality", t.modality.str()},
                {"yaw_loss", yaw_mode_str(t.yaw_mode)},
                {"augment",
                 {{"enabled", t.augment.enabled},
                  {"max_rotation", t.augment.max_rotation},
                  {"translation_sigma", t.augment.translation_sigma},
                  {"scale_min", t.augment.scale_min},
                  {"scale_max", t.augment.scale_max}}},
                {"loss", {{"cls", t.loss.cls}, {"reg", t.loss.reg}, {"dir", t.loss.dir}}},
                {"match",
                 {{"iou_pos", t.match.iou_pos},
                  {"iou_neg", t.match.iou_neg},
                  {"dist_pos", t.match.dist_pos},
                  {"use_distance", t.match.use_distance},
                  {"force_best_anchor", t.match.force_best_anchor}}},
                {"anchor", {{"w", t.anchors.w}, {"l", t.anchors.l}, {"h", t.anchors.h}, {"z", t.anchors.z}}}};
  const UkfConfig& u = c.tracker;
  j["tracker"] = {{"alpha", u.alpha},
                  {"beta", u.beta},
                  {"kappa", u.kappa},
                  {"process_noise", vec_json<kStateDim>(u.process_noise)},
                  {"lidar_noise", vec_json<kMeasDim>(u.lidar_noise)},
                  {"radar_noise_scale", u.radar_noise_scale},
                  {"initial_variance", vec_json<kStateDim>(u.initial_variance)},
                  {"gate", u.gate},
                  {"birth_hits", u.birth_hits},
                  {"death_misses", u.death_misses},
                  {"report_coasting", u.report_coasting}};
  j["compare"] = {{"variants", c.compare_variants}, {"late_fusion", c.compare_late_fusion}};
  return j;
}

RunConfig config_from_json(const json& overrides) {
  json merged = to_json(RunConfig{});
  overlay(merged, overrides, "");
  RunConfig c;
  try {
    c = parse_full(merged);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("malformed config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

void set_config_value(json& overrides, const std::string& dotted_key, const std::string& value) {
  if (dotted_key.empty()) throw ConfigError("empty config key");
  json* node = &overrides;
  std::stringstream ss(dotted_key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
    json& next = (*node)[parts[k]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("config key " + dotted_key + " conflicts with a value");
    node = &next;
  }
  json parsed = json::parse(value, nullptr, false);
  (*node)[parts.back()] = parsed.is_discarded() ? json(value) : parsed;
}

std::uint64_t hash_json(const json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(const RunConfig& cfg) { return hash_json(to_json(cfg)); }

std::uint64_t dataset_hash(const RunConfig& cfg) {
  const json full = to_json(cfg);
  json part = {{"seed", full["seed"]},
               {"dataset", full["dataset"]},
               {"sensors", full["sensors"]},
               {"weather", full["weather"]},
               {"area", {full["grid"]["x_min"], full["grid"]["x_max"], full["grid"]["y_min"], full["grid"]["y_max"]}}};
  return hash_json(part);
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace rvf
