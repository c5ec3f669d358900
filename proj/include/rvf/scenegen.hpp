#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rvf/fusion.hpp"
#include "rvf/geom.hpp"

namespace rvf {

struct ActorSpec {
  BBox3D box;        // world frame at t = 0
  Vec2 velocity;     // world frame, m/s
  std::array<double, 3> color{0.8, 0.1, 0.1};
  double lidar_visibility = 1.0;  // per-return survival probability
};

enum class WeatherMode : std::uint8_t { clear, rain, night };

std::string to_string(WeatherMode m);
WeatherMode weather_from_string(const std::string& s);

struct SceneSpec {
  double duration = 2.0;     // seconds
  double frame_rate = 10.0;  // Hz
  std::vector<Pose> ego_poses;  // ego -> world, one per frame
  Vec2 ego_velocity;            // ego frame, m/s
  std::vector<ActorSpec> actors;
  std::uint64_t seed = 0;
  WeatherMode weather = WeatherMode::clear;

  int num_frames() const;
  double timestamp(int frame) const { return frame / frame_rate; }
  void validate() const;
};

struct LidarSpec {
  int beams = 32;
  double elevation_min = -22.0;  // degrees
  double elevation_max = 2.0;
  double azimuth_resolution = 0.4;  // degrees
  double azimuth_fov = 180.0;       // degrees, centred on +x
  double max_range = 60.0;
  double range_noise = 0.02;
  double dropout = 0.05;
};

struct RadarSpec {
  double lambda = 2.0;  // mean returns per visible actor
  double position_noise = 0.15;
  double clutter_rate = 3.0;
  double rcs_mean = 10.0;
  double rcs_sigma = 3.0;
  double velocity_noise = 0.1;
  double max_range = 80.0;
  double azimuth_fov = 180.0;
};

struct CameraSpec {
  int width = 160;
  int height = 48;
  CameraIntrinsics intrinsics{80.0, 80.0, 80.0, 24.0};
  double pixel_noise = 0.01;
  double background = 0.5;
  bool color_ambiguity = false;  // actors painted in the background colour
};

struct SensorSpec {
  LidarSpec lidar;
  RadarSpec radar;
  CameraSpec camera;
  double ground_z = -1.85;  // ground height in the ego frame

  void validate() const;
};

struct WeatherSpec {
  WeatherMode mode = WeatherMode::clear;
  double lidar_dropout_add = 0.0;
  double lidar_noise_mult = 1.0;
  double camera_gain = 1.0;
  double camera_noise_add = 0.0;

  static WeatherSpec preset(WeatherMode mode);
  void validate() const;
};

struct GtObject {
  BBox3D box;  // ego frame
  int actor_id = -1;
  int num_lidar = 0;
  int num_radar = 0;
};

struct Frame {
  int index = 0;
  double timestamp = 0.0;
  Pose ego_pose;  // ego -> world
  std::vector<LidarPoint> lidar;
  std::vector<RadarPoint> radar;
  CameraFrame camera;
  std::vector<GtObject> objects;
};

/// Actor box in the world frame at time t.
BBox3D actor_box_at(const ActorSpec& a, double t);

/// Renders frame `frame` of the scene: lidar ray casting with nearest-hit
/// occlusion, radar returns on the facing surfaces plus clutter, and a
/// flat-shaded camera image. All outputs are in the ego frame.
Frame generate_frame(const SceneSpec& spec, const SensorSpec& sensors, int frame, std::mt19937_64& rng);

/// Degrades a frame. `lidar_sigma` is the base range noise the frame was
/// rendered with; rain adds noise so the total is sigma * lidar_noise_mult.
Frame apply_weather(const Frame& frame, const WeatherSpec& weather, double lidar_sigma, std::mt19937_64& rng);

/// Recounts lidar and radar returns inside each (slightly inflated) gt box.
void count_object_points(Frame& frame, double margin = 0.1);

/// Detection area used by the scene sampler.
struct SceneArea {
  double x_min = 0.0;
  double x_max = 32.0;
  double y_min = -12.8;
  double y_max = 12.8;

  bool contains(double x, double y) const { return x >= x_min && x < x_max && y >= y_min && y < y_max; }
};

struct SceneGenConfig {
  double duration = 2.0;
  double frame_rate = 10.0;
  int min_actors = 2;
  int max_actors = 5;
  double max_actor_speed = 8.0;
  double static_fraction = 0.3;
  double max_ego_speed = 6.0;
  double max_ego_yaw_rate = 0.05;
  double degraded_fraction = 0.0;   // share of actors with weak lidar returns
  double degraded_visibility = 0.15;
  SceneArea area;

  void validate() const;
};

/// Samples a scene whose every frame has at least one actor in the area and
/// whose actors never overlap. Throws std::runtime_error if no valid scene is
/// found within a bounded number of re-rolls.
SceneSpec sample_scene(const SceneGenConfig& cfg, const SensorSpec& sensors, std::uint64_t seed, WeatherMode weather);

/// Frames of one scene with `weather` applied and point counts filled in.
/// Only actors inside the area are reported as objects.
std::vector<Frame> render_scene(const SceneSpec& spec, const SensorSpec& sensors, const WeatherSpec& weather,
                                const SceneArea& area);

/// Seed of a derived stream, stable across platforms.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace rvf
