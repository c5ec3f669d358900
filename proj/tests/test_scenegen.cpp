#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "rvf/scenegen.hpp"

using namespace rvf;

namespace {

SensorSpec noiseless() {
  SensorSpec s;
  s.lidar.range_noise = 0.0;
  s.lidar.dropout = 0.0;
  s.radar.position_noise = 0.0;
  s.radar.velocity_noise = 0.0;
  s.radar.clutter_rate = 0.0;
  s.camera.pixel_noise = 0.0;
  return s;
}

SceneSpec static_ego_scene(std::vector<ActorSpec> actors) {
  SceneSpec spec;
  spec.duration = 0.3;
  spec.ego_poses.assign(spec.num_frames(), Pose{});
  spec.actors = std::move(actors);
  spec.seed = 5;
  return spec;
}

ActorSpec actor(double x, double y, double w, double l, double h, Vec2 v = {0.0, 0.0}) {
  ActorSpec a;
  a.box = {x, y, -1.85 + h / 2.0, w, l, h, 0.0};
  a.velocity = v;
  return a;
}

bool inside(const BBox3D& b, double x, double y, double z, double margin) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double dx = x - b.x, dy = y - b.y;
  const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
  return std::abs(lx) <= b.l / 2.0 + margin && std::abs(ly) <= b.w / 2.0 + margin && std::abs(z - b.z) <= b.h / 2.0 + margin;
}

int points_in(const Frame& f, const BBox3D& b) {
  int n = 0;
  for (const LidarPoint& p : f.lidar) n += inside(b, p.x, p.y, p.z, 1e-6) ? 1 : 0;
  return n;
}

bool same_lidar(const std::vector<LidarPoint>& a, const std::vector<LidarPoint>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].x != b[k].x || a[k].y != b[k].y || a[k].z != b[k].z || a[k].i != b[k].i) return false;
  }
  return true;
}

bool same_radar(const std::vector<RadarPoint>& a, const std::vector<RadarPoint>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k].x != b[k].x || a[k].y != b[k].y || a[k].z != b[k].z || a[k].rcs != b[k].rcs || a[k].vx != b[k].vx ||
        a[k].vy != b[k].vy) {
      return false;
    }
  }
  return true;
}

Frame sample_frame(std::uint64_t seed) {
  const SensorSpec sensors;
  const SceneSpec spec = sample_scene(SceneGenConfig{}, sensors, seed, WeatherMode::clear);
  std::mt19937_64 rng(seed);
  return generate_frame(spec, sensors, 3, rng);
}

}  // namespace

TEST_CASE("noise-free lidar points lie on the ground or inside a gt box") {
  const SensorSpec sensors = noiseless();
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SceneSpec spec = sample_scene(SceneGenConfig{}, sensors, seed, WeatherMode::clear);
    std::mt19937_64 rng(seed);
    const Frame f = generate_frame(spec, sensors, 0, rng);
    REQUIRE(!f.lidar.empty());
    int on_actor = 0;
    for (const LidarPoint& p : f.lidar) {
      bool ok = std::abs(p.z - sensors.ground_z) < 1e-6;
      for (const GtObject& o : f.objects) {
        if (inside(o.box, p.x, p.y, p.z, 1e-6)) {
          ok = true;
          ++on_actor;
          break;
        }
      }
      CHECK(ok);
    }
    CHECK(on_actor > 0);
  }
}

TEST_CASE("radar radial velocity of a head-on actor") {
  SensorSpec sensors = noiseless();
  sensors.radar.lambda = 20.0;
  const SceneSpec spec = static_ego_scene({actor(20.0, 0.0, 1.9, 4.6, 1.6, {-10.0, 0.0})});
  std::mt19937_64 rng(1);
  const Frame f = generate_frame(spec, sensors, 0, rng);
  REQUIRE(!f.radar.empty());
  for (const RadarPoint& p : f.radar) {
    const double n = std::hypot(p.x, p.y);
    const double ux = p.x / n, uy = p.y / n;
    const double vr = -10.0 * ux;
    CHECK(p.vx == doctest::Approx(vr * ux).epsilon(1e-12));
    CHECK(p.vy == doctest::Approx(vr * uy).epsilon(1e-12));
    // Facing surface only.
    CHECK(p.x == doctest::Approx(20.0 - 2.3).epsilon(1e-12));
  }
  // A point straight ahead measures the full closing speed.
  SensorSpec thin = sensors;
  const SceneSpec narrow = static_ego_scene({actor(20.0, 0.0, 0.02, 4.6, 1.6, {-10.0, 0.0})});
  std::mt19937_64 rng2(2);
  const Frame g = generate_frame(narrow, thin, 0, rng2);
  REQUIRE(!g.radar.empty());
  CHECK(g.radar[0].vx == doctest::Approx(-10.0).epsilon(1e-6));
  CHECK(std::abs(g.radar[0].vy) < 1e-2);
}

TEST_CASE("radar velocity is relative to the moving ego") {
  SensorSpec sensors = noiseless();
  sensors.radar.lambda = 10.0;
  SceneSpec spec = static_ego_scene({actor(20.0, 5.0, 1.9, 4.6, 1.6)});
  spec.ego_velocity = {4.0, 0.0};
  std::mt19937_64 rng(3);
  const Frame f = generate_frame(spec, sensors, 0, rng);
  REQUIRE(!f.radar.empty());
  for (const RadarPoint& p : f.radar) {
    const double n = std::hypot(p.x, p.y);
    const double vr = -4.0 * p.x / n;
    CHECK(p.vx * p.x / n + p.vy * p.y / n == doctest::Approx(vr).epsilon(1e-12));
  }
}

TEST_CASE("a fully occluded actor gets no lidar returns") {
  const SensorSpec sensors = noiseless();
  const ActorSpec front = actor(10.0, 0.0, 1.9, 4.6, 1.7);
  const ActorSpec back = actor(25.0, 0.0, 1.0, 1.0, 1.0);
  std::mt19937_64 rng(4);
  const Frame alone = generate_frame(static_ego_scene({back}), sensors, 0, rng);
  CHECK(points_in(alone, back.box) > 0);
  std::mt19937_64 rng2(4);
  const Frame hidden = generate_frame(static_ego_scene({front, back}), sensors, 0, rng2);
  CHECK(points_in(hidden, front.box) > 0);
  CHECK(points_in(hidden, back.box) == 0);
}

TEST_CASE("static actors are consistent across ego frames") {
  SceneGenConfig cfg;
  cfg.static_fraction = 1.0;
  cfg.max_ego_yaw_rate = 0.1;
  const SensorSpec sensors;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const SceneSpec spec = sample_scene(cfg, sensors, seed, WeatherMode::clear);
    std::vector<Frame> frames;
    for (int k = 0; k < spec.num_frames(); ++k) {
      std::mt19937_64 rng(k);
      frames.push_back(generate_frame(spec, sensors, k, rng));
    }
    for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
      const Pose step = frames[k + 1].ego_pose.inverse().compose(frames[k].ego_pose);
      for (std::size_t j = 0; j < frames[k].objects.size(); ++j) {
        const BBox3D moved = transform_box(frames[k].objects[j].box, step);
        const BBox3D& next = frames[k + 1].objects[j].box;
        CHECK(std::abs(moved.x - next.x) < 1e-9);
        CHECK(std::abs(moved.y - next.y) < 1e-9);
        CHECK(std::abs(wrap_angle(moved.yaw - next.yaw)) < 1e-9);
      }
    }
  }
}

TEST_CASE("weather effects") {
  const WeatherSpec clear = WeatherSpec::preset(WeatherMode::clear);
  const WeatherSpec rain = WeatherSpec::preset(WeatherMode::rain);
  const WeatherSpec night = WeatherSpec::preset(WeatherMode::night);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Frame f = sample_frame(seed);
    std::mt19937_64 rng(seed);
    const Frame c = apply_weather(f, clear, 0.02, rng);
    CHECK(same_lidar(c.lidar, f.lidar));
    CHECK(same_radar(c.radar, f.radar));
    CHECK(c.camera.rgb == f.camera.rgb);

    const Frame r = apply_weather(f, rain, 0.02, rng);
    CHECK(r.lidar.size() <= f.lidar.size());
    CHECK(same_radar(r.radar, f.radar));

    const Frame n = apply_weather(f, night, 0.02, rng);
    CHECK(same_radar(n.radar, f.radar));
    CHECK(same_lidar(n.lidar, f.lidar));
    double before = 0.0, after = 0.0;
    for (double v : f.camera.rgb) before += v;
    for (double v : n.camera.rgb) after += v;
    CHECK(after < before);

    WeatherSpec total = rain;
    total.lidar_dropout_add = 1.0;
    CHECK(apply_weather(f, total, 0.02, rng).lidar.empty());
  }
}

TEST_CASE("rain never adds lidar points over rendered scenes") {
  const SensorSpec sensors;
  const SceneArea area;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const SceneSpec spec = sample_scene(SceneGenConfig{}, sensors, seed, WeatherMode::clear);
    const auto dry = render_scene(spec, sensors, WeatherSpec::preset(WeatherMode::clear), area);
    const auto wet = render_scene(spec, sensors, WeatherSpec::preset(WeatherMode::rain), area);
    REQUIRE(dry.size() == wet.size());
    for (std::size_t k = 0; k < dry.size(); ++k) {
      CHECK(wet[k].lidar.size() <= dry[k].lidar.size());
      CHECK(same_radar(wet[k].radar, dry[k].radar));
    }
  }
}

TEST_CASE("sampled scenes are deterministic and keep an actor in range") {
  const SensorSpec sensors;
  SceneGenConfig cfg;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const SceneSpec a = sample_scene(cfg, sensors, seed, WeatherMode::rain);
    const SceneSpec b = sample_scene(cfg, sensors, seed, WeatherMode::rain);
    REQUIRE(a.actors.size() == b.actors.size());
    for (std::size_t k = 0; k < a.actors.size(); ++k) CHECK(a.actors[k].box.x == b.actors[k].box.x);
    const auto fa = render_scene(a, sensors, WeatherSpec::preset(WeatherMode::rain), cfg.area);
    const auto fb = render_scene(b, sensors, WeatherSpec::preset(WeatherMode::rain), cfg.area);
    for (std::size_t k = 0; k < fa.size(); ++k) {
      CHECK(same_lidar(fa[k].lidar, fb[k].lidar));
      CHECK(!fa[k].objects.empty());
    }
  }
}

TEST_CASE("degraded actors lose lidar returns but keep radar") {
  SensorSpec sensors = noiseless();
  sensors.radar.lambda = 5.0;
  ActorSpec a = actor(15.0, 0.0, 1.9, 4.6, 1.6);
  a.lidar_visibility = 0.0;
  std::mt19937_64 rng(8);
  const Frame f = generate_frame(static_ego_scene({a}), sensors, 0, rng);
  CHECK(points_in(f, a.box) == 0);
  CHECK(!f.radar.empty());
}

TEST_CASE("invalid specs are rejected") {
  SceneSpec spec = static_ego_scene({});
  spec.ego_poses.pop_back();
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  WeatherSpec w;
  w.camera_gain = 0.0;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  SceneGenConfig cfg;
  cfg.degraded_fraction = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK(weather_from_string("night") == WeatherMode::night);
  CHECK_THROWS(weather_from_string("fog"));
}
