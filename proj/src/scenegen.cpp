#include "rvf/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

namespace rvf {

namespace {

constexpr double kDeg = kPi / 180.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double gauss(std::mt19937_64& rng, double sigma) {
  if (sigma <= 0.0) return 0.0;
  return std::normal_distribution<double>(0.0, sigma)(rng);
}

bool bernoulli(std::mt19937_64& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::bernoulli_distribution(p)(rng);
}

int poisson(std::mt19937_64& rng, double lambda) {
  if (lambda <= 0.0) return 0;
  return std::poisson_distribution<int>(lambda)(rng);
}

void check_prob(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument(std::string(what) + " must lie in [0, 1]");
}

void check_sigma(double s, const char* what) {
  if (!(s >= 0.0) || !std::isfinite(s)) throw std::invalid_argument(std::string(what) + " must be nonnegative");
}

/// Entry distance of the ray o + t d into an oriented box, or infinity.
double ray_box(const Vec3& o, const Vec3& d, const BBox3D& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double px = o.x - b.x, py = o.y - b.y;
  const double lo[3] = {c * px + s * py, -s * px + c * py, o.z - b.z};
  const double ld[3] = {c * d.x + s * d.y, -s * d.x + c * d.y, d.z};
  const double half[3] = {b.l / 2.0, b.w / 2.0, b.h / 2.0};
  double t0 = -kInf, t1 = kInf;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(ld[k]) < 1e-15) {
      if (lo[k] < -half[k] || lo[k] > half[k]) return kInf;
      continue;
    }
    double a = (-half[k] - lo[k]) / ld[k];
    double e = (half[k] - lo[k]) / ld[k];
    if (a > e) std::swap(a, e);
    t0 = std::max(t0, a);
    t1 = std::min(t1, e);
    if (t0 > t1) return kInf;
  }
  return t0 > 0.0 ? t0 : kInf;
}

bool inside_box(const BBox3D& b, const Vec3& p, double margin) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  const double px = p.x - b.x, py = p.y - b.y;
  const double lx = c * px + s * py, ly = -s * px + c * py;
  return std::abs(lx) <= b.l / 2.0 + margin && std::abs(ly) <= b.w / 2.0 + margin &&
         std::abs(p.z - b.z) <= b.h / 2.0 + margin;
}

bool in_fov(double x, double y, double fov_deg) { return std::abs(std::atan2(y, x)) <= fov_deg * kDeg / 2.0; }

std::vector<BBox3D> ego_boxes(const SceneSpec& spec, int frame) {
  const double t = spec.timestamp(frame);
  const Pose to_ego = spec.ego_poses[frame].inverse();
  std::vector<BBox3D> out;
  out.reserve(spec.actors.size());
  for (const ActorSpec& a : spec.actors) out.push_back(transform_box(actor_box_at(a, t), to_ego));
  return out;
}

/// First box hit before `limit` along the ray, skipping `skip`.
bool blocked(const Vec3& o, const Vec3& d, double limit, std::span<const BBox3D> boxes, std::size_t skip) {
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    if (k == skip) continue;
    if (ray_box(o, d, boxes[k]) < limit) return true;
  }
  return false;
}

bool radar_visible(std::span<const BBox3D> boxes, std::size_t k) {
  const BBox3D& b = boxes[k];
  std::vector<Vec3> targets{{b.x, b.y, b.z}};
  BBox3D shrunk = b;
  shrunk.w *= 0.8;
  shrunk.l *= 0.8;
  for (const Vec2& c : bev_corners(shrunk)) targets.push_back({c.x, c.y, b.z});
  for (const Vec3& p : targets) {
    const double r = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
    if (r <= 0.0) continue;
    const Vec3 d{p.x / r, p.y / r, p.z / r};
    if (!blocked({0.0, 0.0, 0.0}, d, r, boxes, k)) return true;
  }
  return false;
}

void render_camera(Frame& f, const SceneSpec& spec, const CameraSpec& cs, std::span<const BBox3D> boxes,
                   std::mt19937_64& rng) {
  CameraFrame& cam = f.camera;
  cam.width = cs.width;
  cam.height = cs.height;
  cam.intrinsics = cs.intrinsics;
  cam.extrinsics = Pose{};
  cam.rgb.assign(static_cast<std::size_t>(cs.width) * cs.height * 3, cs.background);

  std::vector<std::size_t> order(boxes.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::hypot(boxes[a].x, boxes[a].y) > std::hypot(boxes[b].x, boxes[b].y);
  });
  for (std::size_t k : order) {
    const BBox3D& b = boxes[k];
    double umin = kInf, umax = -kInf, vmin = kInf, vmax = -kInf;
    bool any = false;
    for (const Vec2& c : bev_corners(b)) {
      for (double z : {b.z - b.h / 2.0, b.z + b.h / 2.0}) {
        const double zc = c.x;
        if (zc < 0.1) continue;
        const double u = cs.intrinsics.fx * (-c.y) / zc + cs.intrinsics.cx;
        const double v = cs.intrinsics.fy * (-z) / zc + cs.intrinsics.cy;
        umin = std::min(umin, u);
        umax = std::max(umax, u);
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
        any = true;
      }
    }
    if (!any) continue;
    const int u0 = std::max(0, static_cast<int>(std::floor(umin)));
    const int u1 = std::min(cs.width - 1, static_cast<int>(std::floor(umax)));
    const int v0 = std::max(0, static_cast<int>(std::floor(vmin)));
    const int v1 = std::min(cs.height - 1, static_cast<int>(std::floor(vmax)));
    const auto& color = spec.actors[k].color;
    for (int v = v0; v <= v1; ++v) {
      for (int u = u0; u <= u1; ++u) {
        double* px = cam.pixel(u, v);
        for (int ch = 0; ch < 3; ++ch) px[ch] = cs.color_ambiguity ? cs.background : color[ch];
      }
    }
  }
  if (cs.pixel_noise > 0.0) {
    for (double& c : cam.rgb) c = std::clamp(c + gauss(rng, cs.pixel_noise), 0.0, 1.0);
  }
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  return splitmix(splitmix(splitmix(base) ^ a) ^ (b * 0x9e3779b97f4a7c15ULL + 1));
}

std::string to_string(WeatherMode m) {
  switch (m) {
    case WeatherMode::clear: return "clear";
    case WeatherMode::rain: return "rain";
    case WeatherMode::night: return "night";
  }
  return "clear";
}

WeatherMode weather_from_string(const std::string& s) {
  if (s == "clear") return WeatherMode::clear;
  if (s == "rain") return WeatherMode::rain;
  if (s == "night") return WeatherMode::night;
  throw std::invalid_argument("unknown weather mode: " + s);
}

int SceneSpec::num_frames() const { return std::max(1, static_cast<int>(std::floor(duration * frame_rate + 1e-9))); }

void SceneSpec::validate() const {
  if (!(frame_rate > 0.0)) throw std::invalid_argument("scene: frame rate must be positive");
  if (!(duration > 0.0)) throw std::invalid_argument("scene: duration must be positive");
  if (static_cast<int>(ego_poses.size()) != num_frames()) {
    throw std::invalid_argument("scene: need one ego pose per frame");
  }
  for (const ActorSpec& a : actors) {
    validate_box(a.box);
    check_prob(a.lidar_visibility, "actor lidar visibility");
  }
}

void SensorSpec::validate() const {
  if (lidar.beams < 1 || !(lidar.azimuth_resolution > 0.0) || !(lidar.max_range > 0.0) ||
      !(lidar.elevation_max >= lidar.elevation_min)) {
    throw std::invalid_argument("sensors: invalid lidar geometry");
  }
  check_sigma(lidar.range_noise, "lidar range noise");
  check_prob(lidar.dropout, "lidar dropout");
  check_sigma(radar.lambda, "radar lambda");
  check_sigma(radar.position_noise, "radar position noise");
  check_sigma(radar.clutter_rate, "radar clutter rate");
  check_sigma(radar.rcs_sigma, "radar rcs sigma");
  check_sigma(radar.velocity_noise, "radar velocity noise");
  if (camera.width < 1 || camera.height < 1) throw std::invalid_argument("sensors: camera size must be positive");
  check_sigma(camera.pixel_noise, "camera pixel noise");
  if (!(ground_z < 0.0)) throw std::invalid_argument("sensors: ground must lie below the sensors");
}

WeatherSpec WeatherSpec::preset(WeatherMode mode) {
  WeatherSpec w;
  w.mode = mode;
  if (mode == WeatherMode::rain) {
    w.lidar_dropout_add = 0.6;
    w.lidar_noise_mult = 3.0;
    w.camera_noise_add = 0.05;
  } else if (mode == WeatherMode::night) {
    w.camera_gain = 0.3;
    w.camera_noise_add = 0.05;
  }
  return w;
}

void WeatherSpec::validate() const {
  check_prob(lidar_dropout_add, "weather lidar_dropout_add");
  if (!(lidar_noise_mult >= 1.0)) throw std::invalid_argument("weather lidar_noise_mult must be >= 1");
  if (!(camera_gain > 0.0 && camera_gain <= 1.0)) throw std::invalid_argument("weather camera_gain must be in (0, 1]");
  check_sigma(camera_noise_add, "weather camera_noise_add");
}

BBox3D actor_box_at(const ActorSpec& a, double t) {
  BBox3D b = a.box;
  b.x += a.velocity.x * t;
  b.y += a.velocity.y * t;
  return b;
}

Frame generate_frame(const SceneSpec& spec, const SensorSpec& sensors, int frame, std::mt19937_64& rng) {
  if (frame < 0 || frame >= spec.num_frames()) throw std::out_of_range("generate_frame: frame outside the scene");
  Frame f;
  f.index = frame;
  f.timestamp = spec.timestamp(frame);
  f.ego_pose = spec.ego_poses[frame];
  const std::vector<BBox3D> boxes = ego_boxes(spec, frame);

  // Lidar: nearest hit per beam against actors and the ground plane.
  const LidarSpec& ls = sensors.lidar;
  const int columns = static_cast<int>(std::floor(ls.azimuth_fov / ls.azimuth_resolution + 1e-9));
  const Vec3 origin{0.0, 0.0, 0.0};
  for (int b = 0; b < ls.beams; ++b) {
    const double elev =
        (ls.beams == 1 ? ls.elevation_min
                       : ls.elevation_min + (ls.elevation_max - ls.elevation_min) * b / (ls.beams - 1)) *
        kDeg;
    for (int c = 0; c < columns; ++c) {
      const double az = (-ls.azimuth_fov / 2.0 + (c + 0.5) * ls.azimuth_resolution) * kDeg;
      const Vec3 d{std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az), std::sin(elev)};
      double t = d.z < 0.0 ? sensors.ground_z / d.z : kInf;
      int hit = -1;
      for (std::size_t k = 0; k < boxes.size(); ++k) {
        const double tk = ray_box(origin, d, boxes[k]);
        if (tk < t) {
          t = tk;
          hit = static_cast<int>(k);
        }
      }
      if (!(t <= ls.max_range)) continue;
      if (bernoulli(rng, ls.dropout)) continue;
      if (hit >= 0 && !bernoulli(rng, spec.actors[hit].lidar_visibility)) continue;
      const double r = t + gauss(rng, ls.range_noise);
      const double intensity = hit >= 0 ? 0.7 : 0.2;
      f.lidar.push_back({d.x * r, d.y * r, d.z * r, intensity});
    }
  }

  // Radar: returns on the surfaces facing the sensor, then clutter.
  const RadarSpec& rs = sensors.radar;
  const double c0 = std::cos(spec.ego_poses[frame].yaw), s0 = std::sin(spec.ego_poses[frame].yaw);
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    const BBox3D& b = boxes[k];
    const double range = std::hypot(b.x, b.y);
    if (range > rs.max_range || !in_fov(b.x, b.y, rs.azimuth_fov) || !radar_visible(boxes, k)) continue;
    const auto corners = bev_corners(b);
    std::vector<std::pair<int, double>> faces;
    double total = 0.0;
    for (int e = 0; e < 4; ++e) {
      const Vec2& p = corners[e];
      const Vec2& q = corners[(e + 1) % 4];
      const double nx = q.y - p.y, ny = -(q.x - p.x);
      const double mx = (p.x + q.x) / 2.0, my = (p.y + q.y) / 2.0;
      if (nx * mx + ny * my < 0.0) {
        const double len = std::hypot(q.x - p.x, q.y - p.y);
        faces.emplace_back(e, len);
        total += len;
      }
    }
    if (faces.empty()) continue;
    // Relative velocity in the ego frame.
    const Vec2& wv = spec.actors[k].velocity;
    const double avx = c0 * wv.x + s0 * wv.y, avy = -s0 * wv.x + c0 * wv.y;
    const double rvx = avx - spec.ego_velocity.x, rvy = avy - spec.ego_velocity.y;
    const int n = poisson(rng, rs.lambda);
    for (int j = 0; j < n; ++j) {
      double pick = uniform(rng, 0.0, total);
      int e = faces.back().first;
      for (const auto& [face, len] : faces) {
        if (pick < len) {
          e = face;
          break;
        }
        pick -= len;
      }
      const double a = uniform(rng, 0.0, 1.0);
      const Vec2& p = corners[e];
      const Vec2& q = corners[(e + 1) % 4];
      RadarPoint rp;
      rp.x = p.x + a * (q.x - p.x) + gauss(rng, rs.position_noise);
      rp.y = p.y + a * (q.y - p.y) + gauss(rng, rs.position_noise);
      rp.z = uniform(rng, b.z - b.h / 2.0, b.z + b.h / 2.0) + gauss(rng, rs.position_noise);
      const double norm = std::hypot(rp.x, rp.y);
      const double ux = rp.x / norm, uy = rp.y / norm;
      const double vr = rvx * ux + rvy * uy + gauss(rng, rs.velocity_noise);
      rp.vx = vr * ux;
      rp.vy = vr * uy;
      rp.rcs = rs.rcs_mean + gauss(rng, rs.rcs_sigma);
      f.radar.push_back(rp);
    }
  }
  const int clutter = poisson(rng, rs.clutter_rate);
  for (int j = 0; j < clutter; ++j) {
    const double range = uniform(rng, 2.0, std::min(rs.max_range, 60.0));
    const double az = uniform(rng, -rs.azimuth_fov / 2.0, rs.azimuth_fov / 2.0) * kDeg;
    RadarPoint rp;
    rp.x = range * std::cos(az);
    rp.y = range * std::sin(az);
    rp.z = uniform(rng, sensors.ground_z + 0.2, 0.5);
    const double speed = uniform(rng, 0.5, 5.0) * (bernoulli(rng, 0.5) ? 1.0 : -1.0);
    rp.vx = speed * std::cos(az);
    rp.vy = speed * std::sin(az);
    rp.rcs = uniform(rng, -5.0, 5.0);
    f.radar.push_back(rp);
  }

  render_camera(f, spec, sensors.camera, boxes, rng);

  for (std::size_t k = 0; k < boxes.size(); ++k) f.objects.push_back({boxes[k], static_cast<int>(k), 0, 0});
  return f;
}

Frame apply_weather(const Frame& frame, const WeatherSpec& weather, double lidar_sigma, std::mt19937_64& rng) {
  weather.validate();
  Frame out = frame;
  if (weather.mode == WeatherMode::clear) return out;
  if (weather.mode == WeatherMode::rain) {
    const double extra = lidar_sigma * std::sqrt(weather.lidar_noise_mult * weather.lidar_noise_mult - 1.0);
    std::vector<LidarPoint> kept;
    kept.reserve(out.lidar.size());
    for (const LidarPoint& p : out.lidar) {
      if (bernoulli(rng, weather.lidar_dropout_add)) continue;
      LidarPoint q = p;
      const double r = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
      if (extra > 0.0 && r > 0.0) {
        const double k = (r + gauss(rng, extra)) / r;
        q.x *= k;
        q.y *= k;
        q.z *= k;
      }
      kept.push_back(q);
    }
    out.lidar = std::move(kept);
  }
  for (double& c : out.camera.rgb) {
    c = std::clamp(c * weather.camera_gain + gauss(rng, weather.camera_noise_add), 0.0, 1.0);
  }
  return out;
}

void count_object_points(Frame& frame, double margin) {
  for (GtObject& o : frame.objects) {
    o.num_lidar = 0;
    o.num_radar = 0;
    for (const LidarPoint& p : frame.lidar) o.num_lidar += inside_box(o.box, {p.x, p.y, p.z}, margin) ? 1 : 0;
    for (const RadarPoint& p : frame.radar) o.num_radar += inside_box(o.box, {p.x, p.y, p.z}, margin + 0.3) ? 1 : 0;
  }
}

void SceneGenConfig::validate() const {
  if (!(duration > 0.0) || !(frame_rate > 0.0)) throw std::invalid_argument("scenegen: duration and rate must be positive");
  if (min_actors < 1 || max_actors < min_actors) throw std::invalid_argument("scenegen: invalid actor count range");
  check_sigma(max_actor_speed, "scenegen max_actor_speed");
  check_sigma(max_ego_speed, "scenegen max_ego_speed");
  check_sigma(max_ego_yaw_rate, "scenegen max_ego_yaw_rate");
  check_prob(static_fraction, "scenegen static_fraction");
  check_prob(degraded_fraction, "scenegen degraded_fraction");
  check_prob(degraded_visibility, "scenegen degraded_visibility");
  if (!(area.x_max > area.x_min + 6.0) || !(area.y_max > area.y_min + 4.0)) {
    throw std::invalid_argument("scenegen: area too small");
  }
}

namespace {

constexpr std::array<std::array<double, 3>, 6> kPalette{{
    {0.85, 0.10, 0.10},
    {0.10, 0.25, 0.85},
    {0.95, 0.85, 0.10},
    {0.10, 0.70, 0.20},
    {0.95, 0.95, 0.95},
    {0.05, 0.05, 0.05},
}};

std::optional<SceneSpec> try_scene(const SceneGenConfig& cfg, const SensorSpec& sensors, std::uint64_t seed,
                                   WeatherMode weather, std::mt19937_64& rng) {
  SceneSpec spec;
  spec.duration = cfg.duration;
  spec.frame_rate = cfg.frame_rate;
  spec.seed = seed;
  spec.weather = weather;
  const double v = uniform(rng, 0.0, cfg.max_ego_speed);
  const double omega = cfg.max_ego_yaw_rate > 0.0 ? uniform(rng, -cfg.max_ego_yaw_rate, cfg.max_ego_yaw_rate) : 0.0;
  spec.ego_velocity = {v, 0.0};
  for (int k = 0; k < spec.num_frames(); ++k) {
    const double t = spec.timestamp(k);
    Pose p;
    if (std::abs(omega) < 1e-12) {
      p.tx = v * t;
    } else {
      p.tx = v / omega * std::sin(omega * t);
      p.ty = v / omega * (1.0 - std::cos(omega * t));
    }
    p.yaw = wrap_angle(omega * t);
    spec.ego_poses.push_back(p);
  }

  auto fits = [&](const ActorSpec& cand) {
    for (int k = 0; k < spec.num_frames(); ++k) {
      const double t = spec.timestamp(k);
      const Pose to_ego = spec.ego_poses[k].inverse();
      BBox3D b = transform_box(actor_box_at(cand, t), to_ego);
      if (std::hypot(b.x, b.y) < 5.0) return false;
      b.w += 1.0;
      b.l += 1.0;
      for (const ActorSpec& other : spec.actors) {
        BBox3D o = transform_box(actor_box_at(other, t), to_ego);
        o.w += 1.0;
        o.l += 1.0;
        if (bev_iou(b, o) > 0.0) return false;
      }
    }
    return true;
  };

  const int count = std::uniform_int_distribution<int>(cfg.min_actors, cfg.max_actors)(rng);
  const SceneArea& a = cfg.area;
  for (int n = 0; n < count; ++n) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      ActorSpec act;
      act.box.x = uniform(rng, a.x_min + 3.0, a.x_max - 2.0);
      act.box.y = uniform(rng, a.y_min + 1.5, a.y_max - 1.5);
      act.box.yaw = uniform(rng, -kPi, kPi);
      act.box.w = std::clamp(1.9 + gauss(rng, 0.1), 1.6, 2.2);
      act.box.l = std::clamp(4.6 + gauss(rng, 0.3), 3.8, 5.4);
      act.box.h = std::clamp(1.6 + gauss(rng, 0.1), 1.4, 1.9);
      act.box.z = sensors.ground_z + act.box.h / 2.0;
      const double speed = bernoulli(rng, cfg.static_fraction) ? 0.0 : uniform(rng, 1.0, std::max(1.0, cfg.max_actor_speed));
      act.velocity = {speed * std::cos(act.box.yaw), speed * std::sin(act.box.yaw)};
      act.color = kPalette[std::uniform_int_distribution<std::size_t>(0, kPalette.size() - 1)(rng)];
      act.lidar_visibility = bernoulli(rng, cfg.degraded_fraction) ? cfg.degraded_visibility : 1.0;
      if (fits(act)) {
        spec.actors.push_back(act);
        break;
      }
    }
  }
  for (int k = 0; k < spec.num_frames(); ++k) {
    const Pose to_ego = spec.ego_poses[k].inverse();
    bool any = false;
    for (const ActorSpec& act : spec.actors) {
      const BBox3D b = transform_box(actor_box_at(act, spec.timestamp(k)), to_ego);
      any = any || a.contains(b.x, b.y);
    }
    if (!any) return std::nullopt;
  }
  return spec;
}

}  // namespace

SceneSpec sample_scene(const SceneGenConfig& cfg, const SensorSpec& sensors, std::uint64_t seed, WeatherMode weather) {
  cfg.validate();
  sensors.validate();
  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    std::mt19937_64 rng(derive_seed(seed, 0x5ce9e, attempt));
    if (auto spec = try_scene(cfg, sensors, seed, weather, rng)) return *spec;
  }
  throw std::runtime_error("sample_scene: no valid scene after 100 re-rolls");
}

std::vector<Frame> render_scene(const SceneSpec& spec, const SensorSpec& sensors, const WeatherSpec& weather,
                                const SceneArea& area) {
  spec.validate();
  sensors.validate();
  weather.validate();
  std::vector<Frame> frames;
  frames.reserve(spec.num_frames());
  for (int k = 0; k < spec.num_frames(); ++k) {
    std::mt19937_64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(k), 1));
    Frame f = generate_frame(spec, sensors, k, rng);
    std::mt19937_64 wrng(derive_seed(spec.seed, static_cast<std::uint64_t>(k), 2));
    f = apply_weather(f, weather, sensors.lidar.range_noise, wrng);
    std::erase_if(f.objects, [&](const GtObject& o) { return !area.contains(o.box.x, o.box.y); });
    count_object_points(f);
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace rvf
