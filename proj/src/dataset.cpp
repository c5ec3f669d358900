#include "rvf/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "rvf/errors.hpp"

namespace rvf {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string frame_stem(int index) {
  std::ostringstream os;
  os << "frame_" << std::setw(4) << std::setfill('0') << index;
  return os.str();
}

json box_json(const BBox3D& b) { return json::array({b.x, b.y, b.z, b.w, b.l, b.h, b.yaw}); }

BBox3D box_from(const json& j) {
  if (!j.is_array() || j.size() != 7) throw DataError("frame: box must have 7 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>(),
          j[4].get<double>(), j[5].get<double>(), j[6].get<double>()};
}

json pose_json(const Pose& p) { return json::array({p.tx, p.ty, p.tz, p.yaw}); }

Pose pose_from(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("frame: pose must have 4 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
}

json read_json(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw DataError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace

int Manifest::count(const std::string& split) const {
  int n = 0;
  for (const SceneRecord& s : scenes) n += s.split == split ? 1 : 0;
  return n;
}

int Manifest::frame_count(const std::string& split) const {
  int n = 0;
  for (const SceneRecord& s : scenes) n += s.split == split ? s.num_frames : 0;
  return n;
}

void write_f32(const fs::path& path, std::span<const double> values) {
  std::vector<char> buf(values.size() * 4);
  for (std::size_t k = 0; k < values.size(); ++k) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[k]));
    for (int b = 0; b < 4; ++b) buf[4 * k + b] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write " + path.string());
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

std::vector<double> read_f32(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot read " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() % 4 != 0) throw DataError("truncated float32 blob " + path.string());
  std::vector<double> out(buf.size() / 4);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[4 * k + b])) << (8 * b);
    out[k] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return out;
}

void write_frame(const fs::path& scene_dir, const Frame& f) {
  const std::string stem = frame_stem(f.index);
  json h;
  h["index"] = f.index;
  h["timestamp"] = f.timestamp;
  h["ego_pose"] = pose_json(f.ego_pose);
  h["camera"] = {{"width", f.camera.width},
                 {"height", f.camera.height},
                 {"intrinsics", {f.camera.intrinsics.fx, f.camera.intrinsics.fy, f.camera.intrinsics.cx,
                                 f.camera.intrinsics.cy}},
                 {"extrinsics", pose_json(f.camera.extrinsics)}};
  h["counts"] = {{"lidar", f.lidar.size()}, {"radar", f.radar.size()}};
  json objs = json::array();
  for (const GtObject& o : f.objects) {
    objs.push_back({{"box", box_json(o.box)}, {"actor", o.actor_id}, {"num_lidar", o.num_lidar},
                    {"num_radar", o.num_radar}});
  }
  h["objects"] = objs;
  write_text(scene_dir / (stem + ".json"), h.dump(1) + "\n");

  std::vector<double> lidar;
  lidar.reserve(f.lidar.size() * 4);
  for (const LidarPoint& p : f.lidar) lidar.insert(lidar.end(), {p.x, p.y, p.z, p.i});
  write_f32(scene_dir / (stem + ".lidar.bin"), lidar);
  std::vector<double> radar;
  radar.reserve(f.radar.size() * 6);
  for (const RadarPoint& p : f.radar) radar.insert(radar.end(), {p.x, p.y, p.z, p.rcs, p.vx, p.vy});
  write_f32(scene_dir / (stem + ".radar.bin"), radar);
  write_f32(scene_dir / (stem + ".rgb.bin"), f.camera.rgb);
}

Frame read_frame(const fs::path& scene_dir, int index) {
  const std::string stem = frame_stem(index);
  const json h = read_json(scene_dir / (stem + ".json"));
  Frame f;
  try {
    f.index = h.at("index").get<int>();
    f.timestamp = h.at("timestamp").get<double>();
    f.ego_pose = pose_from(h.at("ego_pose"));
    const json& cam = h.at("camera");
    f.camera.width = cam.at("width").get<int>();
    f.camera.height = cam.at("height").get<int>();
    const json& in = cam.at("intrinsics");
    f.camera.intrinsics = {in.at(0).get<double>(), in.at(1).get<double>(), in.at(2).get<double>(),
                           in.at(3).get<double>()};
    f.camera.extrinsics = pose_from(cam.at("extrinsics"));
    for (const json& o : h.at("objects")) {
      f.objects.push_back({box_from(o.at("box")), o.at("actor").get<int>(), o.at("num_lidar").get<int>(),
                           o.at("num_radar").get<int>()});
    }
    const std::size_t nl = h.at("counts").at("lidar").get<std::size_t>();
    const std::size_t nr = h.at("counts").at("radar").get<std::size_t>();
    const auto lidar = read_f32(scene_dir / (stem + ".lidar.bin"));
    const auto radar = read_f32(scene_dir / (stem + ".radar.bin"));
    if (lidar.size() != nl * 4 || radar.size() != nr * 6) throw DataError("frame " + stem + ": blob size mismatch");
    for (std::size_t k = 0; k < nl; ++k) f.lidar.push_back({lidar[4 * k], lidar[4 * k + 1], lidar[4 * k + 2], lidar[4 * k + 3]});
    for (std::size_t k = 0; k < nr; ++k) {
      const double* r = radar.data() + 6 * k;
      f.radar.push_back({r[0], r[1], r[2], r[3], r[4], r[5]});
    }
    f.camera.rgb = read_f32(scene_dir / (stem + ".rgb.bin"));
  } catch (const json::exception& e) {
    throw DataError("frame " + stem + ": " + e.what());
  }
  if (f.index != index) throw DataError("frame " + stem + ": index mismatch");
  try {
    f.camera.validate();
  } catch (const std::exception& e) {
    throw DataError("frame " + stem + ": " + e.what());
  }
  return f;
}

void write_scene(const fs::path& scene_dir, const SceneRecord& record, std::span<const Frame> frames) {
  fs::create_directories(scene_dir);
  json s = {{"name", record.name},
            {"split", record.split},
            {"seed", record.seed},
            {"weather", to_string(record.weather)},
            {"num_frames", frames.size()}};
  write_text(scene_dir / "scene.json", s.dump(1) + "\n");
  for (const Frame& f : frames) write_frame(scene_dir, f);
}

std::vector<Frame> read_scene(const fs::path& scene_dir, int num_frames) {
  std::vector<Frame> frames;
  frames.reserve(num_frames);
  for (int k = 0; k < num_frames; ++k) frames.push_back(read_frame(scene_dir, k));
  for (std::size_t k = 1; k < frames.size(); ++k) {
    if (!(frames[k].timestamp > frames[k - 1].timestamp)) {
      throw DataError("scene " + scene_dir.string() + ": timestamps are not increasing");
    }
  }
  return frames;
}

void write_manifest(const fs::path& root, const Manifest& m) {
  json j;
  j["format"] = m.format;
  j["tool_version"] = m.tool_version;
  std::ostringstream hash;
  hash << std::hex << std::setw(16) << std::setfill('0') << m.config_hash;
  j["config_hash"] = hash.str();
  j["area"] = {{"x_min", m.area.x_min}, {"x_max", m.area.x_max}, {"y_min", m.area.y_min}, {"y_max", m.area.y_max}};
  json scenes = json::array();
  for (const SceneRecord& s : m.scenes) {
    scenes.push_back({{"name", s.name},
                      {"split", s.split},
                      {"seed", s.seed},
                      {"weather", to_string(s.weather)},
                      {"num_frames", s.num_frames}});
  }
  j["scenes"] = scenes;
  j["counts"] = {{"train", {{"scenes", m.count("train")}, {"frames", m.frame_count("train")}}},
                 {"val", {{"scenes", m.count("val")}, {"frames", m.frame_count("val")}}}};
  write_text(root / "manifest.json", j.dump(1) + "\n");
}

Manifest read_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.json";
  if (!fs::exists(path)) throw DataError("no manifest.json in " + root.string());
  const json j = read_json(path);
  Manifest m;
  try {
    m.format = j.at("format").get<std::string>();
    if (m.format != kFormatVersion) throw DataError("unsupported dataset format " + m.format);
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    const json& a = j.at("area");
    m.area = {a.at("x_min").get<double>(), a.at("x_max").get<double>(), a.at("y_min").get<double>(),
              a.at("y_max").get<double>()};
    for (const json& s : j.at("scenes")) {
      SceneRecord r;
      r.name = s.at("name").get<std::string>();
      r.split = s.at("split").get<std::string>();
      r.seed = s.at("seed").get<std::uint64_t>();
      r.weather = weather_from_string(s.at("weather").get<std::string>());
      r.num_frames = s.at("num_frames").get<int>();
      m.scenes.push_back(r);
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  return m;
}

}  // namespace rvf
