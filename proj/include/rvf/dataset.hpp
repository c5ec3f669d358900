#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rvf/scenegen.hpp"

namespace rvf {

inline constexpr const char* kFormatVersion = "rvf-dataset-1";

struct SceneRecord {
  std::string name;  // directory name below the dataset root
  std::string split;  // "train" or "val"
  std::uint64_t seed = 0;
  WeatherMode weather = WeatherMode::clear;
  int num_frames = 0;
};

struct Manifest {
  std::string format = kFormatVersion;
  std::string tool_version;
  std::uint64_t config_hash = 0;
  SceneArea area;  // ground-truth area; must match the training grid
  std::vector<SceneRecord> scenes;

  int count(const std::string& split) const;
  int frame_count(const std::string& split) const;
};

/// Frame files: frame_NNNN.json header plus little-endian float32 blobs
/// frame_NNNN.lidar.bin (x, y, z, i), frame_NNNN.radar.bin
/// (x, y, z, rcs, vx, vy) and frame_NNNN.rgb.bin (row-major RGB).
void write_frame(const std::filesystem::path& scene_dir, const Frame& frame);
Frame read_frame(const std::filesystem::path& scene_dir, int index);

void write_scene(const std::filesystem::path& scene_dir, const SceneRecord& record, std::span<const Frame> frames);
std::vector<Frame> read_scene(const std::filesystem::path& scene_dir, int num_frames);

void write_manifest(const std::filesystem::path& root, const Manifest& m);
/// Throws DataError when the manifest is missing or malformed.
Manifest read_manifest(const std::filesystem::path& root);

/// Writes `values` as little-endian float32.
void write_f32(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f32(const std::filesystem::path& path);

}  // namespace rvf
