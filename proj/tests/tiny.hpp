#pragma once

// Small detector configuration and in-memory samples for the training tests.

#include <string>
#include <vector>

#include "rvf/commands.hpp"
#include "rvf/config.hpp"
#include "rvf/trainer.hpp"

namespace tiny {

inline rvf::RunConfig run_config(std::uint64_t seed = 1) {
  rvf::RunConfig cfg;
  cfg.seed = seed;
  rvf::GridConfig& g = cfg.train.grid;
  g.x_min = 0.0;
  g.x_max = 32.0;
  g.y_min = -12.8;
  g.y_max = 12.8;
  g.z_min = -1.6;
  g.z_max = 0.4;
  g.voxel_xy = 0.4;
  g.voxel_z = 0.5;
  cfg.train.net.vfe_units = {8, 16};
  cfg.train.net.sparse_channels = {16};
  cfg.train.net.trunk_channels = {16, 16};
  cfg.train.net.trunk_strides = {2, 1};
  cfg.train.sweeps = 1;
  cfg.train.learning_rate = 3e-3;
  cfg.train.seed = seed;
  return cfg;
}

/// Frames of `scenes` generated scenes, fused as the trainer would see them.
inline std::vector<rvf::Sample> samples(const rvf::RunConfig& cfg, int scenes, int frames_per_scene,
                                        rvf::WeatherMode weather = rvf::WeatherMode::clear) {
  std::vector<rvf::Sample> out;
  for (int s = 0; s < scenes; ++s) {
    rvf::SceneGenConfig sg = cfg.dataset.scenes;
    sg.area = cfg.area();
    rvf::LoadedScene scene;
    scene.record.name = "scene_" + std::to_string(s);
    scene.record.weather = weather;
    const rvf::SceneSpec spec = rvf::sample_scene(sg, cfg.sensors, rvf::derive_seed(cfg.seed, 77, s), weather);
    scene.frames = rvf::render_scene(spec, cfg.sensors, cfg.weather(weather), sg.area);
    scene.frames.resize(std::min<std::size_t>(scene.frames.size(), frames_per_scene));
    auto part = rvf::make_samples(scene, cfg.train);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

}  // namespace tiny
