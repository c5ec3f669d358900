#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "rvf/autodiff.hpp"
#include "rvf/targets.hpp"
#include "rvf/voxel.hpp"

namespace rvf {

/// Layer widths of the detector. The full-size layout is the default; the
/// acceptance runs use a much smaller one.
struct NetConfig {
  std::vector<int> vfe_units{16, 32};       // output width per VFE block (even)
  std::vector<int> sparse_channels{32, 32};
  std::vector<int> trunk_channels{64, 64, 64};
  std::vector<int> trunk_strides{1, 1, 1};
  double cls_prior = 0.01;  // initial foreground probability of the cls head

  void validate() const;
  int total_stride() const;
};

bool operator==(const NetConfig& a, const NetConfig& b);

/// Fixed per-feature input scaling applied before the first VFE layer.
inline constexpr std::array<double, kPointFeatures> kFeatureScale{
    0.02, 0.05, 1.0 / 3.0, 1.0, 1.0, 1.0, 1.0, 0.05, 0.1, 0.1, 10.0, 10.0, 5.0};

/// Head outputs on the anchor grid, pre-sigmoid.
struct NetworkOutput {
  ad::Tensor cls;  // [ny, nx, 2]
  ad::Tensor reg;  // [ny, nx, 2, 7]
  ad::Tensor dir;  // [ny, nx, 2]
};

/// Stacked VFE blocks over CSR-grouped points, then a per-voxel max.
/// Returns [K, vfe_units.back()].
ad::Tensor vfe_forward(const ad::ParamStore& params, const ad::Tensor& point_features,
                       std::span<const std::size_t> offsets, std::size_t blocks);

class RvfNet {
 public:
  RvfNet(NetConfig net, GridConfig grid, std::uint64_t seed);
  RvfNet(NetConfig net, GridConfig grid, ad::ParamStore params);

  NetworkOutput forward(const VoxelBatch& batch) const;

  const NetConfig& config() const { return net_; }
  const GridConfig& grid() const { return grid_; }
  AnchorGrid anchor_grid() const { return AnchorGrid::from(grid_, net_.total_stride()); }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

 private:
  void check_params() const;

  NetConfig net_;
  GridConfig grid_;
  ad::ParamStore params_;
};

/// Builds the fresh parameter set for a config: He-style fan-in scaling from
/// a seeded normal generator, zero biases except the cls prior.
ad::ParamStore init_params(const NetConfig& net, const GridConfig& grid, std::uint64_t seed);

/// Binary checkpoint: "RVFCKPT1", u64 config hash, u32 count, then per
/// parameter u32 name length, name bytes, u32 rank, u32 dims, and the
/// little-endian float64 payload.
void save_checkpoint(const std::filesystem::path& path, const ad::ParamStore& params, std::uint64_t config_hash);

struct Checkpoint {
  ad::ParamStore params;
  std::uint64_t config_hash = 0;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rvf
