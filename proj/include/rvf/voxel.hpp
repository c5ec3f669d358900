#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "rvf/fusion.hpp"

namespace rvf {

enum class OffsetMode { center, centroid };

struct GridConfig {
  double x_min = 0.0;
  double x_max = 50.0;
  double y_min = -20.0;
  double y_max = 20.0;
  double z_min = -3.0;
  double z_max = 3.0;
  double voxel_xy = 0.2;
  double voxel_z = 0.4;
  int max_points = 40;
  OffsetMode offsets = OffsetMode::center;

  void validate() const;
  int nx() const;
  int ny() const;
  int nz() const;
};

bool operator==(const GridConfig& a, const GridConfig& b);

struct VoxelCoord {
  int ix = 0;
  int iy = 0;
  int iz = 0;
  auto operator<=>(const VoxelCoord&) const = default;
};

/// Number of input features per point fed to the network.
inline constexpr int kPointFeatures = 13;

struct VoxelPoint {
  FusedPoint point;
  double dx = 0.0;
  double dy = 0.0;
  double dz = 0.0;
  std::size_t index = 0;  // position in the voxelized input cloud
};

struct Voxel {
  VoxelCoord coord;
  std::vector<VoxelPoint> points;
};

Vec3 voxel_center(const VoxelCoord& c, const GridConfig& cfg);

/// Partitions points into half-open voxels; out-of-range points are dropped.
/// Output is sorted by coordinate, points keep their input order. Offsets
/// are always taken from the voxel centre here; see `recenter_offsets`.
std::vector<Voxel> voxelize(std::span<const FusedPoint> points, const GridConfig& cfg);

/// Downsamples to `max_points`, keeping radar returns first and sampling the
/// rest uniformly without replacement.
Voxel cap_voxel(Voxel v, std::mt19937_64& rng, int max_points = 40);

/// Caps every voxel with a per-voxel generator seeded from `seed` and the
/// voxel coordinate, so results do not depend on processing order.
void cap_voxels(std::vector<Voxel>& voxels, std::uint64_t seed, int max_points);

/// Replaces centre offsets by centroid offsets when the grid asks for them.
void recenter_offsets(std::vector<Voxel>& voxels, const GridConfig& cfg);

struct SparseTensor {
  std::vector<VoxelCoord> coords;
  int channels = 0;
  std::vector<double> features;  // coords.size() x channels, row-major

  std::size_t size() const { return coords.size(); }
  std::span<const double> row(std::size_t k) const {
    return {features.data() + k * channels, static_cast<std::size_t>(channels)};
  }
};

struct SiteFeatures {
  VoxelCoord coord;
  std::vector<double> features;
};

/// Sorts sites lexicographically; duplicate coordinates or ragged feature
/// widths throw std::invalid_argument.
SparseTensor to_sparse(std::vector<SiteFeatures> sites);

/// Network-ready voxel batch: point features grouped per voxel (CSR), which
/// is the ragged equivalent of a padded [K, max_points, 13] array with mask.
struct VoxelBatch {
  std::vector<VoxelCoord> coords;    // K, sorted
  std::vector<std::size_t> offsets;  // K + 1
  std::vector<double> features;      // N x kPointFeatures

  std::size_t num_voxels() const { return coords.size(); }
  std::size_t num_points() const { return offsets.empty() ? 0 : offsets.back(); }
};

/// Feature mask over the 13 point features; zeroed entries ablate a modality
/// while keeping the input layout fixed.
struct FeatureMask {
  std::array<bool, kPointFeatures> keep{};

  static FeatureMask all();
  static FeatureMask from_modalities(bool lidar, bool rgb, bool radar);
};

VoxelBatch make_voxel_batch(std::span<const Voxel> voxels, const FeatureMask& mask);

}  // namespace rvf
