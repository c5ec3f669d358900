#include "rvf/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace rvf {

namespace {

int cell_count(double extent, double size) {
  return static_cast<int>(std::ceil(extent / size - 1e-9));
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t coord_hash(const VoxelCoord& c) {
  const auto u = [](int v) { return static_cast<std::uint64_t>(static_cast<std::uint32_t>(v)); };
  return splitmix64(u(c.ix) ^ splitmix64(u(c.iy) ^ splitmix64(u(c.iz))));
}

}  // namespace

void GridConfig::validate() const {
  if (!(x_max > x_min) || !(y_max > y_min) || !(z_max > z_min)) {
    throw std::invalid_argument("grid: empty range");
  }
  if (!(voxel_xy > 0.0) || !(voxel_z > 0.0)) throw std::invalid_argument("grid: voxel size must be positive");
  if (max_points < 1) throw std::invalid_argument("grid: max_points must be at least 1");
}

int GridConfig::nx() const { return cell_count(x_max - x_min, voxel_xy); }
int GridConfig::ny() const { return cell_count(y_max - y_min, voxel_xy); }
int GridConfig::nz() const { return cell_count(z_max - z_min, voxel_z); }

bool operator==(const GridConfig& a, const GridConfig& b) {
  return a.x_min == b.x_min && a.x_max == b.x_max && a.y_min == b.y_min && a.y_max == b.y_max &&
         a.z_min == b.z_min && a.z_max == b.z_max && a.voxel_xy == b.voxel_xy &&
         a.voxel_z == b.voxel_z && a.max_points == b.max_points && a.offsets == b.offsets;
}

Vec3 voxel_center(const VoxelCoord& c, const GridConfig& cfg) {
  return {cfg.x_min + (c.ix + 0.5) * cfg.voxel_xy, cfg.y_min + (c.iy + 0.5) * cfg.voxel_xy,
          cfg.z_min + (c.iz + 0.5) * cfg.voxel_z};
}

std::vector<Voxel> voxelize(std::span<const FusedPoint> points, const GridConfig& cfg) {
  cfg.validate();
  const int nx = cfg.nx();
  const int ny = cfg.ny();
  const int nz = cfg.nz();
  std::map<VoxelCoord, std::vector<VoxelPoint>> cells;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const FusedPoint& p = points[k];
    if (!(p.x >= cfg.x_min && p.x < cfg.x_max && p.y >= cfg.y_min && p.y < cfg.y_max &&
          p.z >= cfg.z_min && p.z < cfg.z_max)) {
      continue;
    }
    const VoxelCoord c{static_cast<int>(std::floor((p.x - cfg.x_min) / cfg.voxel_xy)),
                       static_cast<int>(std::floor((p.y - cfg.y_min) / cfg.voxel_xy)),
                       static_cast<int>(std::floor((p.z - cfg.z_min) / cfg.voxel_z))};
    if (c.ix < 0 || c.ix >= nx || c.iy < 0 || c.iy >= ny || c.iz < 0 || c.iz >= nz) continue;
    const Vec3 ctr = voxel_center(c, cfg);
    cells[c].push_back({p, p.x - ctr.x, p.y - ctr.y, p.z - ctr.z, k});
  }
  std::vector<Voxel> out;
  out.reserve(cells.size());
  for (auto& [coord, pts] : cells) out.push_back({coord, std::move(pts)});
  return out;
}

Voxel cap_voxel(Voxel v, std::mt19937_64& rng, int max_points) {
  const auto limit = static_cast<std::size_t>(max_points);
  if (v.points.size() <= limit) return v;
  std::vector<VoxelPoint> radar;
  std::vector<VoxelPoint> other;
  for (VoxelPoint& p : v.points) {
    (p.point.source == Source::radar ? radar : other).push_back(std::move(p));
  }
  std::vector<VoxelPoint> kept;
  kept.reserve(limit);
  if (radar.size() >= limit) {
    std::sample(radar.begin(), radar.end(), std::back_inserter(kept), limit, rng);
  } else {
    kept = std::move(radar);
    std::sample(other.begin(), other.end(), std::back_inserter(kept), limit - kept.size(), rng);
  }
  std::sort(kept.begin(), kept.end(),
            [](const VoxelPoint& a, const VoxelPoint& b) { return a.index < b.index; });
  v.points = std::move(kept);
  return v;
}

void cap_voxels(std::vector<Voxel>& voxels, std::uint64_t seed, int max_points) {
  for (Voxel& v : voxels) {
    if (v.points.size() <= static_cast<std::size_t>(max_points)) continue;
    std::mt19937_64 rng(seed ^ coord_hash(v.coord));
    v = cap_voxel(std::move(v), rng, max_points);
  }
}

void recenter_offsets(std::vector<Voxel>& voxels, const GridConfig& cfg) {
  if (cfg.offsets == OffsetMode::center) return;
  for (Voxel& v : voxels) {
    double mx = 0.0, my = 0.0, mz = 0.0;
    for (const VoxelPoint& p : v.points) {
      mx += p.point.x;
      my += p.point.y;
      mz += p.point.z;
    }
    const double n = static_cast<double>(v.points.size());
    mx /= n;
    my /= n;
    mz /= n;
    for (VoxelPoint& p : v.points) {
      p.dx = p.point.x - mx;
      p.dy = p.point.y - my;
      p.dz = p.point.z - mz;
    }
  }
}

SparseTensor to_sparse(std::vector<SiteFeatures> sites) {
  SparseTensor out;
  if (sites.empty()) return out;
  std::sort(sites.begin(), sites.end(),
            [](const SiteFeatures& a, const SiteFeatures& b) { return a.coord < b.coord; });
  out.channels = static_cast<int>(sites.front().features.size());
  out.coords.reserve(sites.size());
  out.features.reserve(sites.size() * out.channels);
  for (std::size_t k = 0; k < sites.size(); ++k) {
    if (k > 0 && sites[k].coord == sites[k - 1].coord) {
      throw std::invalid_argument("to_sparse: duplicate coordinate");
    }
    if (static_cast<int>(sites[k].features.size()) != out.channels) {
      throw std::invalid_argument("to_sparse: inconsistent channel count");
    }
    out.coords.push_back(sites[k].coord);
    out.features.insert(out.features.end(), sites[k].features.begin(), sites[k].features.end());
  }
  return out;
}

FeatureMask FeatureMask::all() {
  FeatureMask m;
  m.keep.fill(true);
  return m;
}

FeatureMask FeatureMask::from_modalities(bool lidar, bool rgb, bool radar) {
  FeatureMask m;
  m.keep.fill(true);
  m.keep[3] = lidar;
  m.keep[4] = m.keep[5] = m.keep[6] = rgb;
  m.keep[7] = m.keep[8] = m.keep[9] = radar;
  return m;
}

VoxelBatch make_voxel_batch(std::span<const Voxel> voxels, const FeatureMask& mask) {
  VoxelBatch batch;
  batch.coords.reserve(voxels.size());
  batch.offsets.reserve(voxels.size() + 1);
  batch.offsets.push_back(0);
  for (const Voxel& v : voxels) {
    if (v.points.empty()) throw std::invalid_argument("make_voxel_batch: empty voxel");
    if (!batch.coords.empty() && !(batch.coords.back() < v.coord)) {
      throw std::invalid_argument("make_voxel_batch: voxels must be sorted and unique");
    }
    batch.coords.push_back(v.coord);
    for (const VoxelPoint& vp : v.points) {
      const FusedPoint& p = vp.point;
      const std::array<double, kPointFeatures> f{p.x,  p.y,  p.z,   p.i,   p.r,   p.g, p.b,
                                                 p.rcs, p.vx, p.vy, vp.dx, vp.dy, vp.dz};
      for (int c = 0; c < kPointFeatures; ++c) batch.features.push_back(mask.keep[c] ? f[c] : 0.0);
    }
    batch.offsets.push_back(batch.offsets.back() + v.points.size());
  }
  return batch;
}

}  // namespace rvf
