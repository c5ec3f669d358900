#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <stdexcept>
#include <vector>

#include "rvf/voxel.hpp"

using namespace rvf;

namespace {

FusedPoint pt(double x, double y, double z, Source s = Source::lidar) {
  FusedPoint p;
  p.x = x;
  p.y = y;
  p.z = z;
  p.source = s;
  return p;
}

Voxel make_voxel(int lidar, int radar, std::mt19937_64& rng) {
  Voxel v;
  std::vector<Source> sources(lidar, Source::lidar);
  sources.insert(sources.end(), radar, Source::radar);
  std::shuffle(sources.begin(), sources.end(), rng);
  for (std::size_t k = 0; k < sources.size(); ++k) v.points.push_back({pt(0.05, 0.05, 0.05, sources[k]), 0, 0, 0, k});
  return v;
}

}  // namespace

TEST_CASE("grid dimensions") {
  GridConfig g;
  CHECK(g.nx() == 250);
  CHECK(g.ny() == 200);
  CHECK(g.nz() == 15);
  g.z_max = 3.1;
  CHECK(g.nz() == 16);
  g.voxel_xy = 0.0;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("voxelize examples") {
  const GridConfig g;
  const Vec3 c = voxel_center({3, 4, 5}, g);
  const std::vector<FusedPoint> pts{pt(c.x, c.y, c.z), pt(0.0, -20.0, -3.0), pt(50.0, 0.0, 0.0), pt(1.0, 20.0, 0.0),
                                    pt(1.0, 0.0, 3.0)};
  const auto vox = voxelize(pts, g);
  REQUIRE(vox.size() == 2);
  CHECK(vox[0].coord == VoxelCoord{0, 0, 0});
  CHECK(vox[1].coord == VoxelCoord{3, 4, 5});
  CHECK(std::abs(vox[1].points[0].dx) < 1e-12);
  CHECK(std::abs(vox[1].points[0].dy) < 1e-12);
  CHECK(std::abs(vox[1].points[0].dz) < 1e-12);
  CHECK(vox[1].points[0].index == 0);
}

TEST_CASE("voxelize partitions the in-range points and offsets reconstruct them") {
  GridConfig g;
  g.x_max = 4.0;
  g.y_min = -2.0;
  g.y_max = 2.0;
  g.z_min = -1.0;
  g.z_max = 1.0;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ux(-1.0, 5.0), uy(-3.0, 3.0), uz(-1.5, 1.5);
  std::vector<FusedPoint> pts;
  std::size_t in_range = 0;
  for (int k = 0; k < 5000; ++k) {
    pts.push_back(pt(ux(rng), uy(rng), uz(rng)));
    const FusedPoint& p = pts.back();
    in_range += p.x >= 0 && p.x < 4 && p.y >= -2 && p.y < 2 && p.z >= -1 && p.z < 1;
  }
  const auto vox = voxelize(pts, g);
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (std::size_t k = 0; k < vox.size(); ++k) {
    if (k > 0) CHECK(vox[k - 1].coord < vox[k].coord);
    const Vec3 c = voxel_center(vox[k].coord, g);
    for (const VoxelPoint& vp : vox[k].points) {
      ++total;
      CHECK(seen.insert(vp.index).second);
      CHECK(std::abs(vp.dx) <= g.voxel_xy / 2 + 1e-12);
      CHECK(std::abs(vp.dy) <= g.voxel_xy / 2 + 1e-12);
      CHECK(std::abs(vp.dz) <= g.voxel_z / 2 + 1e-12);
      CHECK(std::abs(c.x + vp.dx - pts[vp.index].x) < 1e-9);
      CHECK(std::abs(c.y + vp.dy - pts[vp.index].y) < 1e-9);
      CHECK(std::abs(c.z + vp.dz - pts[vp.index].z) < 1e-9);
    }
    for (std::size_t j = 1; j < vox[k].points.size(); ++j) CHECK(vox[k].points[j - 1].index < vox[k].points[j].index);
  }
  CHECK(total == in_range);
}

TEST_CASE("centroid offsets sum to zero per voxel") {
  GridConfig g;
  g.offsets = OffsetMode::centroid;
  std::vector<FusedPoint> pts{pt(1.01, 0.02, 0.25), pt(1.07, 0.13, 0.3), pt(1.19, 0.11, 0.35)};
  auto vox = voxelize(pts, g);
  recenter_offsets(vox, g);
  REQUIRE(vox.size() == 1);
  double sx = 0, sy = 0, sz = 0;
  for (const VoxelPoint& vp : vox[0].points) {
    sx += vp.dx;
    sy += vp.dy;
    sz += vp.dz;
  }
  CHECK(std::abs(sx) < 1e-12);
  CHECK(std::abs(sy) < 1e-12);
  CHECK(std::abs(sz) < 1e-12);
}

TEST_CASE("cap_voxel examples") {
  std::mt19937_64 rng(5);
  {
    Voxel v = make_voxel(30, 0, rng);
    const Voxel c = cap_voxel(v, rng, 40);
    CHECK(c.points.size() == 30);
  }
  {
    const Voxel c = cap_voxel(make_voxel(50, 5, rng), rng, 40);
    REQUIRE(c.points.size() == 40);
    CHECK(std::count_if(c.points.begin(), c.points.end(),
                        [](const VoxelPoint& p) { return p.point.source == Source::radar; }) == 5);
  }
  {
    const Voxel c = cap_voxel(make_voxel(0, 45, rng), rng, 40);
    CHECK(c.points.size() == 40);
  }
}

TEST_CASE("cap_voxel never drops radar while keeping a non-radar point") {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> nl(0, 80), nr(0, 60);
  for (int trial = 0; trial < 1000; ++trial) {
    int lidar = nl(rng), radar = nr(rng);
    if (lidar + radar <= 40) lidar += 41 - (lidar + radar);
    const Voxel v = make_voxel(lidar, radar, rng);
    const Voxel c = cap_voxel(v, rng, 40);
    REQUIRE(c.points.size() == 40);
    const auto kept_radar = std::count_if(c.points.begin(), c.points.end(),
                                          [](const VoxelPoint& p) { return p.point.source == Source::radar; });
    const bool radar_dropped = kept_radar < radar;
    const bool other_kept = kept_radar < 40;
    CHECK_FALSE((radar_dropped && other_kept));
    std::set<std::size_t> ids;
    for (const VoxelPoint& p : c.points) ids.insert(p.index);
    CHECK(ids.size() == 40);
  }
}

TEST_CASE("capping is deterministic and order independent") {
  GridConfig g;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 0.19);
  std::vector<FusedPoint> pts;
  for (int k = 0; k < 300; ++k) pts.push_back(pt(u(rng), u(rng), u(rng), k % 7 == 0 ? Source::radar : Source::lidar));
  for (int k = 0; k < 300; ++k) pts.push_back(pt(1.0 + u(rng), u(rng), u(rng)));
  auto a = voxelize(pts, g);
  auto b = voxelize(pts, g);
  cap_voxels(a, 99, 40);
  std::reverse(b.begin(), b.end());
  cap_voxels(b, 99, 40);
  std::reverse(b.begin(), b.end());
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    REQUIRE(a[k].points.size() == b[k].points.size());
    CHECK(a[k].points.size() == 40);
    for (std::size_t j = 0; j < a[k].points.size(); ++j) CHECK(a[k].points[j].index == b[k].points[j].index);
  }
  auto c = voxelize(pts, g);
  cap_voxels(c, 100, 40);
  bool differs = false;
  for (std::size_t j = 0; j < 40; ++j) differs |= c[0].points[j].index != a[0].points[j].index;
  CHECK(differs);
}

TEST_CASE("to_sparse") {
  CHECK(to_sparse({}).size() == 0);
  std::vector<SiteFeatures> sites{{{1, 0, 0}, {1.0, 2.0}}, {{0, 5, 1}, {3.0, 4.0}}, {{0, 5, 0}, {5.0, 6.0}}};
  const SparseTensor t = to_sparse(sites);
  REQUIRE(t.size() == 3);
  CHECK(t.coords[0] == VoxelCoord{0, 5, 0});
  CHECK(t.row(0)[0] == 5.0);
  CHECK(t.row(2)[1] == 2.0);
  std::reverse(sites.begin(), sites.end());
  const SparseTensor u = to_sparse(sites);
  CHECK(u.coords == t.coords);
  CHECK(u.features == t.features);
  sites.push_back({{1, 0, 0}, {0.0, 0.0}});
  CHECK_THROWS_AS(to_sparse(sites), std::invalid_argument);
  CHECK_THROWS_AS(to_sparse({{{0, 0, 0}, {1.0}}, {{0, 0, 1}, {1.0, 2.0}}}), std::invalid_argument);
}

TEST_CASE("voxel batch layout and modality masks") {
  FusedPoint l = pt(1.05, 0.05, 0.1);
  l.i = 0.7;
  l.r = 0.2;
  l.g = 0.3;
  l.b = 0.4;
  FusedPoint r = pt(1.06, 0.06, 0.1, Source::radar);
  r.rcs = 9.0;
  r.vx = 1.5;
  r.vy = -0.5;
  const std::vector<FusedPoint> pts{l, r, pt(3.0, 0.0, 0.0)};
  const auto vox = voxelize(pts, GridConfig{});
  const VoxelBatch all = make_voxel_batch(vox, FeatureMask::all());
  CHECK(all.num_voxels() == 2);
  CHECK(all.num_points() == 3);
  CHECK(all.offsets == std::vector<std::size_t>{0, 2, 3});
  CHECK(all.features.size() == 3 * kPointFeatures);
  CHECK(all.features[3] == 0.7);
  CHECK(all.features[kPointFeatures + 7] == 9.0);
  CHECK(all.features[kPointFeatures + 8] == 1.5);

  const VoxelBatch lidar_only = make_voxel_batch(vox, FeatureMask::from_modalities(true, false, false));
  CHECK(lidar_only.features.size() == all.features.size());
  for (std::size_t k = 0; k < 3; ++k) {
    for (int c = 0; c < kPointFeatures; ++c) {
      const double v = lidar_only.features[k * kPointFeatures + c];
      if (c >= 4 && c <= 9) {
        CHECK(v == 0.0);
      } else {
        CHECK(v == all.features[k * kPointFeatures + c]);
      }
    }
  }
  const VoxelBatch radar_only = make_voxel_batch(vox, FeatureMask::from_modalities(false, false, true));
  CHECK(radar_only.features[3] == 0.0);
  CHECK(radar_only.features[kPointFeatures + 9] == -0.5);
}
