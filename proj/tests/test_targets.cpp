#include <doctest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "rvf/targets.hpp"

using namespace rvf;

namespace {

double angle_gap(double a, double b) {
  const double d = std::abs(std::remainder(a - b, kTwoPi));
  return d;
}

GridConfig small_grid() {
  GridConfig g;
  g.x_min = 0.0;
  g.x_max = 8.0;
  g.y_min = -4.0;
  g.y_max = 4.0;
  g.voxel_xy = 0.4;
  return g;
}

}  // namespace

TEST_CASE("anchor generation") {
  GridConfig g = small_grid();
  g.x_max = 0.8;
  g.y_max = -3.2;
  const auto anchors = generate_anchors(g, AnchorConfig{});
  REQUIRE(anchors.size() == 8);
  CHECK(anchors[0].x == doctest::Approx(0.2));
  CHECK(anchors[0].y == doctest::Approx(-3.8));
  CHECK(anchors[0].yaw == 0.0);
  CHECK(anchors[1].yaw == doctest::Approx(kPi / 2));
  CHECK(anchors[2].x == doctest::Approx(0.6));
  for (const Anchor& a : anchors) {
    CHECK(a.w == 1.9);
    CHECK(a.l == 4.6);
    CHECK(a.h == 1.7);
    CHECK(a.z == -1.0);
  }
  GridConfig full_size;
  CHECK(generate_anchors(full_size, AnchorConfig{})[0].x == doctest::Approx(0.1));
  const AnchorGrid strided = AnchorGrid::from(small_grid(), 2);
  CHECK(strided.nx == 10);
  CHECK(strided.cell == doctest::Approx(0.8));
  CHECK(generate_anchors(small_grid(), AnchorConfig{}, 2).size() == 10u * 10u * 2u);
}

TEST_CASE("anchor labels from IoU and distance") {
  const MatchConfig cfg;
  CHECK(anchor_label(0.40, 3.0, cfg) == Label::positive);
  CHECK(anchor_label(0.32, 1.0, cfg) == Label::ignore);
  CHECK(anchor_label(0.10, 0.4, cfg) == Label::positive);
  CHECK(anchor_label(0.29, 0.6, cfg) == Label::negative);
  CHECK(anchor_label(0.35, 9.0, cfg) == Label::positive);
  CHECK(anchor_label(0.30, 9.0, cfg) == Label::ignore);
  MatchConfig iou_only;
  iou_only.use_distance = false;
  CHECK(anchor_label(0.10, 0.0, iou_only) == Label::negative);
  MatchConfig bad;
  bad.iou_neg = 0.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("match_anchors labels partition the anchors") {
  const auto anchors = generate_anchors(small_grid(), AnchorConfig{});
  const std::vector<BBox3D> gts{{4.2, 0.2, -1.0, 1.9, 4.6, 1.7, 0.0}, {2.0, -2.5, -0.9, 1.8, 4.2, 1.6, 1.2}};
  const TargetAssignment t = match_anchors(anchors, gts);
  REQUIRE(t.labels.size() == anchors.size());
  std::size_t pos = 0, neg = 0, ign = 0;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    double best = 0.0, nearest = 1e9;
    for (const BBox3D& g : gts) {
      best = std::max(best, bev_iou(anchors[a].box(), g));
      nearest = std::min(nearest, center_distance(anchors[a].box(), g));
    }
    switch (t.labels[a]) {
      case Label::positive:
        ++pos;
        CHECK(t.matched_gt[a] >= 0);
        break;
      case Label::negative:
        ++neg;
        CHECK(best < 0.30);
        CHECK(nearest > 0.5);
        CHECK(t.matched_gt[a] == -1);
        break;
      case Label::ignore:
        ++ign;
        CHECK(t.matched_gt[a] == -1);
        break;
    }
    if (best >= 0.35 || nearest <= 0.5) CHECK(t.labels[a] == Label::positive);
    if (t.labels[a] != Label::positive) {
      for (double r : t.reg_targets[a]) CHECK(r == 0.0);
      CHECK(t.dir_targets[a] == 0);
    }
  }
  CHECK(pos == t.num_positive);
  CHECK(neg == t.num_negative);
  CHECK(pos + neg + ign == anchors.size());

  // The anchor sitting exactly on the first gt regresses to zero.
  std::size_t exact = 0;
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    if (std::abs(anchors[a].x - 4.2) < 1e-9 && std::abs(anchors[a].y - 0.2) < 1e-9 && anchors[a].yaw == 0.0) exact = a;
  }
  CHECK(t.labels[exact] == Label::positive);
  CHECK(t.matched_gt[exact] == 0);
  for (int k = 0; k < 6; ++k) CHECK(std::abs(t.reg_targets[exact][k]) < 1e-12);
  CHECK(t.dir_targets[exact] == 1);
}

TEST_CASE("positive anchors take the highest-IoU gt") {
  const std::vector<Anchor> anchors{{0, 0, -1, 1.9, 4.6, 1.7, 0.0}};
  const std::vector<BBox3D> gts{{0.3, 0, -1, 1.9, 4.6, 1.7, 0.0}, {0.1, 0, -1, 1.9, 4.6, 1.7, 0.0}};
  const TargetAssignment t = match_anchors(anchors, gts);
  CHECK(t.labels[0] == Label::positive);
  CHECK(t.matched_gt[0] == 1);
}

TEST_CASE("the best anchor of a gt is forced positive") {
  const auto anchors = generate_anchors(small_grid(), AnchorConfig{});
  const std::vector<BBox3D> gts{{3.0, 1.0, -1.0, 0.3, 0.3, 1.0, 0.0}};
  MatchConfig cfg;
  cfg.use_distance = false;
  const TargetAssignment forced = match_anchors(anchors, gts, cfg);
  CHECK(forced.num_positive == 1);
  cfg.force_best_anchor = false;
  CHECK(match_anchors(anchors, gts, cfg).num_positive == 0);
  // No gt at all: every anchor negative.
  const TargetAssignment empty = match_anchors(anchors, std::vector<BBox3D>{});
  CHECK(empty.num_negative == anchors.size());
}

TEST_CASE("encode_regression examples") {
  const Anchor a{10, 2, -1, 3, 4, 1.5, 0};  // diagonal 5
  auto r = encode_regression(a.box(), a);
  for (double v : r) CHECK(std::abs(v) < 1e-15);
  BBox3D g = a.box();
  g.w = 6;
  r = encode_regression(g, a);
  CHECK(r[3] == doctest::Approx(std::log(2.0)));
  g = a.box();
  g.x += 1.0;
  r = encode_regression(g, a);
  CHECK(r[0] == doctest::Approx(0.2));
  g.h = 0.0;
  CHECK_THROWS_AS(encode_regression(g, a), std::invalid_argument);
}

TEST_CASE("encode_yaw examples") {
  auto y = encode_yaw(0.0, 0.0);
  CHECK(y.e_theta == 0.0);
  CHECK(y.c_dir == 1);
  y = encode_yaw(kPi, 0.0);
  CHECK(std::abs(y.e_theta) < 1e-15);
  CHECK(y.c_dir == 0);
  y = encode_yaw(kPi / 6, 0.0);
  CHECK(y.e_theta == doctest::Approx(0.5));
  CHECK(y.c_dir == 1);
  y = encode_yaw(5 * kPi / 6, 0.0);
  CHECK(y.e_theta == doctest::Approx(0.5));
  CHECK(y.c_dir == 0);
  CHECK(encode_yaw(-kPi / 2, 0.0).c_dir == 1);
  CHECK(encode_yaw(kPi / 2, 0.0).c_dir == 0);
}

TEST_CASE("encode_yaw is 2pi-periodic and continuous at the wrap point") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-kPi, kPi);
  for (int n = 0; n < 500; ++n) {
    const double t = u(rng), a = n % 2 ? kPi / 2 : 0.0;
    const YawTarget base = encode_yaw(t, a);
    for (int k = -2; k <= 2; ++k) {
      const YawTarget s = encode_yaw(t + kTwoPi * k, a);
      CHECK(std::abs(s.e_theta - base.e_theta) < 1e-12);
      if (std::abs(std::abs(wrap_angle(t - a)) - kPi / 2) > 1e-9) CHECK(s.c_dir == base.c_dir);
    }
  }
  for (double eps : {1e-2, 1e-4, 1e-6}) {
    const double gap = std::abs(encode_yaw(kPi - eps, 0.0).e_theta - encode_yaw(-kPi + eps, 0.0).e_theta);
    CHECK(gap < 3 * eps);
  }
}

TEST_CASE("decode_box examples") {
  const Anchor a{5, 1, -1, 1.9, 4.6, 1.7, 0.0};
  const std::vector<double> zero(7, 0.0);
  const BBox3D b = decode_box(a, zero, 1.0);
  CHECK(b.x == a.x);
  CHECK(b.y == a.y);
  CHECK(b.z == a.z);
  CHECK(b.w == a.w);
  CHECK(b.l == a.l);
  CHECK(b.h == a.h);
  CHECK(b.yaw == 0.0);
  std::vector<double> reg(7, 0.0);
  reg[6] = 0.5;
  CHECK(decode_box(a, reg, 1.0).yaw == doctest::Approx(kPi / 6));
  CHECK(decode_box(a, reg, 0.2).yaw == doctest::Approx(5 * kPi / 6));
  reg[6] = 3.0;  // clamped to asin(1)
  CHECK(decode_box(a, reg, 1.0).yaw == doctest::Approx(kPi / 2));
  CHECK_THROWS_AS(decode_box(a, std::vector<double>(6, 0.0), 1.0), std::invalid_argument);
}

TEST_CASE("decode inverts encode over a 360-point yaw grid for both anchor yaws") {
  for (double anchor_yaw : {0.0, kPi / 2}) {
    const Anchor a{12, -3, -1, 1.9, 4.6, 1.7, anchor_yaw};
    for (int k = 0; k < 360; ++k) {
      const BBox3D gt{12.7, -2.1, -0.8, 2.1, 4.9, 1.5, -kPi + kTwoPi * k / 360.0};
      for (YawMode mode : {YawMode::sine_bin, YawMode::simple}) {
        const auto reg = encode_regression(gt, a, mode);
        const double dir = encode_yaw(gt.yaw, a.yaw).c_dir ? 1.0 : 0.0;
        const BBox3D d = decode_box(a, reg, dir, mode);
        CHECK(std::abs(d.x - gt.x) < 1e-9);
        CHECK(std::abs(d.y - gt.y) < 1e-9);
        CHECK(std::abs(d.z - gt.z) < 1e-9);
        CHECK(std::abs(d.w - gt.w) < 1e-9);
        CHECK(std::abs(d.l - gt.l) < 1e-9);
        CHECK(std::abs(d.h - gt.h) < 1e-9);
        CHECK(angle_gap(d.yaw, gt.yaw) < 1e-9);
        CHECK(d.yaw >= -kPi);
        CHECK(d.yaw < kPi);
      }
    }
  }
}
