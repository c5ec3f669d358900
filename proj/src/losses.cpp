#include "rvf/losses.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace rvf {

void LossWeights::validate() const {
  if (cls < 0.0 || reg < 0.0 || dir < 0.0) throw std::invalid_argument("loss weights must be nonnegative");
  if (cls == 0.0 && reg == 0.0 && dir == 0.0) throw std::invalid_argument("loss weights must not all be zero");
}

LossBreakdown total_loss(const NetworkOutput& out, const TargetAssignment& targets, const LossWeights& w,
                         YawMode yaw_mode) {
  w.validate();
  const std::size_t n = targets.labels.size();
  if (out.cls.numel() != n || out.dir.numel() != n || out.reg.numel() != n * kRegDims) {
    throw std::invalid_argument("total_loss: head sizes do not match the anchor count");
  }
  const std::size_t non_ignored = targets.num_positive + targets.num_negative;
  const double cls_norm = non_ignored > 0 ? w.cls / static_cast<double>(non_ignored) : 0.0;
  const double pos_norm = 1.0 / static_cast<double>(std::max<std::size_t>(targets.num_positive, 1));

  std::vector<double> cls_t(n, 0.0), cls_w(n, 0.0);
  std::vector<double> dir_t(n, 0.0), dir_w(n, 0.0);
  std::vector<double> reg_t(n * kRegDims, 0.0), reg_w(n * kRegDims, 0.0);
  const double dir_scale = yaw_mode == YawMode::sine_bin ? w.dir * pos_norm : 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    const Label l = targets.labels[a];
    if (l == Label::ignore) continue;
    cls_w[a] = cls_norm;
    if (l != Label::positive) continue;
    cls_t[a] = 1.0;
    dir_t[a] = targets.dir_targets[a];
    dir_w[a] = dir_scale;
    for (int d = 0; d < kRegDims; ++d) {
      reg_t[a * kRegDims + d] = targets.reg_targets[a][d];
      reg_w[a * kRegDims + d] = w.reg * pos_norm;
    }
  }
  LossBreakdown b;
  const ad::Tensor lc = ad::bce_with_logits_sum(out.cls, cls_t, cls_w);
  const ad::Tensor lr = ad::smooth_l1_sum(out.reg, reg_t, reg_w);
  const ad::Tensor ld = ad::bce_with_logits_sum(out.dir, dir_t, dir_w);
  b.cls = lc.item();
  b.reg = lr.item();
  b.dir = ld.item();
  b.total = ad::add(ad::add(lc, lr), ld);
  return b;
}

}  // namespace rvf
