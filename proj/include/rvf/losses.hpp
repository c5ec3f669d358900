#pragma once

#include "rvf/autodiff.hpp"
#include "rvf/net.hpp"
#include "rvf/targets.hpp"

namespace rvf {

struct LossWeights {
  double cls = 1.0;
  double reg = 2.0;
  double dir = 0.2;

  void validate() const;
};

struct LossBreakdown {
  ad::Tensor total;  // scalar, differentiable
  double cls = 0.0;  // weighted components, for logging
  double reg = 0.0;
  double dir = 0.0;
};

/// Classification BCE averaged over non-ignored anchors, smooth-L1 over the
/// seven regression targets and BCE on the direction bin, both normalized by
/// max(positives, 1). Ignored anchors contribute nothing. With
/// `YawMode::simple` the direction term is dropped.
LossBreakdown total_loss(const NetworkOutput& out, const TargetAssignment& targets, const LossWeights& w,
                         YawMode yaw_mode = YawMode::sine_bin);

}  // namespace rvf
