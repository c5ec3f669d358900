#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rvf/voxel.hpp"

namespace rvf::ad {

struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first use
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward;
  // Optional row-activity hint for [H, W, C] maps: nonzero entries mark the
  // only cells that can hold nonzero values or need gradients.
  std::shared_ptr<const std::vector<std::uint8_t>> active_cells;

  std::size_t numel() const { return value.size(); }
  double* grad_data();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor constant(std::vector<int> shape, std::vector<double> values);
  static Tensor zeros(std::vector<int> shape);
  static Tensor parameter(std::vector<int> shape, std::vector<double> values);

  const std::vector<int>& shape() const { return node_->shape; }
  int dim(std::size_t k) const { return node_->shape.at(k); }
  std::size_t numel() const { return node_->numel(); }
  std::span<const double> data() const { return node_->value; }
  std::span<double> mutable_data() { return node_->value; }
  /// Empty until backward reached this tensor.
  std::span<const double> grad() const { return node_->grad; }
  double item() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void zero_grad() { node_->grad.clear(); }
  bool defined() const { return static_cast<bool>(node_); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Reverse-mode sweep from a scalar. Throws std::logic_error when the loss
/// is not connected to any parameter.
void backward(const Tensor& loss);

std::size_t numel_of(const std::vector<int>& shape);

// ---- elementwise / reductions ----------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor sum(const Tensor& a);
Tensor relu(const Tensor& a);
/// Same values under a new shape of equal size.
Tensor reshape(const Tensor& a, std::vector<int> shape);

// ---- dense layers -----------------------------------------------------------

/// [N, Cin] x [Cin, Cout] + [Cout].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Per-segment channel max over rows of [N, C]; segments given as CSR
/// offsets (K + 1 entries, all segments nonempty). Ties go to the first row.
Tensor segment_max(const Tensor& x, std::span<const std::size_t> offsets);

/// Row n of the result is [x_n, pooled_{segment(n)}].
Tensor concat_pooled(const Tensor& x, const Tensor& pooled, std::span<const std::size_t> offsets);

// ---- sparse 3D --------------------------------------------------------------

/// Neighbour pairs for a 3x3x3 submanifold convolution over a fixed site
/// set: for each of the 27 offsets, (input site, output site) pairs.
struct Rulebook {
  std::size_t num_sites = 0;
  std::array<std::vector<std::pair<std::uint32_t, std::uint32_t>>, 27> pairs;

  static Rulebook build(std::span<const VoxelCoord> coords);
};

/// Offset index k in [0, 27) encodes (dx, dy, dz) = (k / 9 - 1, k / 3 % 3 - 1, k % 3 - 1).
/// Kernel layout [27, Cin, Cout]; output sites equal input sites. No ReLU.
Tensor submanifold_conv3d(const Tensor& features, std::shared_ptr<const Rulebook> rules,
                          const Tensor& kernel, const Tensor& bias);

/// Scatters [M, C] site features into a zero [ny, nx, nz * C] BEV map with
/// channel index iz * C + c.
Tensor to_bev_dense(const Tensor& features, std::span<const VoxelCoord> coords, int nx, int ny, int nz);

// ---- dense 2D ---------------------------------------------------------------

/// Cross-correlation of an [H, W, Cin] map with a [k, k, Cin, Cout] kernel,
/// zero padding, plus bias. No ReLU.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int padding);

// ---- losses -----------------------------------------------------------------

/// sum_i w_i * bce(z_i, t_i) in the log-sum-exp form.
Tensor bce_with_logits_sum(const Tensor& logits, std::span<const double> targets,
                           std::span<const double> weights);

/// sum_i w_i * smooth_l1(p_i - t_i), transition at |d| = 1.
Tensor smooth_l1_sum(const Tensor& pred, std::span<const double> targets, std::span<const double> weights);

double bce_with_logits(double logit, double target);
double smooth_l1(double diff);

// ---- parameters -------------------------------------------------------------

class ParamStore {
 public:
  Tensor& add(const std::string& name, std::vector<int> shape, std::vector<double> values);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  void zero_grad();
  /// Deep copy of values; the clone shares no storage with this store.
  ParamStore clone() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

}  // namespace rvf::ad
