#include "rvf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace rvf::ad {

double* Node::grad_data() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad.data();
}

std::size_t numel_of(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw std::invalid_argument("tensor: negative dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor Tensor::constant(std::vector<int> shape, std::vector<double> values) {
  if (numel_of(shape) != values.size()) throw std::invalid_argument("tensor: shape/data size mismatch");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(std::vector<int> shape) {
  const std::size_t n = numel_of(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::parameter(std::vector<int> shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

double Tensor::item() const {
  if (numel() != 1) throw std::logic_error("tensor: item() on non-scalar");
  return node_->value[0];
}

namespace {

std::shared_ptr<Node> make_output(std::vector<int> shape, std::initializer_list<const Tensor*> inputs) {
  auto out = std::make_shared<Node>();
  out->shape = std::move(shape);
  out->value.assign(numel_of(out->shape), 0.0);
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) out->requires_grad = true;
  }
  // Backward closures read input values through raw pointers, so every
  // input stays alive with the graph, constants included.
  if (out->requires_grad) {
    for (const Tensor* t : inputs) out->parents.push_back(t->node());
  }
  return out;
}

void require_shape(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

void backward(const Tensor& loss) {
  if (!loss.defined() || !loss.requires_grad()) {
    throw std::logic_error("backward: tensor is not attached to a graph");
  }
  if (loss.numel() != 1) throw std::logic_error("backward: loss must be a scalar");

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->grad_data()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward();
  }
}

// ---- elementwise / reductions ----------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_shape(a.shape() == b.shape(), "add: shape mismatch");
  auto out = make_output(a.shape(), {&a, &b});
  for (std::size_t k = 0; k < out->value.size(); ++k) out->value[k] = a.data()[k] + b.data()[k];
  if (out->requires_grad) {
    Node* o = out.get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    out->backward = [o, an, bn] {
      for (Node* p : {an, bn}) {
        if (!p->requires_grad) continue;
        double* g = p->grad_data();
        for (std::size_t k = 0; k < o->grad.size(); ++k) g[k] += o->grad[k];
      }
    };
  }
  return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_shape(a.shape() == b.shape(), "mul: shape mismatch");
  auto out = make_output(a.shape(), {&a, &b});
  for (std::size_t k = 0; k < out->value.size(); ++k) out->value[k] = a.data()[k] * b.data()[k];
  if (out->requires_grad) {
    Node* o = out.get();
    Node* an = a.node().get();
    Node* bn = b.node().get();
    out->backward = [o, an, bn] {
      if (an->requires_grad) {
        double* g = an->grad_data();
        for (std::size_t k = 0; k < o->grad.size(); ++k) g[k] += o->grad[k] * bn->value[k];
      }
      if (bn->requires_grad) {
        double* g = bn->grad_data();
        for (std::size_t k = 0; k < o->grad.size(); ++k) g[k] += o->grad[k] * an->value[k];
      }
    };
  }
  return Tensor(out);
}

Tensor scale(const Tensor& a, double s) {
  auto out = make_output(a.shape(), {&a});
  for (std::size_t k = 0; k < out->value.size(); ++k) out->value[k] = s * a.data()[k];
  if (out->requires_grad) {
    Node* o = out.get();
    Node* an = a.node().get();
    out->backward = [o, an, s] {
      double* g = an->grad_data();
      for (std::size_t k = 0; k < o->grad.size(); ++k) g[k] += s * o->grad[k];
    };
  }
  return Tensor(out);
}

Tensor sum(const Tensor& a) {
  auto out = make_output({1}, {&a});
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  out->value[0] = acc;
  if (out->requires_grad) {
    Node* o = out.get();
    Node* an = a.node().get();
    out->backward = [o, an] {
      double* g = an->grad_data();
      for (std::size_t k = 0; k < an->value.size(); ++k) g[k] += o->grad[0];
    };
  }
  return Tensor(out);
}

Tensor relu(const Tensor& a) {
  auto out = make_output(a.shape(), {&a});
  for (std::size_t k = 0; k < out->value.size(); ++k) out->value[k] = std::max(a.data()[k], 0.0);
  out->active_cells = a.node()->active_cells;
  if (out->requires_grad) {
    Node* o = out.get();
    Node* an = a.node().get();
    out->backward = [o, an] {
      double* g = an->grad_data();
      for (std::size_t k = 0; k < o->grad.size(); ++k) {
        if (an->value[k] > 0.0) g[k] += o->grad[k];
      }
    };
  }
  return Tensor(out);
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  require_shape(numel_of(shape) == a.numel(), "reshape: size mismatch");
  auto out = make_output(std::move(shape), {&a});
  std::copy(a.data().begin(), a.data().end(), out->value.begin());
  if (out->requires_grad) {
    Node* o = out.get();
    Node* an = a.node().get();
    out->backward = [o, an] {
      double* g = an->grad_data();
      for (std::size_t k = 0; k < o->grad.size(); ++k) g[k] += o->grad[k];
    };
  }
  return Tensor(out);
}

// ---- dense layers -----------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_shape(x.shape().size() == 2 && weight.shape().size() == 2 && bias.shape().size() == 1,
                "linear: expected [N,Cin], [Cin,Cout], [Cout]");
  const int n = x.dim(0);
  const int cin = x.dim(1);
  const int cout = weight.dim(1);
  require_shape(weight.dim(0) == cin && bias.dim(0) == cout, "linear: shape mismatch");
  auto out = make_output({n, cout}, {&x, &weight, &bias});
  const double* xv = x.data().data();
  const double* wv = weight.data().data();
  const double* bv = bias.data().data();
  double* ov = out->value.data();
  for (int r = 0; r < n; ++r) {
    double* orow = ov + static_cast<std::size_t>(r) * cout;
    std::copy(bv, bv + cout, orow);
    const double* xrow = xv + static_cast<std::size_t>(r) * cin;
    for (int i = 0; i < cin; ++i) {
      const double a = xrow[i];
      if (a == 0.0) continue;
      const double* wrow = wv + static_cast<std::size_t>(i) * cout;
      for (int o = 0; o < cout; ++o) orow[o] += a * wrow[o];
    }
  }
  if (out->requires_grad) {
    Node* on = out.get();
    Node* xn = x.node().get();
    Node* wn = weight.node().get();
    Node* bn = bias.node().get();
    out->backward = [on, xn, wn, bn, n, cin, cout] {
      const double* go = on->grad.data();
      if (bn->requires_grad) {
        double* gb = bn->grad_data();
        for (int r = 0; r < n; ++r) {
          for (int o = 0; o < cout; ++o) gb[o] += go[static_cast<std::size_t>(r) * cout + o];
        }
      }
      if (wn->requires_grad) {
        double* gw = wn->grad_data();
        for (int r = 0; r < n; ++r) {
          const double* xrow = xn->value.data() + static_cast<std::size_t>(r) * cin;
          const double* grow = go + static_cast<std::size_t>(r) * cout;
          for (int i = 0; i < cin; ++i) {
            const double a = xrow[i];
            if (a == 0.0) continue;
            double* gwrow = gw + static_cast<std::size_t>(i) * cout;
            for (int o = 0; o < cout; ++o) gwrow[o] += a * grow[o];
          }
        }
      }
      if (xn->requires_grad) {
        double* gx = xn->grad_data();
        for (int r = 0; r < n; ++r) {
          const double* grow = go + static_cast<std::size_t>(r) * cout;
          double* gxrow = gx + static_cast<std::size_t>(r) * cin;
          for (int i = 0; i < cin; ++i) {
            const double* wrow = wn->value.data() + static_cast<std::size_t>(i) * cout;
            double acc = 0.0;
            for (int o = 0; o < cout; ++o) acc += wrow[o] * grow[o];
            gxrow[i] += acc;
          }
        }
      }
    };
  }
  return Tensor(out);
}

namespace {

void check_offsets(std::span<const std::size_t> offsets, int rows) {
  require_shape(!offsets.empty() && offsets.front() == 0 && offsets.back() == static_cast<std::size_t>(rows),
                "segments: offsets do not cover the rows");
  for (std::size_t k = 1; k < offsets.size(); ++k) {
    if (offsets[k] <= offsets[k - 1]) throw std::invalid_argument("segments: empty segment");
  }
}

}  // namespace

Tensor segment_max(const Tensor& x, std::span<const std::size_t> offsets) {
  require_shape(x.shape().size() == 2, "segment_max: expected [N, C]");
  const int c = x.dim(1);
  check_offsets(offsets, x.dim(0));
  const int k = static_cast<int>(offsets.size()) - 1;
  auto out = make_output({k, c}, {&x});
  auto argmax = std::make_shared<std::vector<std::size_t>>(static_cast<std::size_t>(k) * c);
  const double* xv = x.data().data();
  for (int s = 0; s < k; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      std::size_t best = offsets[s];
      double bv = xv[best * c + ch];
      for (std::size_t r = offsets[s] + 1; r < offsets[s + 1]; ++r) {
        const double v = xv[r * c + ch];
        if (v > bv) {
          bv = v;
          best = r;
        }
      }
      out->value[static_cast<std::size_t>(s) * c + ch] = bv;
      (*argmax)[static_cast<std::size_t>(s) * c + ch] = best;
    }
  }
  if (out->requires_grad) {
    Node* on = out.get();
    Node* xn = x.node().get();
    out->backward = [on, xn, argmax, c] {
      double* gx = xn->grad_data();
      for (std::size_t j = 0; j < argmax->size(); ++j) {
        gx[(*argmax)[j] * c + j % c] += on->grad[j];
      }
    };
  }
  return Tensor(out);
}

Tensor concat_pooled(const Tensor& x, const Tensor& pooled, std::span<const std::size_t> offsets) {
  require_shape(x.shape().size() == 2 && pooled.shape().size() == 2 && x.dim(1) == pooled.dim(1),
                "concat_pooled: channel mismatch");
  const int n = x.dim(0);
  const int c = x.dim(1);
  check_offsets(offsets, n);
  require_shape(pooled.dim(0) + 1 == static_cast<int>(offsets.size()), "concat_pooled: segment count mismatch");
  auto out = make_output({n, 2 * c}, {&x, &pooled});
  std::vector<std::uint32_t> seg(n);
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) seg[r] = static_cast<std::uint32_t>(s);
  }
  for (int r = 0; r < n; ++r) {
    double* orow = out->value.data() + static_cast<std::size_t>(r) * 2 * c;
    std::copy_n(x.data().data() + static_cast<std::size_t>(r) * c, c, orow);
    std::copy_n(pooled.data().data() + static_cast<std::size_t>(seg[r]) * c, c, orow + c);
  }
  if (out->requires_grad) {
    Node* on = out.get();
    Node* xn = x.node().get();
    Node* pn = pooled.node().get();
    out->backward = [on, xn, pn, seg = std::move(seg), n, c] {
      const double* go = on->grad.data();
      if (xn->requires_grad) {
        double* gx = xn->grad_data();
        for (int r = 0; r < n; ++r) {
          for (int ch = 0; ch < c; ++ch) gx[static_cast<std::size_t>(r) * c + ch] += go[static_cast<std::size_t>(r) * 2 * c + ch];
        }
      }
      if (pn->requires_grad) {
        double* gp = pn->grad_data();
        for (int r = 0; r < n; ++r) {
          for (int ch = 0; ch < c; ++ch) {
            gp[static_cast<std::size_t>(seg[r]) * c + ch] += go[static_cast<std::size_t>(r) * 2 * c + c + ch];
          }
        }
      }
    };
  }
  return Tensor(out);
}

// ---- sparse 3D --------------------------------------------------------------

namespace {

std::uint64_t pack(int x, int y, int z) {
  const auto u = [](int v) { return static_cast<std::uint64_t>(static_cast<std::uint32_t>(v + (1 << 20))) & 0x1FFFFF; };
  return (u(x) << 42) | (u(y) << 21) | u(z);
}

}  // namespace

Rulebook Rulebook::build(std::span<const VoxelCoord> coords) {
  Rulebook rb;
  rb.num_sites = coords.size();
  std::unordered_map<std::uint64_t, std::uint32_t> index;
  index.reserve(coords.size() * 2);
  for (std::size_t k = 0; k < coords.size(); ++k) {
    if (!index.emplace(pack(coords[k].ix, coords[k].iy, coords[k].iz), static_cast<std::uint32_t>(k)).second) {
      throw std::invalid_argument("rulebook: duplicate site");
    }
  }
  for (int k = 0; k < 27; ++k) {
    const int dx = k / 9 - 1;
    const int dy = k / 3 % 3 - 1;
    const int dz = k % 3 - 1;
    for (std::size_t o = 0; o < coords.size(); ++o) {
      const auto it = index.find(pack(coords[o].ix + dx, coords[o].iy + dy, coords[o].iz + dz));
      if (it != index.end()) rb.pairs[k].emplace_back(it->second, static_cast<std::uint32_t>(o));
    }
  }
  return rb;
}

Tensor submanifold_conv3d(const Tensor& features, std::shared_ptr<const Rulebook> rules_ptr,
                          const Tensor& kernel, const Tensor& bias) {
  require_shape(rules_ptr != nullptr, "submanifold_conv3d: missing rulebook");
  const Rulebook& rules = *rules_ptr;
  require_shape(features.shape().size() == 2 && kernel.shape().size() == 3 && bias.shape().size() == 1,
                "submanifold_conv3d: expected [M,Cin], [27,Cin,Cout], [Cout]");
  const int m = features.dim(0);
  const int cin = features.dim(1);
  const int cout = kernel.dim(2);
  require_shape(kernel.dim(0) == 27 && kernel.dim(1) == cin && bias.dim(0) == cout,
                "submanifold_conv3d: kernel shape mismatch");
  require_shape(static_cast<std::size_t>(m) == rules.num_sites, "submanifold_conv3d: rulebook/site mismatch");
  auto out = make_output({m, cout}, {&features, &kernel, &bias});
  const double* fv = features.data().data();
  const double* kv = kernel.data().data();
  double* ov = out->value.data();
  for (int r = 0; r < m; ++r) std::copy_n(bias.data().data(), cout, ov + static_cast<std::size_t>(r) * cout);
  for (int k = 0; k < 27; ++k) {
    const double* wk = kv + static_cast<std::size_t>(k) * cin * cout;
    for (const auto& [in, o] : rules.pairs[k]) {
      const double* frow = fv + static_cast<std::size_t>(in) * cin;
      double* orow = ov + static_cast<std::size_t>(o) * cout;
      for (int i = 0; i < cin; ++i) {
        const double a = frow[i];
        if (a == 0.0) continue;
        const double* wrow = wk + static_cast<std::size_t>(i) * cout;
        for (int c = 0; c < cout; ++c) orow[c] += a * wrow[c];
      }
    }
  }
  if (out->requires_grad) {
    Node* on = out.get();
    Node* fn = features.node().get();
    Node* kn = kernel.node().get();
    Node* bn = bias.node().get();
    std::shared_ptr<const Rulebook> rb = rules_ptr;
    out->backward = [on, fn, kn, bn, rb, m, cin, cout] {
      const double* go = on->grad.data();
      if (bn->requires_grad) {
        double* gb = bn->grad_data();
        for (int r = 0; r < m; ++r) {
          for (int c = 0; c < cout; ++c) gb[c] += go[static_cast<std::size_t>(r) * cout + c];
        }
      }
      double* gk = kn->requires_grad ? kn->grad_data() : nullptr;
      double* gf = fn->requires_grad ? fn->grad_data() : nullptr;
      for (int k = 0; k < 27; ++k) {
        const double* wk = kn->value.data() + static_cast<std::size_t>(k) * cin * cout;
        for (const auto& [in, o] : rb->pairs[k]) {
          const double* frow = fn->value.data() + static_cast<std::size_t>(in) * cin;
          const double* grow = go + static_cast<std::size_t>(o) * cout;
          if (gk) {
            double* gkk = gk + static_cast<std::size_t>(k) * cin * cout;
            for (int i = 0; i < cin; ++i) {
              const double a = frow[i];
              if (a == 0.0) continue;
              double* gw = gkk + static_cast<std::size_t>(i) * cout;
              for (int c = 0; c < cout; ++c) gw[c] += a * grow[c];
            }
          }
          if (gf) {
            double* gfrow = gf + static_cast<std::size_t>(in) * cin;
            for (int i = 0; i < cin; ++i) {
              const double* wrow = wk + static_cast<std::size_t>(i) * cout;
              double acc = 0.0;
              for (int c = 0; c < cout; ++c) acc += wrow[c] * grow[c];
              gfrow[i] += acc;
            }
          }
        }
      }
    };
  }
  return Tensor(out);
}

Tensor to_bev_dense(const Tensor& features, std::span<const VoxelCoord> coords, int nx, int ny, int nz) {
  require_shape(features.shape().size() == 2 && static_cast<std::size_t>(features.dim(0)) == coords.size(),
                "to_bev_dense: expected [M, C] aligned with coords");
  const int c = features.dim(1);
  const int channels = nz * c;
  auto out = make_output({ny, nx, channels}, {&features});
  auto active = std::make_shared<std::vector<std::uint8_t>>(static_cast<std::size_t>(nx) * ny, 0);
  std::vector<std::size_t> dest(coords.size());
  for (std::size_t s = 0; s < coords.size(); ++s) {
    const VoxelCoord& vc = coords[s];
    if (vc.ix < 0 || vc.ix >= nx || vc.iy < 0 || vc.iy >= ny || vc.iz < 0 || vc.iz >= nz) {
      throw std::out_of_range("to_bev_dense: coordinate outside the grid");
    }
    const std::size_t cell = static_cast<std::size_t>(vc.iy) * nx + vc.ix;
    (*active)[cell] = 1;
    dest[s] = cell * channels + static_cast<std::size_t>(vc.iz) * c;
    std::copy_n(features.data().data() + s * c, c, out->value.data() + dest[s]);
  }
  out->active_cells = active;
  if (out->requires_grad) {
    Node* on = out.get();
    Node* fn = features.node().get();
    out->backward = [on, fn, dest = std::move(dest), c] {
      double* gf = fn->grad_data();
      for (std::size_t s = 0; s < dest.size(); ++s) {
        for (int ch = 0; ch < c; ++ch) gf[s * c + ch] += on->grad[dest[s] + ch];
      }
    };
  }
  return Tensor(out);
}

// ---- dense 2D ---------------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int padding) {
  require_shape(input.shape().size() == 3 && kernel.shape().size() == 4 && bias.shape().size() == 1,
                "conv2d: expected [H,W,Cin], [k,k,Cin,Cout], [Cout]");
  const int h = input.dim(0);
  const int w = input.dim(1);
  const int cin = input.dim(2);
  const int ks = kernel.dim(0);
  const int cout = kernel.dim(3);
  require_shape(kernel.dim(1) == ks && kernel.dim(2) == cin && bias.dim(0) == cout, "conv2d: kernel shape mismatch");
  require_shape(stride >= 1 && padding >= 0, "conv2d: invalid stride or padding");
  const int ho = (h + 2 * padding - ks) / stride + 1;
  const int wo = (w + 2 * padding - ks) / stride + 1;
  require_shape(ho > 0 && wo > 0, "conv2d: kernel larger than padded input");
  auto out = make_output({ho, wo, cout}, {&input, &kernel, &bias});
  const auto active = input.node()->active_cells;
  const double* iv = input.data().data();
  const double* kv = kernel.data().data();
  double* ov = out->value.data();

  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      double* orow = ov + (static_cast<std::size_t>(oy) * wo + ox) * cout;
      std::copy_n(bias.data().data(), cout, orow);
      for (int ky = 0; ky < ks; ++ky) {
        const int iy = oy * stride + ky - padding;
        if (iy < 0 || iy >= h) continue;
        for (int kx = 0; kx < ks; ++kx) {
          const int ix = ox * stride + kx - padding;
          if (ix < 0 || ix >= w) continue;
          const std::size_t cell = static_cast<std::size_t>(iy) * w + ix;
          if (active && !(*active)[cell]) continue;
          const double* irow = iv + cell * cin;
          const double* wk = kv + (static_cast<std::size_t>(ky) * ks + kx) * cin * cout;
          for (int i = 0; i < cin; ++i) {
            const double a = irow[i];
            if (a == 0.0) continue;
            const double* wrow = wk + static_cast<std::size_t>(i) * cout;
            for (int c = 0; c < cout; ++c) orow[c] += a * wrow[c];
          }
        }
      }
    }
  }
  if (out->requires_grad) {
    Node* on = out.get();
    Node* in = input.node().get();
    Node* kn = kernel.node().get();
    Node* bn = bias.node().get();
    out->backward = [on, in, kn, bn, active, h, w, cin, ks, cout, ho, wo, stride, padding] {
      const double* go = on->grad.data();
      if (bn->requires_grad) {
        double* gb = bn->grad_data();
        for (std::size_t r = 0; r < static_cast<std::size_t>(ho) * wo; ++r) {
          for (int c = 0; c < cout; ++c) gb[c] += go[r * cout + c];
        }
      }
      double* gk = kn->requires_grad ? kn->grad_data() : nullptr;
      double* gi = in->requires_grad ? in->grad_data() : nullptr;
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
          const double* grow = go + (static_cast<std::size_t>(oy) * wo + ox) * cout;
          for (int ky = 0; ky < ks; ++ky) {
            const int iy = oy * stride + ky - padding;
            if (iy < 0 || iy >= h) continue;
            for (int kx = 0; kx < ks; ++kx) {
              const int ix = ox * stride + kx - padding;
              if (ix < 0 || ix >= w) continue;
              const std::size_t cell = static_cast<std::size_t>(iy) * w + ix;
              if (active && !(*active)[cell]) continue;
              const std::size_t koff = (static_cast<std::size_t>(ky) * ks + kx) * cin * cout;
              const double* irow = in->value.data() + cell * cin;
              if (gk) {
                for (int i = 0; i < cin; ++i) {
                  const double a = irow[i];
                  if (a == 0.0) continue;
                  double* gw = gk + koff + static_cast<std::size_t>(i) * cout;
                  for (int c = 0; c < cout; ++c) gw[c] += a * grow[c];
                }
              }
              if (gi) {
                const double* wk = kn->value.data() + koff;
                double* girow = gi + cell * cin;
                for (int i = 0; i < cin; ++i) {
                  const double* wrow = wk + static_cast<std::size_t>(i) * cout;
                  double acc = 0.0;
                  for (int c = 0; c < cout; ++c) acc += wrow[c] * grow[c];
                  girow[i] += acc;
                }
              }
            }
          }
        }
      }
    };
  }
  return Tensor(out);
}

// ---- losses -----------------------------------------------------------------

double bce_with_logits(double z, double t) {
  return std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
}

double smooth_l1(double d) {
  const double a = std::abs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

Tensor bce_with_logits_sum(const Tensor& logits, std::span<const double> targets,
                           std::span<const double> weights) {
  require_shape(targets.size() == logits.numel() && weights.size() == logits.numel(),
                "bce_with_logits_sum: size mismatch");
  auto out = make_output({1}, {&logits});
  double acc = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    if (weights[k] != 0.0) acc += weights[k] * bce_with_logits(logits.data()[k], targets[k]);
  }
  out->value[0] = acc;
  if (out->requires_grad) {
    Node* on = out.get();
    Node* ln = logits.node().get();
    std::vector<double> t(targets.begin(), targets.end());
    std::vector<double> wt(weights.begin(), weights.end());
    out->backward = [on, ln, t = std::move(t), wt = std::move(wt)] {
      double* g = ln->grad_data();
      const double go = on->grad[0];
      for (std::size_t k = 0; k < t.size(); ++k) {
        if (wt[k] != 0.0) g[k] += go * wt[k] * (sigmoid(ln->value[k]) - t[k]);
      }
    };
  }
  return Tensor(out);
}

Tensor smooth_l1_sum(const Tensor& pred, std::span<const double> targets, std::span<const double> weights) {
  require_shape(targets.size() == pred.numel() && weights.size() == pred.numel(), "smooth_l1_sum: size mismatch");
  auto out = make_output({1}, {&pred});
  double acc = 0.0;
  for (std::size_t k = 0; k < targets.size(); ++k) {
    if (weights[k] != 0.0) acc += weights[k] * smooth_l1(pred.data()[k] - targets[k]);
  }
  out->value[0] = acc;
  if (out->requires_grad) {
    Node* on = out.get();
    Node* pn = pred.node().get();
    std::vector<double> t(targets.begin(), targets.end());
    std::vector<double> wt(weights.begin(), weights.end());
    out->backward = [on, pn, t = std::move(t), wt = std::move(wt)] {
      double* g = pn->grad_data();
      const double go = on->grad[0];
      for (std::size_t k = 0; k < t.size(); ++k) {
        if (wt[k] == 0.0) continue;
        const double d = pn->value[k] - t[k];
        g[k] += go * wt[k] * std::clamp(d, -1.0, 1.0);
      }
    };
  }
  return Tensor(out);
}

// ---- parameters -------------------------------------------------------------

Tensor& ParamStore::add(const std::string& name, std::vector<int> shape, std::vector<double> values) {
  if (contains(name)) throw std::invalid_argument("param store: duplicate name " + name);
  entries_.emplace_back(name, Tensor::parameter(std::move(shape), std::move(values)));
  return entries_.back().second;
}

Tensor& ParamStore::at(const std::string& name) {
  for (auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw std::out_of_range("param store: no parameter " + name);
}

const Tensor& ParamStore::at(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw std::out_of_range("param store: no parameter " + name);
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

void ParamStore::zero_grad() {
  for (auto& [n, t] : entries_) t.node()->grad.assign(t.numel(), 0.0);
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& [n, t] : entries_) {
    out.add(n, t.shape(), std::vector<double>(t.data().begin(), t.data().end()));
  }
  return out;
}

}  // namespace rvf::ad
