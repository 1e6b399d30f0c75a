#pragma once

// Minimal tape-based reverse-mode differentiation over Tensor values.
//
// Every op returns a Var that owns its value and, when any input requires a
// gradient, a closure that pushes the output gradient back into the inputs.
// backward() walks the graph in reverse topological order. Graphs are
// discarded once the last Var referencing them goes away.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "cyclevc/error.hpp"
#include "cyclevc/tensor.hpp"

namespace cyclevc {

template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;  // lazily allocated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor<Scalar>& grad_buffer() {
    if (grad.size() != value.size() || grad.shape() != value.shape()) grad = Tensor<Scalar>(value.shape());
    return grad;
  }
};

template <typename Scalar>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<Scalar>> node) : node_(std::move(node)) {}

  const Tensor<Scalar>& value() const { return node_->value; }
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool defined() const { return static_cast<bool>(node_); }

  /// Accumulated gradient; zero tensor if backward never reached this node.
  const Tensor<Scalar>& grad() const { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor<Scalar>(); }

  /// Scalar value of a one-element Var.
  Scalar item() const {
    if (node_->value.size() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape()));
    return node_->value[0];
  }

  const std::shared_ptr<Node<Scalar>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<Scalar>> node_;
};

template <typename Scalar>
Var<Scalar> constant(Tensor<Scalar> value) {
  auto n = std::make_shared<Node<Scalar>>();
  n->value = std::move(value);
  return Var<Scalar>(std::move(n));
}

/// Leaf that accumulates gradients.
template <typename Scalar>
Var<Scalar> parameter(Tensor<Scalar> value) {
  auto n = std::make_shared<Node<Scalar>>();
  n->value = std::move(value);
  n->requires_grad = true;
  return Var<Scalar>(std::move(n));
}

/// Same value, cut from the graph.
template <typename Scalar>
Var<Scalar> detach(const Var<Scalar>& v) {
  return constant(v.value());
}

namespace detail {

template <typename Scalar, typename Fn>
Var<Scalar> make_op(Tensor<Scalar> value, std::vector<Var<Scalar>> inputs, Fn&& backward_fn) {
  auto n = std::make_shared<Node<Scalar>>();
  n->value = std::move(value);
  for (const auto& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
  if (n->requires_grad) {
    for (auto& in : inputs) n->parents.push_back(in.node());
    n->backward_fn = std::forward<Fn>(backward_fn);
  }
  return Var<Scalar>(std::move(n));
}

inline void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": shape " + shape_str(a) + " vs " + shape_str(b));
}

// Output positions t for which t*stride + offset lands inside [0, length).
inline std::pair<std::ptrdiff_t, std::ptrdiff_t> valid_range(std::ptrdiff_t out_len, std::ptrdiff_t length,
                                                             std::ptrdiff_t stride, std::ptrdiff_t offset) {
  std::ptrdiff_t lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  std::ptrdiff_t hi = (length - 1 - offset) < 0 ? -1 : (length - 1 - offset) / stride;
  if (hi > out_len - 1) hi = out_len - 1;
  return {lo, hi + 1};
}

template <typename Scalar>
Scalar sigmoid(Scalar v) {
  return v >= 0 ? Scalar(1) / (Scalar(1) + std::exp(-v)) : std::exp(v) / (Scalar(1) + std::exp(v));
}

}  // namespace detail

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
/// reachable node that requires them.
template <typename Scalar>
void backward(const Var<Scalar>& loss) {
  if (loss.value().size() != 1) throw ShapeError("backward() requires a scalar loss");
  if (!loss.requires_grad()) return;

  std::vector<Node<Scalar>*> order;
  std::unordered_set<Node<Scalar>*> seen;
  std::vector<std::pair<Node<Scalar>*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<Scalar>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += Scalar(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<Scalar>* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  Tensor<Scalar> out = a.value();
  const Scalar* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return detail::make_op<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<Scalar> out = a.value();
  const Scalar* bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return detail::make_op<Scalar>(std::move(out), {a, b}, [](Node<Scalar>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      auto& g = pa->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      auto& g = pb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa->value[i];
    }
  });
}

template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar factor) {
  Tensor<Scalar> out = a.value();
  for (auto& v : out.values()) v *= factor;
  return detail::make_op<Scalar>(std::move(out), {a}, [factor](Node<Scalar>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  Tensor<Scalar> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::sigmoid(a.value()[i]);
  return detail::make_op<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const Scalar s = self.value[i];
      g[i] += self.grad[i] * s * (Scalar(1) - s);
    }
  });
}

/// Gated linear unit: linear ⊗ σ(gate).
template <typename Scalar>
Var<Scalar> glu(const Var<Scalar>& linear, const Var<Scalar>& gate) {
  detail::require_same_shape(linear.shape(), gate.shape(), "glu");
  const std::size_t n = linear.value().size();
  Tensor<Scalar> sig(gate.shape());
  Tensor<Scalar> out(linear.shape());
  for (std::size_t i = 0; i < n; ++i) {
    sig[i] = detail::sigmoid(gate.value()[i]);
    out[i] = linear.value()[i] * sig[i];
  }
  return detail::make_op<Scalar>(std::move(out), {linear, gate}, [sig = std::move(sig)](Node<Scalar>& self) {
    auto& pl = self.parents[0];
    auto& pg = self.parents[1];
    if (pl->requires_grad) {
      auto& g = pl->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * sig[i];
    }
    if (pg->requires_grad) {
      auto& g = pg->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += self.grad[i] * pl->value[i] * sig[i] * (Scalar(1) - sig[i]);
    }
  });
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& a, Shape shape) {
  Tensor<Scalar> out = a.value().reshaped(std::move(shape));
  return detail::make_op<Scalar>(std::move(out), {a}, [](Node<Scalar>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions used by the objectives

/// mean((a - target)^2) over all elements.
template <typename Scalar>
Var<Scalar> mean_squared_offset(const Var<Scalar>& a, Scalar target) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ValidationError("mean over an empty tensor");
  Scalar acc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Scalar d = a.value()[i] - target;
    acc += d * d;
  }
  Tensor<Scalar> out({1}, acc / static_cast<Scalar>(n));
  return detail::make_op<Scalar>(std::move(out), {a}, [target, n](Node<Scalar>& self) {
    auto& p = self.parents[0];
    auto& g = p->grad_buffer();
    const Scalar k = Scalar(2) * self.grad[0] / static_cast<Scalar>(n);
    for (std::size_t i = 0; i < n; ++i) g[i] += k * (p->value[i] - target);
  });
}

/// mean(|a - b|) over all elements. The subgradient at a == b is 0.
template <typename Scalar>
Var<Scalar> mean_abs_diff(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mean_abs_diff");
  const std::size_t n = a.value().size();
  if (n == 0) throw ValidationError("mean over an empty tensor");
  Scalar acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(a.value()[i] - b.value()[i]);
  Tensor<Scalar> out({1}, acc / static_cast<Scalar>(n));
  return detail::make_op<Scalar>(std::move(out), {a, b}, [n](Node<Scalar>& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    const Scalar k = self.grad[0] / static_cast<Scalar>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const Scalar d = pa->value[i] - pb->value[i];
      const Scalar s = d > 0 ? k : (d < 0 ? -k : Scalar(0));
      if (pa->requires_grad) pa->grad_buffer()[i] += s;
      if (pb->requires_grad) pb->grad_buffer()[i] -= s;
    }
  });
}

/// Σ wᵢ·termᵢ over scalar Vars.
template <typename Scalar>
Var<Scalar> weighted_sum(const std::vector<Var<Scalar>>& terms, const std::vector<Scalar>& weights) {
  if (terms.size() != weights.size()) throw ShapeError("weighted_sum: terms/weights length mismatch");
  Scalar acc = 0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].value().size() != 1) throw ShapeError("weighted_sum expects scalar terms");
    acc += weights[i] * terms[i].value()[0];
  }
  return detail::make_op<Scalar>(Tensor<Scalar>({1}, acc), terms, [weights](Node<Scalar>& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i)
      if (self.parents[i]->requires_grad) self.parents[i]->grad_buffer()[0] += weights[i] * self.grad[0];
  });
}

// ---------------------------------------------------------------------------
// Convolutions. Odd kernels, "same" padding of kernel/2; output length is
// ceil(length / stride). Both ranks lower to im2col + GEMM.

namespace detail {

struct ConvGeometry {
  std::ptrdiff_t batch, cin, ih, iw, cout, kh, kw, sh, sw, oh, ow;
  std::ptrdiff_t rows() const { return cin * kh * kw; }
  std::ptrdiff_t cols() const { return oh * ow; }
};

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// col[(i·KH + dy)·KW + dx, y·OW + x] = in[i, y·sh + dy - KH/2, x·sw + dx - KW/2] (0 outside).
template <typename Scalar>
void im2col(const Scalar* x, const ConvGeometry& g, Scalar* col) {
  const std::ptrdiff_t ph = g.kh / 2, pw = g.kw / 2;
  for (std::ptrdiff_t i = 0; i < g.cin; ++i)
    for (std::ptrdiff_t dy = 0; dy < g.kh; ++dy)
      for (std::ptrdiff_t dx = 0; dx < g.kw; ++dx) {
        Scalar* row = col + ((i * g.kh + dy) * g.kw + dx) * g.cols();
        std::fill(row, row + g.cols(), Scalar(0));
        auto [ylo, yhi] = valid_range(g.oh, g.ih, g.sh, dy - ph);
        auto [xlo, xhi] = valid_range(g.ow, g.iw, g.sw, dx - pw);
        if (xlo >= xhi) continue;
        for (std::ptrdiff_t y = ylo; y < yhi; ++y) {
          const Scalar* src = x + (i * g.ih + y * g.sh + dy - ph) * g.iw + dx - pw;
          Scalar* dst = row + y * g.ow;
          if (g.sw == 1)
            std::copy(src + xlo, src + xhi, dst + xlo);
          else
            for (std::ptrdiff_t t = xlo; t < xhi; ++t) dst[t] = src[t * g.sw];
        }
      }
}

// Adjoint of im2col: scatter-add columns back into the input layout.
template <typename Scalar>
void col2im_add(const Scalar* col, const ConvGeometry& g, Scalar* x) {
  const std::ptrdiff_t ph = g.kh / 2, pw = g.kw / 2;
  for (std::ptrdiff_t i = 0; i < g.cin; ++i)
    for (std::ptrdiff_t dy = 0; dy < g.kh; ++dy)
      for (std::ptrdiff_t dx = 0; dx < g.kw; ++dx) {
        const Scalar* row = col + ((i * g.kh + dy) * g.kw + dx) * g.cols();
        auto [ylo, yhi] = valid_range(g.oh, g.ih, g.sh, dy - ph);
        auto [xlo, xhi] = valid_range(g.ow, g.iw, g.sw, dx - pw);
        for (std::ptrdiff_t y = ylo; y < yhi; ++y) {
          Scalar* dst = x + (i * g.ih + y * g.sh + dy - ph) * g.iw + dx - pw;
          const Scalar* src = row + y * g.ow;
          for (std::ptrdiff_t t = xlo; t < xhi; ++t) dst[t * g.sw] += src[t];
        }
      }
}

template <typename Scalar>
Var<Scalar> conv_impl(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, ConvGeometry g,
                      Shape out_shape) {
  using Mat = RowMatrix<Scalar>;
  using Map = Eigen::Map<Mat>;
  using CMap = Eigen::Map<const Mat>;
  using CVec = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>;

  Tensor<Scalar> out(std::move(out_shape));
  std::vector<Scalar> col(static_cast<std::size_t>(g.rows() * g.cols()));
  const CMap w(weight.value().data(), g.cout, g.rows());
  const CVec b(bias.value().data(), g.cout);
  for (std::ptrdiff_t n = 0; n < g.batch; ++n) {
    im2col(x.value().data() + n * g.cin * g.ih * g.iw, g, col.data());
    Map o(out.data() + n * g.cout * g.cols(), g.cout, g.cols());
    o.noalias() = w * CMap(col.data(), g.rows(), g.cols());
    o.colwise() += b;
  }

  return make_op<Scalar>(std::move(out), {x, weight, bias}, [g](Node<Scalar>& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    std::vector<Scalar> col(static_cast<std::size_t>(g.rows() * g.cols()));
    const CMap w(pw->value.data(), g.cout, g.rows());
    for (std::ptrdiff_t n = 0; n < g.batch; ++n) {
      const CMap gout(self.grad.data() + n * g.cout * g.cols(), g.cout, g.cols());
      if (pb->requires_grad) {
        Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> gb(pb->grad_buffer().data(), g.cout);
        gb += gout.rowwise().sum();
      }
      if (pw->requires_grad) {
        im2col(px->value.data() + n * g.cin * g.ih * g.iw, g, col.data());
        Map gw(pw->grad_buffer().data(), g.cout, g.rows());
        gw.noalias() += gout * CMap(col.data(), g.rows(), g.cols()).transpose();
      }
      if (px->requires_grad) {
        Map gcol(col.data(), g.rows(), g.cols());
        gcol.noalias() = w.transpose() * gout;
        col2im_add(col.data(), g, px->grad_buffer().data() + n * g.cin * g.ih * g.iw);
      }
    }
  });
}

}  // namespace detail

/// x: (B, Cin, T), weight: (Cout, Cin, K), bias: (Cout) -> (B, Cout, ceil(T/stride)).
template <typename Scalar>
Var<Scalar> conv1d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   std::size_t stride = 1) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  if (xs.size() != 3 || ws.size() != 3 || bias.shape().size() != 1)
    throw ShapeError("conv1d expects x (B,C,T), weight (O,C,K), bias (O)");
  if (ws[1] != xs[1]) throw ShapeError("conv1d channel mismatch: input " + shape_str(xs) + " kernel " + shape_str(ws));
  if (bias.shape()[0] != ws[0]) throw ShapeError("conv1d bias size mismatch");
  if (ws[2] % 2 == 0) throw ShapeError("conv1d kernel size must be odd");
  if (stride == 0 || xs[2] == 0) throw ShapeError("conv1d with zero stride or empty input");
  const auto s = static_cast<std::ptrdiff_t>(stride);
  const auto len = static_cast<std::ptrdiff_t>(xs[2]);
  detail::ConvGeometry g{static_cast<std::ptrdiff_t>(xs[0]), static_cast<std::ptrdiff_t>(xs[1]), 1, len,
                         static_cast<std::ptrdiff_t>(ws[0]), 1, static_cast<std::ptrdiff_t>(ws[2]), 1, s, 1,
                         (len + s - 1) / s};
  return detail::conv_impl(x, weight, bias, g, {xs[0], ws[0], static_cast<std::size_t>(g.ow)});
}

/// x: (B, Cin, H, W), weight: (Cout, Cin, KH, KW), bias: (Cout).
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                   std::size_t stride_h = 1, std::size_t stride_w = 1) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  if (xs.size() != 4 || ws.size() != 4 || bias.shape().size() != 1)
    throw ShapeError("conv2d expects x (B,C,H,W), weight (O,C,KH,KW), bias (O)");
  if (ws[1] != xs[1]) throw ShapeError("conv2d channel mismatch: input " + shape_str(xs) + " kernel " + shape_str(ws));
  if (bias.shape()[0] != ws[0]) throw ShapeError("conv2d bias size mismatch");
  if (ws[2] % 2 == 0 || ws[3] % 2 == 0) throw ShapeError("conv2d kernel sizes must be odd");
  if (stride_h == 0 || stride_w == 0 || xs[2] == 0 || xs[3] == 0)
    throw ShapeError("conv2d with zero stride or empty input");
  const auto sh = static_cast<std::ptrdiff_t>(stride_h), sw = static_cast<std::ptrdiff_t>(stride_w);
  const auto ih = static_cast<std::ptrdiff_t>(xs[2]), iw = static_cast<std::ptrdiff_t>(xs[3]);
  detail::ConvGeometry g{static_cast<std::ptrdiff_t>(xs[0]), static_cast<std::ptrdiff_t>(xs[1]), ih, iw,
                         static_cast<std::ptrdiff_t>(ws[0]), static_cast<std::ptrdiff_t>(ws[2]),
                         static_cast<std::ptrdiff_t>(ws[3]), sh, sw, (ih + sh - 1) / sh, (iw + sw - 1) / sw};
  return detail::conv_impl(x, weight, bias, g,
                           {xs[0], ws[0], static_cast<std::size_t>(g.oh), static_cast<std::size_t>(g.ow)});
}

/// x: (B, In...) flattened per batch row, weight: (Out, In), bias: (Out) -> (B, Out).
template <typename Scalar>
Var<Scalar> linear(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias) {
  const auto& ws = weight.shape();
  if (x.shape().empty() || ws.size() != 2 || bias.shape().size() != 1 || bias.shape()[0] != ws[0])
    throw ShapeError("linear expects weight (O,I) and bias (O)");
  const std::size_t batch = x.shape()[0];
  const std::size_t in = batch ? x.value().size() / batch : 0;
  if (in != ws[1]) throw ShapeError("linear input width " + std::to_string(in) + " != " + std::to_string(ws[1]));
  const std::size_t outn = ws[0];
  Tensor<Scalar> out({batch, outn});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < outn; ++o) {
      Scalar acc = bias.value()[o];
      const Scalar* xr = x.value().data() + b * in;
      const Scalar* wr = weight.value().data() + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
      out.at(b, o) = acc;
    }
  return detail::make_op<Scalar>(std::move(out), {x, weight, bias}, [=](Node<Scalar>& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t o = 0; o < outn; ++o) {
        const Scalar g = self.grad[b * outn + o];
        if (pb->requires_grad) pb->grad_buffer()[o] += g;
        if (pw->requires_grad) {
          Scalar* gw = pw->grad_buffer().data() + o * in;
          const Scalar* xr = px->value.data() + b * in;
          for (std::size_t i = 0; i < in; ++i) gw[i] += g * xr[i];
        }
        if (px->requires_grad) {
          Scalar* gx = px->grad_buffer().data() + b * in;
          const Scalar* wr = pw->value.data() + o * in;
          for (std::size_t i = 0; i < in; ++i) gx[i] += g * wr[i];
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Normalization and reshuffling

/// Per-instance, per-channel standardization over all trailing axes followed
/// by a per-channel affine map. x: (B, C, ...), scale/shift: (C).
template <typename Scalar>
Var<Scalar> instance_norm(const Var<Scalar>& x, const Var<Scalar>& scale, const Var<Scalar>& shift,
                          Scalar eps = Scalar(1e-5)) {
  const auto& xs = x.shape();
  if (xs.size() < 3) throw ShapeError("instance_norm expects (B, C, ...)");
  const std::size_t batch = xs[0], channels = xs[1];
  const std::size_t n = x.value().size() / (batch * channels);
  if (n == 0) throw ShapeError("instance_norm over empty spatial extent");
  if (scale.shape() != Shape{channels} || shift.shape() != Shape{channels})
    throw ShapeError("instance_norm scale/shift must have one entry per channel");

  Tensor<Scalar> xhat(xs);
  Tensor<Scalar> out(xs);
  std::vector<Scalar> inv_std(batch * channels);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * n;
      const Scalar* xp = x.value().data() + base;
      Scalar mean = 0;
      for (std::size_t i = 0; i < n; ++i) mean += xp[i];
      mean /= static_cast<Scalar>(n);
      Scalar var = 0;
      for (std::size_t i = 0; i < n; ++i) var += (xp[i] - mean) * (xp[i] - mean);
      var /= static_cast<Scalar>(n);
      const Scalar is = Scalar(1) / std::sqrt(var + eps);
      inv_std[b * channels + c] = is;
      const Scalar g = scale.value()[c], h = shift.value()[c];
      for (std::size_t i = 0; i < n; ++i) {
        xhat[base + i] = (xp[i] - mean) * is;
        out[base + i] = g * xhat[base + i] + h;
      }
    }

  return detail::make_op<Scalar>(
      std::move(out), {x, scale, shift},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<Scalar>& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& ph = self.parents[2];
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t c = 0; c < channels; ++c) {
            const std::size_t base = (b * channels + c) * n;
            const Scalar* gy = self.grad.data() + base;
            const Scalar* xh = xhat.data() + base;
            Scalar sum_g = 0, sum_gx = 0;
            for (std::size_t i = 0; i < n; ++i) {
              sum_g += gy[i];
              sum_gx += gy[i] * xh[i];
            }
            if (pg->requires_grad) pg->grad_buffer()[c] += sum_gx;
            if (ph->requires_grad) ph->grad_buffer()[c] += sum_g;
            if (px->requires_grad) {
              const Scalar g = pg->value[c];
              const Scalar k = g * inv_std[b * channels + c] / static_cast<Scalar>(n);
              Scalar* gx = px->grad_buffer().data() + base;
              const Scalar nn = static_cast<Scalar>(n);
              for (std::size_t i = 0; i < n; ++i) gx[i] += k * (nn * gy[i] - sum_g - xh[i] * sum_gx);
            }
          }
      });
}

/// (B, C·r, T) -> (B, C, T·r) with out[b, c, t·r + i] = in[b, c·r + i, t].
template <typename Scalar>
Tensor<Scalar> pixel_shuffle_1d(const Tensor<Scalar>& x, std::size_t factor) {
  if (x.rank() != 3) throw ShapeError("pixel_shuffle_1d expects (B, C, T)");
  if (factor == 0 || x.dim(1) % factor != 0)
    throw ShapeError("pixel_shuffle_1d: channels " + std::to_string(x.dim(1)) + " not divisible by " +
                     std::to_string(factor));
  const std::size_t batch = x.dim(0), c = x.dim(1) / factor, t = x.dim(2);
  Tensor<Scalar> out({batch, c, t * factor});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < factor; ++i)
        for (std::size_t k = 0; k < t; ++k) out.at(b, ch, k * factor + i) = x.at(b, ch * factor + i, k);
  return out;
}

/// Inverse of pixel_shuffle_1d: (B, C, T·r) -> (B, C·r, T).
template <typename Scalar>
Tensor<Scalar> pixel_unshuffle_1d(const Tensor<Scalar>& x, std::size_t factor) {
  if (x.rank() != 3) throw ShapeError("pixel_unshuffle_1d expects (B, C, T)");
  if (factor == 0 || x.dim(2) % factor != 0)
    throw ShapeError("pixel_unshuffle_1d: length not divisible by factor");
  const std::size_t batch = x.dim(0), c = x.dim(1), t = x.dim(2) / factor;
  Tensor<Scalar> out({batch, c * factor, t});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < factor; ++i)
        for (std::size_t k = 0; k < t; ++k) out.at(b, ch * factor + i, k) = x.at(b, ch, k * factor + i);
  return out;
}

template <typename Scalar>
Var<Scalar> pixel_shuffle_1d(const Var<Scalar>& x, std::size_t factor) {
  return detail::make_op<Scalar>(pixel_shuffle_1d(x.value(), factor), {x}, [factor](Node<Scalar>& self) {
    auto& p = self.parents[0];
    const Tensor<Scalar> g = pixel_unshuffle_1d(self.grad, factor);
    auto& gb = p->grad_buffer();
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i];
  });
}

}  // namespace cyclevc
