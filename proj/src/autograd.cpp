#include "stsrn/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "stsrn/errors.hpp"
#include "stsrn/kernels.hpp"

namespace stsrn {

const Tensor& Var::value() const { return tape_->value(index_); }
bool Var::needs_grad() const { return tape_->needs_grad(index_); }

const Tensor& Tape::value(std::size_t index) const { return nodes_.at(index).value(); }

Var Tape::leaf(Tensor& tensor) {
  if (auto it = leaf_index_.find(&tensor); it != leaf_index_.end()) return Var(this, it->second);
  Node node;
  node.borrowed = &tensor;
  node.needs_grad = grad_enabled_ && tensor.requires_grad();
  node.sink = node.needs_grad ? &tensor : nullptr;
  nodes_.push_back(std::move(node));
  leaf_index_.emplace(&tensor, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(const Tensor& tensor) {
  if (auto it = leaf_index_.find(&tensor); it != leaf_index_.end()) return Var(this, it->second);
  Node node;
  node.borrowed = &tensor;
  nodes_.push_back(std::move(node));
  leaf_index_.emplace(&tensor, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError("non-finite value produced by op on tape node " +
                       std::to_string(nodes_.size()));
  }
  Node node;
  node.owned = std::move(value);
  if (grad_enabled_) {
    for (const Var& v : inputs) {
      if (v.tape_ != this) throw ArgumentError("op mixes vars from different tapes");
      node.needs_grad = node.needs_grad || nodes_[v.index_].needs_grad;
    }
  }
  if (node.needs_grad) {
    node.inputs.reserve(inputs.size());
    for (const Var& v : inputs) node.inputs.push_back(v.index_);
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::clear() {
  nodes_.clear();
  leaf_index_.clear();
}

void Tape::backward(Var loss) {
  if (loss.tape_ != this) throw ArgumentError("backward: loss belongs to another tape");
  const Tensor& lv = loss.value();
  if (lv.size() != 1 || lv.rank() > 1) {
    throw ArgumentError("backward: loss must be a scalar, got shape " + shape_string(lv.shape()));
  }
  std::vector<std::vector<double>> grads(nodes_.size());
  if (nodes_[loss.index_].needs_grad) grads[loss.index_].assign(1, 1.0);

  BackwardContext ctx;
  for (std::size_t i = loss.index_ + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || grads[i].empty()) continue;
    ctx.grad_output_ = grads[i];
    ctx.output_ = &node.value();
    ctx.inputs_.clear();
    ctx.grad_inputs_.clear();
    for (std::size_t in : node.inputs) {
      const Node& src = nodes_[in];
      ctx.inputs_.push_back(&src.value());
      if (src.needs_grad) {
        if (grads[in].empty()) grads[in].assign(src.value().size(), 0.0);
        ctx.grad_inputs_.emplace_back(grads[in]);
      } else {
        ctx.grad_inputs_.emplace_back();
      }
    }
    node.backward(ctx);
    // Interior gradients are no longer needed once propagated.
    if (!node.sink) std::vector<double>().swap(grads[i]);
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& node = nodes_[i];
    if (!node.sink) continue;
    if (grads[i].empty()) {
      node.sink->zero_grad();
    } else {
      node.sink->set_grad(std::move(grads[i]));
    }
  }
  clear();
}

namespace {

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

void require_rank(const char* op, const Var& v, std::size_t rank) {
  if (v.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " operand, got " + shape_string(v.shape()));
  }
}

template <typename Fwd, typename Deriv>
Var unary(Var x, Fwd fwd, Deriv deriv_from_output_and_input) {
  const Tensor& in = x.value();
  Tensor out(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  return x.tape().record(std::move(out), {x}, [deriv_from_output_and_input](const BackwardContext& c) {
    auto gi = c.grad_input(0);
    if (gi.empty()) return;
    const auto go = c.grad_output();
    for (std::size_t i = 0; i < gi.size(); ++i) {
      gi[i] += go[i] * deriv_from_output_and_input(c.output()[i], c.input(0)[i]);
    }
  });
}

}  // namespace

Var conv2d(Var input, Var weight, Var bias, std::size_t stride, std::size_t padding) {
  require_rank("conv2d input", input, 3);
  require_rank("conv2d weight", weight, 4);
  require_rank("conv2d bias", bias, 1);
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (ws[1] != is[0]) {
    throw DimensionError("conv2d: input has " + std::to_string(is[0]) +
                         " channels but weight expects " + std::to_string(ws[1]));
  }
  if (ws[2] != ws[3]) throw DimensionError("conv2d: kernel must be square, got " + shape_string(ws));
  if (bias.shape()[0] != ws[0]) {
    throw DimensionError("conv2d: bias " + shape_string(bias.shape()) + " for " +
                         std::to_string(ws[0]) + " output channels");
  }
  kernels::ConvGeometry g{is[0], is[1], is[2], ws[0], ws[2], stride, padding};
  kernels::validate(g);
  Tensor out(Shape{g.out_channels, g.out_height(), g.out_width()});
  kernels::conv2d_forward(g, input.value().data(), weight.value().data(), bias.value().data(),
                          out.data());
  return input.tape().record(std::move(out), {input, weight, bias}, [g](const BackwardContext& c) {
    kernels::conv2d_backward(g, c.input(0).data(), c.input(1).data(), c.grad_output(),
                             c.grad_input(0), c.grad_input(1), c.grad_input(2));
  });
}

Var maxpool2(Var input) {
  require_rank("maxpool2", input, 3);
  const Shape& s = input.shape();
  if (s[1] < 2 || s[2] < 2) {
    throw DimensionError("maxpool2: spatial size " + shape_string(s) + " is below 2x2");
  }
  Tensor out(Shape{s[0], s[1] / 2, s[2] / 2});
  std::vector<std::uint32_t> argmax(out.size());
  kernels::maxpool2_forward(s[0], s[1], s[2], input.value().data(), out.data(), argmax);
  return input.tape().record(std::move(out), {input},
                             [argmax = std::move(argmax)](const BackwardContext& c) {
                               if (c.grad_input(0).empty()) return;
                               kernels::maxpool2_backward(argmax, c.grad_output(), c.grad_input(0));
                             });
}

Var tanh(Var x) {
  return unary(x, [](double v) { return std::tanh(v); },
               [](double y, double) { return 1.0 - y * y; });
}

Var relu(Var x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double, double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double y, double) { return y * (1.0 - y); });
}

Var sqrt(Var x) {
  for (double v : x.value().data()) {
    if (v < 0.0) throw ArgumentError("sqrt: negative operand");
  }
  return unary(x, [](double v) { return std::sqrt(v); },
               [](double y, double) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [](const BackwardContext& c) {
    const auto go = c.grad_output();
    for (std::size_t k = 0; k < 2; ++k) {
      auto gi = c.grad_input(k);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [](const BackwardContext& c) {
    const auto go = c.grad_output();
    auto ga = c.grad_input(0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
    auto gb = c.grad_input(1);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= go[i];
  });
}

Var mul(Var a, Var b) {
  require_same_shape("elementwise_mul", a, b);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return a.tape().record(std::move(out), {a, b}, [](const BackwardContext& c) {
    const auto go = c.grad_output();
    auto ga = c.grad_input(0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go[i] * c.input(1)[i];
    auto gb = c.grad_input(1);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += go[i] * c.input(0)[i];
  });
}

Var scalar_mul(Var x, double s) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * x.value()[i];
  return x.tape().record(std::move(out), {x}, [s](const BackwardContext& c) {
    const auto go = c.grad_output();
    auto gi = c.grad_input(0);
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += s * go[i];
  });
}

Var add_scalar(Var x, double v) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] + v;
  return x.tape().record(std::move(out), {x}, [](const BackwardContext& c) {
    const auto go = c.grad_output();
    auto gi = c.grad_input(0);
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go[i];
  });
}

Var matvec(Var weight, Var x) {
  require_rank("matvec weight", weight, 2);
  require_rank("matvec x", x, 1);
  const std::size_t rows = weight.shape()[0], cols = weight.shape()[1];
  if (x.shape()[0] != cols) {
    throw DimensionError("matvec: weight " + shape_string(weight.shape()) + " cannot multiply " +
                         shape_string(x.shape()));
  }
  Tensor out(Shape{rows});
  const auto w = weight.value().data();
  const auto xv = x.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < cols; ++k) acc += w[r * cols + k] * xv[k];
    out[r] = acc;
  }
  return weight.tape().record(std::move(out), {weight, x}, [rows, cols](const BackwardContext& c) {
    const auto go = c.grad_output();
    if (auto gw = c.grad_input(0); !gw.empty()) {
      const auto xv = c.input(1).data();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < cols; ++k) gw[r * cols + k] += go[r] * xv[k];
      }
    }
    if (auto gx = c.grad_input(1); !gx.empty()) {
      const auto w = c.input(0).data();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t k = 0; k < cols; ++k) gx[k] += w[r * cols + k] * go[r];
      }
    }
  });
}

Var linear(Var weight, Var x, Var bias) {
  Var y = matvec(weight, x);
  require_rank("linear bias", bias, 1);
  return add(y, bias);
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x}, [](const BackwardContext& c) {
    const auto go = c.grad_output();
    auto gi = c.grad_input(0);
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go[i];
  });
}

Var flatten(Var x) { return reshape(x, Shape{x.size()}); }

Var stack(std::span<const Var> items) {
  if (items.empty()) throw ArgumentError("stack: no operands");
  const Shape& inner = items[0].shape();
  for (const Var& v : items) require_same_shape("stack", items[0], v);
  Shape shape{items.size()};
  shape.insert(shape.end(), inner.begin(), inner.end());
  Tensor out(shape);
  const std::size_t n = shape_size(inner);
  for (std::size_t k = 0; k < items.size(); ++k) {
    std::copy_n(items[k].value().data().begin(), n, out.data().begin() + static_cast<std::ptrdiff_t>(k * n));
  }
  return items[0].tape().record(std::move(out), std::vector<Var>(items.begin(), items.end()),
                                [n, k = items.size()](const BackwardContext& c) {
                                  const auto go = c.grad_output();
                                  for (std::size_t j = 0; j < k; ++j) {
                                    auto gi = c.grad_input(j);
                                    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go[j * n + i];
                                  }
                                });
}

Var mean_over_first_axis(Var x) {
  const Shape& s = x.shape();
  if (s.empty() || s[0] == 0) throw DimensionError("mean_over_first_axis: empty leading axis");
  const std::size_t t = s[0];
  Shape inner(s.begin() + 1, s.end());
  const std::size_t n = shape_size(inner);
  Tensor out(inner);
  const auto in = x.value().data();
  for (std::size_t j = 0; j < t; ++j) {
    for (std::size_t i = 0; i < n; ++i) out[i] += in[j * n + i];
  }
  const double scale = 1.0 / static_cast<double>(t);
  for (std::size_t i = 0; i < n; ++i) out[i] *= scale;
  return x.tape().record(std::move(out), {x}, [t, n, scale](const BackwardContext& c) {
    const auto go = c.grad_output();
    auto gi = c.grad_input(0);
    if (gi.empty()) return;
    for (std::size_t j = 0; j < t; ++j) {
      for (std::size_t i = 0; i < n; ++i) gi[j * n + i] += go[i] * scale;
    }
  });
}

Var sum(Var x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  return x.tape().record(Tensor::scalar(acc), {x}, [](const BackwardContext& c) {
    const double g = c.grad_output()[0];
    auto gi = c.grad_input(0);
    for (double& v : gi) v += g;
  });
}

Var softmax_cross_entropy(Var logits, std::size_t label) {
  require_rank("softmax_cross_entropy", logits, 1);
  const std::size_t n = logits.size();
  if (label >= n) {
    throw ArgumentError("softmax_cross_entropy: label " + std::to_string(label) +
                        " outside " + std::to_string(n) + " classes");
  }
  const auto z = logits.value().data();
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> prob(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    prob[i] = std::exp(z[i] - zmax);
    total += prob[i];
  }
  for (double& p : prob) p /= total;
  const double loss = std::log(total) + zmax - z[label];
  return logits.tape().record(Tensor::scalar(loss), {logits},
                              [prob = std::move(prob), label](const BackwardContext& c) {
                                const double g = c.grad_output()[0];
                                auto gi = c.grad_input(0);
                                if (gi.empty()) return;
                                for (std::size_t i = 0; i < gi.size(); ++i) {
                                  gi[i] += g * (prob[i] - (i == label ? 1.0 : 0.0));
                                }
                              });
}

Var squared_l2_distance(Var a, Var b) {
  require_same_shape("squared_l2_distance", a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.value()[i] - b.value()[i];
    acc += d * d;
  }
  return a.tape().record(Tensor::scalar(acc), {a, b}, [](const BackwardContext& c) {
    const double g = c.grad_output()[0];
    auto ga = c.grad_input(0);
    auto gb = c.grad_input(1);
    for (std::size_t i = 0; i < c.input(0).size(); ++i) {
      const double d = 2.0 * g * (c.input(0)[i] - c.input(1)[i]);
      if (!ga.empty()) ga[i] += d;
      if (!gb.empty()) gb[i] -= d;
    }
  });
}

Var detach(Var x) { return x.tape().constant(x.value()); }

}  // namespace stsrn
