#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracle {

using stsrn::Shape;
using stsrn::Tape;
using stsrn::Tensor;
using stsrn::Var;

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.data()) v = u(rng);
  return t;
}

Tensor naive_conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
                    std::size_t padding) {
  const long C = static_cast<long>(input.dim(0)), H = static_cast<long>(input.dim(1)),
             W = static_cast<long>(input.dim(2));
  const long O = static_cast<long>(weight.dim(0)), K = static_cast<long>(weight.dim(2));
  const long P = static_cast<long>(padding), S = static_cast<long>(stride);
  const long OH = (H + 2 * P - K) / S + 1, OW = (W + 2 * P - K) / S + 1;
  Tensor out({static_cast<std::size_t>(O), static_cast<std::size_t>(OH), static_cast<std::size_t>(OW)});
  for (long o = 0; o < O; ++o) {
    for (long y = 0; y < OH; ++y) {
      for (long x = 0; x < OW; ++x) {
        double acc = bias[static_cast<std::size_t>(o)];
        for (long c = 0; c < C; ++c) {
          for (long ky = 0; ky < K; ++ky) {
            for (long kx = 0; kx < K; ++kx) {
              const long iy = y * S + ky - P, ix = x * S + kx - P;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += input[static_cast<std::size_t>((c * H + iy) * W + ix)] *
                     weight[static_cast<std::size_t>(((o * C + c) * K + ky) * K + kx)];
            }
          }
        }
        out[static_cast<std::size_t>((o * OH + y) * OW + x)] = acc;
      }
    }
  }
  return out;
}

ConvGrads naive_conv2d_backward(const Tensor& input, const Tensor& weight, const Tensor& upstream,
                                std::size_t stride, std::size_t padding) {
  const long C = static_cast<long>(input.dim(0)), H = static_cast<long>(input.dim(1)),
             W = static_cast<long>(input.dim(2));
  const long O = static_cast<long>(weight.dim(0)), K = static_cast<long>(weight.dim(2));
  const long P = static_cast<long>(padding), S = static_cast<long>(stride);
  const long OH = static_cast<long>(upstream.dim(1)), OW = static_cast<long>(upstream.dim(2));
  ConvGrads g{Tensor(input.shape()), Tensor(weight.shape()), Tensor({weight.dim(0)})};
  for (long o = 0; o < O; ++o) {
    for (long y = 0; y < OH; ++y) {
      for (long x = 0; x < OW; ++x) {
        const double up = upstream[static_cast<std::size_t>((o * OH + y) * OW + x)];
        g.bias[static_cast<std::size_t>(o)] += up;
        for (long c = 0; c < C; ++c) {
          for (long ky = 0; ky < K; ++ky) {
            for (long kx = 0; kx < K; ++kx) {
              const long iy = y * S + ky - P, ix = x * S + kx - P;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              const auto ii = static_cast<std::size_t>((c * H + iy) * W + ix);
              const auto wi = static_cast<std::size_t>(((o * C + c) * K + ky) * K + kx);
              g.input[ii] += up * weight[wi];
              g.weight[wi] += up * input[ii];
            }
          }
        }
      }
    }
  }
  return g;
}

Tensor naive_maxpool2(const Tensor& input) {
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  Tensor out({C, H / 2, W / 2});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t y = 0; y < H / 2; ++y) {
      for (std::size_t x = 0; x < W / 2; ++x) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) m = std::max(m, input[(c * H + 2 * y + dy) * W + 2 * x + dx]);
        }
        out[(c * (H / 2) + y) * (W / 2) + x] = m;
      }
    }
  }
  return out;
}

namespace {

// Projects a tensor-valued op onto a scalar with fixed random weights so
// that every output coordinate contributes a distinct gradient.
Var project(Var y, const Tensor& weights) {
  Tape& tape = y.tape();
  if (y.value().size() == 1) return stsrn::sum(stsrn::scalar_mul(y, weights[0]));
  return stsrn::sum(stsrn::mul(y, tape.constant(weights.reshaped(y.shape()))));
}

void record(std::vector<OpCheck>& out, const std::string& op, const stsrn::GradCheckReport& r) {
  auto it = std::find_if(out.begin(), out.end(), [&](const OpCheck& c) { return c.op == op; });
  if (it == out.end()) {
    out.push_back({op, 0.0, 0});
    it = out.end() - 1;
  }
  it->max_rel_error = std::max(it->max_rel_error, r.max_rel_error);
  it->checked += r.checked;
}

}  // namespace

std::vector<OpCheck> check_primitive_ops(std::size_t trials, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<OpCheck> out;
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };

  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = pick(2, 6);
    const Tensor x = random_tensor({n}, rng);
    const Tensor w = random_tensor({n}, rng);
    const Tensor other = random_tensor({n}, rng);

    auto unary = [&](const std::string& name, std::function<Var(Var)> op, const Tensor& at) {
      record(out, name, stsrn::finite_diff_check([&](Tape&, Var v) { return project(op(v), w); }, at));
    };
    unary("tanh", [](Var v) { return stsrn::tanh(v); }, x);
    unary("relu", [](Var v) { return stsrn::relu(v); }, x);
    unary("sigmoid", [](Var v) { return stsrn::sigmoid(v); }, random_tensor({n}, rng, -6.0, 6.0));
    unary("sqrt", [](Var v) { return stsrn::sqrt(v); }, random_tensor({n}, rng, 0.1, 2.0));
    unary("scalar_mul", [](Var v) { return stsrn::scalar_mul(v, -1.7); }, x);
    unary("add_scalar", [](Var v) { return stsrn::add_scalar(v, 0.3); }, x);

    auto binary = [&](const std::string& name, std::function<Var(Var, Var)> op) {
      record(out, name, stsrn::finite_diff_check(
                            [&](Tape& tape, Var v) { return project(op(v, tape.constant(other)), w); }, x));
      record(out, name, stsrn::finite_diff_check(
                            [&](Tape& tape, Var v) { return project(op(tape.constant(other), v), w); }, x));
    };
    binary("add", [](Var a, Var b) { return stsrn::add(a, b); });
    binary("sub", [](Var a, Var b) { return stsrn::sub(a, b); });
    binary("mul", [](Var a, Var b) { return stsrn::mul(a, b); });
    binary("squared_l2_distance", [](Var a, Var b) { return stsrn::squared_l2_distance(a, b); });

    record(out, "sum", stsrn::finite_diff_check([&](Tape&, Var v) { return stsrn::sum(stsrn::mul(v, v)); }, x));
    const std::size_t label = pick(0, n - 1);
    record(out, "softmax_cross_entropy", stsrn::finite_diff_check(
                                             [&](Tape&, Var v) { return stsrn::softmax_cross_entropy(v, label); },
                                             random_tensor({n}, rng, -3.0, 3.0)));

    // Linear / matvec in every argument.
    const std::size_t m = pick(1, 5);
    const Tensor W = random_tensor({m, n}, rng);
    const Tensor b = random_tensor({m}, rng);
    const Tensor wm = random_tensor({m}, rng);
    record(out, "matvec", stsrn::finite_diff_check(
                              [&](Tape& tape, Var v) { return project(stsrn::matvec(tape.constant(W), v), wm); }, x));
    record(out, "matvec", stsrn::finite_diff_check(
                              [&](Tape& tape, Var v) { return project(stsrn::matvec(v, tape.constant(x)), wm); }, W));
    record(out, "linear", stsrn::finite_diff_check(
                              [&](Tape& tape, Var v) {
                                return project(stsrn::linear(v, tape.constant(x), tape.constant(b)), wm);
                              },
                              W));
    record(out, "linear", stsrn::finite_diff_check(
                              [&](Tape& tape, Var v) {
                                return project(stsrn::linear(tape.constant(W), tape.constant(x), v), wm);
                              },
                              b));

    // Shape ops.
    const std::size_t k = pick(1, 4);
    const Tensor seq = random_tensor({k, n}, rng);
    const Tensor wseq = random_tensor({k * n}, rng);
    record(out, "reshape", stsrn::finite_diff_check(
                               [&](Tape&, Var v) { return project(stsrn::reshape(v, {n, k}), wseq); }, seq));
    record(out, "flatten",
           stsrn::finite_diff_check([&](Tape&, Var v) { return project(stsrn::flatten(v), wseq); }, seq));
    record(out, "mean_over_first_axis",
           stsrn::finite_diff_check([&](Tape&, Var v) { return project(stsrn::mean_over_first_axis(v), w); }, seq));
    const Tensor wstack = random_tensor({3 * n}, rng);
    record(out, "stack", stsrn::finite_diff_check(
                             [&](Tape& tape, Var v) {
                               std::vector<Var> items{v, tape.constant(other), stsrn::tanh(v)};
                               return project(stsrn::stack(items), wstack);
                             },
                             x));

    // conv2d in input, weight and bias; maxpool2.
    const std::size_t C = pick(1, 3), O = pick(1, 3), K = pick(1, 3) * 2 - 1;
    const std::size_t P = pick(0, K - 1), S = pick(1, 2);
    const std::size_t H = pick(K, K + 4), Wd = pick(K, K + 4);
    const Tensor img = random_tensor({C, H, Wd}, rng);
    const Tensor ker = random_tensor({O, C, K, K}, rng);
    const Tensor kb = random_tensor({O}, rng);
    const std::size_t OH = (H + 2 * P - K) / S + 1, OW = (Wd + 2 * P - K) / S + 1;
    const Tensor wc = random_tensor({O * OH * OW}, rng);
    record(out, "conv2d", stsrn::finite_diff_check(
                              [&](Tape& tape, Var v) {
                                return project(stsrn::conv2d(v, tape.constant(ker), tape.constant(kb), S, P), wc);
                              },
                              img));
    record(out, "conv2d", stsrn::finite_diff_check(
                              [&](Tape& tape, Var v) {
                                return project(stsrn::conv2d(tape.constant(img), v, tape.constant(kb), S, P), wc);
                              },
                              ker));
    record(out, "conv2d", stsrn::finite_diff_check(
                              [&](Tape& tape, Var v) {
                                return project(stsrn::conv2d(tape.constant(img), tape.constant(ker), v, S, P), wc);
                              },
                              kb));
    const std::size_t PH = pick(1, 4) * 2, PW = pick(1, 4) * 2;
    const Tensor pin = random_tensor({C, PH, PW}, rng);
    const Tensor wp = random_tensor({C * (PH / 2) * (PW / 2)}, rng);
    record(out, "maxpool2",
           stsrn::finite_diff_check([&](Tape&, Var v) { return project(stsrn::maxpool2(v), wp); }, pin));
  }
  return out;
}

KernelCheck compare_kernels(std::size_t shapes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  KernelCheck r;
  for (std::size_t s = 0; s < shapes; ++s) {
    const std::size_t C = pick(1, 6), O = pick(1, 8), K = pick(1, 3) * 2 - 1;
    const std::size_t P = pick(0, K), S = pick(1, 3);
    const std::size_t H = pick(K, 20), W = pick(K, 20);
    Tensor img = random_tensor({C, H, W}, rng);
    Tensor ker = random_tensor({O, C, K, K}, rng);
    Tensor kb = random_tensor({O}, rng);
    img.set_requires_grad(true);
    ker.set_requires_grad(true);
    kb.set_requires_grad(true);
    const Tensor expected = naive_conv2d(img, ker, kb, S, P);
    Tape tape;
    const Var y = stsrn::conv2d(tape.leaf(img), tape.leaf(ker), tape.leaf(kb), S, P);
    r.conv_max_diff = std::max(r.conv_max_diff, stsrn::max_abs_diff(y.value(), expected));
    const Tensor up = random_tensor(y.shape(), rng);
    const Var loss = stsrn::sum(stsrn::mul(y, tape.constant(up)));
    tape.backward(loss);
    const ConvGrads g = naive_conv2d_backward(img, ker, up, S, P);
    r.conv_grad_max_diff = std::max({r.conv_grad_max_diff, stsrn::max_abs_diff(img.grad_tensor(), g.input),
                                     stsrn::max_abs_diff(ker.grad_tensor(), g.weight),
                                     stsrn::max_abs_diff(kb.grad_tensor(), g.bias)});

    const Tensor pin = random_tensor({C, pick(1, 12) * 2, pick(1, 12) * 2}, rng);
    Tape pt;
    r.pool_max_diff = std::max(r.pool_max_diff, stsrn::max_abs_diff(stsrn::maxpool2(pt.leaf(pin)).value(),
                                                                    naive_maxpool2(pin)));
    ++r.shapes;
  }
  return r;
}

}  // namespace oracle
