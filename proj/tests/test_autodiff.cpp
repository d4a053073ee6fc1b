#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "oracles.hpp"
#include "stsrn/errors.hpp"
#include "stsrn/init.hpp"
#include "stsrn/kernels.hpp"

using namespace stsrn;

TEST_CASE("tensor construction and shape checks") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK(t[5] == 0.0);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
  CHECK_THROWS_AS(Tensor({2}).item(), ArgumentError);
  CHECK_THROWS_AS(t.reshaped({4}), DimensionError);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
}

TEST_CASE("tensor dump round trip") {
  std::mt19937_64 rng(1);
  const Tensor t = oracle::random_tensor({3, 4, 2}, rng);
  std::stringstream ss;
  write_tensor_dump(ss, t);
  const Tensor back = read_tensor_dump(ss);
  CHECK(bit_equal(t, back));
}

TEST_CASE("conv2d and maxpool2 match naive loops") {
  const auto r = oracle::compare_kernels(60, 11);
  CHECK(r.conv_max_diff < 1e-12);
  CHECK(r.pool_max_diff == 0.0);
  CHECK(r.conv_grad_max_diff < 1e-12);
}

TEST_CASE("conv2d spec examples") {
  SUBCASE("1x1 kernel of ones over a single channel is identity") {
    std::mt19937_64 rng(2);
    const Tensor x = oracle::random_tensor({1, 4, 5}, rng);
    Tape tape;
    const Var y = conv2d(tape.leaf(x), tape.constant(Tensor::filled({1, 1, 1, 1}, 1.0)), tape.constant(Tensor({1})),
                         1, 0);
    CHECK(bit_equal(y.value(), x));
  }
  SUBCASE("k5 p4 grows the map by four") {
    Tape tape;
    const Var y = conv2d(tape.constant(Tensor({3, 16, 8})), tape.constant(Tensor({2, 3, 5, 5})),
                         tape.constant(Tensor({2})), 1, 4);
    CHECK(y.shape() == Shape{2, 20, 12});
  }
  SUBCASE("channel mismatch") {
    Tape tape;
    CHECK_THROWS_AS(conv2d(tape.constant(Tensor({3, 8, 8})), tape.constant(Tensor({2, 2, 3, 3})),
                           tape.constant(Tensor({2})), 1, 1),
                    DimensionError);
  }
  SUBCASE("kernel larger than padded input") {
    Tape tape;
    CHECK_THROWS(conv2d(tape.constant(Tensor({1, 2, 2})), tape.constant(Tensor({1, 1, 5, 5})),
                        tape.constant(Tensor({1})), 1, 0));
  }
}

TEST_CASE("maxpool2 examples") {
  Tensor x({1, 2, 2}, {1.0, 3.0, 2.0, 0.5});
  x.set_requires_grad(true);
  Tape tape;
  const Var y = maxpool2(tape.leaf(x));
  CHECK(y.value().item() == 3.0);
  tape.backward(sum(y));
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[0] == 0.0);

  SUBCASE("ties route to the first maximum") {
    Tensor z = Tensor::filled({1, 2, 2}, 7.0);
    z.set_requires_grad(true);
    Tape t2;
    t2.backward(sum(maxpool2(t2.leaf(z))));
    CHECK(z.grad()[0] == 1.0);
    CHECK(z.grad()[1] + z.grad()[2] + z.grad()[3] == 0.0);
  }
  SUBCASE("odd trailing row and column are dropped") {
    Tensor odd({1, 3, 5});
    for (std::size_t i = 0; i < odd.size(); ++i) odd[i] = static_cast<double>(i);
    Tape t3;
    const Tensor y = maxpool2(t3.constant(odd)).value();
    CHECK(y.shape() == Shape{1, 1, 2});
    CHECK(y[0] == 6.0);
    CHECK(y[1] == 8.0);
  }
  SUBCASE("below 2x2 is rejected") {
    Tape t4;
    CHECK_THROWS_AS(maxpool2(t4.constant(Tensor({1, 1, 4}))), DimensionError);
  }
}

TEST_CASE("finite differences agree with every primitive op") {
  for (const auto& c : oracle::check_primitive_ops(10, 5)) {
    INFO(c.op);
    CHECK(c.checked > 0);
    CHECK(c.max_rel_error < 1e-4);
  }
}

TEST_CASE("finite_diff_check flags a wrong backward rule") {
  auto broken = [](Tape& tape, Var x) {
    Tensor y = x.value();
    for (double& v : y.data()) v = v * v;
    return sum(tape.record(std::move(y), {x}, [](const BackwardContext& ctx) {
      for (std::size_t i = 0; i < ctx.grad_input(0).size(); ++i) {
        ctx.grad_input(0)[i] += ctx.grad_output()[i] * ctx.input(0)[i];  // missing factor 2
      }
    }));
  };
  const auto r = finite_diff_check(broken, Tensor({3}, {0.5, -1.0, 2.0}));
  CHECK(r.max_rel_error > 0.1);
}

TEST_CASE("backward semantics") {
  SUBCASE("non-scalar loss is rejected") {
    Tensor x = Tensor::filled({3}, 1.0);
    x.set_requires_grad(true);
    Tape tape;
    CHECK_THROWS_AS(tape.backward(tanh(tape.leaf(x))), ArgumentError);
  }
  SUBCASE("a leaf used twice accumulates") {
    Tensor x({1}, {3.0});
    x.set_requires_grad(true);
    Tape tape;
    const Var a = tape.leaf(x);
    const Var b = tape.leaf(x);
    CHECK(a.index() == b.index());
    tape.backward(sum(mul(a, b)));
    CHECK(x.grad()[0] == doctest::Approx(6.0));
  }
  SUBCASE("unreached leaves receive zeros and the tape is cleared") {
    Tensor x({2}, {1.0, 2.0});
    Tensor unused({2}, {1.0, 1.0});
    x.set_requires_grad(true);
    unused.set_requires_grad(true);
    Tape tape;
    tape.leaf(unused);
    tape.backward(sum(tape.leaf(x)));
    CHECK(unused.has_grad());
    CHECK(unused.grad()[0] == 0.0);
    CHECK(tape.size() == 0);
  }
  SUBCASE("detach stops gradient") {
    Tensor x({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    Tape tape;
    const Var v = tape.leaf(x);
    tape.backward(sum(mul(v, detach(v))));
    CHECK(x.grad()[0] == doctest::Approx(1.0));
    CHECK(x.grad()[1] == doctest::Approx(2.0));
  }
  SUBCASE("grad disabled records values only") {
    Tensor x({2}, {1.0, 2.0});
    x.set_requires_grad(true);
    Tape tape;
    tape.set_grad_enabled(false);
    const Var y = tanh(tape.leaf(x));
    CHECK_FALSE(y.needs_grad());
  }
  SUBCASE("non-finite results raise") {
    Tape tape;
    CHECK_THROWS_AS(scalar_mul(tape.constant(Tensor({1}, {1e308})), 1e10), NumericError);
  }
}

TEST_CASE("tanh commutes with maxpool2") {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 20; ++i) {
    const Tensor x = oracle::random_tensor({3, 6, 4}, rng, -3.0, 3.0);
    Tape tape;
    const Var v = tape.leaf(x);
    CHECK(max_abs_diff(tanh(maxpool2(v)).value(), maxpool2(tanh(v)).value()) < 1e-15);
  }
}

TEST_CASE("softmax cross entropy") {
  Tape tape;
  CHECK(softmax_cross_entropy(tape.constant(Tensor({4})), 2).value().item() == doctest::Approx(std::log(4.0)));
  CHECK(softmax_cross_entropy(tape.constant(Tensor({3}, {50.0, 0.0, 0.0})), 0).value().item() < 1e-20);
  CHECK(std::isfinite(softmax_cross_entropy(tape.constant(Tensor({2}, {1000.0, -1000.0})), 1).value().item()));
  CHECK_THROWS_AS(softmax_cross_entropy(tape.constant(Tensor({3})), 3), ArgumentError);
}

TEST_CASE("xavier init") {
  std::mt19937_64 rng(3);
  const Tensor w = xavier_init({100, 100}, rng);
  double mean = 0.0, var = 0.0;
  for (double v : w.data()) mean += v;
  mean /= static_cast<double>(w.size());
  for (double v : w.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(w.size());
  // uniform(-b, b) with b = sqrt(6/200) has variance b^2/3 = 2/200
  CHECK(std::abs(var - 0.01) < 0.002);
  const double bound = std::sqrt(6.0 / 200.0);
  for (double v : w.data()) CHECK(std::abs(v) <= bound);

  std::mt19937_64 again(3);
  CHECK(bit_equal(xavier_init({100, 100}, again), w));
  CHECK(xavier_init({7}, rng).values() == std::vector<double>(7, 0.0));
  CHECK_THROWS_AS(xavier_init({2, 2, 2}, rng), ArgumentError);

  const Tensor conv = xavier_init({8, 4, 5, 5}, rng);
  const double cb = std::sqrt(6.0 / (4 * 25 + 8 * 25));
  double mx = 0.0;
  for (double v : conv.data()) mx = std::max(mx, std::abs(v));
  CHECK(mx <= cb);
  CHECK(mx > 0.9 * cb);
}
