#pragma once

// Test-side references, written independently of the library kernels.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "stsrn/autograd.hpp"
#include "stsrn/gradcheck.hpp"

namespace oracle {

stsrn::Tensor random_tensor(const stsrn::Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);

// Direct 7-deep loop cross-correlation with zero padding.
stsrn::Tensor naive_conv2d(const stsrn::Tensor& input, const stsrn::Tensor& weight, const stsrn::Tensor& bias,
                           std::size_t stride, std::size_t padding);
stsrn::Tensor naive_maxpool2(const stsrn::Tensor& input);

struct ConvGrads {
  stsrn::Tensor input, weight, bias;
};
// Gradients of sum(upstream * conv(input)) by direct accumulation.
ConvGrads naive_conv2d_backward(const stsrn::Tensor& input, const stsrn::Tensor& weight,
                                const stsrn::Tensor& upstream, std::size_t stride, std::size_t padding);

// One finite-difference sweep per primitive op on random operands.
struct OpCheck {
  std::string op;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};
std::vector<OpCheck> check_primitive_ops(std::size_t trials, std::uint64_t seed);

// Largest deviations from the naive references over random shapes; the
// gradient comparison goes through Tape::backward.
struct KernelCheck {
  double conv_max_diff = 0.0;
  double pool_max_diff = 0.0;
  double conv_grad_max_diff = 0.0;
  std::size_t shapes = 0;
};
KernelCheck compare_kernels(std::size_t shapes, std::uint64_t seed);

}  // namespace oracle
