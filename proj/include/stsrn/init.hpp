#pragma once

#include <random>

#include "stsrn/tensor.hpp"

namespace stsrn {

// Glorot/Xavier uniform: U(-b, b) with b = sqrt(6 / (fan_in + fan_out)).
// Rank-2 [out, in]: fans are in/out. Rank-4 conv [C_out, C_in, k, k]: fans
// are C_in*k*k and C_out*k*k. Rank-1 (bias) tensors come back zero.
Tensor xavier_init(const Shape& shape, std::mt19937_64& rng);

}  // namespace stsrn
