#pragma once

#include <cstddef>
#include <functional>

#include "stsrn/autograd.hpp"

namespace stsrn {

// Scalar-valued function of one tensor, built on the supplied tape.
using TapeFunction = std::function<Var(Tape&, Var)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Coordinates whose one-sided differences disagree (a kink such as a
  // max-pool switch or relu at zero); excluded from max_rel_error.
  std::size_t kinks = 0;
  std::size_t worst_index = 0;
};

// Central differences (f(x+e)-f(x-e))/2e against the tape gradient, with
// relative error |a-n| / max(|a|, |n|, 1e-8) per coordinate.
GradCheckReport finite_diff_check(const TapeFunction& f, const Tensor& point, double eps = 1e-5);

// Checks every tensor in `params` against a loss that reads them through
// Tape::leaf. `max_coords_per_tensor` = 0 checks every coordinate.
GradCheckReport finite_diff_check_params(const std::function<Var(Tape&)>& loss,
                                         std::span<Tensor* const> params, double eps = 1e-5,
                                         std::size_t max_coords_per_tensor = 0);

}  // namespace stsrn
