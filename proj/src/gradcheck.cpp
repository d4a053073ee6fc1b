#include "stsrn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "stsrn/errors.hpp"

namespace stsrn {
namespace {

// A derivative jump of order one shows up as a one-sided mismatch of order
// one; smooth curvature only contributes O(eps).
constexpr double kKinkTolerance = 1e-3;
// Smooth functions give central differences at eps and eps/2 that agree to
// O(eps^2) plus roundoff; a small kink inside the stencil does not.
constexpr double kScaleTolerance = 1e-6;

double evaluate(const std::function<Var(Tape&)>& loss) {
  Tape tape;
  tape.set_grad_enabled(false);
  Var out = loss(tape);
  if (out.size() != 1) throw ArgumentError("finite_diff_check: function is not scalar-valued");
  return out.value()[0];
}

void check_coordinate(const std::function<Var(Tape&)>& loss, Tensor& target, std::size_t i,
                      double analytic, double f0, double eps, GradCheckReport& report,
                      std::size_t report_index) {
  const double x0 = target[i];
  target[i] = x0 + eps;
  const double fp = evaluate(loss);
  target[i] = x0 - eps;
  const double fm = evaluate(loss);
  target[i] = x0 + eps / 2;
  const double hp = evaluate(loss);
  target[i] = x0 - eps / 2;
  const double hm = evaluate(loss);
  target[i] = x0;

  const double forward = (fp - f0) / eps;
  const double backward = (f0 - fm) / eps;
  if (std::abs(forward - backward) >
      kKinkTolerance * std::max({1.0, std::abs(forward), std::abs(backward)})) {
    ++report.kinks;
    return;
  }
  const double numeric = (fp - fm) / (2.0 * eps);
  const double half = (hp - hm) / eps;
  if (std::abs(numeric - half) > kScaleTolerance * std::max(1.0, std::abs(numeric))) {
    ++report.kinks;
    return;
  }
  const double rel =
      std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  ++report.checked;
  if (rel > report.max_rel_error) {
    report.max_rel_error = rel;
    report.worst_index = report_index;
  }
}

}  // namespace

GradCheckReport finite_diff_check(const TapeFunction& f, const Tensor& point, double eps) {
  Tensor x = point;
  x.set_requires_grad(true);
  x.clear_grad();
  auto loss = [&](Tape& tape) { return f(tape, tape.leaf(x)); };
  {
    Tape tape;
    Var out = loss(tape);
    if (out.size() != 1) throw ArgumentError("finite_diff_check: function is not scalar-valued");
    tape.backward(out);
  }
  const std::vector<double> analytic(x.grad().begin(), x.grad().end());
  const double f0 = evaluate(loss);
  GradCheckReport report;
  for (std::size_t i = 0; i < x.size(); ++i) {
    check_coordinate(loss, x, i, analytic[i], f0, eps, report, i);
  }
  return report;
}

GradCheckReport finite_diff_check_params(const std::function<Var(Tape&)>& loss,
                                         std::span<Tensor* const> params, double eps,
                                         std::size_t max_coords_per_tensor) {
  for (Tensor* p : params) {
    p->set_requires_grad(true);
    p->clear_grad();
  }
  {
    Tape tape;
    Var out = loss(tape);
    if (out.size() != 1) throw ArgumentError("finite_diff_check: function is not scalar-valued");
    tape.backward(out);
  }
  const double f0 = evaluate(loss);
  GradCheckReport report;
  std::size_t offset = 0;
  for (Tensor* p : params) {
    if (!p->has_grad()) throw ArgumentError("finite_diff_check: parameter did not receive a gradient");
    const std::vector<double> analytic(p->grad().begin(), p->grad().end());
    const std::size_t n = p->size();
    const std::size_t step =
        (max_coords_per_tensor == 0 || n <= max_coords_per_tensor) ? 1 : n / max_coords_per_tensor;
    for (std::size_t i = 0; i < n; i += step) {
      check_coordinate(loss, *p, i, analytic[i], f0, eps, report, offset + i);
    }
    offset += n;
  }
  return report;
}

}  // namespace stsrn
