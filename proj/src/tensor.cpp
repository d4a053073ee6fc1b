#include "stsrn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

#include "stsrn/array_io.hpp"
#include "stsrn/errors.hpp"

namespace stsrn {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ArgumentError("item() on tensor of shape " + shape_string(shape_));
  }
  return data_[0];
}

std::span<double> Tensor::mutable_grad() {
  if (!grad_set_) zero_grad();
  return grad_;
}

void Tensor::set_grad(std::vector<double> grad) {
  if (grad.size() != data_.size()) {
    throw DimensionError("gradient size does not match tensor " + shape_string(shape_));
  }
  grad_ = std::move(grad);
  grad_set_ = true;
}

void Tensor::zero_grad() {
  grad_.assign(data_.size(), 0.0);
  grad_set_ = true;
}

void Tensor::clear_grad() {
  grad_.clear();
  grad_.shrink_to_fit();
  grad_set_ = false;
}

Tensor Tensor::grad_tensor() const {
  if (!grad_set_) return Tensor(shape_);
  return Tensor(shape_, grad_);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return a.size() == 0 ||
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff: " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void write_tensor_dump(std::ostream& out, const Tensor& t) {
  out << "shape:";
  for (std::size_t d : t.shape()) out << ' ' << d;
  out << '\n';
  write_f64_le(out, t.data());
}

Tensor read_tensor_dump(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("shape:", 0) != 0) {
    throw LoadError("tensor dump: missing 'shape:' header");
  }
  std::istringstream is(line.substr(6));
  Shape shape;
  std::size_t d = 0;
  while (is >> d) shape.push_back(d);
  Tensor t(shape);
  read_f64_le(in, t.data(), "tensor dump");
  return t;
}

}  // namespace stsrn
