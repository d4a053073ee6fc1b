#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace stsrn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles with an optional gradient buffer.
//
// The gradient buffer is written by Tape::backward for leaves that were
// registered with requires_grad set. It always has the same element count
// as the value buffer once present.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor filled(Shape shape, double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Single element access; throws ArgumentError unless size() == 1.
  double item() const;

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool on) {
    requires_grad_ = on;
    return *this;
  }

  bool has_grad() const { return grad_set_; }
  std::span<const double> grad() const { return grad_; }
  std::span<double> mutable_grad();
  void set_grad(std::vector<double> grad);
  void zero_grad();
  void clear_grad();
  Tensor grad_tensor() const;

  // Same values under a new shape with the same element count.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;

 private:
  Shape shape_{0};
  std::vector<double> data_;
  bool requires_grad_ = false;
  bool grad_set_ = false;
  std::vector<double> grad_;
};

bool bit_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

// Debug dump: "shape: d0 d1 ...\n" followed by little-endian f64 values.
void write_tensor_dump(std::ostream& out, const Tensor& t);
Tensor read_tensor_dump(std::istream& in);

}  // namespace stsrn
