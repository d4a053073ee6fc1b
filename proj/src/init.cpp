#include "stsrn/init.hpp"

#include <cmath>

#include "stsrn/errors.hpp"

namespace stsrn {

Tensor xavier_init(const Shape& shape, std::mt19937_64& rng) {
  Tensor t(shape);
  double fan_in = 0.0, fan_out = 0.0;
  switch (shape.size()) {
    case 1:
      return t;
    case 2:
      fan_out = static_cast<double>(shape[0]);
      fan_in = static_cast<double>(shape[1]);
      break;
    case 4: {
      const double area = static_cast<double>(shape[2] * shape[3]);
      fan_out = static_cast<double>(shape[0]) * area;
      fan_in = static_cast<double>(shape[1]) * area;
      break;
    }
    default:
      throw ArgumentError("xavier_init: no fan-in/fan-out for shape " + shape_string(shape));
  }
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : t.data()) v = u(rng);
  return t;
}

}  // namespace stsrn
