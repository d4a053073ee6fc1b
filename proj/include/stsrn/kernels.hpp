#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

// Raw CPU kernels behind the conv2d / maxpool2 autograd ops. All buffers are
// dense row-major [C, H, W]; backward kernels accumulate into their outputs.
namespace stsrn::kernels {

struct ConvGeometry {
  std::size_t in_channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_height() const { return (height + 2 * padding - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
  std::size_t patch_size() const { return in_channels * kernel * kernel; }
};

// Throws DimensionError / ArgumentError on an impossible geometry.
void validate(const ConvGeometry& g);

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);

// Any of grad_input / grad_weight / grad_bias may be empty to skip it.
void conv2d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_output,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias);

// 2x2 window, stride 2, trailing odd row/column dropped. argmax receives the
// flat input index of each output cell's maximum (first in row-major order
// on ties).
void maxpool2_forward(std::size_t channels, std::size_t height, std::size_t width,
                      std::span<const double> input, std::span<double> output,
                      std::span<std::uint32_t> argmax);

void maxpool2_backward(std::span<const std::uint32_t> argmax, std::span<const double> grad_output,
                       std::span<double> grad_input);

}  // namespace stsrn::kernels
