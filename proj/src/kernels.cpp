#include "stsrn/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <string>
#include <vector>

#include "stsrn/errors.hpp"

namespace stsrn::kernels {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix, Eigen::AlignedMax>;
using MutMap = Eigen::Map<RowMatrix, Eigen::AlignedMax>;
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

// Every GEMM operand lives in an aligned buffer: Eigen picks its vectorized
// summation order from the data's address, and results must not depend on it.
Buffer& scratch(int slot) {
  thread_local Buffer buffers[5];
  return buffers[slot];
}

const Buffer& staged(int slot, std::span<const double> data) {
  auto& b = scratch(slot);
  b.assign(data.begin(), data.end());
  return b;
}

// cols is [C*k*k, OH*OW]
void im2col(const ConvGeometry& g, std::span<const double> input, Buffer& cols) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  const std::size_t plane = oh * ow;
  cols.assign(g.patch_size() * plane, 0.0);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const double* src = input.data() + c * g.height * g.width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* dst = cols.data() + ((c * k + ky) * k + kx) * plane;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          const double* row = src + iy * g.width;
          double* out = dst + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) out[ox] = row[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const Buffer& cols, std::span<double> grad_input) {
  const std::size_t oh = g.out_height(), ow = g.out_width(), k = g.kernel;
  const std::size_t plane = oh * ow;
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    double* dst = grad_input.data() + c * g.height * g.width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* src = cols.data() + ((c * k + ky) * k + kx) * plane;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          double* row = dst + iy * g.width;
          const double* in = src + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) row[ix] += in[ox];
          }
        }
      }
    }
  }
}

}  // namespace

void validate(const ConvGeometry& g) {
  if (g.stride == 0) throw ArgumentError("conv2d: stride must be positive");
  if (g.kernel == 0) throw ArgumentError("conv2d: kernel must be positive");
  if (g.kernel > g.height + 2 * g.padding || g.kernel > g.width + 2 * g.padding) {
    throw DimensionError("conv2d: kernel " + std::to_string(g.kernel) +
                         " larger than padded input " + std::to_string(g.height) + "x" +
                         std::to_string(g.width) + " (padding " + std::to_string(g.padding) + ")");
  }
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  auto& cols = scratch(0);
  im2col(g, input, cols);
  const auto plane = static_cast<Eigen::Index>(g.out_height() * g.out_width());
  const auto patch = static_cast<Eigen::Index>(g.patch_size());
  const auto cout = static_cast<Eigen::Index>(g.out_channels);
  ConstMap w(staged(2, weight).data(), cout, patch);
  ConstMap c(cols.data(), patch, plane);
  auto& result = scratch(4);
  result.resize(static_cast<std::size_t>(cout * plane));
  MutMap out(result.data(), cout, plane);
  out.noalias() = w * c;
  const auto n = static_cast<std::size_t>(plane);
  for (std::size_t o = 0; o < static_cast<std::size_t>(cout); ++o) {
    for (std::size_t i = 0; i < n; ++i) output[o * n + i] = result[o * n + i] + bias[o];
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> weight, std::span<const double> grad_output,
                     std::span<double> grad_input, std::span<double> grad_weight,
                     std::span<double> grad_bias) {
  const auto plane = static_cast<Eigen::Index>(g.out_height() * g.out_width());
  const auto patch = static_cast<Eigen::Index>(g.patch_size());
  const auto cout = static_cast<Eigen::Index>(g.out_channels);
  const auto n = static_cast<std::size_t>(plane);
  if (!grad_bias.empty()) {
    for (std::size_t o = 0; o < static_cast<std::size_t>(cout); ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += grad_output[o * n + i];
      grad_bias[o] += acc;
    }
  }
  if (grad_weight.empty() && grad_input.empty()) return;
  ConstMap gy(staged(3, grad_output).data(), cout, plane);
  if (!grad_weight.empty()) {
    auto& cols = scratch(0);
    im2col(g, input, cols);
    ConstMap c(cols.data(), patch, plane);
    auto& result = scratch(4);
    result.resize(static_cast<std::size_t>(cout * patch));
    MutMap gw(result.data(), cout, patch);
    gw.noalias() = gy * c.transpose();
    for (std::size_t i = 0; i < result.size(); ++i) grad_weight[i] += result[i];
  }
  if (!grad_input.empty()) {
    auto& gcols = scratch(1);
    gcols.resize(static_cast<std::size_t>(patch * plane));
    ConstMap w(staged(2, weight).data(), cout, patch);
    MutMap gc(gcols.data(), patch, plane);
    gc.noalias() = w.transpose() * gy;
    col2im_add(g, gcols, grad_input);
  }
}

void maxpool2_forward(std::size_t channels, std::size_t height, std::size_t width,
                      std::span<const double> input, std::span<double> output,
                      std::span<std::uint32_t> argmax) {
  const std::size_t oh = height / 2, ow = width / 2;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = (c * height + 2 * oy) * width + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (c * height + 2 * oy + dy) * width + 2 * ox + dx;
            if (input[idx] > input[best]) best = idx;
          }
        }
        const std::size_t o = (c * oh + oy) * ow + ox;
        output[o] = input[best];
        argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

void maxpool2_backward(std::span<const std::uint32_t> argmax, std::span<const double> grad_output,
                       std::span<double> grad_input) {
  for (std::size_t o = 0; o < argmax.size(); ++o) grad_input[argmax[o]] += grad_output[o];
}

}  // namespace stsrn::kernels
