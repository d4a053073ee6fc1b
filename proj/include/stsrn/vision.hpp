#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stsrn/tensor.hpp"

namespace stsrn {

// Interleaved H x W x C image of doubles.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c) : height(h), width(w), channels(c), data(h * w * c, 0.0) {}

  double& at(std::size_t y, std::size_t x, std::size_t c = 0) { return data[(y * width + x) * channels + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return data[(y * width + x) * channels + c];
  }
};

// One person/camera tracklet of RGB frames with values in [0, 255].
struct RawSequence {
  std::vector<Image> frames;
  std::string person_id;
  std::string camera_id;
};

// Network input channels, in order.
enum Channel : std::size_t { kY = 0, kU = 1, kV = 2, kFlowX = 3, kFlowY = 4 };
inline constexpr std::size_t kInputChannels = 5;

// Frames stored channel-major as Tensor[5, H, W] so they feed conv2d
// directly.
struct FrameSequence {
  std::vector<Tensor> frames;
  std::string person_id;
  std::string camera_id;

  std::size_t length() const { return frames.size(); }
  std::size_t height() const { return frames.empty() ? 0 : frames[0].dim(1); }
  std::size_t width() const { return frames.empty() ? 0 : frames[0].dim(2); }
};

// BT.601 full range. Y in [0,255]; U, V centred on 0 in [-127.5, 127.5].
Image rgb_to_yuv(const Image& rgb);

struct FlowField {
  Image x;  // single channel
  Image y;
};

inline constexpr double kFlowConditionThreshold = 1e-4;
inline constexpr double kFlowScalePixels = 8.0;

// Dense Lucas-Kanade on single-channel images: per-pixel least squares over
// a window x window neighbourhood. Pixels whose structure tensor has smallest
// eigenvalue below kFlowConditionThreshold get zero flow. Result in pixels.
FlowField lucas_kanade_flow_pixels(const Image& prev, const Image& next, std::size_t window = 5);

// Same, divided by kFlowScalePixels and clamped to [-1, 1].
FlowField lucas_kanade_flow(const Image& prev, const Image& next, std::size_t window = 5);

// YUV scaled to [0,1] plus LK flow in [-1,1] for every frame. Frame t uses
// the pair (t-1, t); the first frame reuses the second frame's flow.
FrameSequence preprocess_sequence(const RawSequence& raw, std::size_t window = 5);

inline constexpr double kStdFloor = 1e-6;

struct ChannelStats {
  std::array<double, kInputChannels> mean{};
  std::array<double, kInputChannels> stddev{};
  // Fingerprint of the sequences the statistics were fitted on.
  std::string source;
};

ChannelStats fit_channel_stats(std::span<const FrameSequence> training);
// (x - mean) / max(stddev, kStdFloor) per channel.
void apply_channel_stats(FrameSequence& seq, const ChannelStats& stats);
Tensor standardize_frame(const Tensor& frame, const ChannelStats& stats);

// Fits statistics on `training` (ArgumentError when empty) and standardizes
// it in place; the returned stats are meant for reuse on test data.
ChannelStats normalize_dataset(std::vector<FrameSequence>& training);

// Stable identifier for a set of sequences (person/camera/length keys).
std::string sequence_fingerprint(std::span<const FrameSequence> seqs);

void write_channel_stats(std::ostream& out, const ChannelStats& stats);
ChannelStats read_channel_stats(std::istream& in);

inline constexpr int kMaxCropOffset = 8;

struct Augmentation {
  int crop_dx = 0;
  int crop_dy = 0;
  bool mirror = false;
};

// Same crop offset and mirror flag on every frame. The crop samples a
// replicate-padded (by kMaxCropOffset) frame at the shifted window, so output
// dimensions match the input. Mirroring also negates flow-x.
FrameSequence augment_sequence(const FrameSequence& seq, int crop_dx, int crop_dy, bool mirror);
FrameSequence augment_sequence(const FrameSequence& seq, const Augmentation& aug);

Augmentation random_augmentation(std::mt19937_64& rng);

}  // namespace stsrn
