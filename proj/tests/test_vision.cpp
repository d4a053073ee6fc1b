#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "oracles.hpp"
#include "stsrn/errors.hpp"
#include "stsrn/vision.hpp"

using namespace stsrn;

namespace {

Image rgb_pixel(double r, double g, double b) {
  Image img(1, 1, 3);
  img.at(0, 0, 0) = r;
  img.at(0, 0, 1) = g;
  img.at(0, 0, 2) = b;
  return img;
}

Image sinusoid(std::size_t h, std::size_t w, double shift) {
  Image img(h, w, 1);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double xs = static_cast<double>(x) - shift;
      img.at(y, x) = 0.5 + 0.2 * std::sin(2 * std::numbers::pi * xs / 16.0) +
                     0.15 * std::cos(2 * std::numbers::pi * static_cast<double>(y) / 13.0);
    }
  }
  return img;
}

FrameSequence random_sequence(std::size_t t, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  FrameSequence s;
  s.person_id = "p";
  s.camera_id = "c";
  for (std::size_t i = 0; i < t; ++i) {
    Tensor f = oracle::random_tensor({kInputChannels, h, w}, rng, 0.0, 1.0);
    for (std::size_t k = 0; k < 2 * h * w; ++k) f[3 * h * w + k] = f[3 * h * w + k] * 2.0 - 1.0;
    s.frames.push_back(std::move(f));
  }
  return s;
}

}  // namespace

TEST_CASE("rgb_to_yuv") {
  SUBCASE("achromatic") {
    const Image yuv = rgb_to_yuv(rgb_pixel(100, 100, 100));
    CHECK(yuv.at(0, 0, 0) == doctest::Approx(100.0));
    CHECK(std::abs(yuv.at(0, 0, 1)) < 1e-12);
    CHECK(std::abs(yuv.at(0, 0, 2)) < 1e-12);
  }
  SUBCASE("black") {
    const Image yuv = rgb_to_yuv(rgb_pixel(0, 0, 0));
    for (std::size_t c = 0; c < 3; ++c) CHECK(yuv.at(0, 0, c) == 0.0);
  }
  SUBCASE("pure red, full-range coefficients") {
    const Image yuv = rgb_to_yuv(rgb_pixel(255, 0, 0));
    CHECK(yuv.at(0, 0, 0) == doctest::Approx(0.299 * 255).epsilon(1e-12));
    CHECK(yuv.at(0, 0, 1) == doctest::Approx(-0.168736 * 255).epsilon(1e-12));
    CHECK(yuv.at(0, 0, 2) == doctest::Approx(127.5).epsilon(1e-12));
  }
  SUBCASE("out-of-range inputs are clamped") {
    const Image a = rgb_to_yuv(rgb_pixel(300, -5, 255));
    const Image b = rgb_to_yuv(rgb_pixel(255, 0, 255));
    for (std::size_t c = 0; c < 3; ++c) CHECK(a.at(0, 0, c) == b.at(0, 0, c));
  }
}

TEST_CASE("lucas-kanade flow") {
  SUBCASE("identical frames") {
    const Image a = sinusoid(24, 24, 0.0);
    const FlowField f = lucas_kanade_flow(a, a);
    for (double v : f.x.data) CHECK(v == 0.0);
    for (double v : f.y.data) CHECK(v == 0.0);
  }
  SUBCASE("constant frames hit the conditioning guard") {
    Image a(16, 16, 1), b(16, 16, 1);
    for (double& v : a.data) v = 0.4;
    for (double& v : b.data) v = 0.6;
    const FlowField f = lucas_kanade_flow(a, b);
    for (double v : f.x.data) CHECK(v == 0.0);
    for (double v : f.y.data) CHECK(v == 0.0);
  }
  SUBCASE("one-pixel shift to the right") {
    const Image a = sinusoid(40, 40, 0.0);
    const Image b = sinusoid(40, 40, 1.0);
    const FlowField f = lucas_kanade_flow_pixels(a, b);
    double dev_x = 0.0, dev_y = 0.0;
    std::size_t n = 0;
    for (std::size_t y = 6; y < 34; ++y) {
      for (std::size_t x = 6; x < 34; ++x) {
        dev_x += std::abs(f.x.at(y, x) - 1.0);
        dev_y += std::abs(f.y.at(y, x));
        ++n;
      }
    }
    CHECK(dev_x / static_cast<double>(n) < 0.15);
    CHECK(dev_y / static_cast<double>(n) < 0.15);
    const FlowField scaled = lucas_kanade_flow(a, b);
    CHECK(scaled.x.at(20, 20) == doctest::Approx(f.x.at(20, 20) / kFlowScalePixels));
  }
  SUBCASE("bad windows") {
    const Image a = sinusoid(8, 8, 0.0);
    CHECK_THROWS_AS(lucas_kanade_flow(a, a, 4), ArgumentError);
    CHECK_THROWS_AS(lucas_kanade_flow(a, a, 9), ArgumentError);
    CHECK_THROWS_AS(lucas_kanade_flow(a, sinusoid(8, 10, 0.0)), DimensionError);
  }
}

TEST_CASE("preprocess_sequence") {
  RawSequence raw;
  raw.person_id = "p1";
  raw.camera_id = "c1";
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 255);
  for (int t = 0; t < 4; ++t) {
    Image img(20, 12, 3);
    for (double& v : img.data) v = u(rng);
    raw.frames.push_back(img);
  }
  const FrameSequence s = preprocess_sequence(raw);
  REQUIRE(s.length() == 4);
  CHECK(s.frames[0].shape() == Shape{5, 20, 12});
  const std::size_t plane = 20 * 12;
  for (const auto& f : s.frames) {
    for (std::size_t i = 0; i < plane; ++i) {
      CHECK(f[i] >= 0.0);
      CHECK(f[i] <= 1.0);
      CHECK(std::abs(f[3 * plane + i]) <= 1.0);
      CHECK(std::abs(f[4 * plane + i]) <= 1.0);
    }
  }
  // The first frame borrows the second frame's flow.
  for (std::size_t i = 3 * plane; i < 5 * plane; ++i) CHECK(s.frames[0][i] == s.frames[1][i]);
  const Image yuv = rgb_to_yuv(raw.frames[2]);
  CHECK(s.frames[2][0] == doctest::Approx(yuv.at(0, 0, 0) / 255.0));
  CHECK(s.frames[2][plane] == doctest::Approx(yuv.at(0, 0, 1) / 255.0 + 0.5));
}

TEST_CASE("channel statistics") {
  std::mt19937_64 rng(5);
  std::vector<FrameSequence> train{random_sequence(3, 6, 4, rng), random_sequence(5, 6, 4, rng)};
  train[1].person_id = "q";

  SUBCASE("standardized training data has zero mean and unit variance") {
    std::vector<FrameSequence> copy = train;
    const ChannelStats stats = normalize_dataset(copy);
    for (std::size_t c = 0; c < kInputChannels; ++c) {
      double s = 0.0, ss = 0.0;
      std::size_t n = 0;
      for (const auto& seq : copy) {
        for (const auto& f : seq.frames) {
          for (std::size_t i = 0; i < 24; ++i) {
            s += f[c * 24 + i];
            ss += f[c * 24 + i] * f[c * 24 + i];
            ++n;
          }
        }
      }
      const double mean = s / static_cast<double>(n);
      CHECK(std::abs(mean) < 1e-6);
      CHECK(std::abs(std::sqrt(ss / static_cast<double>(n) - mean * mean) - 1.0) < 1e-3);
    }
    CHECK(stats.source == sequence_fingerprint(train));
  }
  SUBCASE("two-valued channel maps to -1 and +1") {
    FrameSequence s;
    s.person_id = "a";
    s.camera_id = "b";
    Tensor f({5, 1, 2});
    f[0] = 0.0;
    f[1] = 1.0;
    s.frames.push_back(f);
    std::vector<FrameSequence> v{s};
    normalize_dataset(v);
    CHECK(v[0].frames[0][0] == doctest::Approx(-1.0));
    CHECK(v[0].frames[0][1] == doctest::Approx(1.0));
    // constant channels collapse to zero through the floor
    CHECK(v[0].frames[0][2] == 0.0);
  }
  SUBCASE("empty input") {
    std::vector<FrameSequence> none;
    CHECK_THROWS_AS(normalize_dataset(none), ArgumentError);
  }
  SUBCASE("text round trip is exact") {
    const ChannelStats stats = fit_channel_stats(train);
    std::stringstream ss;
    write_channel_stats(ss, stats);
    CHECK(ss.str().find("channel_0_mean=") != std::string::npos);
    const ChannelStats back = read_channel_stats(ss);
    CHECK(back.mean == stats.mean);
    CHECK(back.stddev == stats.stddev);
    CHECK(back.source == stats.source);
  }
}

TEST_CASE("augment_sequence") {
  std::mt19937_64 rng(6);
  const FrameSequence s = random_sequence(3, 10, 6, rng);
  const std::size_t plane = 60;

  CHECK(bit_equal(augment_sequence(s, 0, 0, false).frames[1], s.frames[1]));
  const FrameSequence twice = augment_sequence(augment_sequence(s, 0, 0, true), 0, 0, true);
  for (std::size_t t = 0; t < 3; ++t) CHECK(bit_equal(twice.frames[t], s.frames[t]));

  FrameSequence flow = s;
  for (auto& f : flow.frames) {
    for (std::size_t i = 0; i < plane; ++i) f[3 * plane + i] = 0.3;
  }
  const FrameSequence mirrored = augment_sequence(flow, 0, 0, true);
  for (std::size_t i = 0; i < plane; ++i) CHECK(mirrored.frames[0][3 * plane + i] == -0.3);

  // horizontal flip of the Y plane
  CHECK(mirrored.frames[2][0] == flow.frames[2][5]);

  const FrameSequence shifted = augment_sequence(s, 2, -1, false);
  CHECK(shifted.length() == s.length());
  CHECK(shifted.person_id == s.person_id);
  CHECK(shifted.frames[0].shape() == s.frames[0].shape());
  // output(y, x) = input(y + dy, x + dx), replicate at the border
  CHECK(shifted.frames[0][3 * 6 + 1] == s.frames[0][2 * 6 + 3]);
  CHECK(shifted.frames[0][0 * 6 + 5] == s.frames[0][0 * 6 + 5]);

  CHECK_THROWS_AS(augment_sequence(s, 9, 0, false), ArgumentError);
  CHECK_THROWS_AS(augment_sequence(s, 0, -9, false), ArgumentError);

  for (int i = 0; i < 50; ++i) {
    const Augmentation a = random_augmentation(rng);
    CHECK(std::abs(a.crop_dx) <= kMaxCropOffset);
    CHECK(std::abs(a.crop_dy) <= kMaxCropOffset);
  }
}
