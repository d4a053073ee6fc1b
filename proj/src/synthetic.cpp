#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "stsrn/datasets.hpp"
#include "stsrn/errors.hpp"

namespace stsrn {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0, std::uint64_t d = 0) {
  return splitmix(splitmix(splitmix(splitmix(a) ^ b) ^ c) ^ d);
}

using Rgb = std::array<double, 3>;

Rgb random_color(std::mt19937_64& rng, double lo = 20.0, double hi = 235.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  return {u(rng), u(rng), u(rng)};
}

struct Signature {
  Rgb skin, hair, torso, stripe, legs;
  double stripe_period;  // fraction of image height
  double body_width;     // fraction of image width
};

struct CameraLook {
  Rgb top, bottom;
  std::array<double, 3> gain, offset;
  struct Blob {
    double y0, y1, x0, x1;
    Rgb color;
  };
  std::vector<Blob> blobs;
};

Signature make_signature(std::uint64_t seed, std::size_t id) {
  std::mt19937_64 rng(mix(seed, 0x1D, id));
  Signature s;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double tone = 120.0 + 110.0 * u(rng);
  s.skin = {tone, tone * 0.78, tone * 0.62};
  s.hair = random_color(rng, 10.0, 110.0);
  s.torso = random_color(rng);
  s.stripe = random_color(rng);
  s.legs = random_color(rng);
  s.stripe_period = 0.03 + 0.05 * u(rng);
  s.body_width = 0.45 + 0.2 * u(rng);
  return s;
}

CameraLook make_camera(std::uint64_t camera_seed, std::size_t cam) {
  std::mt19937_64 rng(mix(camera_seed, 0xCA, cam));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  CameraLook c;
  c.top = random_color(rng, 40.0, 200.0);
  c.bottom = random_color(rng, 40.0, 200.0);
  for (std::size_t k = 0; k < 3; ++k) {
    c.gain[k] = 0.85 + 0.3 * u(rng);
    c.offset[k] = -15.0 + 30.0 * u(rng);
  }
  for (int b = 0; b < 4; ++b) {
    const double y = u(rng), x = u(rng);
    c.blobs.push_back({y, std::min(1.0, y + 0.1 + 0.2 * u(rng)), x, std::min(1.0, x + 0.1 + 0.3 * u(rng)),
                       random_color(rng, 40.0, 200.0)});
  }
  return c;
}

Image render_background(const CameraLook& cam, std::size_t h, std::size_t w) {
  Image img(h, w, 3);
  for (std::size_t y = 0; y < h; ++y) {
    const double t = static_cast<double>(y) / static_cast<double>(h - 1);
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < 3; ++k) img.at(y, x, k) = (1.0 - t) * cam.top[k] + t * cam.bottom[k];
    }
  }
  for (const auto& b : cam.blobs) {
    for (std::size_t y = 0; y < h; ++y) {
      const double fy = static_cast<double>(y) / static_cast<double>(h);
      if (fy < b.y0 || fy >= b.y1) continue;
      for (std::size_t x = 0; x < w; ++x) {
        const double fx = static_cast<double>(x) / static_cast<double>(w);
        if (fx < b.x0 || fx >= b.x1) continue;
        for (std::size_t k = 0; k < 3; ++k) img.at(y, x, k) = b.color[k];
      }
    }
  }
  return img;
}

void paint(Image& img, std::size_t y, double x0, double x1, const Rgb& c) {
  const auto w = static_cast<double>(img.width);
  const std::size_t lo = static_cast<std::size_t>(std::clamp(std::ceil(x0), 0.0, w));
  const std::size_t hi = static_cast<std::size_t>(std::clamp(std::ceil(x1), 0.0, w));
  for (std::size_t x = lo; x < hi; ++x) {
    for (std::size_t k = 0; k < 3; ++k) img.at(y, x, k) = c[k];
  }
}

void render_person(Image& img, const Signature& s, double cx, double swing) {
  const auto h = static_cast<double>(img.height), w = static_cast<double>(img.width);
  const double half = 0.5 * s.body_width * w;
  const double head_r = 0.16 * w;
  for (std::size_t y = 0; y < img.height; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) / h;
    if (fy >= 0.05 && fy < 0.22) {
      // Head: ellipse with hair on the upper third.
      const double dy = (fy - 0.135) / 0.085;
      if (std::abs(dy) < 1.0) {
        const double dx = head_r * std::sqrt(1.0 - dy * dy);
        paint(img, y, cx - dx, cx + dx, fy < 0.1 ? s.hair : s.skin);
      }
    } else if (fy >= 0.22 && fy < 0.58) {
      const bool stripe = static_cast<int>((fy - 0.22) / s.stripe_period) % 2 == 1;
      paint(img, y, cx - half, cx + half, stripe ? s.stripe : s.torso);
    } else if (fy >= 0.58 && fy < 0.95) {
      const double leg = 0.4 * half;
      const double reach = swing * (fy - 0.58) / 0.37;
      paint(img, y, cx - half + reach, cx - half + reach + 2.0 * leg, s.legs);
      paint(img, y, cx + half - reach - 2.0 * leg, cx + half - reach, s.legs);
    }
  }
}

}  // namespace

RawDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_ids < 2) throw ArgumentError("generate_synthetic: need at least 2 identities");
  if (spec.n_cams < 1) throw ArgumentError("generate_synthetic: need at least 1 camera");
  if (spec.frames_per_seq < 1) throw ArgumentError("generate_synthetic: need at least 1 frame");
  if (spec.image_h < 32 || spec.image_w < 16) {
    throw ArgumentError("generate_synthetic: image must be at least 32x16, got " +
                        std::to_string(spec.image_h) + "x" + std::to_string(spec.image_w));
  }
  std::vector<Signature> people;
  for (std::size_t id = 0; id < spec.n_ids; ++id) people.push_back(make_signature(spec.seed, id));
  std::vector<CameraLook> cams;
  std::vector<Image> backgrounds;
  for (std::size_t c = 0; c < spec.n_cams; ++c) {
    cams.push_back(make_camera(spec.camera_seed, c));
    backgrounds.push_back(render_background(cams.back(), spec.image_h, spec.image_w));
  }

  RawDataset ds;
  const auto w = static_cast<double>(spec.image_w);
  for (std::size_t id = 0; id < spec.n_ids; ++id) {
    for (std::size_t c = 0; c < spec.n_cams; ++c) {
      std::mt19937_64 rng(mix(spec.seed, spec.camera_seed, id, c));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::normal_distribution<double> noise(0.0, spec.noise_stddev);
      const double phase = 2.0 * std::numbers::pi * u(rng);
      const double amplitude = (0.06 + 0.06 * u(rng)) * w;
      const double period = 10.0 + 6.0 * u(rng);
      const double centre = 0.5 * w + (u(rng) - 0.5) * 0.1 * w;

      RawSequence seq;
      char buf[32];
      std::snprintf(buf, sizeof buf, "person_%03zu", id);
      seq.person_id = buf;
      std::snprintf(buf, sizeof buf, "cam%zu", c + 1);
      seq.camera_id = buf;
      for (std::size_t t = 0; t < spec.frames_per_seq; ++t) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(t) / period + phase;
        Image frame = backgrounds[c];
        render_person(frame, people[id], centre + amplitude * std::sin(angle), 0.08 * w * std::sin(2.0 * angle));
        const auto& look = cams[c];
        for (std::size_t i = 0; i < spec.image_h * spec.image_w; ++i) {
          for (std::size_t k = 0; k < 3; ++k) {
            double& v = frame.data[3 * i + k];
            v = std::round(std::clamp(look.gain[k] * v + look.offset[k] + noise(rng), 0.0, 255.0));
          }
        }
        seq.frames.push_back(std::move(frame));
      }
      ds.sequences.push_back(std::move(seq));
    }
  }
  if (spec.n_cams < 2) {
    for (const auto& id : ds.identities()) ds.flagged_ids.push_back(id);
  }
  return ds;
}

}  // namespace stsrn
