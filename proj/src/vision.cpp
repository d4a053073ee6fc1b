#include "stsrn/vision.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "stsrn/errors.hpp"

namespace stsrn {
namespace {

double clamp255(double v) { return std::clamp(v, 0.0, 255.0); }

Image luma_unit(const Image& rgb) {
  Image gray(rgb.height, rgb.width, 1);
  for (std::size_t i = 0; i < rgb.height * rgb.width; ++i) {
    const double r = clamp255(rgb.data[3 * i]);
    const double g = clamp255(rgb.data[3 * i + 1]);
    const double b = clamp255(rgb.data[3 * i + 2]);
    gray.data[i] = (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
  }
  return gray;
}

// Central differences, one-sided at the border.
void gradients(const Image& img, Image& gx, Image& gy) {
  const std::size_t h = img.height, w = img.width;
  gx = Image(h, w, 1);
  gy = Image(h, w, 1);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t xl = x == 0 ? 0 : x - 1, xr = x + 1 == w ? x : x + 1;
      const std::size_t yu = y == 0 ? 0 : y - 1, yd = y + 1 == h ? y : y + 1;
      gx.at(y, x) = xr == xl ? 0.0 : (img.at(y, xr) - img.at(y, xl)) / static_cast<double>(xr - xl);
      gy.at(y, x) = yd == yu ? 0.0 : (img.at(yd, x) - img.at(yu, x)) / static_cast<double>(yd - yu);
    }
  }
}

// Window sums via a summed-area table, window clipped at the borders.
Image box_sum(const Image& img, std::size_t window) {
  const std::size_t h = img.height, w = img.width, r = window / 2;
  std::vector<double> sat((h + 1) * (w + 1), 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    double row = 0.0;
    for (std::size_t x = 0; x < w; ++x) {
      row += img.at(y, x);
      sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
    }
  }
  Image out(h, w, 1);
  for (std::size_t y = 0; y < h; ++y) {
    const std::size_t y0 = y >= r ? y - r : 0, y1 = std::min(h, y + r + 1);
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t x0 = x >= r ? x - r : 0, x1 = std::min(w, x + r + 1);
      out.at(y, x) = sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0] +
                     sat[y0 * (w + 1) + x0];
    }
  }
  return out;
}

Image product(const Image& a, const Image& b) {
  Image out(a.height, a.width, 1);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

}  // namespace

Image rgb_to_yuv(const Image& rgb) {
  if (rgb.channels != 3) throw DimensionError("rgb_to_yuv: expected 3 channels");
  Image yuv(rgb.height, rgb.width, 3);
  for (std::size_t i = 0; i < rgb.height * rgb.width; ++i) {
    const double r = clamp255(rgb.data[3 * i]);
    const double g = clamp255(rgb.data[3 * i + 1]);
    const double b = clamp255(rgb.data[3 * i + 2]);
    yuv.data[3 * i] = 0.299 * r + 0.587 * g + 0.114 * b;
    yuv.data[3 * i + 1] = -0.168736 * r - 0.331264 * g + 0.5 * b;
    yuv.data[3 * i + 2] = 0.5 * r - 0.418688 * g - 0.081312 * b;
  }
  return yuv;
}

FlowField lucas_kanade_flow_pixels(const Image& prev, const Image& next, std::size_t window) {
  if (prev.channels != 1 || next.channels != 1) throw DimensionError("lucas_kanade_flow: expects single-channel images");
  if (prev.height != next.height || prev.width != next.width) {
    throw DimensionError("lucas_kanade_flow: frame sizes differ");
  }
  if (window % 2 == 0 || window > prev.height || window > prev.width) {
    throw ArgumentError("lucas_kanade_flow: window must be odd and fit the image, got " +
                        std::to_string(window));
  }
  Image mean(prev.height, prev.width, 1), dt(prev.height, prev.width, 1);
  for (std::size_t i = 0; i < mean.data.size(); ++i) {
    mean.data[i] = 0.5 * (prev.data[i] + next.data[i]);
    dt.data[i] = next.data[i] - prev.data[i];
  }
  Image ix, iy;
  gradients(mean, ix, iy);
  const Image sxx = box_sum(product(ix, ix), window);
  const Image sxy = box_sum(product(ix, iy), window);
  const Image syy = box_sum(product(iy, iy), window);
  const Image sxt = box_sum(product(ix, dt), window);
  const Image syt = box_sum(product(iy, dt), window);

  FlowField flow{Image(prev.height, prev.width, 1), Image(prev.height, prev.width, 1)};
  for (std::size_t i = 0; i < flow.x.data.size(); ++i) {
    const double a = sxx.data[i], b = sxy.data[i], d = syy.data[i];
    const double lambda_min = 0.5 * ((a + d) - std::sqrt((a - d) * (a - d) + 4.0 * b * b));
    if (lambda_min < kFlowConditionThreshold) continue;
    const double det = a * d - b * b;
    const double rx = -sxt.data[i], ry = -syt.data[i];
    flow.x.data[i] = (d * rx - b * ry) / det;
    flow.y.data[i] = (a * ry - b * rx) / det;
  }
  return flow;
}

FlowField lucas_kanade_flow(const Image& prev, const Image& next, std::size_t window) {
  FlowField flow = lucas_kanade_flow_pixels(prev, next, window);
  for (Image* f : {&flow.x, &flow.y}) {
    for (double& v : f->data) v = std::clamp(v / kFlowScalePixels, -1.0, 1.0);
  }
  return flow;
}

FrameSequence preprocess_sequence(const RawSequence& raw, std::size_t window) {
  if (raw.frames.empty()) throw ArgumentError("preprocess: sequence " + raw.person_id + "/" + raw.camera_id + " has no frames");
  const std::size_t h = raw.frames[0].height, w = raw.frames[0].width;
  for (const Image& f : raw.frames) {
    if (f.height != h || f.width != w || f.channels != 3) {
      throw DimensionError("preprocess: frames of " + raw.person_id + "/" + raw.camera_id +
                           " differ in size");
    }
  }
  const std::size_t t = raw.frames.size();
  std::vector<Image> gray;
  gray.reserve(t);
  for (const Image& f : raw.frames) gray.push_back(luma_unit(f));

  std::vector<FlowField> flows(t, FlowField{Image(h, w, 1), Image(h, w, 1)});
  for (std::size_t k = 1; k < t; ++k) flows[k] = lucas_kanade_flow(gray[k - 1], gray[k], window);
  if (t > 1) flows[0] = flows[1];

  FrameSequence seq;
  seq.person_id = raw.person_id;
  seq.camera_id = raw.camera_id;
  seq.frames.reserve(t);
  const std::size_t plane = h * w;
  for (std::size_t k = 0; k < t; ++k) {
    const Image yuv = rgb_to_yuv(raw.frames[k]);
    Tensor frame(Shape{kInputChannels, h, w});
    auto d = frame.data();
    for (std::size_t i = 0; i < plane; ++i) {
      d[kY * plane + i] = yuv.data[3 * i] / 255.0;
      d[kU * plane + i] = yuv.data[3 * i + 1] / 255.0 + 0.5;
      d[kV * plane + i] = yuv.data[3 * i + 2] / 255.0 + 0.5;
      d[kFlowX * plane + i] = flows[k].x.data[i];
      d[kFlowY * plane + i] = flows[k].y.data[i];
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

ChannelStats fit_channel_stats(std::span<const FrameSequence> training) {
  std::array<double, kInputChannels> sum{};
  std::size_t per_channel = 0;
  for (const auto& seq : training) {
    for (const Tensor& f : seq.frames) {
      if (f.rank() != 3 || f.dim(0) != kInputChannels) {
        throw DimensionError("channel stats: frame shape " + shape_string(f.shape()));
      }
      const std::size_t plane = f.dim(1) * f.dim(2);
      for (std::size_t c = 0; c < kInputChannels; ++c) {
        for (std::size_t i = 0; i < plane; ++i) sum[c] += f[c * plane + i];
      }
      per_channel += plane;
    }
  }
  if (per_channel == 0) throw ArgumentError("normalize_dataset: empty training set");
  ChannelStats stats;
  for (std::size_t c = 0; c < kInputChannels; ++c) stats.mean[c] = sum[c] / static_cast<double>(per_channel);
  std::array<double, kInputChannels> sq{};
  for (const auto& seq : training) {
    for (const Tensor& f : seq.frames) {
      const std::size_t plane = f.dim(1) * f.dim(2);
      for (std::size_t c = 0; c < kInputChannels; ++c) {
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = f[c * plane + i] - stats.mean[c];
          sq[c] += d * d;
        }
      }
    }
  }
  for (std::size_t c = 0; c < kInputChannels; ++c) {
    stats.stddev[c] = std::sqrt(sq[c] / static_cast<double>(per_channel));
  }
  stats.source = sequence_fingerprint(training);
  return stats;
}

Tensor standardize_frame(const Tensor& frame, const ChannelStats& stats) {
  Tensor out = frame;
  const std::size_t plane = frame.dim(1) * frame.dim(2);
  for (std::size_t c = 0; c < kInputChannels; ++c) {
    const double m = stats.mean[c];
    const double inv = 1.0 / std::max(stats.stddev[c], kStdFloor);
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = (frame[c * plane + i] - m) * inv;
  }
  return out;
}

void apply_channel_stats(FrameSequence& seq, const ChannelStats& stats) {
  for (Tensor& f : seq.frames) f = standardize_frame(f, stats);
}

ChannelStats normalize_dataset(std::vector<FrameSequence>& training) {
  ChannelStats stats = fit_channel_stats(training);
  for (auto& seq : training) apply_channel_stats(seq, stats);
  return stats;
}

std::string sequence_fingerprint(std::span<const FrameSequence> seqs) {
  // FNV-1a over the sorted person/camera/length keys.
  std::vector<std::string> keys;
  keys.reserve(seqs.size());
  for (const auto& s : seqs) keys.push_back(s.person_id + "/" + s.camera_id + "/" + std::to_string(s.length()));
  std::sort(keys.begin(), keys.end());
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& k : keys) {
    for (unsigned char ch : k) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
    h ^= 0xFF;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void write_channel_stats(std::ostream& out, const ChannelStats& stats) {
  out << std::setprecision(17);
  for (std::size_t c = 0; c < kInputChannels; ++c) {
    out << "channel_" << c << "_mean=" << stats.mean[c] << '\n';
    out << "channel_" << c << "_std=" << stats.stddev[c] << '\n';
  }
  out << "source=" << stats.source << '\n';
}

ChannelStats read_channel_stats(std::istream& in) {
  ChannelStats stats;
  std::array<bool, 2 * kInputChannels> seen{};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw LoadError("channel stats: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "source") {
      stats.source = value;
      continue;
    }
    std::size_t c = 0;
    char kind[8] = {};
    if (std::sscanf(key.c_str(), "channel_%zu_%7s", &c, kind) != 2 || c >= kInputChannels) {
      throw LoadError("channel stats: unknown key '" + key + "'");
    }
    const std::string k(kind);
    if (k == "mean") {
      stats.mean[c] = std::stod(value);
      seen[2 * c] = true;
    } else if (k == "std") {
      stats.stddev[c] = std::stod(value);
      seen[2 * c + 1] = true;
    } else {
      throw LoadError("channel stats: unknown key '" + key + "'");
    }
  }
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) {
    throw LoadError("channel stats: incomplete manifest");
  }
  return stats;
}

FrameSequence augment_sequence(const FrameSequence& seq, int crop_dx, int crop_dy, bool mirror) {
  if (std::abs(crop_dx) > kMaxCropOffset || std::abs(crop_dy) > kMaxCropOffset) {
    throw ArgumentError("augment_sequence: crop offset (" + std::to_string(crop_dx) + "," +
                        std::to_string(crop_dy) + ") exceeds " + std::to_string(kMaxCropOffset));
  }
  FrameSequence out;
  out.person_id = seq.person_id;
  out.camera_id = seq.camera_id;
  out.frames.reserve(seq.frames.size());
  for (const Tensor& f : seq.frames) {
    const std::size_t ch = f.dim(0), h = f.dim(1), w = f.dim(2);
    const auto hi = static_cast<std::ptrdiff_t>(h) - 1, wi = static_cast<std::ptrdiff_t>(w) - 1;
    Tensor g(f.shape());
    for (std::size_t c = 0; c < ch; ++c) {
      const double sign = (mirror && c == kFlowX) ? -1.0 : 1.0;
      for (std::size_t y = 0; y < h; ++y) {
        const auto sy = std::clamp(static_cast<std::ptrdiff_t>(y) + crop_dy, std::ptrdiff_t{0}, hi);
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t mx = mirror ? w - 1 - x : x;
          const auto sx = std::clamp(static_cast<std::ptrdiff_t>(mx) + crop_dx, std::ptrdiff_t{0}, wi);
          g[(c * h + y) * w + x] = sign * f[(c * h + static_cast<std::size_t>(sy)) * w + static_cast<std::size_t>(sx)];
        }
      }
    }
    out.frames.push_back(std::move(g));
  }
  return out;
}

FrameSequence augment_sequence(const FrameSequence& seq, const Augmentation& aug) {
  return augment_sequence(seq, aug.crop_dx, aug.crop_dy, aug.mirror);
}

Augmentation random_augmentation(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> offset(-kMaxCropOffset, kMaxCropOffset);
  std::uniform_int_distribution<int> coin(0, 1);
  Augmentation a;
  a.crop_dx = offset(rng);
  a.crop_dy = offset(rng);
  a.mirror = coin(rng) == 1;
  return a;
}

}  // namespace stsrn
