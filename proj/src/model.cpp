#include "stsrn/model.hpp"

#include <algorithm>

#include "stsrn/errors.hpp"
#include "stsrn/init.hpp"

namespace stsrn {

std::string to_string(SpatialVariant v) {
  switch (v) {
    case SpatialVariant::BaseModel: return "BaseModel";
    case SpatialVariant::SingleResBlock: return "SingleResBlock";
    case SpatialVariant::DoubleResBlocks: return "DoubleResBlocks";
    case SpatialVariant::TripleResBlocks: return "TripleResBlocks";
    case SpatialVariant::DoubleResBlocksStar: return "DoubleResBlocksStar";
  }
  return "?";
}

std::vector<SpatialVariant> all_variants() {
  return {SpatialVariant::BaseModel, SpatialVariant::SingleResBlock, SpatialVariant::DoubleResBlocks,
          SpatialVariant::TripleResBlocks, SpatialVariant::DoubleResBlocksStar};
}

SpatialVariant parse_variant(const std::string& name) {
  for (auto v : all_variants()) {
    if (to_string(v) == name) return v;
  }
  if (name == "DoubleResBlocks*") return SpatialVariant::DoubleResBlocksStar;
  throw ConfigurationError("unknown variant '" + name + "'");
}

std::string to_string(BlockStyle s) {
  switch (s) {
    case BlockStyle::A: return "a";
    case BlockStyle::B: return "b";
    case BlockStyle::C: return "c";
  }
  return "?";
}

BlockStyle parse_block_style(const std::string& name) {
  if (name == "a" || name == "A") return BlockStyle::A;
  if (name == "b" || name == "B") return BlockStyle::B;
  if (name == "c" || name == "C") return BlockStyle::C;
  throw ConfigurationError("unknown block style '" + name + "'");
}

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.input_h = 16;
  c.input_w = 8;
  c.channel_widths = {2, 3, 2};
  c.embed_dim = 8;
  c.hidden_dim = 8;
  c.n_classes = 3;
  return c;
}

std::size_t stage_count(SpatialVariant v) { return v == SpatialVariant::TripleResBlocks ? 4 : 3; }

namespace {

struct StagePlan {
  StageKind kind;
  bool pool;
};

std::vector<StagePlan> stage_plan(SpatialVariant v) {
  using enum StageKind;
  switch (v) {
    case SpatialVariant::BaseModel: return {{Conv, true}, {Conv, true}, {Conv, true}};
    case SpatialVariant::SingleResBlock: return {{Conv, true}, {Conv, true}, {Res, true}};
    case SpatialVariant::DoubleResBlocks:
    case SpatialVariant::DoubleResBlocksStar: return {{Conv, true}, {Res, true}, {Res, true}};
    case SpatialVariant::TripleResBlocks: return {{Conv, true}, {Res, false}, {Res, true}, {Res, true}};
  }
  throw ConfigurationError("unknown variant");
}

std::vector<StageLayout> layout_unchecked(const ModelConfig& config) {
  const auto plan = stage_plan(config.variant);
  if (config.channel_widths.size() != plan.size()) {
    throw ConfigurationError(to_string(config.variant) + " needs " + std::to_string(plan.size()) +
                             " channel widths, got " + std::to_string(config.channel_widths.size()));
  }
  std::vector<StageLayout> out;
  std::size_t c = kInputChannels, h = config.input_h, w = config.input_w;
  for (std::size_t k = 0; k < plan.size(); ++k) {
    StageLayout s;
    s.kind = plan[k].kind;
    s.pool = plan[k].pool;
    s.in_channels = c;
    s.out_channels = config.channel_widths[k];
    s.in_h = h;
    s.in_w = w;
    const bool same_size = s.kind == StageKind::Res && config.block_style == BlockStyle::A;
    std::size_t oh = same_size ? h : h + 2 * kConvPadding - kConvKernel + 1;
    std::size_t ow = same_size ? w : w + 2 * kConvPadding - kConvKernel + 1;
    if (s.pool) {
      if (oh < 2 || ow < 2) {
        throw ConfigurationError("stage " + std::to_string(k) + " feature map " + std::to_string(oh) + "x" +
                                 std::to_string(ow) + " too small to pool");
      }
      oh /= 2;
      ow /= 2;
    }
    s.out_h = oh;
    s.out_w = ow;
    out.push_back(s);
    c = s.out_channels;
    h = oh;
    w = ow;
  }
  return out;
}

void add_conv(std::vector<ParamShape>& out, const std::string& prefix, std::size_t cout, std::size_t cin,
              std::size_t k) {
  out.push_back({prefix + ".weight", {cout, cin, k, k}});
  out.push_back({prefix + ".bias", {cout}});
}

}  // namespace

void ModelConfig::validate() const {
  if (input_h == 0 || input_w == 0) throw ConfigurationError("input size must be positive");
  if (embed_dim == 0) throw ConfigurationError("embed_dim must be positive");
  if (embed_dim != hidden_dim) {
    throw ConfigurationError("embed_dim (" + std::to_string(embed_dim) + ") must equal hidden_dim (" +
                             std::to_string(hidden_dim) + ") for the temporal residual sum");
  }
  if (n_classes == 0) throw ConfigurationError("n_classes must be positive");
  if (std::any_of(channel_widths.begin(), channel_widths.end(), [](std::size_t c) { return c == 0; })) {
    throw ConfigurationError("channel widths must be positive");
  }
  for (const auto& s : layout_unchecked(*this)) {
    if (s.kind == StageKind::Res && block_style == BlockStyle::A && s.in_channels != s.out_channels) {
      throw ConfigurationError("style-a residual block needs C_in == C_out, got " +
                               std::to_string(s.in_channels) + " -> " + std::to_string(s.out_channels));
    }
  }
}

std::vector<StageLayout> stage_layout(const ModelConfig& config) {
  config.validate();
  return layout_unchecked(config);
}

std::size_t flattened_size(const ModelConfig& config) {
  const auto layout = stage_layout(config);
  const auto& last = layout.back();
  return last.out_channels * last.out_h * last.out_w;
}

std::vector<ParamShape> parameter_shapes(const ModelConfig& config) {
  const auto layout = stage_layout(config);
  std::vector<ParamShape> out;
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const auto& s = layout[k];
    const std::string p = "stage" + std::to_string(k);
    if (s.kind == StageKind::Conv) {
      add_conv(out, p + ".conv", s.out_channels, s.in_channels, kConvKernel);
    } else if (config.block_style == BlockStyle::A) {
      add_conv(out, p + ".conv", s.out_channels, s.in_channels, kBodyKernel);
      add_conv(out, p + ".body", s.out_channels, s.out_channels, kBodyKernel);
    } else {
      add_conv(out, p + ".conv", s.out_channels, s.in_channels, kConvKernel);
      add_conv(out, p + ".body", s.out_channels, s.out_channels, kBodyKernel);
      add_conv(out, p + ".shortcut", s.out_channels, s.in_channels, kConvKernel);
    }
  }
  const std::size_t n = config.embed_dim, l = config.hidden_dim;
  out.push_back({"fc.weight", {n, flattened_size(config)}});
  out.push_back({"fc.bias", {n}});
  if (config.use_stsm) out.push_back({"stsm.gate_raw", {n}});
  out.push_back({"rnn.u", {l, n}});
  out.push_back({"rnn.v", {l, l}});
  out.push_back({"rnn.bias", {l}});
  out.push_back({"classifier.weight", {config.n_classes, l}});
  out.push_back({"classifier.bias", {config.n_classes}});
  return out;
}

ParamReport param_count(const ModelConfig& config) {
  ParamReport report;
  for (const auto& p : parameter_shapes(config)) {
    const std::size_t n = shape_size(p.shape);
    report.items.emplace_back(p.name, n);
    report.total += n;
  }
  return report;
}

std::vector<std::pair<std::string, Tensor*>> StsrnParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto push = [&](const std::string& name, Tensor& t) {
    if (t.size() > 0) out.emplace_back(name, &t);
  };
  for (std::size_t k = 0; k < stages.size(); ++k) {
    const std::string p = "stage" + std::to_string(k);
    push(p + ".conv.weight", stages[k].conv.weight);
    push(p + ".conv.bias", stages[k].conv.bias);
    push(p + ".body.weight", stages[k].body.weight);
    push(p + ".body.bias", stages[k].body.bias);
    push(p + ".shortcut.weight", stages[k].shortcut.weight);
    push(p + ".shortcut.bias", stages[k].shortcut.bias);
  }
  push("fc.weight", fc_weight);
  push("fc.bias", fc_bias);
  push("stsm.gate_raw", gate_raw);
  push("rnn.u", rnn_u);
  push("rnn.v", rnn_v);
  push("rnn.bias", rnn_bias);
  push("classifier.weight", cls_weight);
  push("classifier.bias", cls_bias);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> StsrnParams::named() const {
  auto mut = const_cast<StsrnParams*>(this)->named();
  return {mut.begin(), mut.end()};
}

std::size_t StsrnParams::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t->size();
  return n;
}

namespace {

void allocate(StsrnParams& params, const ModelConfig& config) {
  const auto layout = stage_layout(config);
  params.stages.assign(layout.size(), StageParams{});
  for (const auto& p : parameter_shapes(config)) {
    // Create every slot with its shape so named() can find it.
    const auto dot = p.name.find('.');
    const std::string head = p.name.substr(0, dot);
    Tensor t(p.shape);
    if (head.rfind("stage", 0) == 0) {
      const std::size_t k = std::stoul(head.substr(5));
      const std::string rest = p.name.substr(dot + 1);
      StageParams& s = params.stages[k];
      ConvParams& c = rest.rfind("conv", 0) == 0 ? s.conv : rest.rfind("body", 0) == 0 ? s.body : s.shortcut;
      (rest.ends_with("weight") ? c.weight : c.bias) = std::move(t);
    } else if (p.name == "fc.weight") {
      params.fc_weight = std::move(t);
    } else if (p.name == "fc.bias") {
      params.fc_bias = std::move(t);
    } else if (p.name == "stsm.gate_raw") {
      params.gate_raw = std::move(t);
    } else if (p.name == "rnn.u") {
      params.rnn_u = std::move(t);
    } else if (p.name == "rnn.v") {
      params.rnn_v = std::move(t);
    } else if (p.name == "rnn.bias") {
      params.rnn_bias = std::move(t);
    } else if (p.name == "classifier.weight") {
      params.cls_weight = std::move(t);
    } else if (p.name == "classifier.bias") {
      params.cls_bias = std::move(t);
    }
  }
}

}  // namespace

StsrnParams zero_params(const ModelConfig& config) {
  StsrnParams params;
  allocate(params, config);
  for (auto& [name, t] : params.named()) t->set_requires_grad(true);
  return params;
}

StsrnParams init_params(const ModelConfig& config, std::mt19937_64& rng) {
  StsrnParams params;
  allocate(params, config);
  for (auto& [name, t] : params.named()) {
    if (name == "stsm.gate_raw") {
      *t = Tensor::filled(t->shape(), kGateInit);
    } else {
      *t = xavier_init(t->shape(), rng);
    }
    t->set_requires_grad(true);
  }
  return params;
}

void check_params(const ModelConfig& config, const StsrnParams& params) {
  const auto shapes = parameter_shapes(config);
  const auto named = params.named();
  if (shapes.size() != named.size()) {
    throw ConfigurationError("parameter set has " + std::to_string(named.size()) + " tensors, config needs " +
                             std::to_string(shapes.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (shapes[i].name != named[i].first || shapes[i].shape != named[i].second->shape()) {
      throw ConfigurationError("parameter " + named[i].first + " " + shape_string(named[i].second->shape()) +
                               " does not match config (" + shapes[i].name + " " +
                               shape_string(shapes[i].shape) + ")");
    }
  }
}

std::pair<ModelConfig, StsrnParams> build_variant(SpatialVariant variant, const ModelConfig& base_config,
                                                  std::mt19937_64& rng) {
  ModelConfig config = base_config;
  config.variant = variant;
  const auto& base = base_config.channel_widths;
  if (base.empty()) throw ConfigurationError("channel_widths must not be empty");
  const std::size_t want = stage_count(variant);
  if (variant == SpatialVariant::DoubleResBlocksStar) {
    config.block_style = BlockStyle::A;
    config.channel_widths.assign(want, base.front());
  } else {
    if (config.block_style == BlockStyle::A) config.block_style = BlockStyle::C;
    if (base.size() != want) {
      // Three-stage widths (w0, w1, w2) become (w0, w1, w1, w2) for the
      // four-stage layout and vice versa.
      if (want == 4 && base.size() == 3) {
        config.channel_widths = {base[0], base[1], base[1], base[2]};
      } else if (want == 3 && base.size() == 4) {
        config.channel_widths = {base[0], base[1], base[3]};
      } else {
        throw ConfigurationError("cannot adapt " + std::to_string(base.size()) + " channel widths to " +
                                 to_string(variant));
      }
    }
  }
  config.validate();
  StsrnParams params = init_params(config, rng);
  return {config, std::move(params)};
}

namespace {

ConvVars bind_conv(Tape& tape, ConvParams& c) {
  if (c.weight.size() == 0) return {};
  return {tape.leaf(c.weight), tape.leaf(c.bias)};
}

ConvVars bind_conv(Tape& tape, const ConvParams& c) {
  if (c.weight.size() == 0) return {};
  return {tape.leaf(c.weight), tape.leaf(c.bias)};
}

template <typename Params>
ParamVars bind_impl(Tape& tape, Params& params) {
  ParamVars v;
  for (auto& s : params.stages) {
    v.stages.push_back({bind_conv(tape, s.conv), bind_conv(tape, s.body), bind_conv(tape, s.shortcut)});
  }
  v.fc_weight = tape.leaf(params.fc_weight);
  v.fc_bias = tape.leaf(params.fc_bias);
  if (params.gate_raw.size() > 0) v.gate_raw = tape.leaf(params.gate_raw);
  v.rnn_u = tape.leaf(params.rnn_u);
  v.rnn_v = tape.leaf(params.rnn_v);
  v.rnn_bias = tape.leaf(params.rnn_bias);
  v.cls_weight = tape.leaf(params.cls_weight);
  v.cls_bias = tape.leaf(params.cls_bias);
  return v;
}

}  // namespace

ParamVars bind_params(Tape& tape, StsrnParams& params) { return bind_impl(tape, params); }
ParamVars bind_params(Tape& tape, const StsrnParams& params) { return bind_impl(tape, params); }

Var spatial_conv_submodule(Var x, const ConvVars& conv, bool pool) {
  Var y = conv2d(x, conv.weight, conv.bias, 1, kConvPadding);
  if (pool) y = maxpool2(y);
  return tanh(y);
}

Var residual_block(Var x, const StageVars& block, BlockStyle style) {
  switch (style) {
    case BlockStyle::A: {
      if (x.shape()[0] != block.body.weight.shape()[0]) {
        throw ConfigurationError("style-a residual block needs C_in == C_out");
      }
      Var h = relu(conv2d(x, block.conv.weight, block.conv.bias, 1, kBodyPadding));
      h = conv2d(h, block.body.weight, block.body.bias, 1, kBodyPadding);
      return add(h, x);
    }
    case BlockStyle::B:
    case BlockStyle::C: {
      Var h = conv2d(x, block.conv.weight, block.conv.bias, 1, kConvPadding);
      if (style == BlockStyle::B) h = tanh(h);
      h = conv2d(h, block.body.weight, block.body.bias, 1, kBodyPadding);
      Var shortcut = conv2d(x, block.shortcut.weight, block.shortcut.bias, 1, kConvPadding);
      return add(h, shortcut);
    }
  }
  throw ConfigurationError("unknown block style");
}

Var embed_frame(Var frame, const ParamVars& params, const ModelConfig& config) {
  const auto layout = stage_layout(config);
  if (params.stages.size() != layout.size()) {
    throw ConfigurationError("parameters have " + std::to_string(params.stages.size()) + " stages, " +
                             to_string(config.variant) + " needs " + std::to_string(layout.size()));
  }
  const Shape expected{kInputChannels, config.input_h, config.input_w};
  if (frame.shape() != expected) {
    throw DimensionError("frame " + shape_string(frame.shape()) + " does not match model input " +
                         shape_string(expected));
  }
  Var x = frame;
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const auto& s = layout[k];
    if (s.kind == StageKind::Conv) {
      x = spatial_conv_submodule(x, params.stages[k].conv, s.pool);
    } else {
      x = residual_block(x, params.stages[k], config.block_style);
      if (s.pool) x = maxpool2(x);
      x = tanh(x);
    }
  }
  return linear(params.fc_weight, flatten(x), params.fc_bias);
}

std::vector<Var> spatial_extract(Tape& tape, std::span<const Tensor> frames, const ParamVars& params,
                                 const ModelConfig& config) {
  std::vector<Var> out;
  out.reserve(frames.size());
  for (const Tensor& f : frames) out.push_back(embed_frame(tape.leaf(f), params, config));
  return out;
}

std::vector<Var> stsm(std::span<const Var> embeddings, Var gate_raw) {
  if (embeddings.empty()) throw ArgumentError("stsm: empty sequence");
  std::vector<Var> out;
  out.reserve(embeddings.size());
  out.push_back(embeddings[0]);
  if (embeddings.size() == 1) return out;
  Var omega = sigmoid(gate_raw);
  for (std::size_t t = 1; t < embeddings.size(); ++t) {
    out.push_back(add(embeddings[t], mul(omega, sub(embeddings[t - 1], embeddings[t]))));
  }
  return out;
}

std::vector<Var> res_rnn(std::span<const Var> inputs, Var u, Var v, Var bias, bool temporal_residual) {
  if (inputs.empty()) throw ArgumentError("res_rnn: empty sequence");
  const std::size_t n = inputs[0].size();
  const std::size_t l = u.shape()[0];
  if (n != l || u.shape()[1] != n) {
    throw ConfigurationError("res_rnn: input dimension " + std::to_string(n) + " and hidden dimension " +
                             std::to_string(l) + " must match");
  }
  std::vector<Var> out;
  out.reserve(inputs.size());
  Var hidden;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Var pre = matvec(u, inputs[t]);
    if (hidden.valid()) pre = add(pre, matvec(v, hidden));
    pre = add(pre, bias);
    Var o = temporal_residual ? scalar_mul(add(pre, inputs[t]), 0.5) : pre;
    out.push_back(o);
    hidden = tanh(o);
  }
  return out;
}

Var temporal_pool(std::span<const Var> outputs) {
  if (outputs.empty()) throw ArgumentError("temporal_pool: empty sequence");
  return mean_over_first_axis(stack(outputs));
}

Var sequence_feature(std::span<const Var> embeddings, const ParamVars& params, const ModelConfig& config) {
  std::vector<Var> smoothed = config.use_stsm ? stsm(embeddings, params.gate_raw)
                                              : std::vector<Var>(embeddings.begin(), embeddings.end());
  const auto outputs = res_rnn(smoothed, params.rnn_u, params.rnn_v, params.rnn_bias, config.use_temporal_residual);
  return temporal_pool(outputs);
}

Var forward_sequence(Tape& tape, std::span<const Tensor> frames, const ParamVars& params,
                     const ModelConfig& config) {
  if (frames.empty()) throw ArgumentError("forward: empty sequence");
  const auto embeddings = spatial_extract(tape, frames, params, config);
  return sequence_feature(embeddings, params, config);
}

PairOutputs forward_pair(Tape& tape, std::span<const Tensor> seq_a, std::span<const Tensor> seq_b,
                         const ParamVars& params, const ModelConfig& config) {
  PairOutputs out;
  out.feature_a = forward_sequence(tape, seq_a, params, config);
  out.feature_b = forward_sequence(tape, seq_b, params, config);
  out.logits_a = linear(params.cls_weight, out.feature_a, params.cls_bias);
  out.logits_b = linear(params.cls_weight, out.feature_b, params.cls_bias);
  return out;
}

Tensor extract_feature(std::span<const Tensor> frames, const StsrnParams& params, const ModelConfig& config) {
  if (frames.empty()) throw ArgumentError("extract_feature: empty sequence");
  std::vector<Tensor> embeddings;
  embeddings.reserve(frames.size());
  {
    Tape tape;
    tape.set_grad_enabled(false);
    for (const Tensor& f : frames) {
      const ParamVars vars = bind_params(tape, params);
      embeddings.push_back(embed_frame(tape.leaf(f), vars, config).value());
      tape.clear();
    }
  }
  Tape tape;
  tape.set_grad_enabled(false);
  const ParamVars vars = bind_params(tape, params);
  std::vector<Var> e;
  e.reserve(embeddings.size());
  for (const Tensor& t : embeddings) e.push_back(tape.leaf(t));
  return sequence_feature(e, vars, config).value();
}

}  // namespace stsrn
