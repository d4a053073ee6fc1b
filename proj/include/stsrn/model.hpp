#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "stsrn/autograd.hpp"
#include "stsrn/vision.hpp"

namespace stsrn {

// Spatial stage layouts compared in the residual-block ablation.
enum class SpatialVariant {
  BaseModel,            // Conv+Max, Conv+Max, Conv+Max
  SingleResBlock,       // Conv+Max, Conv+Max, Res+Max
  DoubleResBlocks,      // Conv+Max, Res+Max,  Res+Max
  TripleResBlocks,      // Conv+Max, Res,      Res+Max, Res+Max
  DoubleResBlocksStar,  // Conv+Max, Res*+Max, Res*+Max
};

// Residual block bodies.
//  A: k3/p1 conv, ReLU, k3/p1 conv, identity shortcut (C_in == C_out)
//  B: k5/p4 conv, tanh, k3/p1 conv, k5/p4 projection shortcut
//  C: k5/p4 conv,       k3/p1 conv, k5/p4 projection shortcut
enum class BlockStyle { A, B, C };

std::string to_string(SpatialVariant v);
SpatialVariant parse_variant(const std::string& name);
std::string to_string(BlockStyle s);
BlockStyle parse_block_style(const std::string& name);
std::vector<SpatialVariant> all_variants();

struct ModelConfig {
  SpatialVariant variant = SpatialVariant::DoubleResBlocks;
  BlockStyle block_style = BlockStyle::C;
  std::size_t input_h = 128;
  std::size_t input_w = 64;
  std::vector<std::size_t> channel_widths{16, 32, 16};
  std::size_t embed_dim = 128;   // N
  std::size_t hidden_dim = 128;  // L
  std::size_t n_classes = 150;
  bool use_stsm = true;
  bool use_temporal_residual = true;

  // Throws ConfigurationError.
  void validate() const;
};

// 16x8 input, widths (2,3,2), N = L = 8, 3 classes.
ModelConfig tiny_model_config();

std::size_t stage_count(SpatialVariant v);

enum class StageKind { Conv, Res };

struct StageLayout {
  StageKind kind = StageKind::Conv;
  bool pool = true;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t in_h = 0, in_w = 0;
  std::size_t out_h = 0, out_w = 0;  // after the optional pool
};

std::vector<StageLayout> stage_layout(const ModelConfig& config);
std::size_t flattened_size(const ModelConfig& config);

inline constexpr std::size_t kConvKernel = 5;
inline constexpr std::size_t kConvPadding = 4;
inline constexpr std::size_t kBodyKernel = 3;
inline constexpr std::size_t kBodyPadding = 1;
inline constexpr double kGateInit = -2.2;

struct ConvParams {
  Tensor weight;  // [C_out, C_in, k, k]
  Tensor bias;    // [C_out]
};

struct StageParams {
  ConvParams conv;      // the stage conv, or the first body conv of a block
  ConvParams body;      // second body conv (Res only)
  ConvParams shortcut;  // projection W_s (Res styles B and C)
};

struct StsrnParams {
  std::vector<StageParams> stages;
  Tensor fc_weight;  // [N, flat]
  Tensor fc_bias;    // [N]
  Tensor gate_raw;   // [N]; omega = sigmoid(gate_raw). Empty without STSM.
  Tensor rnn_u;      // [L, N]
  Tensor rnn_v;      // [L, L]
  Tensor rnn_bias;   // [L]
  Tensor cls_weight;  // [n_classes, L]
  Tensor cls_bias;    // [n_classes]

  // Every learnable tensor with a stable dotted name, in a fixed order.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::size_t scalar_count() const;
};

struct ParamShape {
  std::string name;
  Shape shape;
};

// The learnable tensors a config implies, in StsrnParams::named() order.
std::vector<ParamShape> parameter_shapes(const ModelConfig& config);

struct ParamReport {
  std::vector<std::pair<std::string, std::size_t>> items;
  std::size_t total = 0;
};
ParamReport param_count(const ModelConfig& config);

// Correctly shaped, all-zero, requires_grad set.
StsrnParams zero_params(const ModelConfig& config);

// Xavier weights, zero biases, gate_raw = kGateInit.
StsrnParams init_params(const ModelConfig& config, std::mt19937_64& rng);

// Applies `variant` to base_config (block style A for the starred variant,
// width list adapted to the stage count) and initializes parameters.
std::pair<ModelConfig, StsrnParams> build_variant(SpatialVariant variant, const ModelConfig& base_config,
                                                  std::mt19937_64& rng);

// Throws ConfigurationError when params do not match config.
void check_params(const ModelConfig& config, const StsrnParams& params);

// Parameters registered as leaves on one tape.
struct ConvVars {
  Var weight, bias;
};
struct StageVars {
  ConvVars conv, body, shortcut;
};
struct ParamVars {
  std::vector<StageVars> stages;
  Var fc_weight, fc_bias, gate_raw, rnn_u, rnn_v, rnn_bias, cls_weight, cls_bias;
};
ParamVars bind_params(Tape& tape, StsrnParams& params);
ParamVars bind_params(Tape& tape, const StsrnParams& params);

// conv(k5, p4, s1) -> maxpool2 -> tanh
Var spatial_conv_submodule(Var x, const ConvVars& conv, bool pool = true);

// Phi(x) + W_s x (or + x for style A), before the stage's pool and tanh.
Var residual_block(Var x, const StageVars& block, BlockStyle style);

// Per-frame embeddings f_s(I^t) in R^N.
std::vector<Var> spatial_extract(Tape& tape, std::span<const Tensor> frames, const ParamVars& params,
                                 const ModelConfig& config);
Var embed_frame(Var frame, const ParamVars& params, const ModelConfig& config);

// x^1 = f^1; x^t = f^t + omega * (f^{t-1} - f^t), omega = sigmoid(gate_raw).
std::vector<Var> stsm(std::span<const Var> embeddings, Var gate_raw);

// o_hat^t = U x^t + V r^{t-1} + b; o^t = (o_hat^t + x^t)/2 (or o_hat^t
// without the temporal residual); r^t = tanh(o^t); r^0 = 0.
std::vector<Var> res_rnn(std::span<const Var> inputs, Var u, Var v, Var bias, bool temporal_residual = true);

// v_g = mean over t of o^t.
Var temporal_pool(std::span<const Var> outputs);

// Embeddings -> STSM -> residual RNN -> pool.
Var sequence_feature(std::span<const Var> embeddings, const ParamVars& params, const ModelConfig& config);

// Whole branch for one (already standardized) sequence.
Var forward_sequence(Tape& tape, std::span<const Tensor> frames, const ParamVars& params,
                     const ModelConfig& config);

struct PairOutputs {
  Var feature_a, feature_b;
  Var logits_a, logits_b;
};

// Both branches share the same parameter vars.
PairOutputs forward_pair(Tape& tape, std::span<const Tensor> seq_a, std::span<const Tensor> seq_b,
                         const ParamVars& params, const ModelConfig& config);

// Inference path that keeps only one frame's activations alive at a time.
Tensor extract_feature(std::span<const Tensor> frames, const StsrnParams& params, const ModelConfig& config);

}  // namespace stsrn
