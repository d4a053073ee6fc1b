#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stsrn/errors.hpp"
#include "stsrn/model.hpp"
#include "stsrn/training.hpp"

using namespace stsrn;

namespace {

std::vector<Tensor> random_frames(std::size_t t, const ModelConfig& c, std::mt19937_64& rng) {
  std::vector<Tensor> frames;
  for (std::size_t i = 0; i < t; ++i) frames.push_back(oracle::random_tensor({5, c.input_h, c.input_w}, rng));
  return frames;
}

std::vector<Var> leaves(Tape& tape, const std::vector<Tensor>& ts) {
  std::vector<Var> out;
  for (const auto& t : ts) out.push_back(tape.leaf(t));
  return out;
}

}  // namespace

TEST_CASE("config validation and variants") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.hidden_dim = 64;
  CHECK_THROWS_AS(c.validate(), ConfigurationError);
  c = ModelConfig{};
  c.channel_widths = {16, 32};
  CHECK_THROWS_AS(c.validate(), ConfigurationError);
  c = ModelConfig{};
  c.block_style = BlockStyle::A;
  CHECK_THROWS_AS(c.validate(), ConfigurationError);
  CHECK_THROWS_AS(parse_variant("QuadResBlocks"), ConfigurationError);
  CHECK(parse_variant("DoubleResBlocks*") == SpatialVariant::DoubleResBlocksStar);
  for (auto v : all_variants()) CHECK(parse_variant(to_string(v)) == v);

  std::mt19937_64 rng(1);
  const auto [star, star_params] = build_variant(SpatialVariant::DoubleResBlocksStar, ModelConfig{}, rng);
  CHECK(star.block_style == BlockStyle::A);
  CHECK(star_params.stages[1].shortcut.weight.size() == 0);
  const auto [triple, triple_params] = build_variant(SpatialVariant::TripleResBlocks, ModelConfig{}, rng);
  CHECK(triple.channel_widths.size() == 4);
  const auto layout = stage_layout(triple);
  CHECK_FALSE(layout[1].pool);
  CHECK(layout[2].pool);
}

TEST_CASE("stage shapes") {
  ModelConfig c;
  const auto layout = stage_layout(c);
  REQUIRE(layout.size() == 3);
  // conv k5 p4: 128x64 -> 132x68, pool -> 66x34
  CHECK(layout[0].out_h == 66);
  CHECK(layout[0].out_w == 34);
  // block: +4 then +0, pool: 70x38 -> 35x19
  CHECK(layout[1].out_h == 35);
  CHECK(layout[1].out_w == 19);
  CHECK(layout[2].out_h == 19);
  CHECK(layout[2].out_w == 11);
  CHECK(flattened_size(c) == 16 * 19 * 11);

  Tape tape;
  Tensor w({16, 5, 5, 5}), b({16});
  const Var y = spatial_conv_submodule(tape.constant(Tensor({5, 128, 64})), {tape.leaf(w), tape.leaf(b)});
  CHECK(y.shape() == Shape{16, 66, 34});
  for (double v : y.value().data()) CHECK(v == 0.0);
}

TEST_CASE("residual block") {
  std::mt19937_64 rng(2);
  Tape tape;
  const Tensor x = oracle::random_tensor({3, 6, 5}, rng);
  SUBCASE("zero body leaves the projected input") {
    Tensor zero_w({4, 3, 5, 5}), zero_b({4}), body_w({4, 4, 3, 3}), body_b({4});
    Tensor ws({4, 3, 5, 5}), wb({4});
    // W_s copies channel 0 into every output channel at the kernel centre.
    for (std::size_t o = 0; o < 4; ++o) ws[((o * 3 + 0) * 5 + 2) * 5 + 2] = 1.0;
    StageVars block{{tape.leaf(zero_w), tape.leaf(zero_b)}, {tape.leaf(body_w), tape.leaf(body_b)},
                    {tape.leaf(ws), tape.leaf(wb)}};
    const Var y = residual_block(tape.leaf(x), block, BlockStyle::C);
    REQUIRE(y.shape() == Shape{4, 10, 9});
    const Tensor expected = oracle::naive_conv2d(x, ws, wb, 1, 4);
    CHECK(max_abs_diff(y.value(), expected) < 1e-14);
  }
  SUBCASE("pre-pool shape from the default geometry") {
    const Tensor in({16, 66, 34});
    Tensor w1({32, 16, 5, 5}), b1({32}), w2({32, 32, 3, 3}), b2({32}), ws({32, 16, 5, 5}), bs({32});
    StageVars block{{tape.leaf(w1), tape.leaf(b1)}, {tape.leaf(w2), tape.leaf(b2)}, {tape.leaf(ws), tape.leaf(bs)}};
    CHECK(residual_block(tape.leaf(in), block, BlockStyle::C).shape() == Shape{32, 70, 38});
  }
  SUBCASE("style b differs from style c") {
    Tensor w1 = oracle::random_tensor({2, 3, 5, 5}, rng), b1({2});
    Tensor w2 = oracle::random_tensor({2, 2, 3, 3}, rng), b2({2});
    Tensor ws = oracle::random_tensor({2, 3, 5, 5}, rng), bs({2});
    StageVars block{{tape.leaf(w1), tape.leaf(b1)}, {tape.leaf(w2), tape.leaf(b2)}, {tape.leaf(ws), tape.leaf(bs)}};
    const Var yc = residual_block(tape.leaf(x), block, BlockStyle::C);
    const Var yb = residual_block(tape.leaf(x), block, BlockStyle::B);
    CHECK(max_abs_diff(yc.value(), yb.value()) > 1e-3);
  }
  SUBCASE("gradient through a block") {
    Tensor w1 = oracle::random_tensor({2, 3, 5, 5}, rng), b1 = oracle::random_tensor({2}, rng);
    Tensor w2 = oracle::random_tensor({2, 2, 3, 3}, rng), b2 = oracle::random_tensor({2}, rng);
    Tensor ws = oracle::random_tensor({2, 3, 5, 5}, rng), bs = oracle::random_tensor({2}, rng);
    const Tensor proj = oracle::random_tensor({2 * 10 * 9}, rng);
    for (BlockStyle style : {BlockStyle::B, BlockStyle::C}) {
      const auto r = finite_diff_check(
          [&](Tape& t, Var v) {
            StageVars blk{{t.constant(w1), t.constant(b1)}, {t.constant(w2), t.constant(b2)},
                          {t.constant(ws), t.constant(bs)}};
            return sum(mul(flatten(residual_block(v, blk, style)), t.constant(proj)));
          },
          x);
      CHECK(r.max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("stsm") {
  std::mt19937_64 rng(3);
  std::vector<Tensor> emb;
  for (int i = 0; i < 4; ++i) emb.push_back(oracle::random_tensor({6}, rng));
  Tape tape;
  const auto in = leaves(tape, emb);
  const auto closed = stsm(in, tape.constant(Tensor::filled({6}, -40.0)));
  for (std::size_t t = 0; t < 4; ++t) CHECK(max_abs_diff(closed[t].value(), emb[t]) < 1e-15);
  const auto open = stsm(in, tape.constant(Tensor::filled({6}, 40.0)));
  CHECK(bit_equal(open[0].value(), emb[0]));
  for (std::size_t t = 1; t < 4; ++t) CHECK(max_abs_diff(open[t].value(), emb[t - 1]) < 1e-15);

  const std::vector<Tensor> constant(3, emb[0]);
  const auto c_in = leaves(tape, constant);
  const Tensor gate = oracle::random_tensor({6}, rng, -3, 3);
  for (const auto& v : stsm(c_in, tape.constant(gate))) CHECK(max_abs_diff(v.value(), emb[0]) < 1e-15);

  // x^t = (1 - w) f^t + w f^{t-1}
  const auto mixed = stsm(in, tape.constant(gate));
  for (std::size_t t = 1; t < 4; ++t) {
    for (std::size_t i = 0; i < 6; ++i) {
      const double w = 1.0 / (1.0 + std::exp(-gate[i]));
      CHECK(mixed[t].value()[i] == doctest::Approx((1 - w) * emb[t][i] + w * emb[t - 1][i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("residual rnn against a hand-unrolled reference") {
  std::mt19937_64 rng(4);
  const std::size_t n = 4;
  const Tensor U = oracle::random_tensor({n, n}, rng), V = oracle::random_tensor({n, n}, rng);
  const Tensor b = oracle::random_tensor({n}, rng);
  std::vector<Tensor> xs;
  for (int i = 0; i < 3; ++i) xs.push_back(oracle::random_tensor({n}, rng));
  Tape tape;
  const auto in = leaves(tape, xs);
  const auto out = res_rnn(in, tape.constant(U), tape.constant(V), tape.constant(b));

  std::vector<double> r(n, 0.0);
  for (std::size_t t = 0; t < 3; ++t) {
    std::vector<double> o(n);
    for (std::size_t i = 0; i < n; ++i) {
      double oh = b[i];
      for (std::size_t j = 0; j < n; ++j) oh += U[i * n + j] * xs[t][j] + V[i * n + j] * r[j];
      o[i] = (oh + xs[t][i]) / 2.0;
    }
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(std::abs(out[t].value()[i] - o[i]) < 1e-12);
      r[i] = std::tanh(o[i]);
    }
  }

  const Tensor Z({n, n}), zb({n});
  const auto half = res_rnn(in, tape.constant(Z), tape.constant(Z), tape.constant(zb));
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t i = 0; i < n; ++i) CHECK(half[t].value()[i] == xs[t][i] / 2.0);
  }
  const auto plain = res_rnn(in, tape.constant(U), tape.constant(Z), tape.constant(zb), false);
  for (std::size_t i = 0; i < n; ++i) {
    double oh = 0.0;
    for (std::size_t j = 0; j < n; ++j) oh += U[i * n + j] * xs[0][j];
    CHECK(std::abs(plain[0].value()[i] - oh) < 1e-12);
  }
}

TEST_CASE("temporal pool") {
  Tape tape;
  std::vector<Var> o{tape.constant(Tensor({1}, {0.0})), tape.constant(Tensor({1}, {2.0}))};
  CHECK(temporal_pool(o).value()[0] == 1.0);
  const Tensor same({3}, {1.0, -2.0, 0.5});
  std::vector<Var> twice{tape.constant(same), tape.constant(same), tape.constant(same)};
  CHECK(max_abs_diff(temporal_pool(twice).value(), same) < 1e-15);
}

TEST_CASE("siamese forward") {
  ModelConfig c = tiny_model_config();
  std::mt19937_64 rng(5);
  StsrnParams params = init_params(c, rng);
  const auto a = random_frames(3, c, rng);
  const auto b = random_frames(3, c, rng);
  Tape tape;
  const ParamVars vars = bind_params(tape, params);
  const PairOutputs ab = forward_pair(tape, a, b, vars, c);
  const PairOutputs ba = forward_pair(tape, b, a, vars, c);
  CHECK(bit_equal(ab.feature_a.value(), ba.feature_b.value()));
  CHECK(bit_equal(ab.logits_b.value(), ba.logits_a.value()));
  CHECK(squared_l2_distance(ab.feature_a, ab.feature_b).value().item() ==
        squared_l2_distance(ba.feature_a, ba.feature_b).value().item());
  const PairOutputs aa = forward_pair(tape, a, a, vars, c);
  CHECK(bit_equal(aa.feature_a.value(), aa.feature_b.value()));
  CHECK(ab.logits_a.shape() == Shape{c.n_classes});

  SUBCASE("inference path matches the training graph") {
    CHECK(max_abs_diff(extract_feature(a, params, c), ab.feature_a.value()) < 1e-12);
  }
  SUBCASE("frame embeddings are stateless") {
    const std::vector<Tensor> dup{a[0], a[1], a[0]};
    const auto e = spatial_extract(tape, dup, vars, c);
    CHECK(e.size() == 3);
    CHECK(bit_equal(e[0].value(), e[2].value()));
    CHECK(e[0].shape() == Shape{c.embed_dim});
  }
  SUBCASE("frame order matters through the recurrence") {
    const std::vector<Tensor> rev{a[2], a[1], a[0]};
    CHECK_FALSE(bit_equal(forward_sequence(tape, rev, vars, c).value(), ab.feature_a.value()));
  }
  SUBCASE("wrong frame shape") {
    const std::vector<Tensor> bad{Tensor({5, 8, 8})};
    CHECK_THROWS_AS(forward_sequence(tape, bad, vars, c), DimensionError);
  }
}

TEST_CASE("base model and residual variant differ") {
  std::mt19937_64 rng(6);
  ModelConfig base = tiny_model_config();
  base.variant = SpatialVariant::BaseModel;
  ModelConfig dbl = base;
  dbl.variant = SpatialVariant::DoubleResBlocks;
  StsrnParams pb = init_params(base, rng);
  StsrnParams pd = init_params(dbl, rng);
  // Share every tensor whose name and shape agree.
  auto named_b = pb.named();
  for (auto& [name, t] : pd.named()) {
    for (auto& [nb, tb] : named_b) {
      if (nb == name && tb->shape() == t->shape()) *t = *tb;
    }
  }
  const auto frames = random_frames(2, base, rng);
  CHECK(max_abs_diff(extract_feature(frames, pb, base), extract_feature(frames, pd, dbl)) > 1e-6);
}

TEST_CASE("parameter counts") {
  const ParamReport full = param_count(ModelConfig{});
  CHECK(full.total >= 440000);
  CHECK(full.total <= 740000);
  std::size_t cls = 0, sum_items = 0;
  for (const auto& [name, n] : full.items) {
    if (name.rfind("classifier.", 0) == 0) cls += n;
    sum_items += n;
  }
  CHECK(cls == 128 * 150 + 150);
  CHECK(sum_items == full.total);
  ModelConfig base;
  base.variant = SpatialVariant::BaseModel;
  CHECK(param_count(base).total < full.total);

  std::mt19937_64 rng(7);
  CHECK(init_params(ModelConfig{}, rng).scalar_count() == full.total);
  ModelConfig no_stsm;
  no_stsm.use_stsm = false;
  CHECK(param_count(no_stsm).total == full.total - 128);
}

TEST_CASE("full tiny model passes the gradient check") {
  for (bool same : {true, false}) {
    const auto r = check_model_gradients(tiny_model_config(), 3, 11, same);
    CHECK(r.checked > 1000);
    CHECK(r.max_rel_error < 1e-4);
  }
}
