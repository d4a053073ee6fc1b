#include "stsrn/training.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "stsrn/errors.hpp"

namespace stsrn {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigurationError("learning_rate must be a finite non-negative number");
  }
  if (!(margin > 0.0)) throw ConfigurationError("margin must be positive");
  if (sequence_length == 0) throw ConfigurationError("sequence_length must be positive");
}

Var verification_loss(Var a, Var b, bool same, double margin) {
  Var d2 = squared_l2_distance(a, b);
  if (same) return d2;
  return relu(add_scalar(scalar_mul(sqrt(d2), -1.0), margin));
}

Var identity_loss(Var logits, std::size_t label) { return softmax_cross_entropy(logits, label); }

LossTerms total_loss(const PairOutputs& out, bool same_identity, std::size_t label_a, std::size_t label_b,
                     double margin) {
  LossTerms t;
  t.verification = verification_loss(out.feature_a, out.feature_b, same_identity, margin);
  t.identification = add(identity_loss(out.logits_a, label_a), identity_loss(out.logits_b, label_b));
  t.total = add(t.verification, t.identification);
  return t;
}

void sgd_step(std::span<const std::pair<std::string, Tensor*>> params, double lr) {
  for (const auto& [name, t] : params) {
    if (!t->has_grad()) throw TrainingError("sgd_step: no gradient for " + name);
    for (double g : t->grad()) {
      if (!std::isfinite(g)) throw TrainingError("sgd_step: non-finite gradient in " + name);
    }
  }
  for (const auto& [name, t] : params) {
    auto v = t->data();
    const auto g = t->grad();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  }
}

void sgd_step(StsrnParams& params, double lr) {
  const auto named = params.named();
  sgd_step(named, lr);
}

std::vector<FrameSequence> training_sequences(const ReidDataset& dataset, const SplitPlan& split) {
  std::vector<FrameSequence> out;
  for (const auto& s : dataset.sequences) {
    if (split.is_train(s.person_id)) out.push_back(s);
  }
  return out;
}

TrainState init_train_state(ModelConfig model, const TrainConfig& train, const SplitPlan& split,
                            const ChannelStats& stats) {
  train.validate();
  if (split.train_ids.size() < 2) throw ConfigurationError("training needs at least 2 identities");
  model.n_classes = split.train_ids.size();
  model.validate();
  TrainState state;
  state.model = model;
  state.train = train;
  state.split = split;
  state.stats = stats;
  state.rng.seed(train.seed);
  state.params = init_params(model, state.rng);
  return state;
}

Trainer::Trainer(const ReidDataset& dataset, TrainState& state) : dataset_(dataset), state_(state) {
  check_params(state_.model, state_.params);
  for (const auto& id : state_.split.train_ids) {
    if (std::find(state_.split.test_ids.begin(), state_.split.test_ids.end(), id) != state_.split.test_ids.end()) {
      throw TrainingError("split leak: '" + id + "' is in both train and test");
    }
  }
  std::vector<FrameSequence> keys;
  for (const auto& s : dataset_.sequences) {
    if (state_.split.is_train(s.person_id)) {
      FrameSequence k;
      k.person_id = s.person_id;
      k.camera_id = s.camera_id;
      k.frames.resize(s.length());
      keys.push_back(std::move(k));
    }
  }
  if (sequence_fingerprint(keys) != state_.stats.source) {
    throw TrainingError("channel statistics (source " + state_.stats.source +
                        ") were not fitted on this run's training identities");
  }
}

double Trainer::current_learning_rate() const {
  const auto& cfg = state_.train;
  if (cfg.lr_halve_every == 0) return cfg.learning_rate;
  return cfg.learning_rate * std::pow(0.5, static_cast<double>(state_.epoch / cfg.lr_halve_every));
}

StepResult Trainer::step() {
  const bool positive = state_.pairs_seen % 2 == 0;
  PairBatch batch = sample_pair(dataset_, state_.split, positive, state_.rng, state_.train.sequence_length);
  for (const auto* p : {&batch.seq_a.person_id, &batch.seq_b.person_id}) {
    if (!state_.split.is_train(*p)) throw TrainingError("split leak: test identity '" + *p + "' sampled for training");
  }
  if (state_.train.augment) {
    const Augmentation aug_a = random_augmentation(state_.rng);
    const Augmentation aug_b = random_augmentation(state_.rng);
    batch.seq_a = augment_sequence(batch.seq_a, aug_a);
    batch.seq_b = augment_sequence(batch.seq_b, aug_b);
  }
  apply_channel_stats(batch.seq_a, state_.stats);
  apply_channel_stats(batch.seq_b, state_.stats);

  Tape tape;
  const ParamVars vars = bind_params(tape, state_.params);
  const PairOutputs out = forward_pair(tape, batch.seq_a.frames, batch.seq_b.frames, vars, state_.model);
  const LossTerms loss = total_loss(out, batch.same_identity, batch.label_a, batch.label_b, state_.train.margin);
  StepResult r;
  r.positive = positive;
  r.total = loss.total.value().item();
  r.veri = loss.verification.value().item();
  r.iden = loss.identification.value().item();
  r.person_a = batch.seq_a.person_id;
  r.person_b = batch.seq_b.person_id;
  tape.backward(loss.total);
  sgd_step(state_.params, current_learning_rate());
  ++state_.pairs_seen;
  return r;
}

EpochMetrics Trainer::run_epoch(const EpochEvaluator& evaluate) {
  EpochMetrics m;
  const std::size_t n = state_.train.pairs_per_epoch;
  for (std::size_t i = 0; i < n; ++i) {
    const StepResult r = step();
    m.loss_total += r.total;
    m.loss_veri += r.veri;
    m.loss_iden += r.iden;
  }
  if (n > 0) {
    m.loss_total /= static_cast<double>(n);
    m.loss_veri /= static_cast<double>(n);
    m.loss_iden /= static_cast<double>(n);
  }
  ++state_.epoch;
  m.epoch = state_.epoch;
  if (evaluate) m.rank1 = evaluate(state_.params, state_.model);
  state_.history.push_back(m);
  return m;
}

void Trainer::run(const EpochEvaluator& evaluate, std::optional<std::size_t> stop_after_epoch,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  const std::size_t last = stop_after_epoch ? std::min(*stop_after_epoch, state_.train.epochs) : state_.train.epochs;
  while (state_.epoch < last) {
    const EpochMetrics m = run_epoch(evaluate);
    if (on_epoch) on_epoch(m);
  }
}

TrainState train(const ReidDataset& dataset, const SplitPlan& split, const ModelConfig& model,
                 const TrainConfig& config, const ChannelStats& stats, const EpochEvaluator& evaluate) {
  TrainState state = init_train_state(model, config, split, stats);
  Trainer trainer(dataset, state);
  trainer.run(evaluate);
  return state;
}

void write_metrics_csv(std::ostream& out, std::span<const EpochMetrics> history) {
  out << "epoch,loss_total,loss_veri,loss_iden,rank1\n";
  out << std::setprecision(10);
  for (const auto& m : history) {
    out << m.epoch << ',' << m.loss_total << ',' << m.loss_veri << ',' << m.loss_iden << ',';
    if (m.rank1) out << *m.rank1;
    out << '\n';
  }
}

GradCheckReport check_model_gradients(const ModelConfig& config, std::size_t frames, std::uint64_t seed,
                                      bool same_identity, std::size_t max_coords_per_tensor) {
  config.validate();
  std::mt19937_64 rng(seed);
  StsrnParams params = init_params(config, rng);
  // Push the gate away from its init so omega is not the same everywhere.
  std::normal_distribution<double> noise(0.0, 0.5);
  for (std::size_t i = 0; i < params.gate_raw.size(); ++i) params.gate_raw[i] += noise(rng);
  for (std::size_t i = 0; i < params.rnn_bias.size(); ++i) params.rnn_bias[i] = 0.1 * noise(rng);
  auto random_sequence = [&] {
    std::vector<Tensor> seq;
    for (std::size_t t = 0; t < frames; ++t) {
      Tensor f({kInputChannels, config.input_h, config.input_w});
      for (double& v : f.data()) v = noise(rng) * 2.0;
      seq.push_back(std::move(f));
    }
    return seq;
  };
  const std::vector<Tensor> a = random_sequence();
  const std::vector<Tensor> b = random_sequence();
  const std::size_t label_a = 0;
  const std::size_t label_b = same_identity ? 0 : std::min<std::size_t>(1, config.n_classes - 1);
  // A margin above the initial distance keeps the hinge active.
  const double margin = 50.0;
  auto loss = [&](Tape& tape) {
    const ParamVars vars = bind_params(tape, params);
    const PairOutputs out = forward_pair(tape, a, b, vars, config);
    return total_loss(out, same_identity, label_a, label_b, margin).total;
  };
  std::vector<Tensor*> ptrs;
  for (auto& [name, t] : params.named()) ptrs.push_back(t);
  return finite_diff_check_params(loss, ptrs, 1e-5, max_coords_per_tensor);
}

}  // namespace stsrn
