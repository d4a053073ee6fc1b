#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stsrn/array_io.hpp"
#include "stsrn/datasets.hpp"
#include "stsrn/gradcheck.hpp"
#include "stsrn/model.hpp"

namespace stsrn {

struct TrainConfig {
  double learning_rate = 2e-3;
  double margin = 2.0;
  std::size_t epochs = 30;
  std::size_t pairs_per_epoch = 100;
  std::size_t sequence_length = kTrainSequenceLength;
  std::uint64_t seed = 0;
  // Halve the learning rate every K epochs; 0 keeps it constant.
  std::size_t lr_halve_every = 0;
  // Random crop/mirror of each training subsequence.
  bool augment = true;

  void validate() const;
};

// Same identity: ||a - b||^2. Different: max(0, margin - ||a - b||).
Var verification_loss(Var a, Var b, bool same, double margin);
Var identity_loss(Var logits, std::size_t label);

struct LossTerms {
  Var total;
  Var verification;
  Var identification;  // both branches
};

// L_veri(v_a, v_b) + L_iden(logits_a) + L_iden(logits_b), unweighted.
LossTerms total_loss(const PairOutputs& out, bool same_identity, std::size_t label_a, std::size_t label_b,
                     double margin);

// p <- p - lr * grad for every tensor. A non-finite gradient aborts with
// TrainingError before any parameter changes.
void sgd_step(std::span<const std::pair<std::string, Tensor*>> params, double lr);
void sgd_step(StsrnParams& params, double lr);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double loss_total = 0.0;
  double loss_veri = 0.0;
  double loss_iden = 0.0;
  std::optional<double> rank1;
};

// Everything needed to continue a run exactly where it stopped.
struct TrainState {
  ModelConfig model;
  TrainConfig train;
  StsrnParams params;
  ChannelStats stats;
  SplitPlan split;
  std::mt19937_64 rng;
  std::size_t epoch = 0;
  std::uint64_t pairs_seen = 0;
  std::vector<EpochMetrics> history;
};

// Fresh state: model.n_classes is set to the number of training identities
// and parameters are Xavier-initialized from train.seed.
TrainState init_train_state(ModelConfig model, const TrainConfig& train, const SplitPlan& split,
                            const ChannelStats& stats);

// Called after each epoch; returns rank-1 on some held-out protocol.
using EpochEvaluator = std::function<double(const StsrnParams&, const ModelConfig&)>;

struct StepResult {
  bool positive = false;
  double total = 0.0, veri = 0.0, iden = 0.0;
  std::string person_a, person_b;
};

// Alternating-pair SGD over a preprocessed (unstandardized) dataset.
class Trainer {
 public:
  // Throws TrainingError when the channel statistics were not fitted on
  // exactly the training identities of `state.split`.
  Trainer(const ReidDataset& dataset, TrainState& state);

  StepResult step();
  EpochMetrics run_epoch(const EpochEvaluator& evaluate = {});
  // Runs until state.epoch == state.train.epochs (or `stop_after_epoch`).
  void run(const EpochEvaluator& evaluate = {}, std::optional<std::size_t> stop_after_epoch = {},
           const std::function<void(const EpochMetrics&)>& on_epoch = {});

  double current_learning_rate() const;

 private:
  const ReidDataset& dataset_;
  TrainState& state_;
};

std::vector<FrameSequence> training_sequences(const ReidDataset& dataset, const SplitPlan& split);

TrainState train(const ReidDataset& dataset, const SplitPlan& split, const ModelConfig& model,
                 const TrainConfig& config, const ChannelStats& stats, const EpochEvaluator& evaluate = {});

// Checkpoint: manifest (config echo, epoch, RNG state, stats, split,
// history) followed by every named parameter array.
void save_checkpoint(const std::string& path, const TrainState& state, StorageType storage = StorageType::F64);
TrainState load_checkpoint(const std::string& path);
void write_checkpoint(std::ostream& out, const TrainState& state, StorageType storage = StorageType::F64);
TrainState read_checkpoint(std::istream& in);

// Finite differences of total_loss against every parameter of `config`
// on random T-frame inputs.
GradCheckReport check_model_gradients(const ModelConfig& config, std::size_t frames, std::uint64_t seed,
                                      bool same_identity, std::size_t max_coords_per_tensor = 0);

// epoch,loss_total,loss_veri,loss_iden,rank1
void write_metrics_csv(std::ostream& out, std::span<const EpochMetrics> history);

}  // namespace stsrn
