#pragma once

#include "stsrn/datasets.hpp"
#include "stsrn/model.hpp"
#include "stsrn/training.hpp"

namespace fixture {

inline stsrn::ReidDataset synthetic(std::size_t ids, std::size_t frames, std::uint64_t seed, std::size_t h = 32,
                                    std::size_t w = 16) {
  stsrn::SyntheticSpec spec;
  spec.n_ids = ids;
  spec.frames_per_seq = frames;
  spec.image_h = h;
  spec.image_w = w;
  spec.seed = seed;
  spec.camera_seed = seed;
  return stsrn::preprocess_dataset(stsrn::generate_synthetic(spec));
}

inline stsrn::ModelConfig small_model(std::size_t h = 32, std::size_t w = 16) {
  stsrn::ModelConfig c;
  c.input_h = h;
  c.input_w = w;
  c.channel_widths = {4, 8, 8};
  c.embed_dim = 16;
  c.hidden_dim = 16;
  return c;
}

inline stsrn::TrainConfig small_train(std::size_t epochs, std::size_t pairs, std::uint64_t seed) {
  stsrn::TrainConfig t;
  t.epochs = epochs;
  t.pairs_per_epoch = pairs;
  t.sequence_length = 6;
  t.seed = seed;
  return t;
}

// A fresh state on a seeded split with statistics fitted on its training half.
inline stsrn::TrainState fresh_state(const stsrn::ReidDataset& ds, const stsrn::ModelConfig& model,
                                     const stsrn::TrainConfig& train, std::uint64_t split_seed) {
  const stsrn::SplitPlan split = stsrn::make_split(ds, split_seed);
  const stsrn::ChannelStats stats = stsrn::fit_channel_stats(stsrn::training_sequences(ds, split));
  return stsrn::init_train_state(model, train, split, stats);
}

}  // namespace fixture
