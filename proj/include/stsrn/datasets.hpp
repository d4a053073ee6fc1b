#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include "stsrn/vision.hpp"

namespace stsrn {

// A collection of tracklets keyed by (person, camera). Works for raw RGB
// sequences as loaded from disk and for preprocessed 5-channel sequences.
template <typename Sequence>
struct SequenceSet {
  std::vector<Sequence> sequences;
  // Persons seen by fewer than two cameras; kept, but not split-eligible.
  std::vector<std::string> flagged_ids;

  std::vector<std::string> identities() const;
  std::vector<std::string> cameras() const;
  std::vector<std::size_t> sequences_of(const std::string& person) const;
  std::vector<std::string> cameras_of(const std::string& person) const;
};

using RawDataset = SequenceSet<RawSequence>;
using ReidDataset = SequenceSet<FrameSequence>;

// root/<person>/<camera>/frame_%05d.png, frames read in numeric order.
RawDataset load_dataset(const std::string& root);
void write_dataset(const RawDataset& dataset, const std::string& root);

ReidDataset preprocess_dataset(const RawDataset& raw, std::size_t flow_window = 5);

// Preprocessed sequences as one array file, one [T, 5, H, W] array each.
void save_preprocessed(const std::string& path, const ReidDataset& dataset);
ReidDataset load_preprocessed(const std::string& path);

// A preprocessed file, or a frame directory that is loaded and preprocessed.
ReidDataset open_dataset(const std::string& path);

struct SyntheticSpec {
  std::size_t n_ids = 10;
  std::size_t n_cams = 2;
  std::size_t frames_per_seq = 24;
  std::size_t image_h = 64;
  std::size_t image_w = 32;
  std::uint64_t seed = 0;
  // Identity appearance is drawn from `seed`; camera backgrounds and colour
  // transforms from `camera_seed`. Two sets sharing `seed` but not
  // `camera_seed` show the same people through different cameras.
  std::uint64_t camera_seed = 0;
  double noise_stddev = 6.0;
};

RawDataset generate_synthetic(const SyntheticSpec& spec);

struct SplitPlan {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
  std::uint64_t trial_seed = 0;

  // Class index of a training identity; throws ArgumentError otherwise.
  std::size_t label_of(const std::string& person) const;
  bool is_train(const std::string& person) const;
};

// Persons present in at least two cameras.
template <typename Sequence>
std::vector<std::string> eligible_identities(const SequenceSet<Sequence>& dataset);

// Shuffles the eligible identities with trial_seed and halves them (the
// training half gets the extra one when the count is odd).
template <typename Sequence>
SplitPlan make_split(const SequenceSet<Sequence>& dataset, std::uint64_t trial_seed);

// Every eligible identity goes to training; used for cross-dataset runs.
template <typename Sequence>
SplitPlan make_full_train_split(const SequenceSet<Sequence>& dataset);

void write_split(std::ostream& out, const SplitPlan& plan);
SplitPlan read_split(std::istream& in);

inline constexpr std::size_t kTrainSequenceLength = 16;

struct PairBatch {
  FrameSequence seq_a;
  FrameSequence seq_b;
  bool same_identity = false;
  std::size_t label_a = 0;
  std::size_t label_b = 0;
  std::size_t start_a = 0;
  std::size_t start_b = 0;
};

// A contiguous window of `length` frames starting at `start`, wrapping
// around cyclically when the tracklet is shorter.
FrameSequence take_window(const FrameSequence& seq, std::size_t start, std::size_t length);

// Positive: one training identity seen from two different cameras.
// Negative: two different training identities, any cameras. Each side is a
// random window of `length` frames.
PairBatch sample_pair(const ReidDataset& dataset, const SplitPlan& split, bool want_positive,
                      std::mt19937_64& rng, std::size_t length = kTrainSequenceLength);

}  // namespace stsrn
