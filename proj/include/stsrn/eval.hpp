#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stsrn/training.hpp"

namespace stsrn {

// Worker threads for feature extraction: STSRN_THREADS if set, otherwise
// the hardware concurrency.
std::size_t worker_count();

class ExtractionCounter {
 public:
  ExtractionCounter() = default;
  ExtractionCounter(const ExtractionCounter& other) : n_(other.value()) {}
  ExtractionCounter& operator=(const ExtractionCounter& other) {
    n_.store(other.value());
    return *this;
  }

  void increment() { n_.fetch_add(1, std::memory_order_relaxed); }
  std::size_t value() const { return n_.load(std::memory_order_relaxed); }

 private:
  std::atomic<std::size_t> n_{0};
};

struct FeatureEntry {
  std::string person_id;
  std::string camera_id;
  Tensor feature;
};

struct FeatureStore {
  std::vector<FeatureEntry> entries;
  ExtractionCounter extraction_count;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
};

inline constexpr std::size_t kTestSequenceLength = 128;

struct ExtractOptions {
  std::size_t test_length = kTestSequenceLength;
  // One seeded random crop/mirror per sequence, as in training.
  bool augment = true;
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0: worker_count()
};

// Sequences are preprocessed but unstandardized; `stats` must come from the
// training identities. The first min(test_length, length) frames are used.
Tensor extract_sequence_feature(const FrameSequence& seq, const StsrnParams& params, const ModelConfig& config,
                                const ChannelStats& stats, const ExtractOptions& options);

// Appends one entry per sequence, in input order.
void extract_into(FeatureStore& store, std::span<const FrameSequence* const> sequences, const StsrnParams& params,
                  const ModelConfig& config, const ChannelStats& stats, const ExtractOptions& options);
FeatureStore extract_features(std::span<const FrameSequence* const> sequences, const StsrnParams& params,
                              const ModelConfig& config, const ChannelStats& stats, const ExtractOptions& options);

struct CmcCurve {
  std::vector<double> rates;  // rates[k-1]: fraction of probes matched within rank k
  std::vector<std::size_t> match_ranks;  // 1-based, per probe
  std::size_t n_probes = 0;
  std::uint64_t trial_seed = 0;

  // Clamped to the last rank when k exceeds the gallery size.
  double rate_at(std::size_t k) const;
};

double euclidean_distance(const Tensor& a, const Tensor& b);

// Throws ProtocolError when a probe identity is absent from the gallery or
// either store is empty. Ties keep gallery insertion order.
CmcCurve cmc(const FeatureStore& probe, const FeatureStore& gallery);

struct RankedEntry {
  std::size_t index = 0;
  std::string person_id;
  std::string camera_id;
  double distance = 0.0;
};

// Gallery entries by ascending distance. No feature extraction happens.
std::vector<RankedEntry> query(const FeatureStore& store, const Tensor& probe_feature);

struct ProbeGallery {
  std::vector<const FrameSequence*> probe;
  std::vector<const FrameSequence*> gallery;
};

// One sequence per identity on each side. When a person has more than two
// cameras two are drawn at random (seeded); the lower camera id is the probe.
ProbeGallery probe_gallery(const ReidDataset& dataset, std::span<const std::string> identities, std::uint64_t seed);

struct EvalResult {
  CmcCurve curve;
  FeatureStore probe;
  FeatureStore gallery;
};

EvalResult evaluate(const ReidDataset& dataset, std::span<const std::string> identities, const StsrnParams& params,
                    const ModelConfig& config, const ChannelStats& stats, const ExtractOptions& options);

struct TrialResult {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  CmcCurve curve;
  std::vector<EpochMetrics> history;
};

struct CrossValResult {
  CmcCurve mean;  // over successful trials
  std::vector<TrialResult> trials;
  std::size_t failures() const;
};

struct CrossValOptions {
  std::size_t n_trials = 10;
  std::uint64_t base_seed = 0;
  // Evaluate rank-1 on the held-out half after every epoch.
  bool track_rank1 = false;
  ExtractOptions extract;
};

// Trial t uses seed base_seed + t for the split, training and test-time
// augmentation.
TrialResult run_trial(const ReidDataset& dataset, const ModelConfig& model, const TrainConfig& train,
                      std::uint64_t seed, bool track_rank1, const ExtractOptions& extract);
CrossValResult cross_validate(const ReidDataset& dataset, const ModelConfig& model, const TrainConfig& train,
                              const CrossValOptions& options);

CmcCurve mean_curve(std::span<const CmcCurve> curves);

struct CrossDatasetResult {
  CmcCurve curve;
  TrainState state;
};

// Trains on every eligible identity of `train_set` with statistics fitted
// there, then evaluates all eligible identities of `test_set`.
CrossDatasetResult cross_dataset_eval(const ReidDataset& train_set, const ReidDataset& test_set,
                                      const ModelConfig& model, const TrainConfig& train,
                                      const ExtractOptions& extract);

struct AblationConfig {
  std::string name;
  SpatialVariant variant = SpatialVariant::BaseModel;
  bool temporal_residual = false;
  bool stsm = false;
};

// BaseModel, DoubleRes, Base+TemRes, Double+TemRes, Base+TemRes+STSM,
// Double+TemRes+STSM.
std::vector<AblationConfig> ablation_configs();
// Throws ConfigurationError for an unknown name.
const AblationConfig& find_ablation_config(const std::string& name);

struct AblationRow {
  AblationConfig config;
  std::size_t param_count = 0;
  CrossValResult result;
  // Mean over successful trials, one entry per epoch.
  std::vector<double> rank1_by_epoch;
};

// Every configuration sees the same splits and seeds.
std::vector<AblationRow> run_ablation(const ReidDataset& dataset, const ModelConfig& base, const TrainConfig& train,
                                      const CrossValOptions& options, std::span<const std::string> names);

// variant,param_count,rank1,rank5,rank20,failed_trials
void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows);
// epoch,rank1
void write_rank1_trace_csv(std::ostream& out, const AblationRow& row);

// rank,rate
void write_cmc_csv(std::ostream& out, const CmcCurve& curve);
// R1,R5,R10,R20 header and one value row.
void write_cmc_summary(std::ostream& out, const CmcCurve& curve);

void save_feature_store(const std::string& path, const FeatureStore& store);
FeatureStore load_feature_store(const std::string& path);

}  // namespace stsrn
