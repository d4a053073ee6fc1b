#include "stsrn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <mutex>
#include <numeric>
#include <thread>

#include "stsrn/errors.hpp"

namespace stsrn {
namespace {

constexpr const char* kFeatureFormat = "stsrn-features";

std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// cam2 < cam10.
bool camera_less(const std::string& a, const std::string& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  return a < b;
}

template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F&& body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace

std::size_t worker_count() {
  if (const char* env = std::getenv("STSRN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Tensor extract_sequence_feature(const FrameSequence& seq, const StsrnParams& params, const ModelConfig& config,
                                const ChannelStats& stats, const ExtractOptions& options) {
  if (seq.length() == 0) throw ArgumentError("sequence " + seq.person_id + "/" + seq.camera_id + " is empty");
  if (options.test_length == 0) throw ArgumentError("test_length must be positive");
  FrameSequence window;
  window.person_id = seq.person_id;
  window.camera_id = seq.camera_id;
  const std::size_t n = std::min(options.test_length, seq.length());
  window.frames.assign(seq.frames.begin(), seq.frames.begin() + static_cast<std::ptrdiff_t>(n));
  if (options.augment) {
    std::mt19937_64 rng(mix(fnv1a(seq.camera_id, fnv1a(seq.person_id)) ^ mix(options.seed)));
    window = augment_sequence(window, random_augmentation(rng));
  }
  apply_channel_stats(window, stats);
  return extract_feature(window.frames, params, config);
}

void extract_into(FeatureStore& store, std::span<const FrameSequence* const> sequences, const StsrnParams& params,
                  const ModelConfig& config, const ChannelStats& stats, const ExtractOptions& options) {
  const std::size_t base = store.entries.size();
  store.entries.resize(base + sequences.size());
  const std::size_t threads = options.threads ? options.threads : worker_count();
  parallel_for(sequences.size(), threads, [&](std::size_t i) {
    const FrameSequence& seq = *sequences[i];
    FeatureEntry& e = store.entries[base + i];
    e.person_id = seq.person_id;
    e.camera_id = seq.camera_id;
    e.feature = extract_sequence_feature(seq, params, config, stats, options);
    store.extraction_count.increment();
  });
}

FeatureStore extract_features(std::span<const FrameSequence* const> sequences, const StsrnParams& params,
                              const ModelConfig& config, const ChannelStats& stats, const ExtractOptions& options) {
  FeatureStore store;
  extract_into(store, sequences, params, config, stats, options);
  return store;
}

double CmcCurve::rate_at(std::size_t k) const {
  if (rates.empty() || k == 0) return 0.0;
  return rates[std::min(k, rates.size()) - 1];
}

double euclidean_distance(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw DimensionError("feature sizes differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

std::vector<RankedEntry> query(const FeatureStore& store, const Tensor& probe_feature) {
  if (store.empty()) throw ProtocolError("query against an empty feature store");
  std::vector<RankedEntry> ranked(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    ranked[i] = {i, store.entries[i].person_id, store.entries[i].camera_id,
                 euclidean_distance(store.entries[i].feature, probe_feature)};
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const RankedEntry& a, const RankedEntry& b) { return a.distance < b.distance; });
  return ranked;
}

CmcCurve cmc(const FeatureStore& probe, const FeatureStore& gallery) {
  if (probe.empty()) throw ProtocolError("cmc: no probes");
  if (gallery.empty()) throw ProtocolError("cmc: empty gallery");
  for (const auto& p : probe.entries) {
    const bool present = std::any_of(gallery.entries.begin(), gallery.entries.end(),
                                     [&](const FeatureEntry& g) { return g.person_id == p.person_id; });
    if (!present) throw ProtocolError("cmc: probe identity '" + p.person_id + "' is not in the gallery");
  }
  CmcCurve curve;
  curve.n_probes = probe.size();
  curve.match_ranks.resize(probe.size());
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const auto ranked = query(gallery, probe.entries[i].feature);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if (ranked[r].person_id == probe.entries[i].person_id) {
        curve.match_ranks[i] = r + 1;
        break;
      }
    }
  }
  curve.rates.assign(gallery.size(), 0.0);
  for (std::size_t r : curve.match_ranks) curve.rates[r - 1] += 1.0;
  double acc = 0.0;
  for (double& v : curve.rates) {
    acc += v;
    v = acc / static_cast<double>(probe.size());
  }
  return curve;
}

ProbeGallery probe_gallery(const ReidDataset& dataset, std::span<const std::string> identities, std::uint64_t seed) {
  ProbeGallery pg;
  std::mt19937_64 rng(seed);
  for (const auto& person : identities) {
    std::vector<std::string> cams = dataset.cameras_of(person);
    std::sort(cams.begin(), cams.end(), camera_less);
    if (cams.size() < 2) throw ProtocolError("identity '" + person + "' is not seen by two cameras");
    std::string cam_a = cams[0], cam_b = cams[1];
    if (cams.size() > 2) {
      std::vector<std::string> picked;
      std::sample(cams.begin(), cams.end(), std::back_inserter(picked), 2, rng);
      std::sort(picked.begin(), picked.end(), camera_less);
      cam_a = picked[0];
      cam_b = picked[1];
    }
    const FrameSequence* a = nullptr;
    const FrameSequence* b = nullptr;
    for (std::size_t i : dataset.sequences_of(person)) {
      const FrameSequence& s = dataset.sequences[i];
      if (!a && s.camera_id == cam_a) a = &s;
      if (!b && s.camera_id == cam_b) b = &s;
    }
    pg.probe.push_back(a);
    pg.gallery.push_back(b);
  }
  return pg;
}

EvalResult evaluate(const ReidDataset& dataset, std::span<const std::string> identities, const StsrnParams& params,
                    const ModelConfig& config, const ChannelStats& stats, const ExtractOptions& options) {
  const ProbeGallery pg = probe_gallery(dataset, identities, options.seed);
  EvalResult r;
  extract_into(r.probe, pg.probe, params, config, stats, options);
  extract_into(r.gallery, pg.gallery, params, config, stats, options);
  r.curve = cmc(r.probe, r.gallery);
  r.curve.trial_seed = options.seed;
  return r;
}

std::size_t CrossValResult::failures() const {
  return static_cast<std::size_t>(std::count_if(trials.begin(), trials.end(), [](const TrialResult& t) { return t.failed; }));
}

TrialResult run_trial(const ReidDataset& dataset, const ModelConfig& model, const TrainConfig& train,
                      std::uint64_t seed, bool track_rank1, const ExtractOptions& extract) {
  TrialResult result;
  result.seed = seed;
  try {
    const SplitPlan split = make_split(dataset, seed);
    const std::vector<FrameSequence> train_seqs = training_sequences(dataset, split);
    const ChannelStats stats = fit_channel_stats(train_seqs);
    TrainConfig cfg = train;
    cfg.seed = seed;
    ExtractOptions ex = extract;
    ex.seed = seed;
    EpochEvaluator evaluator;
    if (track_rank1) {
      evaluator = [&](const StsrnParams& params, const ModelConfig& m) {
        return evaluate(dataset, split.test_ids, params, m, stats, ex).curve.rate_at(1);
      };
    }
    const TrainState state = stsrn::train(dataset, split, model, cfg, stats, evaluator);
    result.history = state.history;
    result.curve = evaluate(dataset, split.test_ids, state.params, state.model, stats, ex).curve;
    result.curve.trial_seed = seed;
  } catch (const std::exception& e) {
    result.failed = true;
    result.error = e.what();
  }
  return result;
}

CrossValResult cross_validate(const ReidDataset& dataset, const ModelConfig& model, const TrainConfig& train,
                              const CrossValOptions& options) {
  if (options.n_trials == 0) throw ArgumentError("cross_validate: n_trials must be positive");
  CrossValResult result;
  std::vector<CmcCurve> ok;
  for (std::size_t t = 0; t < options.n_trials; ++t) {
    result.trials.push_back(
        run_trial(dataset, model, train, options.base_seed + t, options.track_rank1, options.extract));
    if (!result.trials.back().failed) ok.push_back(result.trials.back().curve);
  }
  if (!ok.empty()) result.mean = mean_curve(ok);
  result.mean.trial_seed = options.base_seed;
  return result;
}

CmcCurve mean_curve(std::span<const CmcCurve> curves) {
  if (curves.empty()) throw ArgumentError("mean_curve: no curves");
  std::size_t len = curves.front().rates.size();
  for (const auto& c : curves) len = std::max(len, c.rates.size());
  CmcCurve mean;
  mean.rates.assign(len, 0.0);
  for (const auto& c : curves) {
    for (std::size_t k = 0; k < len; ++k) mean.rates[k] += c.rate_at(k + 1);
    mean.n_probes += c.n_probes;
  }
  for (double& v : mean.rates) v /= static_cast<double>(curves.size());
  return mean;
}

CrossDatasetResult cross_dataset_eval(const ReidDataset& train_set, const ReidDataset& test_set,
                                      const ModelConfig& model, const TrainConfig& train,
                                      const ExtractOptions& extract) {
  const SplitPlan split = make_full_train_split(train_set);
  const ChannelStats stats = fit_channel_stats(training_sequences(train_set, split));
  CrossDatasetResult result;
  result.state = stsrn::train(train_set, split, model, train, stats);
  const std::vector<std::string> ids = eligible_identities(test_set);
  result.curve = evaluate(test_set, ids, result.state.params, result.state.model, stats, extract).curve;
  return result;
}

void write_cmc_csv(std::ostream& out, const CmcCurve& curve) {
  out << "rank,rate\n" << std::setprecision(10);
  for (std::size_t k = 0; k < curve.rates.size(); ++k) out << k + 1 << ',' << curve.rates[k] << '\n';
}

void write_cmc_summary(std::ostream& out, const CmcCurve& curve) {
  out << "R1,R5,R10,R20\n" << std::setprecision(10);
  out << curve.rate_at(1) << ',' << curve.rate_at(5) << ',' << curve.rate_at(10) << ',' << curve.rate_at(20) << '\n';
}

void save_feature_store(const std::string& path, const FeatureStore& store) {
  ArrayFile file;
  file.format = kFeatureFormat;
  file.manifest.emplace_back("entries", std::to_string(store.size()));
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& e = store.entries[i];
    file.manifest.emplace_back("entry." + std::to_string(i) + ".person", e.person_id);
    file.manifest.emplace_back("entry." + std::to_string(i) + ".camera", e.camera_id);
    file.arrays.push_back({"feature." + std::to_string(i), e.feature});
  }
  save_array_file(path, file);
}

FeatureStore load_feature_store(const std::string& path) {
  const ArrayFile file = load_array_file(path, kFeatureFormat);
  FeatureStore store;
  const std::size_t n = std::stoul(file.get("entries"));
  for (std::size_t i = 0; i < n; ++i) {
    FeatureEntry e;
    e.person_id = file.get("entry." + std::to_string(i) + ".person");
    e.camera_id = file.get("entry." + std::to_string(i) + ".camera");
    e.feature = file.array("feature." + std::to_string(i));
    store.entries.push_back(std::move(e));
  }
  return store;
}

std::vector<AblationConfig> ablation_configs() {
  using V = SpatialVariant;
  return {
      {"BaseModel", V::BaseModel, false, false},
      {"DoubleRes", V::DoubleResBlocks, false, false},
      {"Base+TemRes", V::BaseModel, true, false},
      {"Double+TemRes", V::DoubleResBlocks, true, false},
      {"Base+TemRes+STSM", V::BaseModel, true, true},
      {"Double+TemRes+STSM", V::DoubleResBlocks, true, true},
  };
}

const AblationConfig& find_ablation_config(const std::string& name) {
  static const std::vector<AblationConfig> configs = ablation_configs();
  for (const auto& c : configs) {
    if (c.name == name) return c;
  }
  throw ConfigurationError("unknown ablation variant '" + name + "'");
}

std::vector<AblationRow> run_ablation(const ReidDataset& dataset, const ModelConfig& base, const TrainConfig& train,
                                      const CrossValOptions& options, std::span<const std::string> names) {
  std::vector<AblationConfig> configs;
  if (names.empty()) {
    configs = ablation_configs();
  } else {
    for (const auto& n : names) configs.push_back(find_ablation_config(n));
  }
  const std::size_t n_eligible = eligible_identities(dataset).size();
  std::vector<AblationRow> rows;
  for (const auto& c : configs) {
    ModelConfig model = base;
    model.variant = c.variant;
    model.use_temporal_residual = c.temporal_residual;
    model.use_stsm = c.stsm;
    model.n_classes = (n_eligible + 1) / 2;
    AblationRow row;
    row.config = c;
    row.param_count = param_count(model).total;
    CrossValOptions opts = options;
    opts.track_rank1 = true;
    row.result = cross_validate(dataset, model, train, opts);
    row.rank1_by_epoch.assign(train.epochs, 0.0);
    std::size_t ok = 0;
    for (const auto& t : row.result.trials) {
      if (t.failed) continue;
      ++ok;
      for (std::size_t e = 0; e < t.history.size() && e < train.epochs; ++e) {
        row.rank1_by_epoch[e] += t.history[e].rank1.value_or(0.0);
      }
    }
    if (ok) {
      for (double& v : row.rank1_by_epoch) v /= static_cast<double>(ok);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, std::span<const AblationRow> rows) {
  out << "variant,param_count,rank1,rank5,rank20,failed_trials\n" << std::setprecision(10);
  for (const auto& r : rows) {
    const CmcCurve& c = r.result.mean;
    out << r.config.name << ',' << r.param_count << ',' << c.rate_at(1) << ',' << c.rate_at(5) << ','
        << c.rate_at(20) << ',' << r.result.failures() << '\n';
  }
}

void write_rank1_trace_csv(std::ostream& out, const AblationRow& row) {
  out << "epoch,rank1\n" << std::setprecision(10);
  for (std::size_t e = 0; e < row.rank1_by_epoch.size(); ++e) out << e + 1 << ',' << row.rank1_by_epoch[e] << '\n';
}

}  // namespace stsrn
