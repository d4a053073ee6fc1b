#include <charconv>
#include <fstream>
#include <sstream>

#include "stsrn/errors.hpp"
#include "stsrn/training.hpp"

namespace stsrn {
namespace {

constexpr const char* kCheckpointFormat = "stsrn-checkpoint";

std::string exact(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& key) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw LoadError("checkpoint: bad number '" + s + "' for " + key);
  }
  return v;
}

std::uint64_t parse_u64(const std::string& s, const std::string& key) {
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw LoadError("checkpoint: bad integer '" + s + "' for " + key);
  }
  return v;
}

bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw LoadError("checkpoint: bad flag '" + s + "' for " + key);
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i].find_first_of(",\n") != std::string::npos) {
      throw ArgumentError("identity '" + ids[i] + "' cannot be stored in a checkpoint");
    }
    if (i) out += ',';
    out += ids[i];
  }
  return out;
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

void write_checkpoint(std::ostream& out, const TrainState& state, StorageType storage) {
  ArrayFile file;
  file.format = kCheckpointFormat;
  auto put = [&](std::string k, std::string v) { file.manifest.emplace_back(std::move(k), std::move(v)); };
  const ModelConfig& m = state.model;
  put("model.variant", to_string(m.variant));
  put("model.block_style", to_string(m.block_style));
  put("model.input_h", std::to_string(m.input_h));
  put("model.input_w", std::to_string(m.input_w));
  std::string widths;
  for (std::size_t i = 0; i < m.channel_widths.size(); ++i) {
    widths += (i ? "," : "") + std::to_string(m.channel_widths[i]);
  }
  put("model.channel_widths", widths);
  put("model.embed_dim", std::to_string(m.embed_dim));
  put("model.hidden_dim", std::to_string(m.hidden_dim));
  put("model.n_classes", std::to_string(m.n_classes));
  put("model.use_stsm", m.use_stsm ? "1" : "0");
  put("model.use_temporal_residual", m.use_temporal_residual ? "1" : "0");

  const TrainConfig& t = state.train;
  put("train.learning_rate", exact(t.learning_rate));
  put("train.margin", exact(t.margin));
  put("train.epochs", std::to_string(t.epochs));
  put("train.pairs_per_epoch", std::to_string(t.pairs_per_epoch));
  put("train.sequence_length", std::to_string(t.sequence_length));
  put("train.seed", std::to_string(t.seed));
  put("train.lr_halve_every", std::to_string(t.lr_halve_every));
  put("train.augment", t.augment ? "1" : "0");

  put("state.epoch", std::to_string(state.epoch));
  put("state.pairs_seen", std::to_string(state.pairs_seen));
  std::ostringstream rng;
  rng << state.rng;
  put("state.rng", rng.str());

  for (std::size_t c = 0; c < kInputChannels; ++c) {
    put("stats.channel_" + std::to_string(c) + "_mean", exact(state.stats.mean[c]));
    put("stats.channel_" + std::to_string(c) + "_std", exact(state.stats.stddev[c]));
  }
  put("stats.source", state.stats.source);
  put("split.seed", std::to_string(state.split.trial_seed));
  put("split.train", join_ids(state.split.train_ids));
  put("split.test", join_ids(state.split.test_ids));

  put("history.count", std::to_string(state.history.size()));
  for (std::size_t i = 0; i < state.history.size(); ++i) {
    const auto& h = state.history[i];
    put("history." + std::to_string(i), std::to_string(h.epoch) + "," + exact(h.loss_total) + "," +
                                            exact(h.loss_veri) + "," + exact(h.loss_iden) + "," +
                                            (h.rank1 ? exact(*h.rank1) : std::string()));
  }
  for (const auto& [name, tensor] : state.params.named()) file.arrays.push_back({name, *tensor});
  write_array_file(out, file, storage);
}

TrainState read_checkpoint(std::istream& in) {
  const ArrayFile file = read_array_file(in, kCheckpointFormat);
  auto get = [&](const std::string& k) -> const std::string& { return file.get(k); };
  TrainState state;
  ModelConfig& m = state.model;
  try {
    m.variant = parse_variant(get("model.variant"));
    m.block_style = parse_block_style(get("model.block_style"));
  } catch (const ConfigurationError& e) {
    throw LoadError(std::string("checkpoint: ") + e.what());
  }
  m.input_h = parse_u64(get("model.input_h"), "model.input_h");
  m.input_w = parse_u64(get("model.input_w"), "model.input_w");
  m.channel_widths.clear();
  for (const auto& w : split_list(get("model.channel_widths"), ',')) {
    m.channel_widths.push_back(parse_u64(w, "model.channel_widths"));
  }
  m.embed_dim = parse_u64(get("model.embed_dim"), "model.embed_dim");
  m.hidden_dim = parse_u64(get("model.hidden_dim"), "model.hidden_dim");
  m.n_classes = parse_u64(get("model.n_classes"), "model.n_classes");
  m.use_stsm = parse_bool(get("model.use_stsm"), "model.use_stsm");
  m.use_temporal_residual = parse_bool(get("model.use_temporal_residual"), "model.use_temporal_residual");

  TrainConfig& t = state.train;
  t.learning_rate = parse_double(get("train.learning_rate"), "train.learning_rate");
  t.margin = parse_double(get("train.margin"), "train.margin");
  t.epochs = parse_u64(get("train.epochs"), "train.epochs");
  t.pairs_per_epoch = parse_u64(get("train.pairs_per_epoch"), "train.pairs_per_epoch");
  t.sequence_length = parse_u64(get("train.sequence_length"), "train.sequence_length");
  t.seed = parse_u64(get("train.seed"), "train.seed");
  t.lr_halve_every = parse_u64(get("train.lr_halve_every"), "train.lr_halve_every");
  t.augment = parse_bool(get("train.augment"), "train.augment");

  state.epoch = parse_u64(get("state.epoch"), "state.epoch");
  state.pairs_seen = parse_u64(get("state.pairs_seen"), "state.pairs_seen");
  std::istringstream rng(get("state.rng"));
  rng >> state.rng;
  if (!rng) throw LoadError("checkpoint: unreadable RNG state");

  for (std::size_t c = 0; c < kInputChannels; ++c) {
    const std::string p = "stats.channel_" + std::to_string(c);
    state.stats.mean[c] = parse_double(get(p + "_mean"), p + "_mean");
    state.stats.stddev[c] = parse_double(get(p + "_std"), p + "_std");
  }
  state.stats.source = get("stats.source");
  state.split.trial_seed = parse_u64(get("split.seed"), "split.seed");
  state.split.train_ids = split_list(get("split.train"), ',');
  state.split.test_ids = split_list(get("split.test"), ',');

  const std::size_t count = parse_u64(get("history.count"), "history.count");
  for (std::size_t i = 0; i < count; ++i) {
    const auto fields = split_list(get("history." + std::to_string(i)), ',');
    if (fields.size() != 5) throw LoadError("checkpoint: malformed history entry " + std::to_string(i));
    EpochMetrics h;
    h.epoch = parse_u64(fields[0], "history.epoch");
    h.loss_total = parse_double(fields[1], "history.loss_total");
    h.loss_veri = parse_double(fields[2], "history.loss_veri");
    h.loss_iden = parse_double(fields[3], "history.loss_iden");
    if (!fields[4].empty()) h.rank1 = parse_double(fields[4], "history.rank1");
    state.history.push_back(h);
  }

  try {
    m.validate();
    state.params = zero_params(m);
  } catch (const std::invalid_argument& e) {
    throw LoadError(std::string("checkpoint: invalid model config: ") + e.what());
  }
  for (auto& [name, tensor] : state.params.named()) {
    const Tensor& stored = file.array(name);
    if (stored.shape() != tensor->shape()) {
      throw LoadError("checkpoint: array " + name + " has shape " + shape_string(stored.shape()) + ", expected " +
                      shape_string(tensor->shape()));
    }
    *tensor = stored;
    tensor->set_requires_grad(true);
  }
  if (file.arrays.size() != state.params.named().size()) {
    throw LoadError("checkpoint: unexpected extra arrays");
  }
  return state;
}

void save_checkpoint(const std::string& path, const TrainState& state, StorageType storage) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_checkpoint(out, state, storage);
  if (!out) throw std::runtime_error("write failed: " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path);
  try {
    return read_checkpoint(in);
  } catch (const LoadError& e) {
    throw LoadError(path + ": " + e.what());
  }
}

}  // namespace stsrn
