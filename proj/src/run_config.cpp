#include "stsrn/run_config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "stsrn/errors.hpp"

namespace stsrn {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigurationError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigurationError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigurationError(key + ": expected true/false, got '" + v + "'");
}

std::string from_bool(bool b) { return b ? "true" : "false"; }

std::string from_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "data.dataset") dataset = v;
  else if (key == "data.test_dataset") test_dataset = v;
  else if (key == "data.checkpoint") checkpoint = v;
  else if (key == "data.out") out = v;
  else if (key == "model.variant") model.variant = parse_variant(v);
  else if (key == "model.block_style") model.block_style = parse_block_style(v);
  else if (key == "model.input_h") model.input_h = to_size(key, v);
  else if (key == "model.input_w") model.input_w = to_size(key, v);
  else if (key == "model.channel_widths") {
    std::vector<std::size_t> widths;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) widths.push_back(to_size(key, trim(item)));
    model.channel_widths = widths;
  } else if (key == "model.embed_dim") model.embed_dim = to_size(key, v);
  else if (key == "model.hidden_dim") model.hidden_dim = to_size(key, v);
  else if (key == "model.n_classes") model.n_classes = to_size(key, v);
  else if (key == "model.use_stsm") model.use_stsm = to_bool(key, v);
  else if (key == "model.use_temporal_residual") model.use_temporal_residual = to_bool(key, v);
  else if (key == "train.learning_rate") train.learning_rate = to_double(key, v);
  else if (key == "train.margin") train.margin = to_double(key, v);
  else if (key == "train.epochs") train.epochs = to_size(key, v);
  else if (key == "train.pairs_per_epoch") train.pairs_per_epoch = to_size(key, v);
  else if (key == "train.sequence_length") train.sequence_length = to_size(key, v);
  else if (key == "train.seed") train.seed = to_size(key, v);
  else if (key == "train.lr_halve_every") train.lr_halve_every = to_size(key, v);
  else if (key == "train.augment") train.augment = to_bool(key, v);
  else if (key == "eval.test_length") extract.test_length = to_size(key, v);
  else if (key == "eval.augment") extract.augment = to_bool(key, v);
  else if (key == "eval.threads") extract.threads = to_size(key, v);
  else if (key == "eval.trials") trials = to_size(key, v);
  else throw ConfigurationError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::string widths;
  for (std::size_t i = 0; i < model.channel_widths.size(); ++i) {
    widths += (i ? "," : "") + std::to_string(model.channel_widths[i]);
  }
  return {
      {"data.dataset", dataset},
      {"data.test_dataset", test_dataset},
      {"data.checkpoint", checkpoint},
      {"data.out", out},
      {"model.variant", to_string(model.variant)},
      {"model.block_style", to_string(model.block_style)},
      {"model.input_h", std::to_string(model.input_h)},
      {"model.input_w", std::to_string(model.input_w)},
      {"model.channel_widths", widths},
      {"model.embed_dim", std::to_string(model.embed_dim)},
      {"model.hidden_dim", std::to_string(model.hidden_dim)},
      {"model.n_classes", std::to_string(model.n_classes)},
      {"model.use_stsm", from_bool(model.use_stsm)},
      {"model.use_temporal_residual", from_bool(model.use_temporal_residual)},
      {"train.learning_rate", from_double(train.learning_rate)},
      {"train.margin", from_double(train.margin)},
      {"train.epochs", std::to_string(train.epochs)},
      {"train.pairs_per_epoch", std::to_string(train.pairs_per_epoch)},
      {"train.sequence_length", std::to_string(train.sequence_length)},
      {"train.seed", std::to_string(train.seed)},
      {"train.lr_halve_every", std::to_string(train.lr_halve_every)},
      {"train.augment", from_bool(train.augment)},
      {"eval.test_length", std::to_string(extract.test_length)},
      {"eval.augment", from_bool(extract.augment)},
      {"eval.threads", std::to_string(extract.threads)},
      {"eval.trials", std::to_string(trials)},
  };
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : RunConfig{}.entries()) keys.push_back(k);
  return keys;
}

void read_run_config(std::istream& in, RunConfig& config, const std::string& source) {
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigurationError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigurationError(where + "expected 'key = value'");
    if (section.empty()) throw ConfigurationError(where + "key outside of a [section]");
    try {
      config.set(section + "." + trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigurationError& e) {
      throw ConfigurationError(where + e.what());
    }
  }
}

void load_run_config(const std::string& path, RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot open config file " + path);
  read_run_config(in, config, path);
}

void write_run_config(std::ostream& out, const RunConfig& config) {
  std::string section;
  for (const auto& [key, value] : config.entries()) {
    const auto dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out << '\n';
      out << '[' << s << "]\n";
      section = s;
    }
    out << key.substr(dot + 1) << " = " << value << '\n';
  }
}

}  // namespace stsrn
