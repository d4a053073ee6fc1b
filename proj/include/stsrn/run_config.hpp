#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "stsrn/eval.hpp"

namespace stsrn {

// Everything a run needs. Config files are line-based:
//
//   # comment
//   [train]
//   epochs = 40
//
// Keys are addressed as `section.key` (e.g. train.epochs) when overridden.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  ExtractOptions extract;
  std::size_t trials = 10;

  std::string dataset;
  std::string test_dataset;
  std::string checkpoint;
  std::string out = "out";

  // Throws ConfigurationError for unknown keys or malformed values.
  void set(const std::string& key, const std::string& value);
  std::vector<std::pair<std::string, std::string>> entries() const;
};

std::vector<std::string> run_config_keys();

void read_run_config(std::istream& in, RunConfig& config, const std::string& source = "<config>");
void load_run_config(const std::string& path, RunConfig& config);
// Round-trips through read_run_config.
void write_run_config(std::ostream& out, const RunConfig& config);

}  // namespace stsrn
