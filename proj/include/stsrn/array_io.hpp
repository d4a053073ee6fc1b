#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "stsrn/tensor.hpp"

namespace stsrn {

void write_f64_le(std::ostream& out, std::span<const double> values);
void write_f32_le(std::ostream& out, std::span<const double> values);
// Throws LoadError if the stream ends early.
void read_f64_le(std::istream& in, std::span<double> values, const std::string& what);
void read_f32_le(std::istream& in, std::span<double> values, const std::string& what);

enum class StorageType { F64, F32 };

struct NamedArray {
  std::string name;
  Tensor tensor;
};

// Manifest + named raw arrays.
//
//   key=value lines, terminated by an empty line
//   per array: "<name> <f64|f32> <rank> <d0> ... <dn-1>\n" then raw LE values
//
// The manifest always carries `format`, `version` and `arrays` (the array
// count) so truncated files are detected on load.
struct ArrayFile {
  std::string format;
  std::vector<std::pair<std::string, std::string>> manifest;
  std::vector<NamedArray> arrays;

  const std::string& get(const std::string& key) const;
  const std::string* find(const std::string& key) const;
  const Tensor& array(const std::string& name) const;
};

inline constexpr int kArrayFileVersion = 1;

void write_array_file(std::ostream& out, const ArrayFile& file, StorageType storage = StorageType::F64);
ArrayFile read_array_file(std::istream& in, const std::string& expected_format);

void save_array_file(const std::string& path, const ArrayFile& file,
                     StorageType storage = StorageType::F64);
ArrayFile load_array_file(const std::string& path, const std::string& expected_format);

}  // namespace stsrn
