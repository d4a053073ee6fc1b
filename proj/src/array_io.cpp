#include "stsrn/array_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "stsrn/errors.hpp"

namespace stsrn {
namespace {

template <typename Word>
void put_le(std::ostream& out, Word bits) {
  char bytes[sizeof(Word)];
  for (std::size_t i = 0; i < sizeof(Word); ++i) {
    bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  }
  out.write(bytes, sizeof(Word));
}

template <typename Word>
Word get_le(const unsigned char* bytes) {
  Word bits = 0;
  for (std::size_t i = 0; i < sizeof(Word); ++i) {
    bits |= static_cast<Word>(bytes[i]) << (8 * i);
  }
  return bits;
}

template <typename Word, typename Float>
void read_le(std::istream& in, std::span<double> values, const std::string& what) {
  std::vector<unsigned char> buf(values.size() * sizeof(Word));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
    throw LoadError(what + ": truncated (expected " + std::to_string(buf.size()) +
                    " bytes, got " + std::to_string(in.gcount()) + ")");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    values[i] = static_cast<double>(std::bit_cast<Float>(get_le<Word>(&buf[i * sizeof(Word)])));
  }
}

}  // namespace

void write_f64_le(std::ostream& out, std::span<const double> values) {
  for (double v : values) put_le(out, std::bit_cast<std::uint64_t>(v));
}

void write_f32_le(std::ostream& out, std::span<const double> values) {
  for (double v : values) put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

void read_f64_le(std::istream& in, std::span<double> values, const std::string& what) {
  read_le<std::uint64_t, double>(in, values, what);
}

void read_f32_le(std::istream& in, std::span<double> values, const std::string& what) {
  read_le<std::uint32_t, float>(in, values, what);
}

const std::string* ArrayFile::find(const std::string& key) const {
  for (const auto& [k, v] : manifest) {
    if (k == key) return &v;
  }
  return nullptr;
}

const std::string& ArrayFile::get(const std::string& key) const {
  if (const auto* v = find(key)) return *v;
  throw LoadError("manifest has no key '" + key + "'");
}

const Tensor& ArrayFile::array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a.tensor;
  }
  throw LoadError("file has no array '" + name + "'");
}

void write_array_file(std::ostream& out, const ArrayFile& file, StorageType storage) {
  out << "format=" << file.format << '\n';
  out << "version=" << kArrayFileVersion << '\n';
  out << "arrays=" << file.arrays.size() << '\n';
  for (const auto& [k, v] : file.manifest) {
    if (k == "format" || k == "version" || k == "arrays") continue;
    out << k << '=' << v << '\n';
  }
  out << '\n';
  for (const auto& a : file.arrays) {
    out << a.name << ' ' << (storage == StorageType::F64 ? "f64" : "f32") << ' '
        << a.tensor.rank();
    for (std::size_t d : a.tensor.shape()) out << ' ' << d;
    out << '\n';
    if (storage == StorageType::F64) {
      write_f64_le(out, a.tensor.data());
    } else {
      write_f32_le(out, a.tensor.data());
    }
  }
}

ArrayFile read_array_file(std::istream& in, const std::string& expected_format) {
  ArrayFile file;
  std::string line;
  bool terminated = false;
  while (std::getline(in, line)) {
    if (line.empty()) {
      terminated = true;
      break;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw LoadError("malformed manifest line: " + line);
    file.manifest.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  if (!terminated) throw LoadError("truncated manifest");
  file.format = file.get("format");
  if (file.format != expected_format) {
    throw LoadError("expected format '" + expected_format + "', found '" + file.format + "'");
  }
  if (file.get("version") != std::to_string(kArrayFileVersion)) {
    throw LoadError("unsupported version " + file.get("version") + " (this build reads " +
                    std::to_string(kArrayFileVersion) + ")");
  }
  const std::size_t count = std::stoul(file.get("arrays"));
  for (std::size_t k = 0; k < count; ++k) {
    if (!std::getline(in, line)) {
      throw LoadError("truncated: expected " + std::to_string(count) + " arrays, found " +
                      std::to_string(k));
    }
    std::istringstream hs(line);
    NamedArray a;
    std::string dtype;
    std::size_t rank = 0;
    if (!(hs >> a.name >> dtype >> rank)) throw LoadError("malformed array header: " + line);
    Shape shape(rank);
    for (auto& d : shape) {
      if (!(hs >> d)) throw LoadError("malformed array header: " + line);
    }
    a.tensor = Tensor(shape);
    if (dtype == "f64") {
      read_f64_le(in, a.tensor.data(), "array " + a.name);
    } else if (dtype == "f32") {
      read_f32_le(in, a.tensor.data(), "array " + a.name);
    } else {
      throw LoadError("unknown dtype '" + dtype + "' for array " + a.name);
    }
    file.arrays.push_back(std::move(a));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw LoadError("trailing bytes after last array");
  return file;
}

void save_array_file(const std::string& path, const ArrayFile& file, StorageType storage) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_array_file(out, file, storage);
  if (!out) throw std::runtime_error("write failed: " + path);
}

ArrayFile load_array_file(const std::string& path, const std::string& expected_format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path);
  try {
    return read_array_file(in, expected_format);
  } catch (const LoadError& e) {
    throw LoadError(path + ": " + e.what());
  }
}

}  // namespace stsrn
