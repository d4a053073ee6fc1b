#include "stsrn/datasets.hpp"

#include <algorithm>
#include <filesystem>
#include <istream>
#include <map>
#include <ostream>
#include <regex>
#include <set>

#include "stsrn/array_io.hpp"
#include "stsrn/errors.hpp"
#include "stsrn/png_io.hpp"

namespace fs = std::filesystem;

namespace stsrn {

template <typename Sequence>
std::vector<std::string> SequenceSet<Sequence>::identities() const {
  std::set<std::string> ids;
  for (const auto& s : sequences) ids.insert(s.person_id);
  return {ids.begin(), ids.end()};
}

template <typename Sequence>
std::vector<std::string> SequenceSet<Sequence>::cameras() const {
  std::set<std::string> cams;
  for (const auto& s : sequences) cams.insert(s.camera_id);
  return {cams.begin(), cams.end()};
}

template <typename Sequence>
std::vector<std::size_t> SequenceSet<Sequence>::sequences_of(const std::string& person) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (sequences[i].person_id == person) out.push_back(i);
  }
  return out;
}

template <typename Sequence>
std::vector<std::string> SequenceSet<Sequence>::cameras_of(const std::string& person) const {
  std::set<std::string> cams;
  for (const auto& s : sequences) {
    if (s.person_id == person) cams.insert(s.camera_id);
  }
  return {cams.begin(), cams.end()};
}

template <typename Sequence>
std::vector<std::string> eligible_identities(const SequenceSet<Sequence>& dataset) {
  std::map<std::string, std::set<std::string>> cams;
  for (const auto& s : dataset.sequences) cams[s.person_id].insert(s.camera_id);
  std::vector<std::string> out;
  for (const auto& [person, c] : cams) {
    if (c.size() >= 2) out.push_back(person);
  }
  return out;
}

template <typename Sequence>
SplitPlan make_split(const SequenceSet<Sequence>& dataset, std::uint64_t trial_seed) {
  std::vector<std::string> ids = eligible_identities(dataset);
  if (ids.size() < 2) throw ArgumentError("make_split: need at least 2 identities seen by two cameras");
  std::mt19937_64 rng(trial_seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  const std::size_t n_train = (ids.size() + 1) / 2;
  SplitPlan plan;
  plan.trial_seed = trial_seed;
  plan.train_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  plan.test_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  std::sort(plan.train_ids.begin(), plan.train_ids.end());
  std::sort(plan.test_ids.begin(), plan.test_ids.end());
  return plan;
}

template <typename Sequence>
SplitPlan make_full_train_split(const SequenceSet<Sequence>& dataset) {
  SplitPlan plan;
  plan.train_ids = eligible_identities(dataset);
  if (plan.train_ids.size() < 2) throw ArgumentError("need at least 2 identities seen by two cameras");
  return plan;
}

template struct SequenceSet<RawSequence>;
template struct SequenceSet<FrameSequence>;
template std::vector<std::string> eligible_identities(const RawDataset&);
template std::vector<std::string> eligible_identities(const ReidDataset&);
template SplitPlan make_split(const RawDataset&, std::uint64_t);
template SplitPlan make_split(const ReidDataset&, std::uint64_t);
template SplitPlan make_full_train_split(const RawDataset&);
template SplitPlan make_full_train_split(const ReidDataset&);

std::size_t SplitPlan::label_of(const std::string& person) const {
  auto it = std::find(train_ids.begin(), train_ids.end(), person);
  if (it == train_ids.end()) throw ArgumentError("'" + person + "' is not a training identity");
  return static_cast<std::size_t>(it - train_ids.begin());
}

bool SplitPlan::is_train(const std::string& person) const {
  return std::find(train_ids.begin(), train_ids.end(), person) != train_ids.end();
}

void write_split(std::ostream& out, const SplitPlan& plan) {
  out << "seed: " << plan.trial_seed << '\n';
  out << "train:\n";
  for (const auto& id : plan.train_ids) out << id << '\n';
  out << "test:\n";
  for (const auto& id : plan.test_ids) out << id << '\n';
}

SplitPlan read_split(std::istream& in) {
  SplitPlan plan;
  std::vector<std::string>* target = nullptr;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("seed:", 0) == 0) {
      plan.trial_seed = std::stoull(line.substr(5));
    } else if (line == "train:") {
      target = &plan.train_ids;
    } else if (line == "test:") {
      target = &plan.test_ids;
    } else if (target) {
      target->push_back(line);
    } else {
      throw LoadError("split file: id '" + line + "' before any train:/test: header");
    }
  }
  return plan;
}

RawDataset load_dataset(const std::string& root) {
  if (!fs::is_directory(root)) throw IngestError("dataset root is not a directory: " + root);
  static const std::regex frame_name(R"(frame_(\d+)\.png)");
  RawDataset ds;
  std::vector<fs::path> persons;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) persons.push_back(e.path());
  }
  std::sort(persons.begin(), persons.end());
  for (const auto& person : persons) {
    std::vector<fs::path> cams;
    for (const auto& e : fs::directory_iterator(person)) {
      if (e.is_directory()) cams.push_back(e.path());
    }
    std::sort(cams.begin(), cams.end());
    for (const auto& cam : cams) {
      std::map<long, fs::path> frames;
      for (const auto& e : fs::directory_iterator(cam)) {
        std::smatch m;
        const std::string name = e.path().filename().string();
        if (e.is_regular_file() && std::regex_match(name, m, frame_name)) {
          frames.emplace(std::stol(m[1].str()), e.path());
        }
      }
      if (frames.empty()) continue;
      RawSequence seq;
      seq.person_id = person.filename().string();
      seq.camera_id = cam.filename().string();
      long expected = frames.begin()->first;
      for (const auto& [index, path] : frames) {
        if (index != expected) {
          char name[32];
          std::snprintf(name, sizeof name, "frame_%05ld.png", expected);
          throw IngestError("missing frame " + (cam / name).string());
        }
        ++expected;
        seq.frames.push_back(read_png_rgb(path.string()));
        const Image& f = seq.frames.back();
        if (f.height != seq.frames.front().height || f.width != seq.frames.front().width) {
          throw IngestError("frame size differs within tracklet: " + path.string());
        }
      }
      ds.sequences.push_back(std::move(seq));
    }
  }
  if (ds.sequences.empty()) throw IngestError("no tracklets found under " + root);
  const auto eligible = eligible_identities(ds);
  for (const auto& id : ds.identities()) {
    if (!std::binary_search(eligible.begin(), eligible.end(), id)) ds.flagged_ids.push_back(id);
  }
  return ds;
}

void write_dataset(const RawDataset& dataset, const std::string& root) {
  for (const auto& seq : dataset.sequences) {
    const fs::path dir = fs::path(root) / seq.person_id / seq.camera_id;
    fs::create_directories(dir);
    for (std::size_t k = 0; k < seq.frames.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof name, "frame_%05zu.png", k);
      write_png_rgb((dir / name).string(), seq.frames[k]);
    }
  }
}

ReidDataset preprocess_dataset(const RawDataset& raw, std::size_t flow_window) {
  ReidDataset out;
  out.flagged_ids = raw.flagged_ids;
  out.sequences.reserve(raw.sequences.size());
  for (const auto& seq : raw.sequences) out.sequences.push_back(preprocess_sequence(seq, flow_window));
  return out;
}

FrameSequence take_window(const FrameSequence& seq, std::size_t start, std::size_t length) {
  if (seq.frames.empty()) throw ArgumentError("take_window: empty tracklet");
  FrameSequence out;
  out.person_id = seq.person_id;
  out.camera_id = seq.camera_id;
  out.frames.reserve(length);
  for (std::size_t k = 0; k < length; ++k) out.frames.push_back(seq.frames[(start + k) % seq.length()]);
  return out;
}

namespace {

std::size_t pick(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::size_t window_start(const FrameSequence& seq, std::size_t length, std::mt19937_64& rng) {
  const std::size_t starts = seq.length() >= length ? seq.length() - length + 1 : seq.length();
  return pick(rng, starts);
}

}  // namespace

PairBatch sample_pair(const ReidDataset& dataset, const SplitPlan& split, bool want_positive,
                      std::mt19937_64& rng, std::size_t length) {
  if (split.train_ids.size() < 2) throw ArgumentError("sample_pair: split needs at least 2 training identities");
  std::size_t ia = 0, ib = 0;
  if (want_positive) {
    const std::string& person = split.train_ids[pick(rng, split.train_ids.size())];
    const auto cams = dataset.cameras_of(person);
    if (cams.size() < 2) throw ArgumentError("sample_pair: '" + person + "' lacks a second camera");
    const std::size_t ca = pick(rng, cams.size());
    std::size_t cb = pick(rng, cams.size() - 1);
    if (cb >= ca) ++cb;
    std::vector<std::size_t> in_a, in_b;
    for (std::size_t i : dataset.sequences_of(person)) {
      if (dataset.sequences[i].camera_id == cams[ca]) in_a.push_back(i);
      if (dataset.sequences[i].camera_id == cams[cb]) in_b.push_back(i);
    }
    ia = in_a[pick(rng, in_a.size())];
    ib = in_b[pick(rng, in_b.size())];
  } else {
    const std::size_t pa = pick(rng, split.train_ids.size());
    std::size_t pb = pick(rng, split.train_ids.size() - 1);
    if (pb >= pa) ++pb;
    const auto sa = dataset.sequences_of(split.train_ids[pa]);
    const auto sb = dataset.sequences_of(split.train_ids[pb]);
    if (sa.empty() || sb.empty()) throw ArgumentError("sample_pair: training identity has no tracklets");
    ia = sa[pick(rng, sa.size())];
    ib = sb[pick(rng, sb.size())];
  }
  const FrameSequence& a = dataset.sequences[ia];
  const FrameSequence& b = dataset.sequences[ib];
  PairBatch batch;
  batch.start_a = window_start(a, length, rng);
  batch.start_b = window_start(b, length, rng);
  batch.seq_a = take_window(a, batch.start_a, length);
  batch.seq_b = take_window(b, batch.start_b, length);
  batch.same_identity = a.person_id == b.person_id;
  batch.label_a = split.label_of(a.person_id);
  batch.label_b = split.label_of(b.person_id);
  return batch;
}

namespace {
constexpr const char* kSequenceFormat = "stsrn-sequences";
}

void save_preprocessed(const std::string& path, const ReidDataset& dataset) {
  ArrayFile file;
  file.format = kSequenceFormat;
  file.manifest.emplace_back("sequences", std::to_string(dataset.sequences.size()));
  std::string flagged;
  for (const auto& id : dataset.flagged_ids) flagged += (flagged.empty() ? "" : ",") + id;
  file.manifest.emplace_back("flagged", flagged);
  for (std::size_t i = 0; i < dataset.sequences.size(); ++i) {
    const FrameSequence& s = dataset.sequences[i];
    if (s.length() == 0) throw ArgumentError("cannot store empty sequence " + s.person_id + "/" + s.camera_id);
    const std::string key = "seq." + std::to_string(i);
    file.manifest.emplace_back(key + ".person", s.person_id);
    file.manifest.emplace_back(key + ".camera", s.camera_id);
    const std::size_t frame_size = s.frames.front().size();
    std::vector<double> data;
    data.reserve(frame_size * s.length());
    for (const Tensor& f : s.frames) data.insert(data.end(), f.data().begin(), f.data().end());
    file.arrays.push_back({key, Tensor({s.length(), kInputChannels, s.height(), s.width()}, std::move(data))});
  }
  save_array_file(path, file);
}

ReidDataset load_preprocessed(const std::string& path) {
  const ArrayFile file = load_array_file(path, kSequenceFormat);
  ReidDataset ds;
  const std::string& flagged = file.get("flagged");
  for (std::size_t start = 0; start < flagged.size();) {
    const auto pos = flagged.find(',', start);
    ds.flagged_ids.push_back(flagged.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  const std::size_t n = std::stoul(file.get("sequences"));
  for (std::size_t i = 0; i < n; ++i) {
    const std::string key = "seq." + std::to_string(i);
    const Tensor& t = file.array(key);
    if (t.rank() != 4 || t.dim(1) != kInputChannels) {
      throw LoadError(path + ": array " + key + " has shape " + shape_string(t.shape()));
    }
    FrameSequence s;
    s.person_id = file.get(key + ".person");
    s.camera_id = file.get(key + ".camera");
    const std::size_t h = t.dim(2), w = t.dim(3), fs = kInputChannels * h * w;
    for (std::size_t f = 0; f < t.dim(0); ++f) {
      std::vector<double> data(t.data().begin() + static_cast<std::ptrdiff_t>(f * fs),
                               t.data().begin() + static_cast<std::ptrdiff_t>((f + 1) * fs));
      s.frames.emplace_back(Shape{kInputChannels, h, w}, std::move(data));
    }
    ds.sequences.push_back(std::move(s));
  }
  return ds;
}

ReidDataset open_dataset(const std::string& path) {
  if (std::filesystem::is_regular_file(path)) return load_preprocessed(path);
  if (!std::filesystem::is_directory(path)) throw IngestError("dataset not found: " + path);
  return preprocess_dataset(load_dataset(path));
}

}  // namespace stsrn
