#include "stsrn/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "stsrn/errors.hpp"
#include "stsrn/run_config.hpp"

namespace stsrn {
namespace {

namespace fs = std::filesystem;

struct RunOptions {
  std::string config_file;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> overrides;
};

void add_run_options(CLI::App* sub, RunOptions& opts) {
  sub->add_option("--config", opts.config_file, "key = value config file")->check(CLI::ExistingFile);
  sub->add_option("--set", opts.sets, "override: section.key=value (repeatable)");
  const std::vector<std::pair<std::string, std::string>> named = {
      {"--dataset", "data.dataset"},
      {"--test-dataset", "data.test_dataset"},
      {"--checkpoint", "data.checkpoint"},
      {"--out", "data.out"},
      {"--variant", "model.variant"},
      {"--block-style", "model.block_style"},
      {"--widths", "model.channel_widths"},
      {"--embed-dim", "model.embed_dim"},
      {"--hidden-dim", "model.hidden_dim"},
      {"--seed", "train.seed"},
      {"--epochs", "train.epochs"},
      {"--pairs", "train.pairs_per_epoch"},
      {"--lr", "train.learning_rate"},
      {"--margin", "train.margin"},
      {"--trials", "eval.trials"},
      {"--test-length", "eval.test_length"},
      {"--threads", "eval.threads"},
  };
  for (const auto& [flag, key] : named) {
    sub->add_option_function<std::string>(
        flag, [&opts, key = key](const std::string& v) { opts.overrides.emplace_back(key, v); }, key);
  }
}

RunConfig resolve(const RunOptions& opts) {
  RunConfig cfg;
  if (!opts.config_file.empty()) load_run_config(opts.config_file, cfg);
  for (const auto& s : opts.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigurationError("--set expects section.key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  for (const auto& [k, v] : opts.overrides) cfg.set(k, v);
  return cfg;
}

void require(const std::string& value, const std::string& what) {
  if (value.empty()) throw ConfigurationError(what + " is required");
}

fs::path prepare_out(const RunConfig& cfg) {
  const fs::path out(cfg.out);
  fs::create_directories(out);
  return out;
}

void echo_config(const fs::path& out, const RunConfig& cfg) {
  std::ofstream f(out / "config.txt");
  write_run_config(f, cfg);
}

template <typename Writer>
void write_file(const fs::path& path, Writer&& writer) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  writer(f);
}

ReidDataset open_for(RunConfig& cfg, const std::string& path) {
  ReidDataset ds = open_dataset(path);
  if (ds.sequences.empty()) throw IngestError("dataset " + path + " has no sequences");
  cfg.model.input_h = ds.sequences.front().height();
  cfg.model.input_w = ds.sequences.front().width();
  return ds;
}

void print_summary(std::ostream& out, const std::string& label, const CmcCurve& c) {
  out << label << std::fixed << std::setprecision(4) << " R1=" << c.rate_at(1) << " R5=" << c.rate_at(5)
      << " R10=" << c.rate_at(10) << " R20=" << c.rate_at(20) << '\n';
  out.unsetf(std::ios::fixed);
}

void write_curve(const fs::path& dir, const std::string& stem, const CmcCurve& curve) {
  write_file(dir / (stem + ".csv"), [&](std::ostream& f) { write_cmc_csv(f, curve); });
  write_file(dir / (stem + "_summary.csv"), [&](std::ostream& f) { write_cmc_summary(f, curve); });
}

int cmd_train(const RunOptions& opts, const std::string& resume, std::size_t stop_after, std::ostream& out) {
  RunConfig cfg = resolve(opts);
  require(cfg.dataset, "--dataset");
  const ReidDataset ds = open_for(cfg, cfg.dataset);
  TrainState state;
  if (!resume.empty()) {
    state = load_checkpoint(resume);
    cfg.model = state.model;
    cfg.train = state.train;
  } else {
    cfg.train.validate();
    const SplitPlan split = make_split(ds, cfg.train.seed);
    const ChannelStats stats = fit_channel_stats(training_sequences(ds, split));
    state = init_train_state(cfg.model, cfg.train, split, stats);
    cfg.model = state.model;
  }
  const fs::path dir = prepare_out(cfg);
  echo_config(dir, cfg);
  Trainer trainer(ds, state);
  trainer.run({}, stop_after ? std::optional<std::size_t>(stop_after) : std::nullopt, [&](const EpochMetrics& m) {
    out << "epoch " << m.epoch << " loss " << m.loss_total << " (veri " << m.loss_veri << ", iden " << m.loss_iden
        << ")\n";
  });
  save_checkpoint((dir / "checkpoint.bin").string(), state);
  write_file(dir / "metrics.csv", [&](std::ostream& f) { write_metrics_csv(f, state.history); });
  write_file(dir / "split.txt", [&](std::ostream& f) { write_split(f, state.split); });
  write_file(dir / "stats.txt", [&](std::ostream& f) { write_channel_stats(f, state.stats); });
  out << "wrote " << (dir / "checkpoint.bin").string() << '\n';
  return 0;
}

int cmd_eval(const RunOptions& opts, std::ostream& out) {
  RunConfig cfg = resolve(opts);
  require(cfg.checkpoint, "--checkpoint");
  require(cfg.dataset, "--dataset");
  const TrainState state = load_checkpoint(cfg.checkpoint);
  ReidDataset ds = open_for(cfg, cfg.dataset);
  cfg.model = state.model;
  std::vector<std::string> ids = state.split.test_ids;
  if (ids.empty()) {
    for (const auto& id : eligible_identities(ds)) {
      if (!state.split.is_train(id)) ids.push_back(id);
    }
  }
  ExtractOptions ex = cfg.extract;
  ex.seed = state.train.seed;
  const EvalResult r = evaluate(ds, ids, state.params, state.model, state.stats, ex);
  const fs::path dir = prepare_out(cfg);
  echo_config(dir, cfg);
  write_curve(dir, "cmc", r.curve);
  save_feature_store((dir / "probe_features.bin").string(), r.probe);
  save_feature_store((dir / "gallery_features.bin").string(), r.gallery);
  print_summary(out, "eval", r.curve);
  out << "extractions " << r.probe.extraction_count.value() + r.gallery.extraction_count.value() << '\n';
  return 0;
}

int cmd_crossval(const RunOptions& opts, std::ostream& out) {
  RunConfig cfg = resolve(opts);
  require(cfg.dataset, "--dataset");
  const ReidDataset ds = open_for(cfg, cfg.dataset);
  cfg.model.n_classes = (eligible_identities(ds).size() + 1) / 2;
  CrossValOptions cv;
  cv.n_trials = cfg.trials;
  cv.base_seed = cfg.train.seed;
  cv.extract = cfg.extract;
  const CrossValResult r = cross_validate(ds, cfg.model, cfg.train, cv);
  const fs::path dir = prepare_out(cfg);
  echo_config(dir, cfg);
  write_file(dir / "trials.csv", [&](std::ostream& f) {
    f << "trial,seed,failed,R1,R5,R10,R20,error\n" << std::setprecision(10);
    for (std::size_t t = 0; t < r.trials.size(); ++t) {
      const auto& tr = r.trials[t];
      f << t << ',' << tr.seed << ',' << (tr.failed ? 1 : 0) << ',' << tr.curve.rate_at(1) << ','
        << tr.curve.rate_at(5) << ',' << tr.curve.rate_at(10) << ',' << tr.curve.rate_at(20) << ",\"" << tr.error
        << "\"\n";
      write_curve(dir, "cmc_trial" + std::to_string(t), tr.curve);
    }
  });
  if (r.failures() == r.trials.size()) {
    throw TrainingError("all " + std::to_string(r.trials.size()) + " trials failed; first: " + r.trials[0].error);
  }
  write_curve(dir, "cmc", r.mean);
  print_summary(out, "crossval mean over " + std::to_string(r.trials.size() - r.failures()) + " trials", r.mean);
  if (r.failures()) out << r.failures() << " trial(s) failed, see trials.csv\n";
  return 0;
}

int cmd_crossdataset(const RunOptions& opts, std::ostream& out) {
  RunConfig cfg = resolve(opts);
  require(cfg.dataset, "--dataset");
  require(cfg.test_dataset, "--test-dataset");
  const ReidDataset train_set = open_for(cfg, cfg.dataset);
  const ReidDataset test_set = cfg.test_dataset == cfg.dataset ? train_set : open_dataset(cfg.test_dataset);
  ExtractOptions ex = cfg.extract;
  ex.seed = cfg.train.seed;
  const CrossDatasetResult r = cross_dataset_eval(train_set, test_set, cfg.model, cfg.train, ex);
  cfg.model = r.state.model;
  const fs::path dir = prepare_out(cfg);
  echo_config(dir, cfg);
  write_curve(dir, "transfer_cmc", r.curve);
  save_checkpoint((dir / "checkpoint.bin").string(), r.state);
  print_summary(out, "transfer", r.curve);
  return 0;
}

int cmd_ablate(const RunOptions& opts, const std::vector<std::string>& only, std::ostream& out) {
  RunConfig cfg = resolve(opts);
  for (const auto& n : only) find_ablation_config(n);
  require(cfg.dataset, "--dataset");
  const ReidDataset ds = open_for(cfg, cfg.dataset);
  CrossValOptions cv;
  cv.n_trials = cfg.trials;
  cv.base_seed = cfg.train.seed;
  cv.extract = cfg.extract;
  const std::vector<AblationRow> rows = run_ablation(ds, cfg.model, cfg.train, cv, only);
  const fs::path dir = prepare_out(cfg);
  echo_config(dir, cfg);
  write_file(dir / "ablation.csv", [&](std::ostream& f) { write_ablation_csv(f, rows); });
  for (const auto& row : rows) {
    write_file(dir / ("rank1_epochs_" + row.config.name + ".csv"),
               [&](std::ostream& f) { write_rank1_trace_csv(f, row); });
    print_summary(out, row.config.name + " (" + std::to_string(row.param_count) + " params)", row.result.mean);
  }
  return 0;
}

int cmd_query(const std::string& gallery_path, const std::string& probe_path, std::size_t top,
              const std::string& out_dir, std::ostream& out) {
  const FeatureStore gallery = load_feature_store(gallery_path);
  const FeatureStore probes = load_feature_store(probe_path);
  fs::create_directories(out_dir);
  std::ofstream f(fs::path(out_dir) / "ranked.csv");
  f << "probe_person,probe_camera,rank,person,camera,distance\n" << std::setprecision(10);
  for (const auto& p : probes.entries) {
    const auto ranked = query(gallery, p.feature);
    out << p.person_id << '/' << p.camera_id << ':';
    for (std::size_t r = 0; r < ranked.size() && r < top; ++r) {
      f << p.person_id << ',' << p.camera_id << ',' << r + 1 << ',' << ranked[r].person_id << ','
        << ranked[r].camera_id << ',' << ranked[r].distance << '\n';
      out << ' ' << ranked[r].person_id;
    }
    out << '\n';
  }
  out << "extractions " << gallery.extraction_count.value() + probes.extraction_count.value() << '\n';
  return 0;
}

int cmd_gradcheck(std::size_t frames, std::uint64_t seed, std::ostream& out) {
  const ModelConfig tiny = tiny_model_config();
  double worst = 0.0;
  std::size_t checked = 0, kinks = 0;
  for (bool same : {true, false}) {
    const GradCheckReport r = check_model_gradients(tiny, frames, seed, same);
    worst = std::max(worst, r.max_rel_error);
    checked += r.checked;
    kinks += r.kinks;
  }
  const bool pass = worst < 1e-4;
  out << "coordinates " << checked << " kinks " << kinks << " max_rel_error " << std::scientific << worst
      << std::defaultfloat << '\n'
      << (pass ? "PASS" : "FAIL") << '\n';
  return pass ? 0 : 1;
}

int cmd_params(const RunOptions& opts, std::ostream& out) {
  RunConfig cfg = resolve(opts);
  cfg.model.validate();
  const ParamReport r = param_count(cfg.model);
  out << "variant " << to_string(cfg.model.variant) << '\n';
  for (const auto& [name, n] : r.items) out << std::left << std::setw(28) << name << std::right << n << '\n';
  out << "total " << r.total << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"STSRN video person re-identification"};
  app.require_subcommand(1);

  SyntheticSpec spec;
  std::string synth_out;
  std::optional<std::uint64_t> camera_seed;
  auto* synth = app.add_subcommand("synth", "generate a synthetic tracklet dataset");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--ids", spec.n_ids, "number of identities")->required();
  synth->add_option("--cams", spec.n_cams, "cameras per identity");
  synth->add_option("--frames", spec.frames_per_seq, "frames per tracklet");
  synth->add_option("--height", spec.image_h, "frame height");
  synth->add_option("--width", spec.image_w, "frame width");
  synth->add_option("--seed", spec.seed, "identity seed");
  synth->add_option("--camera-seed", camera_seed, "camera seed (defaults to --seed)");
  synth->add_option("--noise", spec.noise_stddev, "pixel noise stddev");

  std::string pre_in, pre_out;
  auto* preprocess = app.add_subcommand("preprocess", "convert frames to the 5-channel cache");
  preprocess->add_option("--dataset", pre_in, "frame directory")->required();
  preprocess->add_option("--out", pre_out, "output file")->required();

  RunOptions train_opts, eval_opts, cv_opts, xd_opts, ablate_opts, params_opts;
  std::string resume;
  std::size_t stop_after = 0;
  auto* train = app.add_subcommand("train", "train on one split");
  add_run_options(train, train_opts);
  train->add_option("--resume", resume, "continue from a checkpoint");
  train->add_option("--stop-after", stop_after, "stop after this epoch");
  auto* eval = app.add_subcommand("eval", "CMC of a checkpoint on its test identities");
  add_run_options(eval, eval_opts);
  auto* crossval = app.add_subcommand("crossval", "repeated split/train/evaluate");
  add_run_options(crossval, cv_opts);
  auto* crossdataset = app.add_subcommand("crossdataset", "train on one dataset, test on another");
  add_run_options(crossdataset, xd_opts);
  std::vector<std::string> only;
  auto* ablate = app.add_subcommand("ablate", "residual RNN / STSM / residual block ablation");
  add_run_options(ablate, ablate_opts);
  ablate->add_option("--only", only, "subset of variants")->delimiter(',');

  std::string gallery_path, probe_path, query_out = ".";
  std::size_t top = 10;
  auto* query_cmd = app.add_subcommand("query", "rank a probe store against a gallery store");
  query_cmd->add_option("--gallery", gallery_path, "gallery feature store")->required();
  query_cmd->add_option("--probe", probe_path, "probe feature store")->required();
  query_cmd->add_option("--top", top, "entries per probe");
  query_cmd->add_option("--out", query_out, "output directory");

  std::size_t gc_frames = 3;
  std::uint64_t gc_seed = 0;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the tiny model");
  gradcheck->add_option("--frames", gc_frames, "sequence length");
  gradcheck->add_option("--seed", gc_seed, "seed");

  auto* params = app.add_subcommand("params", "itemized learnable parameter count");
  add_run_options(params, params_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (synth->parsed()) {
      spec.camera_seed = camera_seed.value_or(spec.seed);
      const RawDataset ds = generate_synthetic(spec);
      write_dataset(ds, synth_out);
      std::ofstream m(fs::path(synth_out) / "synth.txt");
      m << "ids=" << spec.n_ids << "\ncams=" << spec.n_cams << "\nframes=" << spec.frames_per_seq
        << "\nheight=" << spec.image_h << "\nwidth=" << spec.image_w << "\nseed=" << spec.seed
        << "\ncamera_seed=" << spec.camera_seed << "\nnoise=" << spec.noise_stddev << '\n';
      out << "wrote " << ds.sequences.size() << " tracklets to " << synth_out << '\n';
      return 0;
    }
    if (preprocess->parsed()) {
      const ReidDataset ds = preprocess_dataset(load_dataset(pre_in));
      save_preprocessed(pre_out, ds);
      out << "wrote " << ds.sequences.size() << " sequences to " << pre_out << '\n';
      return 0;
    }
    if (train->parsed()) return cmd_train(train_opts, resume, stop_after, out);
    if (eval->parsed()) return cmd_eval(eval_opts, out);
    if (crossval->parsed()) return cmd_crossval(cv_opts, out);
    if (crossdataset->parsed()) return cmd_crossdataset(xd_opts, out);
    if (ablate->parsed()) return cmd_ablate(ablate_opts, only, out);
    if (query_cmd->parsed()) return cmd_query(gallery_path, probe_path, top, query_out, out);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_frames, gc_seed, out);
    if (params->parsed()) return cmd_params(params_opts, out);
  } catch (const ConfigurationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace stsrn
