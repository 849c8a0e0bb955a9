#include "r2dl/experiment.hpp"

#include <algorithm>
#include <ostream>

#include "json.hpp"
#include "r2dl/checkpoint.hpp"
#include "r2dl/errors.hpp"
#include "serialization.hpp"

namespace r2dl {

using nlohmann::json;
namespace fs = std::filesystem;

void ExperimentConfig::set_seed(std::uint64_t value) {
  seed = value;
  split.seed = value;
  reprogram.seed = value;
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig cfg;
  cfg.synthetic.target = 6000;
  cfg.split.fractions = SplitSpec::Fractions{0.7, 0.15, 0.15};
  cfg.set_seed(cfg.seed);
  return cfg;
}

namespace {

DatasetSource read_source(const json& j, const std::string& where, Tokenization default_mode) {
  detail::StrictObject obj(j, where);
  DatasetSource src;
  src.tokenization = default_mode;
  std::string kind = "synthetic";
  obj.read("kind", kind);
  if (kind == "synthetic") {
    src.kind = DatasetSource::Kind::synthetic;
  } else if (kind == "csv") {
    src.kind = DatasetSource::Kind::csv;
  } else if (kind == "fasta") {
    src.kind = DatasetSource::Kind::fasta;
  } else {
    throw ConfigError(where + ".kind must be synthetic, csv or fasta");
  }
  std::string path;
  obj.read("path", path);
  src.path = path;
  obj.read("sequence_column", src.columns.sequence);
  obj.read("label_column", src.columns.label);
  std::string mode = default_mode == Tokenization::word ? "word" : "character";
  obj.read("tokenization", mode);
  if (mode != "word" && mode != "character") throw ConfigError(where + ".tokenization must be word or character");
  src.tokenization = mode == "word" ? Tokenization::word : Tokenization::character;
  std::string delimiter(1, src.fasta.delimiter);
  obj.read("delimiter", delimiter);
  if (delimiter.size() != 1) throw ConfigError(where + ".delimiter must be one character");
  src.fasta.delimiter = delimiter.front();
  obj.read("label_field", src.fasta.field);
  obj.finish();

  if (src.kind != DatasetSource::Kind::synthetic) {
    if (src.path.empty()) throw ConfigError(where + ".path is required for kind " + kind);
    if (!fs::exists(src.path)) throw ConfigError("dataset path does not exist: " + src.path.string());
  }
  return src;
}

std::vector<std::size_t> read_grid(detail::StrictObject& obj, const char* key, std::vector<std::size_t> fallback) {
  obj.read(key, fallback);
  return fallback;
}

void check_grid(const std::vector<std::size_t>& grid, const char* name) {
  if (grid.empty()) throw ConfigError(std::string(name) + " is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] == 0) throw ConfigError(std::string(name) + " entries must be positive");
    if (i > 0 && grid[i] <= grid[i - 1]) throw ConfigError(std::string(name) + " must be strictly ascending");
  }
}

SequenceDataset load_dataset(const DatasetSource& src, const ExperimentConfig& cfg, bool source_side) {
  switch (src.kind) {
    case DatasetSource::Kind::synthetic: {
      auto tasks = synth_tasks(cfg.seed, cfg.synthetic);
      return source_side ? std::move(tasks.source) : std::move(tasks.target);
    }
    case DatasetSource::Kind::csv:
      return load_csv(src.path, src.columns, src.tokenization);
    case DatasetSource::Kind::fasta:
      return load_fasta(src.path, src.fasta, src.tokenization);
  }
  throw ConfigError("unknown dataset kind");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
}

struct Loaded {
  ClassifierCheckpoint source;
  Split target;
  LabelMap h;
};

Loaded load_for_reprogramming(const ExperimentConfig& cfg, const fs::path& source_checkpoint) {
  if (!fs::exists(source_checkpoint)) throw ConfigError("source checkpoint does not exist: " + source_checkpoint.string());
  ClassifierCheckpoint source = load_classifier(source_checkpoint);
  const SequenceDataset target = load_target_dataset(cfg);
  std::vector<std::size_t> map = cfg.label_map;
  if (map.empty()) {
    if (source.model.num_classes() != target.num_classes()) {
      throw ConfigError("source model has " + std::to_string(source.model.num_classes()) +
                        " classes and the target task has " + std::to_string(target.num_classes()) +
                        "; set reprogram.label_map");
    }
    map.resize(source.model.num_classes());
    for (std::size_t i = 0; i < map.size(); ++i) map[i] = i;
  }
  if (map.size() != source.model.num_classes()) {
    throw ConfigError("label_map has " + std::to_string(map.size()) + " entries but the source model has " +
                      std::to_string(source.model.num_classes()) + " classes");
  }
  LabelMap h(std::move(map), target.num_classes());
  cfg.reprogram.ksvd.validate(source.model.vocab_size());
  return {std::move(source), split(target, cfg.split), std::move(h)};
}

}  // namespace

double random_theta_accuracy(const FrozenClassifier& model, const LabelMap& h, const SequenceDataset& data,
                             const R2dlConfig& cfg, std::size_t draws) {
  double total = 0.0;
  for (std::size_t k = 0; k < draws; ++k) {
    R2dlConfig c = cfg;
    c.seed = cfg.seed + k;
    const AdversarialProgram p{initial_theta(model.vocab_size(), data.vocab.size(), c), {}, c, std::nullopt};
    total += evaluate(p, model, h, data).accuracy;
  }
  return total / static_cast<double>(draws);
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg = default_experiment_config();
  detail::StrictObject root(j, "config");

  std::uint64_t seed = cfg.seed;
  root.read("seed", seed);

  if (const auto* data = root.find("data")) {
    detail::StrictObject obj(*data, "data");
    if (const auto* s = obj.find("source")) cfg.source = read_source(*s, "data.source", Tokenization::word);
    if (const auto* t = obj.find("target")) cfg.target = read_source(*t, "data.target", Tokenization::character);
    if (const auto* syn = obj.find("synthetic")) {
      detail::StrictObject so(*syn, "data.synthetic");
      so.read("source_size", cfg.synthetic.source);
      so.read("target_size", cfg.synthetic.target);
      so.read("source_vocab", cfg.synthetic.source_vocab);
      so.read("min_length", cfg.synthetic.min_length);
      so.read("max_length", cfg.synthetic.max_length);
      so.finish();
    }
    obj.finish();
  }

  if (const auto* sp = root.find("split")) {
    detail::StrictObject obj(*sp, "split");
    if (const auto* counts = obj.find("counts")) {
      detail::StrictObject co(*counts, "split.counts");
      SplitSpec::Counts c;
      co.read("train", c.train);
      co.read("valid", c.valid);
      co.read("test", c.test);
      co.finish();
      cfg.split.counts = c;
    }
    SplitSpec::Fractions f = *cfg.split.fractions;
    obj.read("train", f.train);
    obj.read("valid", f.valid);
    obj.read("test", f.test);
    cfg.split.fractions = f;
    obj.finish();
    if (!cfg.split.counts && std::abs(f.train + f.valid + f.test - 1.0) > 1e-9) {
      throw ConfigError("split fractions must sum to 1");
    }
  }

  if (const auto* sm = root.find("source_model")) cfg.source_model = detail::training_config_from_json(*sm, "source_model");
  if (const auto* bl = root.find("baseline")) cfg.baseline = detail::training_config_from_json(*bl, "baseline");
  if (const auto* rp = root.find("reprogram")) {
    detail::StrictObject obj(*rp, "reprogram");
    detail::read_r2dl_fields(obj, cfg.reprogram);
    obj.read("label_map", cfg.label_map);
    obj.finish();
  }
  if (const auto* ks = root.find("ksvd")) cfg.reprogram.ksvd = detail::ksvd_config_from_json(*ks, "ksvd");
  if (const auto* sw = root.find("sweep")) {
    detail::StrictObject obj(*sw, "sweep");
    cfg.data_grid = read_grid(obj, "data_grid", cfg.data_grid);
    cfg.ksvd_grid = read_grid(obj, "ksvd_grid", cfg.ksvd_grid);
    obj.finish();
  }
  root.finish();

  cfg.set_seed(seed);
  cfg.source_model.validate();
  cfg.baseline.validate();
  cfg.reprogram.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file does not exist: " + path.string());
  return parse_experiment_config(read_text_file(path));
}

SequenceDataset load_source_dataset(const ExperimentConfig& cfg) { return load_dataset(cfg.source, cfg, true); }

SequenceDataset load_target_dataset(const ExperimentConfig& cfg) {
  SequenceDataset ds = load_dataset(cfg.target, cfg, false);
  ds.vocab = ds.vocab.with_unk();
  return ds;
}

// ---------------------------------------------------------------------------
// Commands

SourceRunReport cmd_train_source(const ExperimentConfig& cfg, const fs::path& out_dir, std::ostream& log) {
  ensure_dir(out_dir);
  const SequenceDataset data = load_source_dataset(cfg);
  const Split parts = split(data, cfg.split);
  TrainReport trained = train_source(parts.train, parts.valid, cfg.source_model, cfg.seed);

  SourceRunReport rep;
  rep.train_size = parts.train.size();
  rep.valid_size = parts.valid.size();
  rep.test_size = parts.test.size();
  rep.train_accuracy = trained.train_accuracy;
  rep.valid_accuracy = trained.valid_accuracy;
  const SequenceDataset& scored = parts.test.empty() ? (parts.valid.empty() ? parts.train : parts.valid) : parts.test;
  rep.test_accuracy = accuracy(trained.model, scored);
  const auto counts = parts.train.class_counts();
  const std::size_t majority = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  rep.majority_class_accuracy =
      static_cast<double>(std::count(scored.labels.begin(), scored.labels.end(), majority)) /
      static_cast<double>(scored.size());

  save_classifier({trained.model, data.vocab, data.class_names}, out_dir / "source_model.json");
  const json report{{"seed", cfg.seed},
                    {"architecture", to_string(cfg.source_model.architecture)},
                    {"data_split", {{"train", rep.train_size}, {"valid", rep.valid_size}, {"test", rep.test_size}}},
                    {"train_accuracy", rep.train_accuracy},
                    {"valid_accuracy", rep.valid_accuracy},
                    {"test_accuracy", rep.test_accuracy},
                    {"majority_class_accuracy", rep.majority_class_accuracy},
                    {"fingerprint", hex64(trained.model.fingerprint())}};
  write_text_file(out_dir / "train_source_report.json", report.dump(2) + "\n");

  log << "source model (" << to_string(cfg.source_model.architecture) << ")\n"
      << "  split          " << rep.train_size << " / " << rep.valid_size << " / " << rep.test_size << "\n"
      << "  train accuracy " << rep.train_accuracy << "\n"
      << "  valid accuracy " << rep.valid_accuracy << "\n"
      << "  test accuracy  " << rep.test_accuracy << "\n"
      << "  majority class " << rep.majority_class_accuracy << "\n"
      << "  checkpoint     " << (out_dir / "source_model.json").string() << "\n";
  return rep;
}

ReprogramReport cmd_reprogram(const ExperimentConfig& cfg, const fs::path& source_checkpoint, const fs::path& out_dir,
                              std::ostream& log) {
  ensure_dir(out_dir);
  const Loaded in = load_for_reprogramming(cfg, source_checkpoint);
  const std::uint64_t file_before = file_fingerprint(source_checkpoint);
  const std::uint64_t model_before = in.source.model.fingerprint();
  const auto& model = in.source.model;

  const R2dlResult result = r2dl_train(model, in.h, in.target.train, in.target.valid, cfg.reprogram);

  ReprogramReport rep;
  rep.best_iteration = result.best_iteration;
  rep.train_accuracy = evaluate(result.program, model, in.h, in.target.train).accuracy;
  rep.valid_accuracy = result.best_valid_accuracy;
  const SequenceDataset& test = in.target.test.empty() ? in.target.valid : in.target.test;
  rep.test_accuracy = evaluate(result.program, model, in.h, test).accuracy;
  rep.random_theta_test_accuracy = random_theta_accuracy(model, in.h, test, cfg.reprogram);

  const ProgramCheckpoint ckpt{result.program,           in.h, in.target.train.vocab, in.target.train.class_names,
                               in.target.train.tokenization, model_before, result.best_iteration, result.trace};
  save_program(ckpt, out_dir / "program.json");
  write_text_file(out_dir / "trace.csv", trace_to_csv(result.trace));
  save_csv(in.target.train, out_dir / "target_train.csv");
  save_csv(in.target.valid, out_dir / "target_valid.csv");
  if (!in.target.test.empty()) save_csv(in.target.test, out_dir / "target_test.csv");

  rep.source_checkpoint_unchanged =
      file_fingerprint(source_checkpoint) == file_before && model.fingerprint() == model_before;

  const json summary{{"seed", cfg.seed},
                     {"test_accuracy", rep.test_accuracy},
                     {"valid_accuracy", rep.valid_accuracy},
                     {"train_accuracy", rep.train_accuracy},
                     {"random_theta_test_accuracy", rep.random_theta_test_accuracy},
                     {"best_iteration", rep.best_iteration},
                     {"outer_iterations", cfg.reprogram.outer_iterations},
                     {"ksvd_iterations", cfg.reprogram.ksvd.sweeps},
                     {"epsilon", cfg.reprogram.ksvd.epsilon},
                     {"max_atoms", cfg.reprogram.ksvd.max_atoms},
                     {"source_fingerprint", hex64(model_before)},
                     {"source_checkpoint_unchanged", rep.source_checkpoint_unchanged}};
  write_text_file(out_dir / "summary.json", summary.dump(2) + "\n");

  log << "reprogramming (T1=" << cfg.reprogram.outer_iterations << ", T2=" << cfg.reprogram.ksvd.sweeps
      << ", epsilon=" << cfg.reprogram.ksvd.epsilon << ")\n"
      << "  best iteration       " << rep.best_iteration << "\n"
      << "  train accuracy       " << rep.train_accuracy << "\n"
      << "  valid accuracy       " << rep.valid_accuracy << "\n"
      << "  test accuracy        " << rep.test_accuracy << "\n"
      << "  random-theta test    " << rep.random_theta_test_accuracy << "\n"
      << "  source unchanged     " << (rep.source_checkpoint_unchanged ? "yes" : "NO") << "\n";
  return rep;
}

EvalReport cmd_eval(const fs::path& program_checkpoint, const fs::path& source_checkpoint, const fs::path& dataset_csv,
                    const CsvColumns& columns, const std::optional<fs::path>& out_dir, std::ostream& log) {
  for (const auto& p : {program_checkpoint, source_checkpoint, dataset_csv}) {
    if (!fs::exists(p)) throw ConfigError("path does not exist: " + p.string());
  }
  const ProgramCheckpoint prog = load_program(program_checkpoint);
  const ClassifierCheckpoint source = load_classifier(source_checkpoint);
  if (prog.program.source_vocab() != source.model.vocab_size()) {
    throw ConfigError("program expects " + std::to_string(prog.program.source_vocab()) +
                      " source tokens, source model has " + std::to_string(source.model.vocab_size()));
  }
  if (prog.label_map.num_source() != source.model.num_classes()) {
    throw ConfigError("program label map does not match the source model's classes");
  }
  if (prog.source_fingerprint != source.model.fingerprint()) {
    throw ConfigError("program was trained against a different source model");
  }
  const SequenceDataset data =
      load_csv_with_vocab(dataset_csv, prog.target_vocab, prog.target_classes, columns, prog.target_tokenization);
  if (data.empty()) throw DegenerateDataError("dataset " + dataset_csv.string() + " has no rows");

  EvalReport rep{evaluate(prog.program, source.model, prog.label_map, data), data.size()};
  const json out{{"accuracy", rep.evaluation.accuracy},
                 {"size", rep.size},
                 {"classes", prog.target_classes},
                 {"confusion", rep.evaluation.confusion}};
  if (out_dir) {
    ensure_dir(*out_dir);
    write_text_file(*out_dir / "eval.json", out.dump(2) + "\n");
  }
  log << out.dump(2) << "\n";
  return rep;
}

std::vector<DataSweepRow> cmd_sweep_data(const ExperimentConfig& cfg, const fs::path& source_checkpoint,
                                         const fs::path& out_dir, std::ostream& log) {
  check_grid(cfg.data_grid, "sweep.data_grid");
  ensure_dir(out_dir);
  const Loaded in = load_for_reprogramming(cfg, source_checkpoint);
  const std::size_t available = in.target.train.size();
  if (cfg.data_grid.back() > available) {
    throw ConfigError("sweep.data_grid entry " + std::to_string(cfg.data_grid.back()) + " exceeds the " +
                      std::to_string(available) + " training rows");
  }
  const SequenceDataset& test = in.target.test.empty() ? in.target.valid : in.target.test;

  std::vector<DataSweepRow> rows;
  std::string csv = "n,r2dl_acc,scratch_acc\n";
  log << "n, r2dl_acc, scratch_acc\n";
  for (std::size_t n : cfg.data_grid) {
    const SequenceDataset subset = subsample(in.target.train, n, cfg.seed);
    const R2dlResult r = r2dl_train(in.source.model, in.h, subset, in.target.valid, cfg.reprogram);
    const TrainReport scratch = train_source(subset, in.target.valid, cfg.baseline, cfg.seed);
    DataSweepRow row{n, evaluate(r.program, in.source.model, in.h, test).accuracy, accuracy(scratch.model, test)};
    rows.push_back(row);
    csv += std::to_string(n) + ',' + format_double(row.r2dl_accuracy) + ',' + format_double(row.scratch_accuracy) + '\n';
    log << n << ", " << row.r2dl_accuracy << ", " << row.scratch_accuracy << "\n";
  }
  write_text_file(out_dir / "sweep_data.csv", csv);
  return rows;
}

std::vector<KsvdSweepRow> cmd_sweep_ksvd(const ExperimentConfig& cfg, const fs::path& source_checkpoint,
                                         const fs::path& out_dir, std::ostream& log) {
  check_grid(cfg.ksvd_grid, "sweep.ksvd_grid");
  ensure_dir(out_dir);
  const Loaded in = load_for_reprogramming(cfg, source_checkpoint);
  const SequenceDataset& test = in.target.test.empty() ? in.target.valid : in.target.test;

  std::vector<KsvdSweepRow> rows;
  std::string csv = "ksvd_iterations,train_accuracy,test_accuracy,coding_error\n";
  log << "ksvd_iterations, train_accuracy, test_accuracy, coding_error\n";
  for (std::size_t sweeps : cfg.ksvd_grid) {
    R2dlConfig rc = cfg.reprogram;
    rc.ksvd.sweeps = sweeps;
    const R2dlResult r = r2dl_train(in.source.model, in.h, in.target.train, in.target.valid, rc);
    KsvdSweepRow row{sweeps, evaluate(r.program, in.source.model, in.h, in.target.train).accuracy,
                     evaluate(r.program, in.source.model, in.h, test).accuracy, r.trace.back().coding_error};
    rows.push_back(row);
    csv += std::to_string(sweeps) + ',' + format_double(row.train_accuracy) + ',' + format_double(row.test_accuracy) +
           ',' + format_double(row.coding_error) + '\n';
    log << sweeps << ", " << row.train_accuracy << ", " << row.test_accuracy << ", " << row.coding_error << "\n";
  }
  write_text_file(out_dir / "sweep_ksvd.csv", csv);
  return rows;
}

}  // namespace r2dl
