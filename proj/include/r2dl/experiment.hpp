#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "r2dl/classifier.hpp"
#include "r2dl/data.hpp"
#include "r2dl/reprogram.hpp"

namespace r2dl {

/// Where a dataset comes from.
struct DatasetSource {
  enum class Kind { synthetic, csv, fasta };
  Kind kind = Kind::synthetic;
  std::filesystem::path path;
  CsvColumns columns;
  Tokenization tokenization = Tokenization::character;
  FastaLabelRule fasta;
};

/// One JSON experiment file. Every section is optional; unknown keys are
/// rejected and referenced paths must exist.
///
///   {
///     "seed": 7,
///     "data": {"source": {...}, "target": {...}, "synthetic": {...}},
///     "split": {"train": 0.7, "valid": 0.15, "test": 0.15}   // or {"counts": {...}}
///     "source_model": {TrainingConfig},
///     "baseline": {TrainingConfig},        // train-from-scratch target model
///     "reprogram": {R2dlConfig fields, "label_map": [0, 1]},
///     "ksvd": {KsvdConfig},
///     "sweep": {"data_grid": [...], "ksvd_grid": [...]}
///   }
struct ExperimentConfig {
  std::uint64_t seed = 1;
  DatasetSource source{DatasetSource::Kind::synthetic, {}, {}, Tokenization::word, {}};
  DatasetSource target;
  SynthSizes synthetic;
  SplitSpec split;
  TrainingConfig source_model;
  TrainingConfig baseline;
  R2dlConfig reprogram;
  std::vector<std::size_t> label_map;  ///< empty = identity
  std::vector<std::size_t> data_grid{500, 1000, 2000, 4000};
  std::vector<std::size_t> ksvd_grid{100, 200, 300};

  /// Propagates the top-level seed into the split and reprogram configs.
  void set_seed(std::uint64_t value);
};

ExperimentConfig default_experiment_config();
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

SequenceDataset load_source_dataset(const ExperimentConfig& cfg);
/// Target dataset with the UNK token appended to its vocabulary.
SequenceDataset load_target_dataset(const ExperimentConfig& cfg);

/// Mean accuracy of `draws` untrained programs drawn with seeds cfg.seed, cfg.seed+1, ...
double random_theta_accuracy(const FrozenClassifier& model, const LabelMap& h, const SequenceDataset& data,
                             const R2dlConfig& cfg, std::size_t draws = 10);

struct SourceRunReport {
  std::size_t train_size = 0, valid_size = 0, test_size = 0;
  double train_accuracy = 0.0;
  double valid_accuracy = 0.0;
  double test_accuracy = 0.0;
  double majority_class_accuracy = 0.0;  ///< most frequent training class, scored on the test split
};

/// train-source: writes source_model.json and train_source_report.json under out_dir.
SourceRunReport cmd_train_source(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

struct ReprogramReport {
  double train_accuracy = 0.0;
  double valid_accuracy = 0.0;
  double test_accuracy = 0.0;
  double random_theta_test_accuracy = 0.0;  ///< mean over 10 untrained programs
  std::size_t best_iteration = 0;
  bool source_checkpoint_unchanged = false;
};

/// reprogram: writes program.json, trace.csv, summary.json and the target
/// splits (target_train.csv, target_valid.csv, target_test.csv) under out_dir.
ReprogramReport cmd_reprogram(const ExperimentConfig& cfg, const std::filesystem::path& source_checkpoint,
                              const std::filesystem::path& out_dir, std::ostream& log);

struct EvalReport {
  Evaluation evaluation;
  std::size_t size = 0;
};

/// eval: scores a saved program on a CSV dataset; writes eval.json when out_dir is set.
EvalReport cmd_eval(const std::filesystem::path& program_checkpoint, const std::filesystem::path& source_checkpoint,
                    const std::filesystem::path& dataset_csv, const CsvColumns& columns,
                    const std::optional<std::filesystem::path>& out_dir, std::ostream& log);

struct DataSweepRow {
  std::size_t n = 0;
  double r2dl_accuracy = 0.0;
  double scratch_accuracy = 0.0;
};

/// sweep-data: nested training subsets; writes sweep_data.csv (n,r2dl_acc,scratch_acc).
std::vector<DataSweepRow> cmd_sweep_data(const ExperimentConfig& cfg, const std::filesystem::path& source_checkpoint,
                                         const std::filesystem::path& out_dir, std::ostream& log);

struct KsvdSweepRow {
  std::size_t ksvd_iterations = 0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double coding_error = 0.0;  ///< reconstruction error of the final projection stage
};

/// sweep-ksvd: one reprogramming run per k-SVD sweep count; writes sweep_ksvd.csv.
std::vector<KsvdSweepRow> cmd_sweep_ksvd(const ExperimentConfig& cfg, const std::filesystem::path& source_checkpoint,
                                         const std::filesystem::path& out_dir, std::ostream& log);

}  // namespace r2dl
