#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "r2dl/classifier.hpp"
#include "r2dl/data.hpp"
#include "r2dl/matrix.hpp"
#include "r2dl/sparse_coding.hpp"

namespace r2dl {

/// Total, surjective map from source-model classes to target-task classes.
class LabelMap {
 public:
  LabelMap(std::vector<std::size_t> source_to_target, std::size_t num_target);
  static LabelMap identity(std::size_t num_classes);

  std::size_t num_source() const noexcept { return map_.size(); }
  std::size_t num_target() const noexcept { return num_target_; }
  std::size_t operator[](std::size_t source_class) const { return map_.at(source_class); }
  const std::vector<std::size_t>& source_to_target() const noexcept { return map_; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  std::vector<std::size_t> map_;
  std::size_t num_target_;
};

/// Target-class probabilities: each is the sum of the source classes mapped to it.
Vector map_output(const LabelMap& h, std::span<const double> source_probs);

enum class ProjectionMode {
  every_outer_iteration,  ///< re-sparsify theta at the start of every outer iteration
  encode_once,            ///< sparsify only before the first gradient stage
};

enum class StepSchedule { constant, exponential };

std::string to_string(ProjectionMode mode);
ProjectionMode projection_mode_from_string(const std::string& name);
std::string to_string(StepSchedule schedule);
StepSchedule step_schedule_from_string(const std::string& name);

struct R2dlConfig {
  std::size_t outer_iterations = 200;
  KsvdConfig ksvd;
  double step_size = 0.002;
  StepSchedule schedule = StepSchedule::constant;
  double decay = 0.99;  ///< step at iteration i (1-based) is step_size * decay^(i-1) when exponential
  std::size_t batch_size = 32;
  /// Mini-batch steps per outer iteration; 0 means one pass over the training set.
  std::size_t steps_per_iteration = 0;
  ProjectionMode projection_mode = ProjectionMode::every_outer_iteration;
  double init_scale = 0.01;  ///< theta starts uniform in [-init_scale, init_scale]
  std::uint64_t seed = 0;

  void validate() const;
  double step_at(std::size_t iteration) const;

  friend bool operator==(const R2dlConfig&, const R2dlConfig&) = default;
};

/// theta maps target tokens into the source embedding space: target token j
/// is embedded as table · theta[:, j].
struct AdversarialProgram {
  Matrix theta;                             ///< |V_S| x |V_T|
  std::vector<std::size_t> support_sizes;   ///< per column, from the latest projection
  R2dlConfig config;
  /// Replacement source table, present only when dictionary updates were enabled.
  std::optional<Matrix> table_override;

  std::size_t source_vocab() const noexcept { return theta.rows(); }
  std::size_t target_vocab() const noexcept { return theta.cols(); }

  friend bool operator==(const AdversarialProgram&, const AdversarialProgram&) = default;
};

/// table · theta, i.e. the d x |V_T| embeddings the program assigns to target tokens.
Matrix implied_embeddings(const AdversarialProgram& program, const FrozenClassifier& model);

/// d x L embedded sequence; column l = table · theta[:, tokens[l]].
Matrix apply_program(const AdversarialProgram& program, const FrozenClassifier& model,
                     std::span<const std::size_t> target_tokens);

/// Target-class probabilities for one target sequence.
Vector target_probabilities(const AdversarialProgram& program, const FrozenClassifier& model, const LabelMap& h,
                            std::span<const std::size_t> target_tokens);

/// Mean cross-entropy of the label-mapped outputs over the selected rows.
double r2dl_loss(const AdversarialProgram& program, const FrozenClassifier& model, const LabelMap& h,
                 const SequenceDataset& data, std::span<const std::size_t> batch);
double r2dl_loss(const AdversarialProgram& program, const FrozenClassifier& model, const LabelMap& h,
                 const SequenceDataset& data);

/// d(r2dl_loss)/d(theta), |V_S| x |V_T|.
Matrix grad_theta(const AdversarialProgram& program, const FrozenClassifier& model, const LabelMap& h,
                  const SequenceDataset& data, std::span<const std::size_t> batch);
Matrix grad_theta(const AdversarialProgram& program, const FrozenClassifier& model, const LabelMap& h,
                  const SequenceDataset& data);

/// Seeded random theta used to start training.
Matrix initial_theta(std::size_t source_vocab, std::size_t target_vocab, const R2dlConfig& cfg);

/// Converts codes over unit-norm atoms to coefficients over the raw table:
/// row i is divided by norms[i].
Matrix codes_to_theta(const Matrix& codes, std::span<const double> norms);

struct Evaluation {
  double accuracy = 0.0;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
};

Evaluation evaluate(const AdversarialProgram& program, const FrozenClassifier& model, const LabelMap& h,
                    const SequenceDataset& dataset);

struct TraceRow {
  std::size_t iteration = 0;
  double loss = 0.0;            ///< mean mini-batch loss of the gradient stage
  double valid_accuracy = 0.0;
  double mean_support = 0.0;
  double coding_error = 0.0;    ///< Frobenius error at the end of the latest projection
  bool dictionary_modified = false;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

struct R2dlResult {
  AdversarialProgram program;  ///< best-validation program
  std::vector<TraceRow> trace;
  std::size_t best_iteration = 0;
  double best_valid_accuracy = 0.0;
};

/// Alternates a sparse-coding projection of theta onto the normalized source
/// embeddings with cross-entropy gradient steps through the frozen model.
R2dlResult r2dl_train(const FrozenClassifier& model, const LabelMap& h, const SequenceDataset& train,
                      const SequenceDataset& valid, const R2dlConfig& cfg);

}  // namespace r2dl
