#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "r2dl/data.hpp"
#include "r2dl/matrix.hpp"

namespace r2dl {

enum class Architecture {
  bag_mlp,  ///< mean-pool -> tanh hidden layer -> linear head
  birnn,    ///< one bidirectional tanh RNN layer, final states concatenated -> linear head
};

std::string to_string(Architecture arch);
Architecture architecture_from_string(const std::string& name);

/// Classifier weights after the embedding lookup. Biases are stored as n x 1
/// matrices. Tensor order is fixed per architecture, see tensor_names().
///
/// bag_mlp: hidden.weight (H x d), hidden.bias, output.weight (C x H), output.bias
/// birnn:   forward.input_weight (H x d), forward.recurrent_weight (H x H),
///          forward.bias, backward.input_weight, backward.recurrent_weight,
///          backward.bias, output.weight (C x 2H), output.bias
struct ClassifierParams {
  Architecture architecture = Architecture::bag_mlp;
  std::size_t hidden = 16;
  std::size_t num_classes = 2;
  std::vector<Matrix> tensors;

  static std::vector<std::string> tensor_names(Architecture arch);
  /// Expected (rows, cols) of each tensor for embedding dimension d.
  std::vector<std::pair<std::size_t, std::size_t>> tensor_shapes(std::size_t d) const;
  void validate(std::size_t d) const;

  friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

/// The pretrained source model. Immutable once constructed: there is no
/// operation that changes its embeddings or weights.
class FrozenClassifier {
 public:
  /// `embeddings` is d x |V_S|, column i embeds source token i.
  FrozenClassifier(Matrix embeddings, ClassifierParams params, std::uint64_t seed = 0);

  const Matrix& embeddings() const noexcept { return embeddings_; }
  const ClassifierParams& params() const noexcept { return params_; }
  Architecture architecture() const noexcept { return params_.architecture; }
  std::size_t dim() const noexcept { return embeddings_.rows(); }
  std::size_t vocab_size() const noexcept { return embeddings_.cols(); }
  std::size_t num_classes() const noexcept { return params_.num_classes; }
  std::uint64_t seed() const noexcept { return seed_; }
  bool frozen() const noexcept { return true; }

  /// FNV-1a hash over the architecture and every parameter's bytes.
  std::uint64_t fingerprint() const;

  friend bool operator==(const FrozenClassifier&, const FrozenClassifier&) = default;

 private:
  Matrix embeddings_;
  ClassifierParams params_;
  std::uint64_t seed_;
};

/// Logits for an embedded sequence (d x L, L >= 1).
Vector forward_embedded(const FrozenClassifier& model, const Matrix& embedded);

/// Looks up embedding columns then calls forward_embedded.
Vector forward_tokens(const FrozenClassifier& model, std::span<const std::size_t> tokens);

/// Embedding columns of `tokens` gathered into a d x L matrix.
Matrix gather_embeddings(const Matrix& table, std::span<const std::size_t> tokens);

/// d(loss)/d(embedded) for an arbitrary upstream gradient on the logits.
Matrix backward_embedded(const FrozenClassifier& model, const Matrix& embedded, std::span<const double> dlogits);

/// Single forward/backward pass where `upstream` turns the logits into
/// d(loss)/d(logits). The logits are written to `logits_out` when non-null.
Matrix backward_embedded(const FrozenClassifier& model, const Matrix& embedded,
                         const std::function<Vector(std::span<const double>)>& upstream, Vector* logits_out = nullptr);

/// Gradient of cross_entropy(softmax(forward_embedded(model, embedded)), target_class)
/// with respect to every entry of `embedded`.
Matrix input_gradient(const FrozenClassifier& model, const Matrix& embedded, std::size_t target_class);

/// Index of the largest entry, lowest index on ties.
std::size_t argmax(std::span<const double> values);

double accuracy(const FrozenClassifier& model, const SequenceDataset& dataset);

struct TrainingConfig {
  Architecture architecture = Architecture::bag_mlp;
  std::size_t embedding_dim = 32;
  std::size_t hidden = 16;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double learning_rate = 0.5;
  double init_scale = 0.1;  ///< weights start uniform in [-init_scale, init_scale]

  void validate() const;
};

struct TrainReport {
  FrozenClassifier model;
  double train_accuracy = 0.0;
  double valid_accuracy = 0.0;
  /// Accuracy of always predicting the most frequent training class, measured on `valid`.
  double majority_class_accuracy = 0.0;
  std::vector<double> epoch_loss;
};

/// Trains embeddings and classifier weights with plain mini-batch SGD on
/// cross-entropy (constant step, seeded shuffling), then freezes the result.
/// `valid` may be empty, in which case validation figures are reported on `train`.
TrainReport train_source(const SequenceDataset& train, const SequenceDataset& valid, const TrainingConfig& config,
                         std::uint64_t seed);

}  // namespace r2dl
