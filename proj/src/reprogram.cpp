#include "r2dl/reprogram.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "r2dl/errors.hpp"
#include "r2dl/numerics.hpp"
#include "r2dl/random.hpp"

namespace r2dl {

// ---------------------------------------------------------------------------
// Label map

LabelMap::LabelMap(std::vector<std::size_t> source_to_target, std::size_t num_target)
    : map_(std::move(source_to_target)), num_target_(num_target) {
  if (map_.empty() || num_target_ == 0) throw ConfigError("label map must have at least one class on each side");
  std::vector<bool> hit(num_target_, false);
  for (std::size_t s = 0; s < map_.size(); ++s) {
    if (map_[s] >= num_target_) {
      throw ConfigError("label map sends source class " + std::to_string(s) + " to missing target class " +
                        std::to_string(map_[s]));
    }
    hit[map_[s]] = true;
  }
  for (std::size_t t = 0; t < num_target_; ++t) {
    if (!hit[t]) throw ConfigError("label map never reaches target class " + std::to_string(t));
  }
}

LabelMap LabelMap::identity(std::size_t num_classes) {
  std::vector<std::size_t> m(num_classes);
  std::iota(m.begin(), m.end(), 0);
  return LabelMap(std::move(m), num_classes);
}

Vector map_output(const LabelMap& h, std::span<const double> source_probs) {
  if (source_probs.size() != h.num_source()) {
    throw ShapeError("label map expects " + std::to_string(h.num_source()) + " source probabilities, got " +
                     std::to_string(source_probs.size()));
  }
  double total = 0.0;
  for (double p : source_probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw NumericError("map_output: invalid probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw NumericError("map_output: probabilities do not sum to 1");
  Vector out(h.num_target(), 0.0);
  for (std::size_t s = 0; s < source_probs.size(); ++s) out[h[s]] += source_probs[s];
  return out;
}

// ---------------------------------------------------------------------------
// Config

std::string to_string(ProjectionMode mode) {
  return mode == ProjectionMode::every_outer_iteration ? "every_outer_iteration" : "encode_once";
}

ProjectionMode projection_mode_from_string(const std::string& name) {
  if (name == "every_outer_iteration") return ProjectionMode::every_outer_iteration;
  if (name == "encode_once") return ProjectionMode::encode_once;
  throw ConfigError("unknown projection mode '" + name + "'");
}

std::string to_string(StepSchedule schedule) {
  return schedule == StepSchedule::constant ? "constant" : "exponential";
}

StepSchedule step_schedule_from_string(const std::string& name) {
  if (name == "constant") return StepSchedule::constant;
  if (name == "exponential") return StepSchedule::exponential;
  throw ConfigError("unknown step schedule '" + name + "'");
}

void R2dlConfig::validate() const {
  if (outer_iterations < 1) throw ConfigError("outer_iterations must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(step_size >= 0.0) || !std::isfinite(step_size)) throw ConfigError("step_size must be finite and >= 0");
  if (schedule == StepSchedule::exponential && !(decay > 0.0 && decay <= 1.0)) {
    throw ConfigError("decay must be in (0, 1]");
  }
  if (!(init_scale >= 0.0)) throw ConfigError("init_scale must be >= 0");
  if (ksvd.sweeps < 1) throw ConfigError("ksvd sweeps must be >= 1");
}

double R2dlConfig::step_at(std::size_t iteration) const {
  if (schedule == StepSchedule::constant || iteration <= 1) return step_size;
  return step_size * std::pow(decay, static_cast<double>(iteration - 1));
}

// ---------------------------------------------------------------------------
// Program evaluation

namespace {

const Matrix& source_table(const AdversarialProgram& program, const FrozenClassifier& model) {
  const Matrix& table = program.table_override ? *program.table_override : model.embeddings();
  if (table.cols() != program.source_vocab()) {
    throw ShapeError("program covers " + std::to_string(program.source_vocab()) + " source tokens, model has " +
                     std::to_string(table.cols()));
  }
  if (table.rows() != model.dim()) throw ShapeError("source table dimension differs from the model");
  return table;
}

void check_batch(const AdversarialProgram& program, const FrozenClassifier& model, const LabelMap& h,
                 const SequenceDataset& data, std::span<const std::size_t> batch) {
  if (batch.empty()) throw DegenerateDataError("empty batch");
  if (h.num_source() != model.num_classes()) {
    throw ShapeError("label map covers " + std::to_string(h.num_source()) + " source classes, model has " +
                     std::to_string(model.num_classes()));
  }
  if (data.vocab.size() != program.target_vocab()) {
    throw ShapeError("dataset vocabulary of " + std::to_string(data.vocab.size()) + " does not match program width " +
                     std::to_string(program.target_vocab()));
  }
  for (std::size_t i : batch) {
    if (i >= data.size()) throw IndexError("batch index out of range");
    if (data.labels[i] >= h.num_target()) throw IndexError("target label out of range for the label map");
  }
}

// d(-log q_y)/d(logits) where q = map_output(h, softmax(logits)).
Vector mapped_logit_grad(const LabelMap& h, std::span<const double> logits, std::size_t label, double* loss) {
  Vector p = softmax(logits);
  const Vector q = map_output(h, p);
  const double qy = q[label];
  if (!(qy > 0.0)) throw NumericError("target class probability underflowed to zero");
  if (loss != nullptr) *loss = std::max(0.0, -std::log(qy));
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = h[k] == label ? p[k] - p[k] / qy : p[k];
  }
  return p;
}

std::vector<std::size_t> all_rows(const SequenceDataset& data) {
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;
};

LossAndGrad loss_and_grad(const AdversarialProgram& program, const FrozenClassifier& model, const LabelMap& h,
                          const SequenceDataset& data, std::span<const std::size_t> batch, bool want_grad) {
  check_batch(program, model, h, data, batch);
  const Matrix& table = source_table(program, model);
  const Matrix implied = matmul(table, program.theta);  // d x |V_T|
  Matrix g_embed(model.dim(), program.target_vocab());

  double loss_sum = 0.0;
  for (std::size_t i : batch) {
    const auto& seq = data.sequences[i];
    const std::size_t label = data.labels[i];
    const Matrix x = gather_embeddings(implied, seq);
    if (!want_grad) {
      const Vector q = map_output(h, softmax(forward_embedded(model, x)));
      loss_sum += cross_entropy(q, label);
      continue;
    }
    double sample_loss = 0.0;
    const Matrix dx = backward_embedded(
        model, x, [&](std::span<const double> logits) { return mapped_logit_grad(h, logits, label, &sample_loss); });
    loss_sum += sample_loss;
    for (std::size_t l = 0; l < seq.size(); ++l) {
      for (std::size_t r = 0; r < model.dim(); ++r) g_embed(r, seq[l]) += dx(r, l);
    }
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  LossAndGrad out;
  out.loss = loss_sum * inv;
  if (want_grad) {
    for (double& v : g_embed.data()) v *= inv;
    out.grad = matmul(table.transposed(), g_embed);
  }
  return out;
}

}  // namespace

Matrix implied_embeddings(const AdversarialProgram& program, const FrozenClassifier& model) {
  return matmul(source_table(program, model), program.theta);
}

Matrix apply_program(const AdversarialProgram& program, const FrozenClassifier& model,
                     std::span<const std::size_t> target_tokens) {
  const Matrix& table = source_table(program, model);
  Matrix out(table.rows(), target_tokens.size());
  for (std::size_t l = 0; l < target_tokens.size(); ++l) {
    const std::size_t j = target_tokens[l];
    if (j >= program.target_vocab()) {
      throw IndexError("target token " + std::to_string(j) + " out of range for " +
                       std::to_string(program.target_vocab()) + " target tokens");
    }
    for (std::size_t r = 0; r < table.rows(); ++r) {
      const auto row = table.row(r);
      double acc = 0.0;
      for (std::size_t s = 0; s < row.size(); ++s) acc += row[s] * program.theta(s, j);
      out(r, l) = acc;
    }
  }
  return out;
}

Vector target_probabilities(const AdversarialProgram& program, const FrozenClassifier& model, const LabelMap& h,
                            std::span<const std::size_t> target_tokens) {
  return map_output(h, softmax(forward_embedded(model, apply_program(program, model, target_tokens))));
}

double r2dl_loss(const AdversarialProgram& program, const FrozenClassifier& model, const LabelMap& h,
                 const SequenceDataset& data, std::span<const std::size_t> batch) {
  return loss_and_grad(program, model, h, data, batch, false).loss;
}

double r2dl_loss(const AdversarialProgram& program, const FrozenClassifier& model, const LabelMap& h,
                 const SequenceDataset& data) {
  return r2dl_loss(program, model, h, data, all_rows(data));
}

Matrix grad_theta(const AdversarialProgram& program, const FrozenClassifier& model, const LabelMap& h,
                  const SequenceDataset& data, std::span<const std::size_t> batch) {
  return loss_and_grad(program, model, h, data, batch, true).grad;
}

Matrix grad_theta(const AdversarialProgram& program, const FrozenClassifier& model, const LabelMap& h,
                  const SequenceDataset& data) {
  return grad_theta(program, model, h, data, all_rows(data));
}

Matrix initial_theta(std::size_t source_vocab, std::size_t target_vocab, const R2dlConfig& cfg) {
  Rng rng(cfg.seed);
  Matrix theta(source_vocab, target_vocab);
  for (double& v : theta.data()) v = rng.uniform(-cfg.init_scale, cfg.init_scale);
  return theta;
}

Matrix codes_to_theta(const Matrix& codes, std::span<const double> norms) {
  if (norms.size() != codes.rows()) throw ShapeError("codes_to_theta: one norm per atom required");
  Matrix theta = codes;
  for (std::size_t i = 0; i < theta.rows(); ++i) {
    for (double& v : theta.row(i)) v /= norms[i];
  }
  return theta;
}

Evaluation evaluate(const AdversarialProgram& program, const FrozenClassifier& model, const LabelMap& h,
                    const SequenceDataset& dataset) {
  if (dataset.empty()) throw DegenerateDataError("cannot evaluate on an empty dataset");
  check_batch(program, model, h, dataset, std::vector<std::size_t>{0});
  const Matrix implied = implied_embeddings(program, model);
  Evaluation ev;
  ev.confusion.assign(h.num_target(), std::vector<std::size_t>(h.num_target(), 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const std::size_t label = dataset.labels[i];
    if (label >= h.num_target()) throw IndexError("target label out of range for the label map");
    const Vector q = map_output(h, softmax(forward_embedded(model, gather_embeddings(implied, dataset.sequences[i]))));
    const std::size_t pred = argmax(q);
    ++ev.confusion[label][pred];
    if (pred == label) ++correct;
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
  return ev;
}

// ---------------------------------------------------------------------------
// Training loop

R2dlResult r2dl_train(const FrozenClassifier& model, const LabelMap& h, const SequenceDataset& train,
                      const SequenceDataset& valid, const R2dlConfig& cfg) {
  cfg.validate();
  cfg.ksvd.validate(model.vocab_size());
  if (train.empty()) throw DegenerateDataError("training set is empty");
  if (valid.empty()) throw DegenerateDataError("validation set is empty");
  train.validate();
  valid.validate();
  if (valid.vocab.size() != train.vocab.size()) throw ShapeError("train and valid vocabularies differ");
  if (h.num_source() != model.num_classes()) throw ShapeError("label map does not match the model's classes");
  if (train.num_classes() > h.num_target()) throw ShapeError("dataset has more classes than the label map targets");

  const std::size_t source_vocab = model.vocab_size();
  const std::size_t target_vocab = train.vocab.size();

  AdversarialProgram program{initial_theta(source_vocab, target_vocab, cfg), {}, cfg, std::nullopt};
  auto [dict, norms] = Dictionary::normalize(model.embeddings());

  // Separate stream for batch order so theta's init does not depend on it.
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const auto next_batch = [&] {
    if (cursor >= order.size()) {
      rng.shuffle(std::span<std::size_t>(order));
      cursor = 0;
    }
    const std::size_t end = std::min(order.size(), cursor + cfg.batch_size);
    std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
    cursor = end;
    return batch;
  };
  const std::size_t steps = cfg.steps_per_iteration > 0
                                ? cfg.steps_per_iteration
                                : (train.size() + cfg.batch_size - 1) / cfg.batch_size;

  R2dlResult result{program, {}, 0, -1.0};
  double coding_error = 0.0;
  bool modified = false;

  for (std::size_t it = 1; it <= cfg.outer_iterations; ++it) {
    if (it == 1 || cfg.projection_mode == ProjectionMode::every_outer_iteration) {
      const Matrix signals = implied_embeddings(program, model);
      KsvdResult ks = ksvd_run(signals, dict, cfg.ksvd);
      if (cfg.ksvd.update_dictionary) {
        dict = std::move(ks.dictionary);
        Matrix table = dict.atoms();
        for (std::size_t r = 0; r < table.rows(); ++r) {
          for (std::size_t c = 0; c < table.cols(); ++c) table(r, c) *= norms[c];
        }
        program.table_override = std::move(table);
        modified = true;
      }
      program.theta = codes_to_theta(ks.codes, norms);
      program.support_sizes.assign(target_vocab, 0);
      for (std::size_t j = 0; j < target_vocab; ++j) {
        for (std::size_t s = 0; s < source_vocab; ++s) {
          if (ks.codes(s, j) != 0.0) ++program.support_sizes[j];
        }
      }
      coding_error = ks.error_trace.back();
    }

    const double alpha = cfg.step_at(it);
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < steps; ++s) {
      const auto batch = next_batch();
      const LossAndGrad lg = loss_and_grad(program, model, h, train, batch, true);
      loss_sum += lg.loss;
      auto theta = program.theta.data();
      const auto g = lg.grad.data();
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= alpha * g[i];
    }
    if (!program.theta.all_finite()) throw NumericError("theta diverged at iteration " + std::to_string(it));

    TraceRow row;
    row.iteration = it;
    row.loss = loss_sum / static_cast<double>(steps);
    row.valid_accuracy = evaluate(program, model, h, valid).accuracy;
    row.mean_support = std::accumulate(program.support_sizes.begin(), program.support_sizes.end(), 0.0) /
                       static_cast<double>(target_vocab);
    row.coding_error = coding_error;
    row.dictionary_modified = modified;
    result.trace.push_back(row);

    if (row.valid_accuracy > result.best_valid_accuracy) {
      result.best_valid_accuracy = row.valid_accuracy;
      result.best_iteration = it;
      result.program = program;
    }
  }
  return result;
}

}  // namespace r2dl
