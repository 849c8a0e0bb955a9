#include "r2dl/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "r2dl/errors.hpp"
#include "r2dl/numerics.hpp"
#include "r2dl/random.hpp"

namespace r2dl {

std::string to_string(Architecture arch) { return arch == Architecture::bag_mlp ? "bag_mlp" : "birnn"; }

Architecture architecture_from_string(const std::string& name) {
  if (name == "bag_mlp") return Architecture::bag_mlp;
  if (name == "birnn") return Architecture::birnn;
  throw ConfigError("unknown architecture '" + name + "'");
}

std::vector<std::string> ClassifierParams::tensor_names(Architecture arch) {
  if (arch == Architecture::bag_mlp) return {"hidden.weight", "hidden.bias", "output.weight", "output.bias"};
  return {"forward.input_weight",  "forward.recurrent_weight",  "forward.bias",  "backward.input_weight",
          "backward.recurrent_weight", "backward.bias", "output.weight", "output.bias"};
}

std::vector<std::pair<std::size_t, std::size_t>> ClassifierParams::tensor_shapes(std::size_t d) const {
  const std::size_t h = hidden, c = num_classes;
  if (architecture == Architecture::bag_mlp) return {{h, d}, {h, 1}, {c, h}, {c, 1}};
  return {{h, d}, {h, h}, {h, 1}, {h, d}, {h, h}, {h, 1}, {c, 2 * h}, {c, 1}};
}

void ClassifierParams::validate(std::size_t d) const {
  if (hidden == 0 || num_classes == 0 || d == 0) throw ShapeError("classifier dimensions must be positive");
  const auto shapes = tensor_shapes(d);
  const auto names = tensor_names(architecture);
  if (tensors.size() != shapes.size()) {
    throw ShapeError(to_string(architecture) + " expects " + std::to_string(shapes.size()) + " tensors, got " +
                     std::to_string(tensors.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (tensors[i].rows() != shapes[i].first || tensors[i].cols() != shapes[i].second) {
      throw ShapeError("tensor " + names[i] + " should be " + std::to_string(shapes[i].first) + "x" +
                       std::to_string(shapes[i].second));
    }
    if (!tensors[i].all_finite()) throw NumericError("tensor " + names[i] + " has non-finite entries");
  }
}

FrozenClassifier::FrozenClassifier(Matrix embeddings, ClassifierParams params, std::uint64_t seed)
    : embeddings_(std::move(embeddings)), params_(std::move(params)), seed_(seed) {
  if (embeddings_.rows() == 0 || embeddings_.cols() == 0) throw ShapeError("embedding table must be non-empty");
  if (!embeddings_.all_finite()) throw NumericError("embedding table has non-finite entries");
  params_.validate(embeddings_.rows());
}

std::uint64_t FrozenClassifier::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&h](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  const auto mix_matrix = [&](const Matrix& m) {
    const std::uint64_t dims[2] = {m.rows(), m.cols()};
    mix(dims, sizeof dims);
    mix(m.data().data(), m.size() * sizeof(double));
  };
  const std::uint64_t header[4] = {static_cast<std::uint64_t>(params_.architecture), params_.hidden,
                                   params_.num_classes, seed_};
  mix(header, sizeof header);
  mix_matrix(embeddings_);
  for (const auto& t : params_.tensors) mix_matrix(t);
  return h;
}

namespace {

void tanh_affine(const Matrix& w, std::span<const double> x, const Matrix* u, std::span<const double> prev,
                 const Matrix& b, std::span<double> out) {
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double a = b(i, 0) + dot(w.row(i), x);
    if (u != nullptr) a += dot(u->row(i), prev);
    out[i] = std::tanh(a);
  }
}

// Accumulates outer(a, b) into g.
void add_outer(Matrix& g, std::span<const double> a, std::span<const double> b) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) continue;
    auto row = g.row(i);
    for (std::size_t j = 0; j < b.size(); ++j) row[j] += a[i] * b[j];
  }
}

void add_to(Matrix& g, std::span<const double> v) {
  for (std::size_t i = 0; i < v.size(); ++i) g(i, 0) += v[i];
}

// Forward pass with the activations backprop needs.
struct Pass {
  Matrix x;        // d x L embedded input (copy of columns as rows for locality)
  Matrix hidden;   // bag_mlp: 1 x H; birnn: L x H forward states
  Matrix hidden_b; // birnn: L x H backward states
  Vector pooled;   // bag_mlp mean; birnn concatenated final states
  Vector logits;
};

Pass run_forward(const ClassifierParams& p, const Matrix& embedded) {
  const std::size_t d = embedded.rows();
  const std::size_t len = embedded.cols();
  if (len == 0) throw ShapeError("cannot classify an empty sequence");
  if (!embedded.all_finite()) throw NumericError("embedded sequence has non-finite entries");
  const std::size_t h = p.hidden;
  const auto& t = p.tensors;

  Pass pass;
  pass.x = embedded.transposed();  // L x d, row l = token l
  if (p.architecture == Architecture::bag_mlp) {
    pass.pooled.assign(d, 0.0);
    for (std::size_t l = 0; l < len; ++l) {
      const auto xr = pass.x.row(l);
      for (std::size_t i = 0; i < d; ++i) pass.pooled[i] += xr[i];
    }
    for (double& v : pass.pooled) v /= static_cast<double>(len);
    pass.hidden = Matrix(1, h);
    tanh_affine(t[0], pass.pooled, nullptr, {}, t[1], pass.hidden.row(0));
    pass.logits.assign(p.num_classes, 0.0);
    for (std::size_t c = 0; c < p.num_classes; ++c) pass.logits[c] = t[3](c, 0) + dot(t[2].row(c), pass.hidden.row(0));
    return pass;
  }

  const Vector zeros(h, 0.0);
  pass.hidden = Matrix(len, h);
  pass.hidden_b = Matrix(len, h);
  for (std::size_t l = 0; l < len; ++l) {
    const std::span<const double> prev = l == 0 ? std::span<const double>(zeros) : pass.hidden.row(l - 1);
    tanh_affine(t[0], pass.x.row(l), &t[1], prev, t[2], pass.hidden.row(l));
  }
  for (std::size_t l = len; l-- > 0;) {
    const std::span<const double> next = l + 1 == len ? std::span<const double>(zeros) : pass.hidden_b.row(l + 1);
    tanh_affine(t[3], pass.x.row(l), &t[4], next, t[5], pass.hidden_b.row(l));
  }
  pass.pooled.assign(2 * h, 0.0);
  for (std::size_t i = 0; i < h; ++i) {
    pass.pooled[i] = pass.hidden(len - 1, i);
    pass.pooled[h + i] = pass.hidden_b(0, i);
  }
  pass.logits.assign(p.num_classes, 0.0);
  for (std::size_t c = 0; c < p.num_classes; ++c) pass.logits[c] = t[7](c, 0) + dot(t[6].row(c), pass.pooled);
  return pass;
}

// Backprop of dlogits through a recorded pass. Returns dL/d(embedded) as d x L;
// adds parameter gradients into `grads` when it is non-null.
Matrix run_backward(const ClassifierParams& p, const Pass& pass, std::span<const double> dlogits,
                    std::vector<Matrix>* grads) {
  const std::size_t len = pass.x.rows();
  const std::size_t d = pass.x.cols();
  const std::size_t h = p.hidden;
  const auto& t = p.tensors;
  Matrix dx(len, d);  // transposed at the end

  if (p.architecture == Architecture::bag_mlp) {
    const auto hid = pass.hidden.row(0);
    const Vector dh = matvec_transposed(t[2], dlogits);
    Vector da(h);
    for (std::size_t i = 0; i < h; ++i) da[i] = dh[i] * (1.0 - hid[i] * hid[i]);
    if (grads != nullptr) {
      add_outer((*grads)[2], dlogits, hid);
      add_to((*grads)[3], dlogits);
      add_outer((*grads)[0], da, pass.pooled);
      add_to((*grads)[1], da);
    }
    Vector dm = matvec_transposed(t[0], da);
    for (double& v : dm) v /= static_cast<double>(len);
    for (std::size_t l = 0; l < len; ++l) std::copy(dm.begin(), dm.end(), dx.row(l).begin());
    return dx.transposed();
  }

  const Vector dfeat = matvec_transposed(t[6], dlogits);
  if (grads != nullptr) {
    add_outer((*grads)[6], dlogits, pass.pooled);
    add_to((*grads)[7], dlogits);
  }
  const Vector zeros(h, 0.0);
  Vector da(h);

  Vector dh(dfeat.begin(), dfeat.begin() + static_cast<std::ptrdiff_t>(h));
  for (std::size_t l = len; l-- > 0;) {
    const auto hl = pass.hidden.row(l);
    for (std::size_t i = 0; i < h; ++i) da[i] = dh[i] * (1.0 - hl[i] * hl[i]);
    const std::span<const double> prev = l == 0 ? std::span<const double>(zeros) : pass.hidden.row(l - 1);
    if (grads != nullptr) {
      add_outer((*grads)[0], da, pass.x.row(l));
      add_outer((*grads)[1], da, prev);
      add_to((*grads)[2], da);
    }
    const Vector dxl = matvec_transposed(t[0], da);
    auto row = dx.row(l);
    for (std::size_t i = 0; i < d; ++i) row[i] += dxl[i];
    dh = matvec_transposed(t[1], da);
  }

  dh.assign(dfeat.begin() + static_cast<std::ptrdiff_t>(h), dfeat.end());
  for (std::size_t l = 0; l < len; ++l) {
    const auto hl = pass.hidden_b.row(l);
    for (std::size_t i = 0; i < h; ++i) da[i] = dh[i] * (1.0 - hl[i] * hl[i]);
    const std::span<const double> next = l + 1 == len ? std::span<const double>(zeros) : pass.hidden_b.row(l + 1);
    if (grads != nullptr) {
      add_outer((*grads)[3], da, pass.x.row(l));
      add_outer((*grads)[4], da, next);
      add_to((*grads)[5], da);
    }
    const Vector dxl = matvec_transposed(t[3], da);
    auto row = dx.row(l);
    for (std::size_t i = 0; i < d; ++i) row[i] += dxl[i];
    dh = matvec_transposed(t[4], da);
  }
  return dx.transposed();
}

void check_embedded(const FrozenClassifier& model, const Matrix& embedded) {
  if (embedded.rows() != model.dim()) {
    throw ShapeError("embedded sequence has dimension " + std::to_string(embedded.rows()) + ", model expects " +
                     std::to_string(model.dim()));
  }
  if (embedded.cols() == 0) throw ShapeError("cannot classify an empty sequence");
}

Vector cross_entropy_logit_grad(std::span<const double> logits, std::size_t label) {
  Vector g = softmax(logits);
  g[label] -= 1.0;
  return g;
}

}  // namespace

Vector forward_embedded(const FrozenClassifier& model, const Matrix& embedded) {
  check_embedded(model, embedded);
  return run_forward(model.params(), embedded).logits;
}

Matrix gather_embeddings(const Matrix& table, std::span<const std::size_t> tokens) {
  Matrix out(table.rows(), tokens.size());
  for (std::size_t l = 0; l < tokens.size(); ++l) {
    if (tokens[l] >= table.cols()) {
      throw IndexError("token " + std::to_string(tokens[l]) + " out of range for vocabulary of " +
                       std::to_string(table.cols()));
    }
    for (std::size_t i = 0; i < table.rows(); ++i) out(i, l) = table(i, tokens[l]);
  }
  return out;
}

Vector forward_tokens(const FrozenClassifier& model, std::span<const std::size_t> tokens) {
  if (tokens.empty()) throw ShapeError("cannot classify an empty sequence");
  return forward_embedded(model, gather_embeddings(model.embeddings(), tokens));
}

Matrix backward_embedded(const FrozenClassifier& model, const Matrix& embedded, std::span<const double> dlogits) {
  check_embedded(model, embedded);
  if (dlogits.size() != model.num_classes()) throw ShapeError("upstream gradient has the wrong number of classes");
  const Pass pass = run_forward(model.params(), embedded);
  return run_backward(model.params(), pass, dlogits, nullptr);
}

Matrix backward_embedded(const FrozenClassifier& model, const Matrix& embedded,
                         const std::function<Vector(std::span<const double>)>& upstream, Vector* logits_out) {
  check_embedded(model, embedded);
  const Pass pass = run_forward(model.params(), embedded);
  const Vector dlogits = upstream(pass.logits);
  if (dlogits.size() != model.num_classes()) throw ShapeError("upstream gradient has the wrong number of classes");
  if (logits_out != nullptr) *logits_out = pass.logits;
  return run_backward(model.params(), pass, dlogits, nullptr);
}

Matrix input_gradient(const FrozenClassifier& model, const Matrix& embedded, std::size_t target_class) {
  if (target_class >= model.num_classes()) {
    throw IndexError("class " + std::to_string(target_class) + " out of range for " +
                     std::to_string(model.num_classes()) + " classes");
  }
  check_embedded(model, embedded);
  const Pass pass = run_forward(model.params(), embedded);
  const Vector dlogits = cross_entropy_logit_grad(pass.logits, target_class);
  return run_backward(model.params(), pass, dlogits, nullptr);
}

std::size_t argmax(std::span<const double> values) {
  if (values.empty()) throw ShapeError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

double accuracy(const FrozenClassifier& model, const SequenceDataset& dataset) {
  if (dataset.empty()) throw DegenerateDataError("accuracy of an empty dataset");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (argmax(forward_tokens(model, dataset.sequences[i])) == dataset.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

void TrainingConfig::validate() const {
  if (embedding_dim == 0 || hidden == 0) throw ConfigError("embedding_dim and hidden must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be positive");
  if (!(init_scale > 0.0)) throw ConfigError("init_scale must be positive");
}

TrainReport train_source(const SequenceDataset& train, const SequenceDataset& valid, const TrainingConfig& config,
                         std::uint64_t seed) {
  config.validate();
  if (train.empty()) throw DegenerateDataError("training corpus is empty");
  train.validate();
  const auto counts = train.class_counts();
  const auto present = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
  if (train.num_classes() < 2 || present < 2) throw DegenerateDataError("training corpus needs at least 2 classes");
  if (!valid.empty()) {
    valid.validate();
    if (valid.vocab.size() != train.vocab.size() || valid.num_classes() != train.num_classes()) {
      throw ShapeError("validation set vocabulary or classes differ from the training set");
    }
  }

  Rng rng(seed);
  const std::size_t d = config.embedding_dim;
  const std::size_t vocab = train.vocab.size();
  const double s = config.init_scale;

  Matrix embeddings(d, vocab);
  for (double& v : embeddings.data()) v = rng.uniform(-s, s);
  ClassifierParams params{config.architecture, config.hidden, train.num_classes(), {}};
  for (const auto& [r, c] : params.tensor_shapes(d)) {
    Matrix m(r, c);
    for (double& v : m.data()) v = rng.uniform(-s, s);
    params.tensors.push_back(std::move(m));
  }

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> epoch_loss;
  const auto shapes = params.tensor_shapes(d);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Matrix> grads;
      for (const auto& [r, c] : shapes) grads.emplace_back(r, c);
      Matrix emb_grad(d, vocab);

      for (std::size_t b = start; b < end; ++b) {
        const auto& seq = train.sequences[order[b]];
        const std::size_t label = train.labels[order[b]];
        const Matrix x = gather_embeddings(embeddings, seq);
        const Pass pass = run_forward(params, x);
        const Vector probs = softmax(pass.logits);
        loss_sum += cross_entropy(probs, label);
        Vector dlogits = probs;
        dlogits[label] -= 1.0;
        const Matrix dx = run_backward(params, pass, dlogits, &grads);
        for (std::size_t l = 0; l < seq.size(); ++l) {
          for (std::size_t i = 0; i < d; ++i) emb_grad(i, seq[l]) += dx(i, l);
        }
      }

      const double step = config.learning_rate / static_cast<double>(end - start);
      for (std::size_t k = 0; k < grads.size(); ++k) {
        auto w = params.tensors[k].data();
        const auto g = grads[k].data();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * g[i];
      }
      auto e = embeddings.data();
      const auto g = emb_grad.data();
      for (std::size_t i = 0; i < e.size(); ++i) e[i] -= step * g[i];
    }
    epoch_loss.push_back(loss_sum / static_cast<double>(train.size()));
  }

  if (!embeddings.all_finite()) throw NumericError("training diverged (non-finite embeddings)");
  for (std::size_t j = 0; j < vocab; ++j) {
    if (norm_l2(embeddings.col(j)) == 0.0) throw NumericError("embedding column " + std::to_string(j) + " is zero");
  }

  TrainReport report{FrozenClassifier(std::move(embeddings), std::move(params), seed), 0.0, 0.0, 0.0,
                     std::move(epoch_loss)};
  report.train_accuracy = accuracy(report.model, train);
  const SequenceDataset& eval = valid.empty() ? train : valid;
  report.valid_accuracy = accuracy(report.model, eval);
  const std::size_t majority =
      static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  const auto hits = std::count(eval.labels.begin(), eval.labels.end(), majority);
  report.majority_class_accuracy = static_cast<double>(hits) / static_cast<double>(eval.size());
  return report;
}

}  // namespace r2dl
