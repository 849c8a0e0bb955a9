// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "helpers.hpp"
#include "r2dl/checkpoint.hpp"
#include "r2dl/experiment.hpp"
#include "r2dl/numerics.hpp"
#include "r2dl/sparse_coding.hpp"

using namespace r2dl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool pass = o.pass;
  if (secs > limit_s) {
    pass = false;
    o.detail += "; over the " + std::to_string(static_cast<int>(limit_s)) + " s budget";
  }
  if (!pass) ++failures;
  std::printf("criterion %d %s  %-28s %s (%.1f s)\n", id, pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

fs::path scratch() {
  const fs::path p = fs::temp_directory_path() / ("r2dl_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// 1 -------------------------------------------------------------------------

Outcome omp_recovery() {
  Rng rng(101);
  int exact = 0;
  double worst = 0.0;
  const int cases = 200;
  for (int c = 0; c < cases; ++c) {
    const std::size_t d = 4 + rng.below(29);
    const Dictionary dict(test::random_orthonormal(d, rng));
    const std::size_t s = 1 + rng.below(3);
    std::vector<std::size_t> perm(d);
    for (std::size_t i = 0; i < d; ++i) perm[i] = i;
    rng.shuffle(std::span<std::size_t>(perm));
    Vector truth(d, 0.0);
    for (std::size_t k = 0; k < s; ++k) truth[perm[k]] = rng.uniform(0.1, 3.0) * (rng.below(2) ? 1.0 : -1.0);
    const Vector y = matvec(dict.atoms(), truth);
    KsvdConfig cfg;
    cfg.epsilon = 1e-8;
    cfg.max_atoms = std::min<std::size_t>(d, 3);
    const SparseCode code = omp_encode(dict, y, cfg);
    const Vector got = code.densify(d);
    bool support_ok = true;
    for (std::size_t i = 0; i < d; ++i) support_ok &= (got[i] != 0.0) == (truth[i] != 0.0);
    worst = std::max(worst, code.residual_norm);
    exact += support_ok && code.residual_norm <= 1e-8;
  }
  return {exact == cases, std::to_string(exact) + "/" + std::to_string(cases) + " exact, max l1 residual " + fmt(worst)};
}

// 2 -------------------------------------------------------------------------

Outcome ksvd_monotone() {
  Rng rng(202);
  std::size_t stages = 0, stage_violations = 0, sweeps = 0, sweep_ok = 0;
  double worst_increase = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t d = 6 + rng.below(6), k = d + rng.below(8), m = 20 + rng.below(30);
    Dictionary dict = Dictionary::normalize(test::random_matrix(d, k, rng)).dictionary;
    const Matrix y = test::random_matrix(d, m, rng);
    KsvdConfig cfg;
    cfg.epsilon = rng.uniform(0.05, 0.5);
    cfg.max_atoms = 2 + rng.below(3);
    cfg.sweeps = 10;
    cfg.update_dictionary = true;

    // stage-wise: update at fixed codes
    Dictionary cur = dict;
    for (std::size_t s = 0; s < cfg.sweeps; ++s) {
      const Matrix codes = batch_encode(cur, y, cfg);
      const double before = reconstruction_error(y, cur, codes);
      auto up = ksvd_dictionary_update(cur, y, codes, cfg.unused_atom_policy);
      const double after = reconstruction_error(y, up.dictionary, up.codes);
      ++stages;
      worst_increase = std::max(worst_increase, after - before);
      if (after > before + 1e-10) ++stage_violations;
      cur = std::move(up.dictionary);
    }

    // whole sweeps through ksvd_run
    const auto run = ksvd_run(y, dict, cfg);
    for (std::size_t s = 1; s < run.error_trace.size(); ++s) {
      ++sweeps;
      sweep_ok += run.error_trace[s] <= run.error_trace[s - 1] + 1e-10;
    }
  }
  const double share = static_cast<double>(sweep_ok) / static_cast<double>(sweeps);
  return {stage_violations == 0 && share >= 0.95,
          std::to_string(stages - stage_violations) + "/" + std::to_string(stages) +
              " update stages non-increasing (worst change " + fmt(worst_increase) + "), sweeps non-increasing " +
              fmt(100 * share, 4) + "%"};
}

// 3 -------------------------------------------------------------------------

FrozenClassifier random_model(Architecture arch, std::size_t d, std::size_t vs, std::size_t classes, Rng& rng) {
  ClassifierParams p;
  p.architecture = arch;
  p.hidden = 2 + rng.below(4);
  p.num_classes = classes;
  for (auto [r, c] : p.tensor_shapes(d)) p.tensors.push_back(test::random_matrix(r, c, rng, 0.8));
  return FrozenClassifier(test::random_matrix(d, vs, rng), std::move(p));
}

double relative(const std::vector<double>& g, const std::vector<double>& fd) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    diff += (g[i] - fd[i]) * (g[i] - fd[i]);
    ref += fd[i] * fd[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
}

Outcome gradients() {
  Rng rng(303);
  const double h = 1e-6;
  int input_ok = 0, theta_ok = 0;
  double worst_input = 0.0, worst_theta = 0.0;
  const int per_kind = 60;
  for (int inst = 0; inst < per_kind; ++inst) {
    const auto arch = inst % 2 ? Architecture::birnn : Architecture::bag_mlp;
    const std::size_t d = 2 + rng.below(4), classes = 2 + rng.below(3);
    const auto model = random_model(arch, d, 5, classes, rng);
    Matrix e = test::random_matrix(d, 1 + rng.below(5), rng);
    const std::size_t cls = rng.below(classes);
    const Matrix g = input_gradient(model, e, cls);
    std::vector<double> fd(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
      const double saved = e.data()[i];
      e.data()[i] = saved + h;
      const double up = cross_entropy(softmax(forward_embedded(model, e)), cls);
      e.data()[i] = saved - h;
      const double down = cross_entropy(softmax(forward_embedded(model, e)), cls);
      e.data()[i] = saved;
      fd[i] = (up - down) / (2 * h);
    }
    const double r = relative({g.data().begin(), g.data().end()}, fd);
    worst_input = std::max(worst_input, r);
    input_ok += r <= 1e-5;
  }
  for (int inst = 0; inst < per_kind; ++inst) {
    const auto arch = inst % 2 ? Architecture::birnn : Architecture::bag_mlp;
    const std::size_t d = 2 + rng.below(3), vs = 3 + rng.below(5), vt = 2 + rng.below(4), cs = 2 + rng.below(2);
    const auto model = random_model(arch, d, vs, cs, rng);
    std::vector<std::size_t> map(cs);
    for (std::size_t i = 0; i < cs; ++i) map[i] = i < 2 ? i : rng.below(2);
    const LabelMap hmap(map, 2);
    SequenceDataset data;
    std::vector<std::string> toks;
    for (std::size_t i = 0; i < vt; ++i) toks.push_back(std::string(1, static_cast<char>('A' + i)));
    data.vocab = Vocab(toks);
    data.class_names = {"x", "y"};
    for (std::size_t n = 1 + rng.below(6); n > 0; --n) {
      TokenSequence s(1 + rng.below(5));
      for (auto& t : s) t = rng.below(vt);
      data.sequences.push_back(s);
      data.labels.push_back(rng.below(2));
    }
    AdversarialProgram prog;
    prog.theta = test::random_matrix(vs, vt, rng, 0.5);
    const Matrix g = grad_theta(prog, model, hmap, data);
    std::vector<double> fd(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double saved = prog.theta.data()[i];
      prog.theta.data()[i] = saved + h;
      const double up = r2dl_loss(prog, model, hmap, data);
      prog.theta.data()[i] = saved - h;
      const double down = r2dl_loss(prog, model, hmap, data);
      prog.theta.data()[i] = saved;
      fd[i] = (up - down) / (2 * h);
    }
    const double r = relative({g.data().begin(), g.data().end()}, fd);
    worst_theta = std::max(worst_theta, r);
    theta_ok += r <= 1e-5;
  }
  return {input_ok == per_kind && theta_ok == per_kind,
          "input " + std::to_string(input_ok) + "/" + std::to_string(per_kind) + " (worst " + fmt(worst_input, 2) +
              "), theta " + std::to_string(theta_ok) + "/" + std::to_string(per_kind) + " (worst " +
              fmt(worst_theta, 2) + ")"};
}

// shared synthetic setup for 4-7 --------------------------------------------

ExperimentConfig base_config() {
  ExperimentConfig cfg = default_experiment_config();
  cfg.set_seed(1);
  cfg.reprogram.ksvd.epsilon = 0.045;
  cfg.reprogram.ksvd.sweeps = 5;
  cfg.reprogram.outer_iterations = 200;
  return cfg;
}

struct Shared {
  fs::path dir;
  fs::path source;
  double source_valid = 0.0;
};

Outcome end_to_end(const Shared& s) {
  std::ostringstream log;
  const auto rep = cmd_reprogram(base_config(), s.source, s.dir / "e2e", log);
  const bool ok = s.source_valid >= 0.95 && rep.test_accuracy >= 0.85 && rep.random_theta_test_accuracy <= 0.60;
  return {ok, "source valid " + fmt(s.source_valid) + ", test " + fmt(rep.test_accuracy) + " vs random theta " +
                  fmt(rep.random_theta_test_accuracy) + " (best iteration " + std::to_string(rep.best_iteration) +
                  ")"};
}

Outcome data_trend(const Shared& s) {
  std::ostringstream log;
  ExperimentConfig cfg = base_config();
  cfg.data_grid = {500, 1000, 2000, 4000};
  const auto rows = cmd_sweep_data(cfg, s.source, s.dir / "sweep_data", log);
  int inversions = 0;
  std::string detail = "r2dl/scratch:";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    detail += " " + std::to_string(rows[i].n) + "=" + fmt(rows[i].r2dl_accuracy, 3) + "/" + fmt(rows[i].scratch_accuracy, 3);
    if (i > 0 && rows[i].r2dl_accuracy < rows[i - 1].r2dl_accuracy) ++inversions;
  }
  detail += ", inversions " + std::to_string(inversions);
  return {inversions <= 1, detail};
}

Outcome ksvd_stagnation(const Shared& s) {
  std::ostringstream log;
  ExperimentConfig cfg = base_config();
  cfg.ksvd_grid = {10, 30};
  const auto rows = cmd_sweep_ksvd(cfg, s.source, s.dir / "sweep_ksvd", log);
  const double gap = std::abs(rows[1].test_accuracy - rows[0].test_accuracy);
  return {gap <= 0.05, "test at T2=10 " + fmt(rows[0].test_accuracy) + ", T2=30 " + fmt(rows[1].test_accuracy) +
                           ", gap " + fmt(100 * gap, 3) + " points"};
}

Outcome determinism(const Shared& s) {
  ExperimentConfig cfg = base_config();
  cfg.synthetic.target = 1500;
  cfg.reprogram.outer_iterations = 20;
  cfg.data_grid = {200, 600};
  cfg.ksvd_grid = {1, 3};
  std::ostringstream log;
  const std::vector<std::string> files = {"src/source_model.json", "src/train_source_report.json", "rp/program.json",
                                          "rp/trace.csv",          "rp/summary.json",              "rp/target_test.csv",
                                          "ev/eval.json",          "sd/sweep_data.csv",            "sk/sweep_ksvd.csv"};
  bool checkpoint_stable = true;
  for (const char* run : {"a", "b"}) {
    const fs::path d = s.dir / "det" / run;
    cmd_train_source(cfg, d / "src", log);
    const fs::path ckpt = d / "src" / "source_model.json";
    const auto before = file_fingerprint(ckpt);
    const auto rep = cmd_reprogram(cfg, ckpt, d / "rp", log);
    cmd_eval(d / "rp" / "program.json", ckpt, d / "rp" / "target_test.csv", {}, d / "ev", log);
    cmd_sweep_data(cfg, ckpt, d / "sd", log);
    cmd_sweep_ksvd(cfg, ckpt, d / "sk", log);
    checkpoint_stable &= rep.source_checkpoint_unchanged && file_fingerprint(ckpt) == before;
  }
  // the shared source checkpoint went through three reprogramming commands by now
  checkpoint_stable &= file_fingerprint(s.source) == file_fingerprint(s.dir / "source_copy.json");
  std::size_t same = 0;
  for (const auto& f : files)
    same += read_text_file(s.dir / "det" / "a" / f) == read_text_file(s.dir / "det" / "b" / f);
  return {same == files.size() && checkpoint_stable,
          std::to_string(same) + "/" + std::to_string(files.size()) + " metrics files byte-identical, source checkpoints " +
              (checkpoint_stable ? "unchanged" : "CHANGED")};
}

// 8 -------------------------------------------------------------------------

Outcome reduction(const Shared& s) {
  const auto ckpt = load_classifier(s.source);
  const auto cfg0 = base_config();
  const auto target = load_target_dataset(cfg0);
  const Split parts = split(target, cfg0.split);
  R2dlConfig cfg = cfg0.reprogram;
  cfg.step_size = 0.0;
  cfg.projection_mode = ProjectionMode::encode_once;
  cfg.outer_iterations = 3;
  const auto result = r2dl_train(ckpt.model, LabelMap::identity(2), parts.train, parts.valid, cfg);

  const auto norm = Dictionary::normalize(ckpt.model.embeddings());
  const Matrix theta0 = initial_theta(ckpt.model.vocab_size(), parts.train.vocab.size(), cfg);
  const auto coded = ksvd_run(matmul(ckpt.model.embeddings(), theta0), norm.dictionary, cfg.ksvd);
  const Matrix expected = codes_to_theta(coded.codes, norm.norms);
  std::size_t nz = 0;
  for (double v : expected.data()) nz += v != 0.0;
  const bool equal = result.program.theta == expected;
  return {equal, std::string(equal ? "theta bitwise equal" : "theta DIFFERS") + " to the sparse-coding solution (" +
                     std::to_string(nz) + " nonzeros in " + std::to_string(expected.rows()) + "x" +
                     std::to_string(expected.cols()) + ")"};
}

}  // namespace

int main() {
  report(1, "OMP planted recovery", 5, omp_recovery);
  report(2, "k-SVD monotonicity", 60, ksvd_monotone);
  report(3, "gradient fidelity", 30, gradients);

  Shared shared;
  shared.dir = scratch();
  {
    std::ostringstream log;
    const auto src = cmd_train_source(base_config(), shared.dir / "src", log);
    shared.source = shared.dir / "src" / "source_model.json";
    shared.source_valid = src.valid_accuracy;
    fs::copy_file(shared.source, shared.dir / "source_copy.json");
  }
  report(4, "end-to-end reprogramming", 300, [&] { return end_to_end(shared); });
  report(5, "restricted-data trend", 900, [&] { return data_trend(shared); });
  report(6, "k-SVD iteration stagnation", 600, [&] { return ksvd_stagnation(shared); });
  report(7, "determinism", 600, [&] { return determinism(shared); });
  report(8, "reduction consistency", 60, [&] { return reduction(shared); });
  fs::remove_all(shared.dir);

  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
