#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "r2dl/errors.hpp"
#include "r2dl/numerics.hpp"
#include "r2dl/sparse_coding.hpp"

using namespace r2dl;

namespace {

KsvdConfig tight(double eps = 1e-8, std::size_t max_atoms = 6) {
  KsvdConfig c;
  c.epsilon = eps;
  c.max_atoms = max_atoms;
  c.sweeps = 1;
  return c;
}

Dictionary random_dictionary(std::size_t d, std::size_t k, Rng& rng) {
  return Dictionary::normalize(test::random_matrix(d, k, rng)).dictionary;
}

Vector residual_of(const Dictionary& dict, std::span<const double> signal, const SparseCode& code) {
  Vector r(signal.begin(), signal.end());
  for (std::size_t s = 0; s < code.support.size(); ++s)
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= dict.atoms()(i, code.support[s]) * code.coefficients[s];
  return r;
}

}  // namespace

TEST_CASE("Dictionary validates unit columns") {
  CHECK_NOTHROW(Dictionary(Matrix::identity(3)));
  CHECK_THROWS_AS(Dictionary(Matrix{{2, 0}, {0, 1}}), InvalidDictionaryError);
  CHECK_THROWS_AS(Dictionary::normalize(Matrix{{1, 0}, {1, 0}}), InvalidDictionaryError);
  const auto n = Dictionary::normalize(Matrix{{3, 0}, {4, 2}});
  CHECK(n.norms == Vector{5.0, 2.0});
  CHECK(n.dictionary.atoms()(0, 0) == doctest::Approx(0.6));
}

TEST_CASE("omp_encode: scaled single atom") {
  Rng rng(1);
  const Dictionary dict(test::random_orthonormal(6, rng));
  Vector signal = dict.atoms().col(3);
  for (auto& v : signal) v *= 2.0;
  const SparseCode code = omp_encode(dict, signal, tight(1e-6));
  REQUIRE(code.support == std::vector<std::size_t>{3});
  CHECK(code.coefficients[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(code.residual_norm <= 1e-12);
}

TEST_CASE("omp_encode: tiny signal gives the empty code") {
  const Dictionary dict(Matrix::identity(4));
  const Vector signal{0.01, -0.01, 0.0, 0.005};
  KsvdConfig cfg = tight(0.045, 4);
  const SparseCode code = omp_encode(dict, signal, cfg);
  CHECK(code.support.empty());
  CHECK(code.densify(4) == Vector(4, 0.0));
  CHECK(code.residual_norm == doctest::Approx(0.025));
}

TEST_CASE("omp_encode: exact recovery on an orthonormal dictionary") {
  Rng rng(2);
  const Dictionary dict(test::random_orthonormal(6, rng));
  Vector signal(6, 0.0);
  for (std::size_t i = 0; i < 6; ++i) signal[i] = 1.5 * dict.atoms()(i, 1) - 0.5 * dict.atoms()(i, 4);
  const SparseCode code = omp_encode(dict, signal, tight(1e-8));
  std::vector<std::size_t> support = code.support;
  std::sort(support.begin(), support.end());
  REQUIRE(support == std::vector<std::size_t>{1, 4});
  const Vector dense = code.densify(6);
  CHECK(dense[1] == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(dense[4] == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("omp_encode: planted s-sparse recovery on orthonormal dictionaries") {
  Rng rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t d = 4 + rng.below(12);
    const Dictionary dict(test::random_orthonormal(d, rng));
    const std::size_t s = 1 + rng.below(std::min<std::size_t>(5, d));
    std::vector<std::size_t> perm(d);
    for (std::size_t i = 0; i < d; ++i) perm[i] = i;
    rng.shuffle(std::span<std::size_t>(perm));
    Vector truth(d, 0.0);
    for (std::size_t k = 0; k < s; ++k) truth[perm[k]] = rng.uniform(0.5, 2.0) * (rng.below(2) ? 1.0 : -1.0);
    const Vector signal = matvec(dict.atoms(), truth);
    const SparseCode code = omp_encode(dict, signal, tight(1e-8, s));
    CHECK(code.support.size() == s);
    const Vector dense = code.densify(d);
    for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(dense[i] - truth[i]) <= 1e-10);
    CHECK(code.residual_norm <= 1e-8);
  }
}

TEST_CASE("omp_encode: post-conditions on random dictionaries") {
  Rng rng(4);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t d = 3 + rng.below(8), k = d + rng.below(8);
    const Dictionary dict = random_dictionary(d, k, rng);
    const Vector signal = test::random_vector(d, rng);
    KsvdConfig cfg = tight(rng.uniform(0.0, 0.5), 1 + rng.below(std::min(d, k)));
    const SparseCode code = omp_encode(dict, signal, cfg);

    CHECK(code.support.size() <= cfg.max_atoms);
    std::set<std::size_t> unique(code.support.begin(), code.support.end());
    CHECK(unique.size() == code.support.size());
    for (auto s : code.support) CHECK(s < k);

    const Vector r = residual_of(dict, signal, code);
    CHECK(code.residual_norm == doctest::Approx(norm_l1(r)).epsilon(1e-12));

    // the coefficients are the least-squares fit on the chosen support
    if (!code.support.empty()) {
      Matrix sub(d, code.support.size());
      for (std::size_t j = 0; j < code.support.size(); ++j) sub.set_col(j, dict.atoms().col(code.support[j]));
      const Vector atr = matvec_transposed(sub, r);
      for (double v : atr) CHECK(std::abs(v) <= 1e-10);
    }

    // l2 residual strictly decreases with each accepted atom
    double prev = norm_l2(signal);
    for (std::size_t s = 1; s <= code.support.size(); ++s) {
      KsvdConfig c = cfg;
      c.max_atoms = s;
      c.epsilon = 0.0;
      const SparseCode partial = omp_encode(dict, signal, c);
      if (partial.support.size() < s) break;
      const double now = norm_l2(residual_of(dict, signal, partial));
      CHECK(now < prev);
      prev = now;
    }

    const bool stopped_ok = code.residual_norm <= cfg.epsilon || code.support.size() == cfg.max_atoms;
    if (!stopped_ok) {
      // only allowed exit otherwise: no atom lowered the residual further
      KsvdConfig c = cfg;
      c.epsilon = 0.0;
      CHECK(omp_encode(dict, signal, c).support.size() == code.support.size());
    }
  }
}

TEST_CASE("omp_encode: bad input") {
  const Dictionary dict(Matrix::identity(3));
  CHECK_THROWS_AS(omp_encode(dict, Vector{1, 2}, tight()), ShapeError);
  CHECK_THROWS_AS(omp_encode(dict, Vector{1, NAN, 0}, tight()), NumericError);
  KsvdConfig bad = tight();
  bad.max_atoms = 4;
  CHECK_THROWS_AS(bad.validate(3), ConfigError);
  bad.max_atoms = 1;
  bad.sweeps = 0;
  CHECK_THROWS_AS(bad.validate(3), ConfigError);
}

TEST_CASE("omp_encode: l2 residual mode") {
  const Dictionary dict(Matrix::identity(3));
  KsvdConfig cfg = tight(0.5, 3);
  cfg.residual_norm = ResidualNorm::l2;
  const SparseCode code = omp_encode(dict, Vector{3.0, 0.4, 0.3}, cfg);
  CHECK(code.support == std::vector<std::size_t>{0});
  CHECK(code.residual_norm == doctest::Approx(0.5));
}

TEST_CASE("batch_encode matches column-wise omp_encode") {
  Rng rng(5);
  const Dictionary dict = random_dictionary(8, 12, rng);
  const Matrix signals = test::random_matrix(8, 10, rng);
  KsvdConfig cfg = tight(0.1, 4);
  const Matrix codes = batch_encode(dict, signals, cfg);
  REQUIRE(codes.rows() == 12);
  REQUIRE(codes.cols() == 10);
  for (std::size_t j = 0; j < 10; ++j) {
    const Vector col = signals.col(j);
    const SparseCode c = omp_encode(dict, col, cfg);
    CHECK(codes.col(j) == c.densify(12));
    CHECK((c.residual_norm <= cfg.epsilon || c.support.size() == cfg.max_atoms ||
           omp_encode(dict, col, tight(0.0, cfg.max_atoms)).support.size() == c.support.size()));
  }

  const Matrix one = batch_encode(dict, Matrix(8, 1, signals.col(0)), cfg);
  CHECK(one.col(0) == omp_encode(dict, signals.col(0), cfg).densify(12));

  const Matrix self = batch_encode(dict, dict.atoms(), tight(1e-8, 4));
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t j = 0; j < 12; ++j) CHECK(self(i, j) == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-12));
}

TEST_CASE("ksvd_dictionary_update on exact data") {
  Rng rng(6);
  const Dictionary dict = random_dictionary(6, 4, rng);
  Matrix codes(4, 9, 0.0);
  for (std::size_t j = 0; j < 9; ++j) codes(j % 4, j) = rng.uniform(0.5, 2.0);
  const Matrix signals = matmul(dict.atoms(), codes);
  const auto up = ksvd_dictionary_update(dict, signals, codes, UnusedAtomPolicy::keep);
  CHECK(reconstruction_error(signals, up.dictionary, up.codes) <= 1e-12);
  for (std::size_t k = 0; k < 4; ++k) {
    const Vector a = dict.atoms().col(k), b = up.dictionary.atoms().col(k);
    const double c = std::abs(dot(a, b));
    CHECK(c == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("ksvd_dictionary_update never increases the error at fixed codes") {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const Dictionary dict = random_dictionary(8, 5, rng);
    Matrix codes = test::random_matrix(5, 12, rng);
    for (auto& v : codes.data())
      if (rng.uniform() < 0.5) v = 0.0;
    const Matrix signals = test::random_matrix(8, 12, rng);
    for (auto policy : {UnusedAtomPolicy::keep, UnusedAtomPolicy::replace_with_worst_residual}) {
      const double before = reconstruction_error(signals, dict, codes);
      const auto up = ksvd_dictionary_update(dict, signals, codes, policy);
      const double after = reconstruction_error(signals, up.dictionary, up.codes);
      CHECK(after <= before + 1e-10);
      for (std::size_t k = 0; k < 5; ++k) CHECK(norm_l2(up.dictionary.atoms().col(k)) == doctest::Approx(1.0).epsilon(1e-10));
      // support pattern is preserved
      for (std::size_t i = 0; i < codes.size(); ++i)
        if (codes.data()[i] == 0.0) CHECK(up.codes.data()[i] == 0.0);
    }
  }
}

TEST_CASE("ksvd_dictionary_update: unused atoms") {
  Rng rng(8);
  const Dictionary dict = random_dictionary(5, 3, rng);
  Matrix codes = test::random_matrix(3, 6, rng);
  for (std::size_t j = 0; j < 6; ++j) codes(1, j) = 0.0;
  const Matrix signals = test::random_matrix(5, 6, rng);

  const auto kept = ksvd_dictionary_update(dict, signals, codes, UnusedAtomPolicy::keep);
  const Vector before = dict.atoms().col(1), after = kept.dictionary.atoms().col(1);
  for (std::size_t i = 0; i < 5; ++i) CHECK(std::memcmp(&before[i], &after[i], sizeof(double)) == 0);

  const auto replaced = ksvd_dictionary_update(dict, signals, codes, UnusedAtomPolicy::replace_with_worst_residual);
  const Vector atom = replaced.dictionary.atoms().col(1);
  CHECK(norm_l2(atom) == doctest::Approx(1.0).epsilon(1e-12));
  // the new atom is one of the (normalized) signals
  bool matches = false;
  for (std::size_t j = 0; j < 6; ++j) {
    const Vector s = signals.col(j);
    if (std::abs(std::abs(dot(s, atom)) - norm_l2(s)) <= 1e-10) matches = true;
  }
  CHECK(matches);
}

TEST_CASE("ksvd_dictionary_update: shape errors") {
  const Dictionary dict(Matrix::identity(3));
  CHECK_THROWS_AS(ksvd_dictionary_update(dict, Matrix(3, 4), Matrix(2, 4), UnusedAtomPolicy::keep), ShapeError);
  CHECK_THROWS_AS(ksvd_dictionary_update(dict, Matrix(2, 4), Matrix(3, 4), UnusedAtomPolicy::keep), ShapeError);
}

TEST_CASE("ksvd_run with one sweep and no update is batch_encode") {
  Rng rng(9);
  const Dictionary dict = random_dictionary(6, 9, rng);
  const Matrix signals = test::random_matrix(6, 7, rng);
  KsvdConfig cfg = tight(0.05, 3);
  const auto run = ksvd_run(signals, dict, cfg);
  CHECK(run.codes == batch_encode(dict, signals, cfg));
  CHECK(run.dictionary == dict);
  REQUIRE(run.error_trace.size() == 1);
  CHECK(run.error_trace[0] == reconstruction_error(signals, dict, run.codes));
}

TEST_CASE("ksvd_run recovers planted sparse signals") {
  Rng rng(10);
  const Dictionary dict = random_dictionary(12, 20, rng);
  Matrix truth(20, 30, 0.0);
  for (std::size_t j = 0; j < 30; ++j)
    for (int s = 0; s < 2; ++s) truth(rng.below(20), j) = rng.uniform(0.5, 1.5);
  const Matrix signals = matmul(dict.atoms(), truth);
  KsvdConfig cfg = tight(1e-10, 12);
  cfg.sweeps = 3;
  const auto run = ksvd_run(signals, dict, cfg);
  CHECK(run.error_trace.back() <= 1e-6);
}

TEST_CASE("ksvd_run stage-wise monotonicity with dictionary updates") {
  Rng rng(11);
  const Dictionary dict = random_dictionary(8, 10, rng);
  const Matrix signals = test::random_matrix(8, 25, rng);
  KsvdConfig cfg = tight(0.2, 3);
  cfg.sweeps = 10;
  cfg.update_dictionary = true;
  const auto run = ksvd_run(signals, dict, cfg);
  REQUIRE(run.error_trace.size() == 10);
  REQUIRE(run.coding_error.size() == 10);
  // the update stage of each sweep starts from the codes its coding stage produced
  for (std::size_t s = 0; s < 10; ++s) CHECK(run.error_trace[s] <= run.coding_error[s] + 1e-10);
}

TEST_CASE("ksvd_run is deterministic") {
  Rng rng(12);
  const Dictionary dict = random_dictionary(8, 10, rng);
  const Matrix signals = test::random_matrix(8, 25, rng);
  KsvdConfig cfg = tight(0.2, 3);
  cfg.sweeps = 4;
  cfg.update_dictionary = true;
  const auto a = ksvd_run(signals, dict, cfg), b = ksvd_run(signals, dict, cfg);
  CHECK(a.codes == b.codes);
  CHECK(a.dictionary == b.dictionary);
  CHECK(a.error_trace == b.error_trace);
}

TEST_CASE("sparse_columns reports nonzero supports") {
  const Dictionary dict(Matrix::identity(3));
  const Matrix codes{{1, 0}, {0, 0}, {2, 3}};
  const Matrix signals{{1, 0}, {0, 1}, {2, 3}};
  const auto cols = sparse_columns(dict, signals, codes, ResidualNorm::l1);
  CHECK(cols[0].support == std::vector<std::size_t>{0, 2});
  CHECK(cols[0].residual_norm == 0.0);
  CHECK(cols[1].support == std::vector<std::size_t>{2});
  CHECK(cols[1].residual_norm == 1.0);
}
