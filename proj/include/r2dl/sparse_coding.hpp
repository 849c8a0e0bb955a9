#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "r2dl/matrix.hpp"

namespace r2dl {

/// A d x K matrix whose columns (atoms) have unit l2 norm.
class Dictionary {
 public:
  /// Takes atoms that are already unit-norm (checked to 1e-10).
  explicit Dictionary(Matrix atoms);

  struct Normalized;
  /// Rescales every column of `raw` to unit norm and returns the factors.
  static Normalized normalize(const Matrix& raw);

  const Matrix& atoms() const noexcept { return atoms_; }
  std::size_t dim() const noexcept { return atoms_.rows(); }
  std::size_t num_atoms() const noexcept { return atoms_.cols(); }

  friend bool operator==(const Dictionary&, const Dictionary&) = default;

 private:
  Matrix atoms_;
};

struct Dictionary::Normalized {
  Dictionary dictionary;
  Vector norms;  ///< original column norms; raw = atoms · diag(norms)
};

struct SparseCode {
  std::vector<std::size_t> support;
  Vector coefficients;  ///< aligned with support
  double residual_norm = 0.0;  ///< in the norm selected by KsvdConfig::residual_norm

  /// Dense K-vector.
  Vector densify(std::size_t num_atoms) const;
};

enum class UnusedAtomPolicy { keep, replace_with_worst_residual };
enum class ResidualNorm { l1, l2 };

struct KsvdConfig {
  double epsilon = 0.045;
  std::size_t max_atoms = 8;
  std::size_t sweeps = 100;
  bool update_dictionary = false;
  UnusedAtomPolicy unused_atom_policy = UnusedAtomPolicy::replace_with_worst_residual;
  ResidualNorm residual_norm = ResidualNorm::l1;

  /// Throws ConfigError unless epsilon >= 0, 1 <= max_atoms <= num_atoms and sweeps >= 1.
  void validate(std::size_t num_atoms) const;

  friend bool operator==(const KsvdConfig&, const KsvdConfig&) = default;
};

double residual_norm(std::span<const double> residual, ResidualNorm norm);

/// Error-constrained orthogonal matching pursuit.
///
/// Picks the atom with the largest absolute inner product against the current
/// residual (lowest index on ties), refits all selected coefficients by least
/// squares and accepts the atom only if the l2 residual strictly drops.
/// Stops once the residual norm is <= epsilon, max_atoms atoms are in the
/// support, or no atom is accepted.
SparseCode omp_encode(const Dictionary& dict, std::span<const double> signal, const KsvdConfig& cfg);

/// omp_encode applied to every column of `signals` (d x M), sequentially.
std::vector<SparseCode> encode_columns(const Dictionary& dict, const Matrix& signals,
                                       const KsvdConfig& cfg);

/// Dense K x M code matrix; column j is omp_encode of signal column j.
Matrix batch_encode(const Dictionary& dict, const Matrix& signals, const KsvdConfig& cfg);

struct DictionaryUpdate {
  Dictionary dictionary;
  Matrix codes;
};

/// One k-SVD dictionary pass: atoms are visited in index order and each used
/// atom, together with the nonzero entries of its code row, is replaced by the
/// leading singular pair of the residual restricted to the signals that use it.
DictionaryUpdate ksvd_dictionary_update(const Dictionary& dict, const Matrix& signals, const Matrix& codes,
                                        UnusedAtomPolicy policy);

struct KsvdResult {
  Dictionary dictionary;
  Matrix codes;
  std::vector<double> error_trace;   ///< Frobenius error at the end of each sweep
  std::vector<double> coding_error;  ///< Frobenius error right after each coding stage
};

/// Runs exactly cfg.sweeps sweeps of batch coding followed (if enabled) by a
/// dictionary update.
KsvdResult ksvd_run(const Matrix& signals, const Dictionary& init_dict, const KsvdConfig& cfg);

/// ||signals - dict.atoms() · codes||_F
double reconstruction_error(const Matrix& signals, const Dictionary& dict, const Matrix& codes);

/// Per-column view of a dense code matrix: support = nonzero rows, residual
/// measured against `signals` in the requested norm.
std::vector<SparseCode> sparse_columns(const Dictionary& dict, const Matrix& signals, const Matrix& codes,
                                       ResidualNorm norm);

}  // namespace r2dl
