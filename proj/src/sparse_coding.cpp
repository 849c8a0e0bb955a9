#include "r2dl/sparse_coding.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "r2dl/errors.hpp"
#include "r2dl/numerics.hpp"

namespace r2dl {

namespace {

constexpr double kUnitTolerance = 1e-10;

void check_unit_columns(const Matrix& atoms) {
  if (atoms.rows() == 0 || atoms.cols() == 0) throw InvalidDictionaryError("dictionary must be at least 1x1");
  if (!atoms.all_finite()) throw InvalidDictionaryError("dictionary has non-finite entries");
  for (std::size_t j = 0; j < atoms.cols(); ++j) {
    const double n = norm_l2(atoms.col(j));
    if (std::abs(n - 1.0) > kUnitTolerance) {
      throw InvalidDictionaryError("atom " + std::to_string(j) + " has norm " + std::to_string(n));
    }
  }
}

// Flips the sign of `atom` (and the aligned code entries) so its
// largest-magnitude entry is non-negative; lowest index wins ties.
void canonical_sign(std::span<double> atom, std::span<double> coeffs) {
  std::size_t arg = 0;
  for (std::size_t i = 1; i < atom.size(); ++i) {
    if (std::abs(atom[i]) > std::abs(atom[arg])) arg = i;
  }
  if (atom[arg] >= 0.0) return;
  for (double& a : atom) a = -a;
  for (double& c : coeffs) c = -c;
}

Matrix residual_matrix(const Matrix& signals, const Matrix& atoms, const Matrix& codes) {
  Matrix r = matmul(atoms, codes);
  for (std::size_t i = 0; i < r.size(); ++i) r.data()[i] = signals.data()[i] - r.data()[i];
  return r;
}

}  // namespace

Dictionary::Dictionary(Matrix atoms) : atoms_(std::move(atoms)) { check_unit_columns(atoms_); }

Dictionary::Normalized Dictionary::normalize(const Matrix& raw) {
  if (raw.rows() == 0 || raw.cols() == 0) throw InvalidDictionaryError("dictionary must be at least 1x1");
  if (!raw.all_finite()) throw InvalidDictionaryError("dictionary has non-finite entries");
  Matrix atoms = raw;
  Vector norms(raw.cols());
  for (std::size_t j = 0; j < raw.cols(); ++j) {
    const double n = norm_l2(raw.col(j));
    if (n == 0.0) throw InvalidDictionaryError("atom " + std::to_string(j) + " is the zero vector");
    norms[j] = n;
    for (std::size_t i = 0; i < raw.rows(); ++i) atoms(i, j) = raw(i, j) / n;
  }
  return {Dictionary(std::move(atoms)), std::move(norms)};
}

Vector SparseCode::densify(std::size_t num_atoms) const {
  Vector out(num_atoms, 0.0);
  for (std::size_t i = 0; i < support.size(); ++i) out.at(support[i]) = coefficients[i];
  return out;
}

void KsvdConfig::validate(std::size_t num_atoms) const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("ksvd: epsilon must be finite and >= 0");
  if (max_atoms < 1) throw ConfigError("ksvd: max_atoms must be >= 1");
  if (max_atoms > num_atoms) {
    throw ConfigError("ksvd: max_atoms " + std::to_string(max_atoms) + " exceeds dictionary size " +
                      std::to_string(num_atoms));
  }
  if (sweeps < 1) throw ConfigError("ksvd: sweeps must be >= 1");
}

double residual_norm(std::span<const double> residual, ResidualNorm norm) {
  return norm == ResidualNorm::l1 ? norm_l1(residual) : norm_l2(residual);
}

SparseCode omp_encode(const Dictionary& dict, std::span<const double> signal, const KsvdConfig& cfg) {
  const Matrix& atoms = dict.atoms();
  const std::size_t d = dict.dim();
  const std::size_t k_atoms = dict.num_atoms();
  if (signal.size() != d) {
    throw ShapeError("omp_encode: signal of length " + std::to_string(signal.size()) + " for dictionary of dimension " +
                     std::to_string(d));
  }
  for (double v : signal) {
    if (!std::isfinite(v)) throw NumericError("omp_encode: non-finite signal");
  }
  cfg.validate(k_atoms);

  SparseCode code;
  Vector residual(signal.begin(), signal.end());
  code.residual_norm = residual_norm(residual, cfg.residual_norm);
  // progress is judged in l2, which the least-squares refit can only lower;
  // the l1 norm may rise on the way to an exact fit
  double energy = norm_l2(residual);
  std::vector<bool> chosen(k_atoms, false);

  while (code.residual_norm > cfg.epsilon && code.support.size() < cfg.max_atoms) {
    const Vector corr = matvec_transposed(atoms, residual);
    std::size_t best = k_atoms;
    double best_abs = 0.0;
    for (std::size_t j = 0; j < k_atoms; ++j) {
      if (chosen[j]) continue;
      const double c = std::abs(corr[j]);
      if (c > best_abs) {
        best_abs = c;
        best = j;
      }
    }
    if (best == k_atoms) break;

    std::vector<std::size_t> support = code.support;
    support.push_back(best);
    Matrix sub(d, support.size());
    for (std::size_t s = 0; s < support.size(); ++s) {
      for (std::size_t i = 0; i < d; ++i) sub(i, s) = atoms(i, support[s]);
    }
    Vector coeffs;
    try {
      coeffs = least_squares(sub, signal);
    } catch (const NumericError&) {
      break;  // atom lies in the span of the current support
    } catch (const ShapeError&) {
      break;  // more atoms than dimensions
    }
    const Vector fit = matvec(sub, coeffs);
    Vector next(d);
    for (std::size_t i = 0; i < d; ++i) next[i] = signal[i] - fit[i];
    const double next_energy = norm_l2(next);
    if (!(next_energy < energy)) break;

    chosen[best] = true;
    code.support = std::move(support);
    code.coefficients = std::move(coeffs);
    code.residual_norm = residual_norm(next, cfg.residual_norm);
    residual = std::move(next);
    energy = next_energy;
  }
  return code;
}

std::vector<SparseCode> encode_columns(const Dictionary& dict, const Matrix& signals, const KsvdConfig& cfg) {
  if (signals.rows() != dict.dim()) {
    throw ShapeError("encode: signals have " + std::to_string(signals.rows()) + " rows, dictionary dimension is " +
                     std::to_string(dict.dim()));
  }
  std::vector<SparseCode> out;
  out.reserve(signals.cols());
  for (std::size_t j = 0; j < signals.cols(); ++j) out.push_back(omp_encode(dict, signals.col(j), cfg));
  return out;
}

Matrix batch_encode(const Dictionary& dict, const Matrix& signals, const KsvdConfig& cfg) {
  const auto codes = encode_columns(dict, signals, cfg);
  Matrix out(dict.num_atoms(), signals.cols());
  for (std::size_t j = 0; j < codes.size(); ++j) {
    const auto& c = codes[j];
    for (std::size_t s = 0; s < c.support.size(); ++s) out(c.support[s], j) = c.coefficients[s];
  }
  return out;
}

DictionaryUpdate ksvd_dictionary_update(const Dictionary& dict, const Matrix& signals, const Matrix& codes,
                                        UnusedAtomPolicy policy) {
  const std::size_t d = dict.dim();
  const std::size_t k_atoms = dict.num_atoms();
  const std::size_t m = signals.cols();
  if (signals.rows() != d || codes.rows() != k_atoms || codes.cols() != m) {
    throw ShapeError("ksvd_dictionary_update: expected signals " + std::to_string(d) + "xM and codes " +
                     std::to_string(k_atoms) + "xM");
  }

  Matrix atoms = dict.atoms();
  Matrix x = codes;
  std::vector<bool> used_for_replacement(m, false);
  const double signal_scale = frobenius_norm(signals);

  for (std::size_t k = 0; k < k_atoms; ++k) {
    std::vector<std::size_t> omega;
    for (std::size_t i = 0; i < m; ++i) {
      if (x(k, i) != 0.0) omega.push_back(i);
    }

    if (omega.empty()) {
      if (policy == UnusedAtomPolicy::keep) continue;
      const Matrix r = residual_matrix(signals, atoms, x);
      std::size_t worst = m;
      double worst_norm = 1e-12 * signal_scale;
      for (std::size_t i = 0; i < m; ++i) {
        if (used_for_replacement[i]) continue;
        const double n = norm_l2(r.col(i));
        if (n > worst_norm) {
          worst_norm = n;
          worst = i;
        }
      }
      if (worst == m) continue;
      Vector atom = signals.col(worst);
      const double n = norm_l2(atom);
      if (n == 0.0) continue;
      for (double& a : atom) a /= n;
      canonical_sign(atom, {});
      atoms.set_col(k, atom);
      used_for_replacement[worst] = true;
      continue;
    }

    // Residual restricted to omega with atom k's contribution added back.
    Matrix restricted(d, omega.size());
    for (std::size_t c = 0; c < omega.size(); ++c) {
      const std::size_t i = omega[c];
      for (std::size_t r = 0; r < d; ++r) {
        double acc = signals(r, i);
        for (std::size_t j = 0; j < k_atoms; ++j) {
          if (j != k) acc -= atoms(r, j) * x(j, i);
        }
        restricted(r, c) = acc;
      }
    }

    const SvdResult svd = thin_svd(restricted);
    const double s1 = svd.singular_values.front();
    if (s1 == 0.0) {
      for (std::size_t i : omega) x(k, i) = 0.0;
      continue;
    }
    Vector atom = svd.u.col(0);
    Vector row(omega.size());
    for (std::size_t c = 0; c < omega.size(); ++c) row[c] = s1 * svd.vt(0, c);
    canonical_sign(atom, row);
    atoms.set_col(k, atom);
    for (std::size_t c = 0; c < omega.size(); ++c) x(k, omega[c]) = row[c];
  }
  return {Dictionary(std::move(atoms)), std::move(x)};
}

double reconstruction_error(const Matrix& signals, const Dictionary& dict, const Matrix& codes) {
  return frobenius_norm(residual_matrix(signals, dict.atoms(), codes));
}

std::vector<SparseCode> sparse_columns(const Dictionary& dict, const Matrix& signals, const Matrix& codes,
                                       ResidualNorm norm) {
  if (codes.rows() != dict.num_atoms() || signals.cols() != codes.cols() || signals.rows() != dict.dim()) {
    throw ShapeError("sparse_columns: inconsistent shapes");
  }
  const Matrix r = residual_matrix(signals, dict.atoms(), codes);
  std::vector<SparseCode> out(codes.cols());
  for (std::size_t j = 0; j < codes.cols(); ++j) {
    for (std::size_t k = 0; k < codes.rows(); ++k) {
      if (codes(k, j) != 0.0) {
        out[j].support.push_back(k);
        out[j].coefficients.push_back(codes(k, j));
      }
    }
    out[j].residual_norm = residual_norm(r.col(j), norm);
  }
  return out;
}

KsvdResult ksvd_run(const Matrix& signals, const Dictionary& init_dict, const KsvdConfig& cfg) {
  cfg.validate(init_dict.num_atoms());
  KsvdResult result{init_dict, Matrix(init_dict.num_atoms(), signals.cols()), {}, {}};
  for (std::size_t sweep = 0; sweep < cfg.sweeps; ++sweep) {
    result.codes = batch_encode(result.dictionary, signals, cfg);
    const double coded = reconstruction_error(signals, result.dictionary, result.codes);
    result.coding_error.push_back(coded);
    if (cfg.update_dictionary) {
      auto updated = ksvd_dictionary_update(result.dictionary, signals, result.codes, cfg.unused_atom_policy);
      result.dictionary = std::move(updated.dictionary);
      result.codes = std::move(updated.codes);
      result.error_trace.push_back(reconstruction_error(signals, result.dictionary, result.codes));
    } else {
      result.error_trace.push_back(coded);
    }
  }
  return result;
}

}  // namespace r2dl
