#include "r2dl/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "r2dl/errors.hpp"

namespace r2dl {

namespace {

std::string shape_of(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

// One-sided Jacobi on a tall matrix (rows >= cols).
SvdResult jacobi_tall(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  Matrix u = a;
  Matrix v = Matrix::identity(n);

  constexpr int kMaxSweeps = 100;
  constexpr double kTol = 1e-15;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += u(i, p) * u(i, p);
          beta += u(i, q) * u(i, q);
          gamma += u(i, p) * u(i, q);
        }
        if (gamma == 0.0 || std::abs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double up = u(i, p), uq = u(i, q);
          u(i, p) = c * up - s * uq;
          u(i, q) = s * up + c * uq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) break;
  }

  Vector sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += u(i, j) * u(i, j);
    sigma[j] = std::sqrt(s);
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  const double sigma_max = n == 0 ? 0.0 : sigma[order.front()];
  const double zero_cut = sigma_max * 1e-14;

  SvdResult out{Matrix(m, n), Vector(n), Matrix(n, n)};
  std::vector<bool> filled(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.singular_values[k] = sigma[j];
    for (std::size_t i = 0; i < n; ++i) out.vt(k, i) = v(i, j);
    if (sigma[j] > zero_cut && sigma[j] > 0.0) {
      for (std::size_t i = 0; i < m; ++i) out.u(i, k) = u(i, j) / sigma[j];
      filled[k] = true;
    }
  }

  // Complete the columns of null singular values with Gram-Schmidt over the
  // canonical basis (two passes for orthogonality).
  std::size_t basis = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (filled[k]) continue;
    while (basis < m) {
      Vector cand(m, 0.0);
      cand[basis++] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < n; ++j) {
          if (!filled[j]) continue;
          double proj = 0.0;
          for (std::size_t i = 0; i < m; ++i) proj += out.u(i, j) * cand[i];
          for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * out.u(i, j);
        }
      }
      const double nrm = norm_l2(cand);
      if (nrm > 1e-8) {
        for (std::size_t i = 0; i < m; ++i) out.u(i, k) = cand[i] / nrm;
        filled[k] = true;
        break;
      }
    }
  }
  return out;
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_of(a) + " times " + shape_of(b));
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw ShapeError("matvec: " + shape_of(a) + " times vector of " + std::to_string(x.size()));
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size()) throw ShapeError("matvec_transposed: " + shape_of(a) + " with vector of " + std::to_string(x.size()));
  Vector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += r[j] * xi;
  }
  return y;
}

SvdResult thin_svd(const Matrix& a) {
  if (a.empty()) throw ShapeError("thin_svd: empty matrix");
  if (!a.all_finite()) throw NumericError("thin_svd: non-finite input");
  if (a.rows() >= a.cols()) return jacobi_tall(a);
  SvdResult t = jacobi_tall(a.transposed());
  return SvdResult{t.vt.transposed(), std::move(t.singular_values), t.u.transposed()};
}

Vector softmax(std::span<const double> logits) {
  if (logits.empty()) throw ShapeError("softmax: empty vector");
  const double shift = *std::max_element(logits.begin(), logits.end());
  if (!std::isfinite(shift)) throw NumericError("softmax: non-finite logits");
  Vector out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) throw NumericError("softmax: non-finite logits");
    out[i] = std::exp(logits[i] - shift);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

double cross_entropy(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) {
    throw IndexError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                     std::to_string(probs.size()) + " classes");
  }
  const double p = probs[label];
  if (p <= 0.0) throw NumericError("cross_entropy: zero probability on the target class");
  return std::max(0.0, -std::log(p));
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm_l1(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += std::abs(x);
  return s;
}

double norm_l2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double frobenius_norm(const Matrix& a) { return norm_l2(a.data()); }

Vector least_squares(const Matrix& a, std::span<const double> b) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  if (b.size() != m) throw ShapeError("least_squares: rhs length mismatch");
  if (m < n) throw ShapeError("least_squares: underdetermined system");

  Matrix r = a;
  Vector y(b.begin(), b.end());
  Vector w(m);
  for (std::size_t k = 0; k < n; ++k) {
    double nrm = 0.0;
    for (std::size_t i = k; i < m; ++i) nrm += r(i, k) * r(i, k);
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) throw NumericError("least_squares: rank-deficient system");
    const double alpha = r(k, k) > 0.0 ? -nrm : nrm;
    for (std::size_t i = k; i < m; ++i) w[i] = r(i, k);
    w[k] -= alpha;
    double wn = 0.0;
    for (std::size_t i = k; i < m; ++i) wn += w[i] * w[i];
    if (wn > 0.0) {
      for (std::size_t j = k; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = k; i < m; ++i) s += w[i] * r(i, j);
        const double f = 2.0 * s / wn;
        for (std::size_t i = k; i < m; ++i) r(i, j) -= f * w[i];
      }
      double s = 0.0;
      for (std::size_t i = k; i < m; ++i) s += w[i] * y[i];
      const double f = 2.0 * s / wn;
      for (std::size_t i = k; i < m; ++i) y[i] -= f * w[i];
    }
  }

  double diag_max = 0.0;
  for (std::size_t k = 0; k < n; ++k) diag_max = std::max(diag_max, std::abs(r(k, k)));
  Vector x(n, 0.0);
  for (std::size_t k = n; k-- > 0;) {
    if (std::abs(r(k, k)) <= diag_max * 1e-13) {
      throw NumericError("least_squares: rank-deficient system");
    }
    double s = y[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= r(k, j) * x[j];
    x[k] = s / r(k, k);
  }
  return x;
}

}  // namespace r2dl
