#pragma once

#include <cstddef>
#include <span>

#include "r2dl/matrix.hpp"

namespace r2dl {

struct SvdResult {
  Matrix u;                ///< m x r, orthonormal columns
  Vector singular_values;  ///< r values, descending, non-negative
  Matrix vt;               ///< r x n, orthonormal rows
};

Matrix matmul(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, std::span<const double> x);
/// aᵀ·x without forming the transpose.
Vector matvec_transposed(const Matrix& a, std::span<const double> x);

/// Thin SVD by one-sided (Hestenes) Jacobi rotations. r = min(rows, cols).
/// Columns of u belonging to zero singular values are completed to an
/// orthonormal set.
SvdResult thin_svd(const Matrix& a);

Vector softmax(std::span<const double> logits);
double cross_entropy(std::span<const double> probs, std::size_t label);

double dot(std::span<const double> a, std::span<const double> b);
double norm_l1(std::span<const double> v);
double norm_l2(std::span<const double> v);
double frobenius_norm(const Matrix& a);

/// Least-squares solution of min ||a·x - b||₂ via Householder QR; a must have
/// full column rank and rows >= cols.
Vector least_squares(const Matrix& a, std::span<const double> b);

}  // namespace r2dl
