// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "loramerge/matrix.hpp"

namespace loramerge {

/// Economy SVD: source = u * diag(sigma) * v^T with sigma descending and the
/// columns of u and v orthonormal. Column signs are fixed so the first
/// nonzero component of each v column is non-negative.
struct SvdTriple {
    Matrix u;                  // d_out x q
    std::vector<float> sigma;  // q values, descending, >= 0
    Matrix v;                  // d_in x q
};

struct QrResult {
    Matrix q;  // m x n, orthonormal columns
    Matrix r;  // n x n, upper triangular, non-negative diagonal
};

/// Householder thin QR of an m x n matrix with m >= n (transpose wider
/// inputs at the call site).
QrResult thin_qr(const Matrix& m);

/// One-sided Jacobi SVD of a square matrix. The input is scaled to unit
/// Frobenius norm internally; sweeps stop once every off-diagonal column
/// dot product of the scaled matrix drops below 1e-12, or fail with a
/// NumericError carrying the residual after 100 sweeps.
SvdTriple jacobi_svd(const Matrix& c);

/// One (B, A) term of a sum of low-rank products.
struct LowRankTerm {
    Matrix b;  // d_out x r_i
    Matrix a;  // r_i x d_in
};

/// SVD of sum_i B_i * A_i without materializing the d_out x d_in product:
/// thin QR of the stacked B factors and of the stacked A^T factors, then
/// Jacobi SVD of the small core. Requires sum(r_i) <= min(d_out, d_in).
SvdTriple lowrank_svd(const std::vector<LowRankTerm>& factors);

/// u * diag(sigma) * v^T, for reconstruction checks.
Matrix reconstruct(const SvdTriple& t);

}  // namespace loramerge
