#pragma once

#include "driftfuse/matrix.hpp"

namespace driftfuse {

struct QrFactors {
  Matrix q;  // m x m, orthogonal
  Matrix r;  // m x n, upper triangular, non-negative leading diagonal
};

/// Full Householder QR of an m x n matrix.
///
/// Q is square (m x m) so that Qᵀ·X stays shape-compatible with the input
/// for any m x n X. Entries of R below the diagonal are exact zeros and the
/// first min(m, n) diagonal entries are made non-negative, which makes the
/// factorization unique for full-rank inputs.
///
/// Throws ShapeError on an empty or non-finite input.
QrFactors qr_decompose(const Matrix& w);

}  // namespace driftfuse
