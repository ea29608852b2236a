#include "driftfuse/qr.hpp"

#include <cmath>
#include <vector>

#include "driftfuse/errors.hpp"

namespace driftfuse {

QrFactors qr_decompose(const Matrix& w) {
  if (w.empty()) throw ShapeError("qr_decompose: empty matrix");
  if (!all_finite(w)) throw ShapeError("qr_decompose: non-finite input");

  const std::size_t m = w.rows();
  const std::size_t n = w.cols();
  Matrix r = w;
  Matrix q = Matrix::identity(m);
  std::vector<double> v(m);

  const std::size_t steps = std::min(m - 1, n);
  for (std::size_t j = 0; j < steps; ++j) {
    double tail = 0.0;
    for (std::size_t i = j + 1; i < m; ++i) tail += r(i, j) * r(i, j);
    if (tail == 0.0) continue;  // column already reduced

    const double x0 = r(j, j);
    const double norm = std::sqrt(x0 * x0 + tail);
    const double alpha = x0 > 0.0 ? -norm : norm;

    v[j] = x0 - alpha;
    for (std::size_t i = j + 1; i < m; ++i) v[i] = r(i, j);
    const double vtv = v[j] * v[j] + tail;
    const double scale = 2.0 / vtv;

    // R <- H R on the trailing block.
    for (std::size_t c = j; c < n; ++c) {
      double dot = 0.0;
      for (std::size_t i = j; i < m; ++i) dot += v[i] * r(i, c);
      dot *= scale;
      for (std::size_t i = j; i < m; ++i) r(i, c) -= dot * v[i];
    }
    r(j, j) = alpha;
    for (std::size_t i = j + 1; i < m; ++i) r(i, j) = 0.0;

    // Q <- Q H.
    for (std::size_t row = 0; row < m; ++row) {
      double dot = 0.0;
      for (std::size_t i = j; i < m; ++i) dot += q(row, i) * v[i];
      dot *= scale;
      for (std::size_t i = j; i < m; ++i) q(row, i) -= dot * v[i];
    }
  }

  // Sign convention: non-negative diagonal of R.
  const std::size_t diag = std::min(m, n);
  for (std::size_t i = 0; i < diag; ++i) {
    if (r(i, i) < 0.0) {
      for (std::size_t c = i; c < n; ++c) r(i, c) = -r(i, c);
      for (std::size_t row = 0; row < m; ++row) q(row, i) = -q(row, i);
    }
  }
  return {std::move(q), std::move(r)};
}

}  // namespace driftfuse
