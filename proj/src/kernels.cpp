#include "hlmdp/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include <omp.h>

namespace hlmdp {

std::size_t CsrMatrix::max_row_size() const {
  std::size_t best = 0;
  for (std::size_t r = 0; r < n_rows(); ++r) best = std::max(best, row_size(r));
  return best;
}

namespace kernels {
namespace {

inline double row_dot(const CsrMatrix& m, std::size_t r, std::span<const double> x) {
  double acc = 0.0;
  for (std::size_t e = m.row_offsets[r]; e < m.row_offsets[r + 1]; ++e) {
    acc += m.vals[e] * x[m.cols[e]];
  }
  return acc;
}

inline double rel_change(double prev, double next, double floor) {
  double diff = std::fabs(next - prev);
  if (diff == 0.0) return 0.0;
  return diff / std::max(std::fabs(next), floor);
}

}  // namespace

void scaled_matvec_serial(const CsrMatrix& m, std::span<const double> scale,
                          std::span<const double> x, std::span<double> out) {
  const std::size_t n = m.n_rows();
  for (std::size_t r = 0; r < n; ++r) {
    double s = scale.empty() ? 1.0 : scale[r];
    out[r] = s * row_dot(m, r, x);
  }
}

void scaled_matvec_omp(const CsrMatrix& m, std::span<const double> scale,
                       std::span<const double> x, std::span<double> out) {
  const auto n = static_cast<std::int64_t>(m.n_rows());
  const bool unit = scale.empty();
#pragma omp parallel for schedule(static) if (n > 2048)
  for (std::int64_t r = 0; r < n; ++r) {
    const auto row = static_cast<std::size_t>(r);
    double s = unit ? 1.0 : scale[row];
    out[row] = s * row_dot(m, row, x);
  }
}

double max_relative_change_serial(std::span<const double> prev, std::span<const double> next,
                                  double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < next.size(); ++i) {
    worst = std::max(worst, rel_change(prev[i], next[i], floor));
  }
  return worst;
}

double max_relative_change_omp(std::span<const double> prev, std::span<const double> next,
                               double floor) {
  const auto n = static_cast<std::int64_t>(next.size());
  double worst = 0.0;
#pragma omp parallel for schedule(static) reduction(max : worst) if (n > 2048)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    worst = std::max(worst, rel_change(prev[k], next[k], floor));
  }
  return worst;
}

}  // namespace kernels
}  // namespace hlmdp
