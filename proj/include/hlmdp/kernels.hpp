#pragma once

// Sparse kernels shared by the flat solver and the exit-state system.
//
// Every kernel has a serial reference and an OpenMP variant. The two produce
// bitwise-identical output: each output entry is computed by exactly one
// thread with the same summation order, and the residual is a max-reduction.

#include <cstddef>
#include <span>
#include <vector>

namespace hlmdp {

enum class Backend { serial, openmp };

/// Compressed sparse rows. Column indices within a row are strictly increasing.
struct CsrMatrix {
  std::size_t n_cols = 0;
  std::vector<std::size_t> row_offsets{0};
  std::vector<std::size_t> cols;
  std::vector<double> vals;

  std::size_t n_rows() const { return row_offsets.size() - 1; }
  std::size_t row_size(std::size_t r) const { return row_offsets[r + 1] - row_offsets[r]; }
  std::span<const std::size_t> row_cols(std::size_t r) const {
    return {cols.data() + row_offsets[r], row_size(r)};
  }
  std::span<const double> row_vals(std::size_t r) const {
    return {vals.data() + row_offsets[r], row_size(r)};
  }
  std::size_t max_row_size() const;
};

namespace kernels {

// out[r] = scale[r] * sum_c m(r, c) * x[c]. An empty scale means all ones.
void scaled_matvec_serial(const CsrMatrix& m, std::span<const double> scale,
                          std::span<const double> x, std::span<double> out);
void scaled_matvec_omp(const CsrMatrix& m, std::span<const double> scale,
                       std::span<const double> x, std::span<double> out);

// max_i |next[i] - prev[i]| / max(next[i], floor). Entries that are both zero
// contribute zero.
double max_relative_change_serial(std::span<const double> prev, std::span<const double> next,
                                  double floor);
double max_relative_change_omp(std::span<const double> prev, std::span<const double> next,
                               double floor);

inline void scaled_matvec(Backend b, const CsrMatrix& m, std::span<const double> scale,
                          std::span<const double> x, std::span<double> out) {
  if (b == Backend::openmp) {
    scaled_matvec_omp(m, scale, x, out);
  } else {
    scaled_matvec_serial(m, scale, x, out);
  }
}

inline double max_relative_change(Backend b, std::span<const double> prev,
                                  std::span<const double> next, double floor) {
  return b == Backend::openmp ? max_relative_change_omp(prev, next, floor)
                              : max_relative_change_serial(prev, next, floor);
}

}  // namespace kernels
}  // namespace hlmdp
