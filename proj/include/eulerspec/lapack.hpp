#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#ifndef lapack_complex_float
#define lapack_complex_float std::complex<float>
#endif
#ifndef lapack_complex_double
#define lapack_complex_double std::complex<double>
#endif
#include <lapacke.h>

namespace eulerspec::lapack {

struct EigenResult {
  std::vector<std::complex<double>> values;
  int info{0};  // > 0: QR failed to converge; values[info:] are still valid
};

/// All eigenvalues of a general real square matrix (dgeev, no vectors).
inline EigenResult eigenvalues(Eigen::MatrixXd a) {
  const lapack_int n = static_cast<lapack_int>(a.rows());
  std::vector<double> wr(static_cast<std::size_t>(n)), wi(static_cast<std::size_t>(n));
  EigenResult r;
  if (n == 0) return r;
  r.info = LAPACKE_dgeev(LAPACK_COL_MAJOR, 'N', 'N', n, a.data(), n, wr.data(), wi.data(), nullptr, 1, nullptr, 1);
  for (lapack_int k = 0; k < n; ++k) r.values.emplace_back(wr[k], wi[k]);
  return r;
}

struct SvdResult {
  std::vector<double> values;  // descending
  int info{0};
};

/// Singular values only (dgesdd, jobz = 'N').
inline SvdResult singular_values(Eigen::MatrixXd a) {
  const lapack_int m = static_cast<lapack_int>(a.rows()), n = static_cast<lapack_int>(a.cols());
  SvdResult r;
  if (m == 0 || n == 0) return r;
  r.values.resize(static_cast<std::size_t>(std::min(m, n)));
  r.info = LAPACKE_dgesdd(LAPACK_COL_MAJOR, 'N', m, n, a.data(), m, r.values.data(), nullptr, 1, nullptr, 1);
  return r;
}

}  // namespace eulerspec::lapack
