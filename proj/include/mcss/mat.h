// mcss/mat.h
//
// Dense complex linear algebra for small Hermitian matrices (mic counts,
// n <= 16). Row-major storage, a[i * n + j].

#ifndef MCSS_MAT_H_
#define MCSS_MAT_H_

#include <vector>

#include "mcss/common.h"

namespace mcss {

struct EigResult {
  std::vector<double> values;   // ascending
  std::vector<cplx> vectors;    // column k (vectors[i * n + k]) pairs values[k]
};

// Cyclic Jacobi eigendecomposition of a Hermitian matrix. The sweep order is
// fixed (row-major upper triangle) so results are reproducible.
EigResult hermitian_eig(const cplx* a, int n);

// Principal eigenvector (largest eigenvalue), unit norm.
std::vector<cplx> principal_eigenvector(const cplx* a, int n);

// In-place lower Cholesky factor of a Hermitian positive definite matrix.
// Returns false if a non-positive pivot is met.
bool cholesky_factor(std::vector<cplx>& a, int n);

// Solves A x = b given the lower factor from cholesky_factor.
std::vector<cplx> cholesky_solve(const std::vector<cplx>& lower, int n,
                                 const cplx* b);

// Solves a Hermitian system, falling back to an eigendecomposition
// pseudo-inverse when Cholesky fails. *used_pinv reports the fallback.
std::vector<cplx> hermitian_solve(const std::vector<cplx>& a, int n,
                                  const cplx* b, bool* used_pinv = nullptr);

double frobenius_norm(const cplx* a, int n);

inline void matvec(const cplx* a, int n, const cplx* x, cplx* y) {
  for (int i = 0; i < n; ++i) {
    cplx s(0.0, 0.0);
    for (int j = 0; j < n; ++j) s += a[i * n + j] * x[j];
    y[i] = s;
  }
}

inline cplx dot_conj(const cplx* x, const cplx* y, int n) {  // x^H y
  cplx s(0.0, 0.0);
  for (int i = 0; i < n; ++i) s += std::conj(x[i]) * y[i];
  return s;
}

}  // namespace mcss

#endif  // MCSS_MAT_H_
