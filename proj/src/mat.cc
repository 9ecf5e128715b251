// mat.cc

#include "mcss/mat.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mcss {

double frobenius_norm(const cplx* a, int n) {
  double s = 0.0;
  for (int i = 0; i < n * n; ++i) s += std::norm(a[i]);
  return std::sqrt(s);
}

static double offdiag_norm(const std::vector<cplx>& a, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) s += std::norm(a[i * n + j]);
  return std::sqrt(2.0 * s);
}

EigResult hermitian_eig(const cplx* a_in, int n) {
  require(n >= 1, "empty matrix");
  std::vector<cplx> a(a_in, a_in + n * n);
  std::vector<cplx> v(n * n, cplx(0.0, 0.0));
  for (int i = 0; i < n; ++i) v[i * n + i] = cplx(1.0, 0.0);

  const double scale = std::max(frobenius_norm(a.data(), n), 1e-300);
  const double tol = 1e-14 * scale;
  const int max_sweeps = 60;

  for (int sweep = 0; sweep < max_sweeps && offdiag_norm(a, n) > tol; ++sweep) {
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const cplx apq = a[p * n + q];
        const double r = std::abs(apq);
        if (r <= 1e-300) continue;
        const cplx phase = apq / r;  // e^{i phi}
        const double app = a[p * n + p].real();
        const double aqq = a[q * n + q].real();

        // rotation angle zeroing the (p, q) entry
        double t;
        const double tau = (app - aqq) / (2.0 * r);
        if (std::abs(tau) > 1e150) {
          t = 1.0 / (2.0 * tau);
        } else {
          t = (tau >= 0.0 ? 1.0 : -1.0) /
              (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        }
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        const cplx sp = s * phase;              // s e^{i phi}
        const cplx spc = s * std::conj(phase);  // s e^{-i phi}

        for (int i = 0; i < n; ++i) {
          const cplx aip = a[i * n + p];
          const cplx aiq = a[i * n + q];
          a[i * n + p] = c * aip + spc * aiq;
          a[i * n + q] = -sp * aip + c * aiq;
        }
        for (int j = 0; j < n; ++j) {
          const cplx apj = a[p * n + j];
          const cplx aqj = a[q * n + j];
          a[p * n + j] = c * apj + sp * aqj;
          a[q * n + j] = -spc * apj + c * aqj;
        }
        for (int i = 0; i < n; ++i) {
          const cplx vip = v[i * n + p];
          const cplx viq = v[i * n + q];
          v[i * n + p] = c * vip + spc * viq;
          v[i * n + q] = -sp * vip + c * viq;
        }
        a[p * n + q] = cplx(0.0, 0.0);
        a[q * n + p] = cplx(0.0, 0.0);
      }
    }
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    return a[i * n + i].real() < a[j * n + j].real();
  });

  EigResult res;
  res.values.resize(n);
  res.vectors.assign(n * n, cplx(0.0, 0.0));
  for (int k = 0; k < n; ++k) {
    res.values[k] = a[order[k] * n + order[k]].real();
    for (int i = 0; i < n; ++i) res.vectors[i * n + k] = v[i * n + order[k]];
  }
  return res;
}

std::vector<cplx> principal_eigenvector(const cplx* a, int n) {
  EigResult e = hermitian_eig(a, n);
  std::vector<cplx> r(n);
  for (int i = 0; i < n; ++i) r[i] = e.vectors[i * n + (n - 1)];
  return r;
}

bool cholesky_factor(std::vector<cplx>& a, int n) {
  for (int j = 0; j < n; ++j) {
    double d = a[j * n + j].real();
    for (int k = 0; k < j; ++k) d -= std::norm(a[j * n + k]);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    a[j * n + j] = cplx(ljj, 0.0);
    for (int i = j + 1; i < n; ++i) {
      cplx s = a[i * n + j];
      for (int k = 0; k < j; ++k)
        s -= a[i * n + k] * std::conj(a[j * n + k]);
      a[i * n + j] = s / ljj;
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) a[i * n + j] = cplx(0.0, 0.0);
  return true;
}

std::vector<cplx> cholesky_solve(const std::vector<cplx>& lower, int n,
                                 const cplx* b) {
  std::vector<cplx> y(n);
  for (int i = 0; i < n; ++i) {
    cplx s = b[i];
    for (int k = 0; k < i; ++k) s -= lower[i * n + k] * y[k];
    y[i] = s / lower[i * n + i];
  }
  std::vector<cplx> x(n);
  for (int i = n - 1; i >= 0; --i) {
    cplx s = y[i];
    for (int k = i + 1; k < n; ++k) s -= std::conj(lower[k * n + i]) * x[k];
    x[i] = s / lower[i * n + i];
  }
  return x;
}

std::vector<cplx> hermitian_solve(const std::vector<cplx>& a, int n,
                                  const cplx* b, bool* used_pinv) {
  if (used_pinv) *used_pinv = false;
  std::vector<cplx> chol = a;
  if (cholesky_factor(chol, n)) return cholesky_solve(chol, n, b);

  if (used_pinv) *used_pinv = true;
  EigResult e = hermitian_eig(a.data(), n);
  const double cutoff =
      1e-12 * std::max(std::abs(e.values.front()), std::abs(e.values.back()));
  std::vector<cplx> x(n, cplx(0.0, 0.0));
  for (int k = 0; k < n; ++k) {
    if (std::abs(e.values[k]) <= cutoff) continue;
    cplx proj(0.0, 0.0);
    for (int i = 0; i < n; ++i) proj += std::conj(e.vectors[i * n + k]) * b[i];
    proj /= e.values[k];
    for (int i = 0; i < n; ++i) x[i] += proj * e.vectors[i * n + k];
  }
  return x;
}

}  // namespace mcss
