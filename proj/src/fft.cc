// fft.cc

#include "mcss/fft.h"

#include <cmath>

namespace mcss {

size_t next_pow2(size_t n) {
  size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void fft_inplace(std::vector<cplx>& a, bool inverse) {
  const size_t n = a.size();
  require(n > 0 && (n & (n - 1)) == 0, "fft size must be a power of two");

  // bit-reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  const double sign = inverse ? 1.0 : -1.0;
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * M_PI / static_cast<double>(len);
    const cplx wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        cplx u = a[i + k];
        cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }

  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& v : a) v *= inv;
  }
}

std::vector<double> fft_convolve(const std::vector<double>& x,
                                 const std::vector<double>& h) {
  if (x.empty() || h.empty()) return {};
  const size_t out_len = x.size() + h.size() - 1;
  const size_t n = next_pow2(out_len);

  std::vector<cplx> fx(n, cplx(0.0, 0.0)), fh(n, cplx(0.0, 0.0));
  for (size_t i = 0; i < x.size(); ++i) fx[i] = cplx(x[i], 0.0);
  for (size_t i = 0; i < h.size(); ++i) fh[i] = cplx(h[i], 0.0);
  fft_inplace(fx, false);
  fft_inplace(fh, false);
  for (size_t i = 0; i < n; ++i) fx[i] *= fh[i];
  fft_inplace(fx, true);

  std::vector<double> out(out_len);
  for (size_t i = 0; i < out_len; ++i) out[i] = fx[i].real();
  return out;
}

}  // namespace mcss
