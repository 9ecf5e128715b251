// mcss/fft.h

#ifndef MCSS_FFT_H_
#define MCSS_FFT_H_

#include <cstddef>
#include <vector>

#include "mcss/common.h"

namespace mcss {

size_t next_pow2(size_t n);

// In-place radix-2 FFT. Size must be a power of two.
// The inverse transform includes the 1/N scaling.
void fft_inplace(std::vector<cplx>& a, bool inverse);

// Linear convolution of two real sequences via FFT, length x+h-1.
std::vector<double> fft_convolve(const std::vector<double>& x,
                                 const std::vector<double>& h);

}  // namespace mcss

#endif  // MCSS_FFT_H_
