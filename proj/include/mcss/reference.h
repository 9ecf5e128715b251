// mcss/reference.h
//
// Straightforward single-threaded reference implementations of the parallel
// kernels. Tests compare the production paths against these, and the bench
// tool times both. The spectrogram reference evaluates the DFT sum directly
// (O(N^2)) instead of using the FFT.

#ifndef MCSS_REFERENCE_H_
#define MCSS_REFERENCE_H_

#include "mcss/beamform.h"
#include "mcss/stft.h"

namespace mcss {
namespace ref {

// Framing and windowing as stft_channel, but each bin is the literal DFT
// summation.
Spectrogram dft_spectrogram(const std::vector<double>& x, double fs,
                            const StftConfig& cfg);

// Per-frame accumulation of Eq.-style covariances, serial.
CovarianceStack covariance_from_estimates(const PerMicEstimates& aligned,
                                          const MultichannelSpectrogram& mix);

CovarianceStack covariance_from_mask(const MaskSpectrogram& masks,
                                     const MultichannelSpectrogram& mix);

// Recomputes the windowed residual sum from scratch at every frame.
BeamformerWeights tv_mvdr_weights(const ResidualStack& residuals,
                                  const CovarianceStack& cov,
                                  const SteeringVectors& sv,
                                  const TvMvdrConfig& cfg);

SourceEstimates apply_beamformer(const BeamformerWeights& w,
                                 const MultichannelSpectrogram& mix);

}  // namespace ref
}  // namespace mcss

#endif  // MCSS_REFERENCE_H_
