// mcss/beamform.h
//
// Covariance estimation from separated complex spectra (or real masks),
// steering vectors via principal eigenvectors, and MVDR weights, both
// time-invariant and time-varying.

#ifndef MCSS_BEAMFORM_H_
#define MCSS_BEAMFORM_H_

#include <vector>

#include "mcss/mat.h"
#include "mcss/separator.h"
#include "mcss/stft.h"

namespace mcss {

// Per-(source, frequency) Hermitian P x P target/non-target covariances.
struct CovarianceStack {
  int sources = 0, bins = 0, mics = 0, frames = 0;
  std::vector<cplx> phi_s;
  std::vector<cplx> phi_v;

  cplx* s_at(int c, int f) {
    return phi_s.data() + (size_t(c) * bins + f) * mics * mics;
  }
  const cplx* s_at(int c, int f) const {
    return phi_s.data() + (size_t(c) * bins + f) * mics * mics;
  }
  cplx* v_at(int c, int f) {
    return phi_v.data() + (size_t(c) * bins + f) * mics * mics;
  }
  const cplx* v_at(int c, int f) const {
    return phi_v.data() + (size_t(c) * bins + f) * mics * mics;
  }
};

// Per-(source, frequency) steering vectors with d[reference] = 1 exactly.
struct SteeringVectors {
  int sources = 0, bins = 0, mics = 0;
  int reference = 0;
  std::vector<cplx> d;

  cplx* at(int c, int f) { return d.data() + (size_t(c) * bins + f) * mics; }
  const cplx* at(int c, int f) const {
    return d.data() + (size_t(c) * bins + f) * mics;
  }
};

// Complex P-vector per (source, frequency) or per (source, frame, frequency)
// when time-varying (frames > 0).
struct BeamformerWeights {
  int sources = 0, bins = 0, mics = 0;
  int frames = 0;  // 0: time-invariant
  std::vector<cplx> w;

  cplx* at(int c, int f) { return w.data() + (size_t(c) * bins + f) * mics; }
  const cplx* at(int c, int f) const {
    return w.data() + (size_t(c) * bins + f) * mics;
  }
  cplx* at(int c, int t, int f) {
    return w.data() + ((size_t(c) * frames + t) * bins + f) * mics;
  }
  const cplx* at(int c, int t, int f) const {
    return w.data() + ((size_t(c) * frames + t) * bins + f) * mics;
  }
};

struct TvMvdrConfig {
  int delta = 2;       // context frames per side
  double alpha = 0.5;  // blend between short- and long-term estimates
};

// Per-mic estimates aligned so source c means the same speaker at every mic.
using PerMicEstimates = std::vector<SourceEstimates>;

// Phi_s = (1/T) sum_t S S^H, Phi_v = (1/T) sum_t (Y - S)(Y - S)^H,
// Hermitian-symmetrized.
CovarianceStack covariance_from_estimates(const PerMicEstimates& aligned,
                                          const MultichannelSpectrogram& mix);

// (1/T) sum_t lambda(c,t,f) Y Y^H per source; masks are clamped to [0, 1].
CovarianceStack covariance_from_mask(const MaskSpectrogram& masks,
                                     const MultichannelSpectrogram& mix);

// Principal eigenvector of phi_s, global phase fixed so the reference entry
// is real-positive before normalization. Throws when the reference entry of
// the eigenvector vanishes.
SteeringVectors steering_vectors(const CovarianceStack& cov, int reference);

// w = Phi_v^{-1} d / (d^H Phi_v^{-1} d) with diagonal loading
// (1e-6 trace/P + 1e-12) I. w^H d = 1 within 1e-8 by construction.
BeamformerWeights mvdr_weights(const CovarianceStack& cov,
                               const SteeringVectors& sv);

// Single-matrix variant.
std::vector<cplx> mvdr_weights_single(const cplx* phi_v, const cplx* d_hat,
                                      int mics);

// BF(c,t,f) = w(c,f[,t])^H Y(t,f).
SourceEstimates apply_beamformer(const BeamformerWeights& w,
                                 const MultichannelSpectrogram& mix);

// Per-frame non-target residuals V(c,t,f) = Y(t,f) - S(c,t,f), stacked over
// mics; value layout ((c*T + t)*F + f)*P + p.
struct ResidualStack {
  int sources = 0, frames = 0, bins = 0, mics = 0;
  std::vector<cplx> v;
  cplx* at(int c, int t, int f) {
    return v.data() + ((size_t(c) * frames + t) * bins + f) * mics;
  }
  const cplx* at(int c, int t, int f) const {
    return v.data() + ((size_t(c) * frames + t) * bins + f) * mics;
  }
};

ResidualStack residuals_from_estimates(const PerMicEstimates& aligned,
                                       const MultichannelSpectrogram& mix);

// Eq.-style time-varying MVDR: the non-target covariance per frame is
// alpha * (windowed residual sum, trace-normalized) +
// (1 - alpha) * (long-term covariance, trace-normalized), windows truncated
// at the edges. Frames whose window trace vanishes fall back to the
// long-term term. The steering vectors stay time-invariant. alpha = 0
// reproduces the time-invariant weights.
BeamformerWeights tv_mvdr_weights(const ResidualStack& residuals,
                                  const CovarianceStack& cov,
                                  const SteeringVectors& sv,
                                  const TvMvdrConfig& cfg);

// Debug dump of the per-frequency weights as JSON.
void dump_weights_json(const std::string& path, const BeamformerWeights& w);

}  // namespace mcss

#endif  // MCSS_BEAMFORM_H_
