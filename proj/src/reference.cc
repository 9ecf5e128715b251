// reference.cc

#include "mcss/reference.h"

#include <algorithm>
#include <cmath>

namespace mcss {
namespace ref {

Spectrogram dft_spectrogram(const std::vector<double>& x, double fs,
                            const StftConfig& cfg) {
  cfg.validate(fs);
  const int w = cfg.window_samples(fs);
  const int h = cfg.shift_samples(fs);
  const int n = cfg.dft(fs);
  const int bins = n / 2 + 1;
  require(static_cast<int>(x.size()) >= w, "too short");
  const int frames = static_cast<int>((x.size() - w) / h) + 1;
  const std::vector<double> win = sqrt_hann_window(w);

  Spectrogram spec(frames, bins);
  for (int t = 0; t < frames; ++t) {
    const size_t off = static_cast<size_t>(t) * h;
    for (int f = 0; f < bins; ++f) {
      cplx acc(0.0, 0.0);
      for (int m = 0; m < w; ++m) {
        const double ang = -2.0 * M_PI * f * m / n;
        acc += win[m] * x[off + m] * cplx(std::cos(ang), std::sin(ang));
      }
      spec.at(t, f) = acc;
    }
  }
  return spec;
}

CovarianceStack covariance_from_estimates(const PerMicEstimates& aligned,
                                          const MultichannelSpectrogram& mix) {
  const int P = mix.channels();
  const int C = aligned.at(0).sources();
  const int T = mix.frames();
  const int F = mix.bins();

  CovarianceStack cov;
  cov.sources = C;
  cov.bins = F;
  cov.mics = P;
  cov.frames = T;
  cov.phi_s.assign(size_t(C) * F * P * P, cplx(0.0, 0.0));
  cov.phi_v.assign(size_t(C) * F * P * P, cplx(0.0, 0.0));

  for (int c = 0; c < C; ++c) {
    for (int f = 0; f < F; ++f) {
      for (int t = 0; t < T; ++t) {
        for (int i = 0; i < P; ++i) {
          const cplx si = aligned[i].src[c].at(t, f);
          const cplx vi = mix.ch[i].at(t, f) - si;
          for (int j = 0; j < P; ++j) {
            const cplx sj = aligned[j].src[c].at(t, f);
            const cplx vj = mix.ch[j].at(t, f) - sj;
            cov.s_at(c, f)[i * P + j] += si * std::conj(sj);
            cov.v_at(c, f)[i * P + j] += vi * std::conj(vj);
          }
        }
      }
      for (int i = 0; i < P * P; ++i) {
        cov.s_at(c, f)[i] /= T;
        cov.v_at(c, f)[i] /= T;
      }
    }
  }
  return cov;
}

CovarianceStack covariance_from_mask(const MaskSpectrogram& masks,
                                     const MultichannelSpectrogram& mix) {
  const int P = mix.channels();
  const int C = static_cast<int>(masks.src.size());
  const int T = mix.frames();
  const int F = mix.bins();

  CovarianceStack cov;
  cov.sources = C;
  cov.bins = F;
  cov.mics = P;
  cov.frames = T;
  cov.phi_s.assign(size_t(C) * F * P * P, cplx(0.0, 0.0));
  cov.phi_v.assign(size_t(C) * F * P * P, cplx(0.0, 0.0));

  for (int c = 0; c < C; ++c)
    for (int f = 0; f < F; ++f) {
      for (int t = 0; t < T; ++t) {
        const double lam = std::clamp(masks.src[c].at(t, f), 0.0, 1.0);
        for (int i = 0; i < P; ++i)
          for (int j = 0; j < P; ++j) {
            const cplx yy = mix.ch[i].at(t, f) * std::conj(mix.ch[j].at(t, f));
            cov.s_at(c, f)[i * P + j] += lam * yy;
            cov.v_at(c, f)[i * P + j] += (1.0 - lam) * yy;
          }
      }
      for (int i = 0; i < P * P; ++i) {
        cov.s_at(c, f)[i] /= T;
        cov.v_at(c, f)[i] /= T;
      }
    }
  return cov;
}

BeamformerWeights tv_mvdr_weights(const ResidualStack& residuals,
                                  const CovarianceStack& cov,
                                  const SteeringVectors& sv,
                                  const TvMvdrConfig& cfg) {
  const int C = cov.sources;
  const int F = cov.bins;
  const int P = cov.mics;
  const int T = residuals.frames;

  BeamformerWeights w;
  w.sources = C;
  w.bins = F;
  w.mics = P;
  w.frames = T;
  w.w.assign(size_t(C) * T * F * P, cplx(0.0, 0.0));

  for (int c = 0; c < C; ++c) {
    for (int f = 0; f < F; ++f) {
      const cplx* lt = cov.v_at(c, f);
      double lt_tr = 0.0;
      for (int i = 0; i < P; ++i) lt_tr += lt[i * P + i].real();
      std::vector<cplx> lt_norm(lt, lt + size_t(P) * P);
      if (lt_tr > 1e-300)
        for (auto& v : lt_norm) v /= lt_tr / P;

      for (int t = 0; t < T; ++t) {
        if (cfg.alpha == 0.0) {
          std::vector<cplx> wtf =
              mvdr_weights_single(cov.v_at(c, f), sv.at(c, f), P);
          std::copy(wtf.begin(), wtf.end(), w.at(c, t, f));
          continue;
        }
        std::vector<cplx> win(size_t(P) * P, cplx(0.0, 0.0));
        const int lo = std::max(0, t - cfg.delta);
        const int hi = std::min(T - 1, t + cfg.delta);
        for (int tt = lo; tt <= hi; ++tt) {
          const cplx* v = residuals.at(c, tt, f);
          for (int i = 0; i < P; ++i)
            for (int j = 0; j < P; ++j)
              win[i * P + j] += v[i] * std::conj(v[j]);
        }
        double tr = 0.0;
        for (int i = 0; i < P; ++i) tr += win[i * P + i].real();

        std::vector<cplx> phi(size_t(P) * P);
        if (tr < 1e-12) {
          phi = lt_norm;
        } else {
          for (int i = 0; i < P * P; ++i)
            phi[i] = cfg.alpha * win[i] / (tr / P) +
                     (1.0 - cfg.alpha) * lt_norm[i];
        }
        for (int i = 0; i < P; ++i) {
          phi[i * P + i] = cplx(phi[i * P + i].real(), 0.0);
          for (int j = i + 1; j < P; ++j) {
            const cplx v = 0.5 * (phi[i * P + j] + std::conj(phi[j * P + i]));
            phi[i * P + j] = v;
            phi[j * P + i] = std::conj(v);
          }
        }
        std::vector<cplx> wtf = mvdr_weights_single(phi.data(), sv.at(c, f), P);
        std::copy(wtf.begin(), wtf.end(), w.at(c, t, f));
      }
    }
  }
  return w;
}

SourceEstimates apply_beamformer(const BeamformerWeights& w,
                                 const MultichannelSpectrogram& mix) {
  const int T = mix.frames();
  const int F = mix.bins();
  SourceEstimates out;
  out.stage = 1;
  for (int c = 0; c < w.sources; ++c) {
    Spectrogram bf(T, F);
    for (int t = 0; t < T; ++t)
      for (int f = 0; f < F; ++f) {
        const cplx* wc = w.frames > 0 ? w.at(c, t, f) : w.at(c, f);
        cplx acc(0.0, 0.0);
        for (int p = 0; p < w.mics; ++p)
          acc += std::conj(wc[p]) * mix.ch[p].at(t, f);
        bf.at(t, f) = acc;
      }
    out.src.push_back(std::move(bf));
  }
  return out;
}

}  // namespace ref
}  // namespace mcss
