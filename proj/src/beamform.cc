// beamform.cc

#include "mcss/beamform.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace mcss {

namespace {

void hermitian_symmetrize(cplx* a, int n) {
  for (int i = 0; i < n; ++i) {
    a[i * n + i] = cplx(a[i * n + i].real(), 0.0);
    for (int j = i + 1; j < n; ++j) {
      const cplx v = 0.5 * (a[i * n + j] + std::conj(a[j * n + i]));
      a[i * n + j] = v;
      a[j * n + i] = std::conj(v);
    }
  }
}

void check_alignment(const PerMicEstimates& aligned,
                     const MultichannelSpectrogram& mix) {
  require(!aligned.empty(), "no per-mic estimates");
  require(static_cast<int>(aligned.size()) == mix.channels(),
          "per-mic estimates must cover every mixture channel");
  require(mix.frames() > 0, "empty mixture");
  for (const auto& e : aligned) {
    require(e.sources() == aligned[0].sources(), "source count differs");
    require(e.frames() == mix.frames() && e.bins() == mix.bins(),
            "estimate dims differ from the mixture");
  }
}

std::vector<cplx> loaded(const cplx* phi, int n) {
  double tr = 0.0;
  for (int i = 0; i < n; ++i) tr += phi[i * n + i].real();
  require(std::isfinite(tr), "covariance trace is not finite");
  const double load = 1e-6 * tr / n + 1e-12;
  std::vector<cplx> a(phi, phi + size_t(n) * n);
  for (int i = 0; i < n; ++i) a[i * n + i] += load;
  return a;
}

}  // namespace

CovarianceStack covariance_from_estimates(const PerMicEstimates& aligned,
                                          const MultichannelSpectrogram& mix) {
  check_alignment(aligned, mix);
  const int P = mix.channels();
  const int C = aligned[0].sources();
  const int T = mix.frames();
  const int F = mix.bins();

  CovarianceStack cov;
  cov.sources = C;
  cov.bins = F;
  cov.mics = P;
  cov.frames = T;
  cov.phi_s.assign(size_t(C) * F * P * P, cplx(0.0, 0.0));
  cov.phi_v.assign(size_t(C) * F * P * P, cplx(0.0, 0.0));

#pragma omp parallel for collapse(2) schedule(static)
  for (int c = 0; c < C; ++c) {
    for (int f = 0; f < F; ++f) {
      cplx* ps = cov.s_at(c, f);
      cplx* pv = cov.v_at(c, f);
      std::vector<cplx> s(P), v(P);
      for (int t = 0; t < T; ++t) {
        for (int p = 0; p < P; ++p) {
          s[p] = aligned[p].src[c].at(t, f);
          v[p] = mix.ch[p].at(t, f) - s[p];
        }
        for (int i = 0; i < P; ++i)
          for (int j = 0; j < P; ++j) {
            ps[i * P + j] += s[i] * std::conj(s[j]);
            pv[i * P + j] += v[i] * std::conj(v[j]);
          }
      }
      const double inv_t = 1.0 / T;
      for (int i = 0; i < P * P; ++i) {
        ps[i] *= inv_t;
        pv[i] *= inv_t;
      }
      hermitian_symmetrize(ps, P);
      hermitian_symmetrize(pv, P);
    }
  }
  return cov;
}

CovarianceStack covariance_from_mask(const MaskSpectrogram& masks,
                                     const MultichannelSpectrogram& mix) {
  require(!masks.src.empty(), "no masks");
  const int P = mix.channels();
  const int C = static_cast<int>(masks.src.size());
  const int T = mix.frames();
  const int F = mix.bins();
  require(T > 0, "empty mixture");
  for (const auto& m : masks.src)
    require(m.frames == T && m.bins == F, "mask dims differ from the mixture");

  CovarianceStack cov;
  cov.sources = C;
  cov.bins = F;
  cov.mics = P;
  cov.frames = T;
  cov.phi_s.assign(size_t(C) * F * P * P, cplx(0.0, 0.0));
  cov.phi_v.assign(size_t(C) * F * P * P, cplx(0.0, 0.0));

#pragma omp parallel for collapse(2) schedule(static)
  for (int c = 0; c < C; ++c) {
    for (int f = 0; f < F; ++f) {
      cplx* ps = cov.s_at(c, f);
      cplx* pv = cov.v_at(c, f);
      std::vector<cplx> y(P);
      for (int t = 0; t < T; ++t) {
        const double lam = std::clamp(masks.src[c].at(t, f), 0.0, 1.0);
        for (int p = 0; p < P; ++p) y[p] = mix.ch[p].at(t, f);
        for (int i = 0; i < P; ++i)
          for (int j = 0; j < P; ++j) {
            const cplx yy = y[i] * std::conj(y[j]);
            ps[i * P + j] += lam * yy;
            pv[i * P + j] += (1.0 - lam) * yy;
          }
      }
      const double inv_t = 1.0 / T;
      for (int i = 0; i < P * P; ++i) {
        ps[i] *= inv_t;
        pv[i] *= inv_t;
      }
      hermitian_symmetrize(ps, P);
      hermitian_symmetrize(pv, P);
    }
  }
  return cov;
}

SteeringVectors steering_vectors(const CovarianceStack& cov, int reference) {
  require(reference >= 0 && reference < cov.mics, "reference out of range");
  SteeringVectors sv;
  sv.sources = cov.sources;
  sv.bins = cov.bins;
  sv.mics = cov.mics;
  sv.reference = reference;
  sv.d.assign(size_t(cov.sources) * cov.bins * cov.mics, cplx(0.0, 0.0));

  const int P = cov.mics;
  std::string error;
#pragma omp parallel for collapse(2) schedule(static)
  for (int c = 0; c < cov.sources; ++c) {
    for (int f = 0; f < cov.bins; ++f) {
      const EigResult e = hermitian_eig(cov.s_at(c, f), P);
      const double scale =
          std::max(frobenius_norm(cov.s_at(c, f), P), 1e-300);

      // project the reference axis onto the top eigenspace; this picks the
      // unique deterministic eigenvector with a real-positive reference
      // entry, and resolves eigenvalue ties (e.g. phi = I) toward the
      // reference microphone
      const double lambda_max = e.values[P - 1];
      std::vector<cplx> r(P, cplx(0.0, 0.0));
      for (int k = P - 1; k >= 0; --k) {
        if (e.values[k] < lambda_max - 1e-8 * scale) break;
        const cplx coef = std::conj(e.vectors[size_t(reference) * P + k]);
        for (int p = 0; p < P; ++p) r[p] += coef * e.vectors[size_t(p) * P + k];
      }
      // rq = sum |v_k[q]|^2, so the eigenvector's reference magnitude is
      // sqrt(rq); the 1e-12 vanishing threshold applies to that magnitude
      const double rq = r[reference].real();
      if (rq < 1e-24) {
#pragma omp critical
        error = "reference element vanishes at source " + std::to_string(c) +
                ", bin " + std::to_string(f);
        continue;
      }
      cplx* d = sv.at(c, f);
      for (int p = 0; p < P; ++p) d[p] = r[p] / rq;
      d[reference] = cplx(1.0, 0.0);
    }
  }
  require(error.empty(), error);
  return sv;
}

std::vector<cplx> mvdr_weights_single(const cplx* phi_v, const cplx* d_hat,
                                      int mics) {
  const std::vector<cplx> a = loaded(phi_v, mics);
  bool used_pinv = false;
  std::vector<cplx> num = hermitian_solve(a, mics, d_hat, &used_pinv);
  const cplx denom = dot_conj(d_hat, num.data(), mics);
  if (!(std::abs(denom) > 1e-300) || !std::isfinite(std::abs(denom))) {
    double tr = 0.0;
    for (int i = 0; i < mics; ++i) tr += phi_v[i * mics + i].real();
    throw Error("non-target covariance singular beyond loading rescue "
                "(trace " + std::to_string(tr) + ")");
  }
  for (auto& v : num) v /= denom;
  return num;
}

BeamformerWeights mvdr_weights(const CovarianceStack& cov,
                               const SteeringVectors& sv) {
  require(cov.sources == sv.sources && cov.bins == sv.bins &&
              cov.mics == sv.mics,
          "covariance/steering dims differ");
  BeamformerWeights w;
  w.sources = cov.sources;
  w.bins = cov.bins;
  w.mics = cov.mics;
  w.frames = 0;
  w.w.assign(size_t(cov.sources) * cov.bins * cov.mics, cplx(0.0, 0.0));

  std::string error;
#pragma omp parallel for collapse(2) schedule(static)
  for (int c = 0; c < cov.sources; ++c) {
    for (int f = 0; f < cov.bins; ++f) {
      try {
        std::vector<cplx> wcf =
            mvdr_weights_single(cov.v_at(c, f), sv.at(c, f), cov.mics);
        std::copy(wcf.begin(), wcf.end(), w.at(c, f));
      } catch (const std::exception& e) {
#pragma omp critical
        error = e.what();
      }
    }
  }
  require(error.empty(), error);
  return w;
}

SourceEstimates apply_beamformer(const BeamformerWeights& w,
                                 const MultichannelSpectrogram& mix) {
  require(w.mics == mix.channels(), "weight/mixture channel mismatch");
  const int T = mix.frames();
  const int F = mix.bins();
  require(w.bins == F, "weight/mixture bin mismatch");
  if (w.frames > 0)
    require(w.frames == T, "time-varying weights must cover every frame");

  SourceEstimates out;
  out.stage = 1;
  for (int c = 0; c < w.sources; ++c) {
    Spectrogram bf(T, F);
#pragma omp parallel for schedule(static)
    for (int t = 0; t < T; ++t) {
      for (int f = 0; f < F; ++f) {
        const cplx* wc = w.frames > 0 ? w.at(c, t, f) : w.at(c, f);
        cplx acc(0.0, 0.0);
        for (int p = 0; p < w.mics; ++p)
          acc += std::conj(wc[p]) * mix.ch[p].at(t, f);
        bf.at(t, f) = acc;
      }
    }
    out.src.push_back(std::move(bf));
  }
  return out;
}

ResidualStack residuals_from_estimates(const PerMicEstimates& aligned,
                                       const MultichannelSpectrogram& mix) {
  check_alignment(aligned, mix);
  const int P = mix.channels();
  const int C = aligned[0].sources();
  const int T = mix.frames();
  const int F = mix.bins();
  ResidualStack res;
  res.sources = C;
  res.frames = T;
  res.bins = F;
  res.mics = P;
  res.v.resize(size_t(C) * T * F * P);
#pragma omp parallel for collapse(2) schedule(static)
  for (int c = 0; c < C; ++c) {
    for (int t = 0; t < T; ++t) {
      for (int f = 0; f < F; ++f) {
        cplx* v = res.at(c, t, f);
        for (int p = 0; p < P; ++p)
          v[p] = mix.ch[p].at(t, f) - aligned[p].src[c].at(t, f);
      }
    }
  }
  return res;
}

BeamformerWeights tv_mvdr_weights(const ResidualStack& residuals,
                                  const CovarianceStack& cov,
                                  const SteeringVectors& sv,
                                  const TvMvdrConfig& cfg) {
  require(cfg.delta >= 0, "delta must be non-negative");
  require(cfg.alpha >= 0.0 && cfg.alpha <= 1.0, "alpha must be in [0, 1]");
  require(residuals.sources == cov.sources && residuals.bins == cov.bins &&
              residuals.mics == cov.mics,
          "residual/covariance dims differ");

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

  if (cfg.alpha == 0.0) {
    // blend endpoint: every frame reduces to the time-invariant weights
    BeamformerWeights ti = mvdr_weights(cov, sv);
    for (int c = 0; c < C; ++c)
      for (int t = 0; t < T; ++t)
        for (int f = 0; f < F; ++f)
          std::copy(ti.at(c, f), ti.at(c, f) + P, w.at(c, t, f));
    return w;
  }

  std::string error;
#pragma omp parallel for collapse(2) schedule(static)
  for (int c = 0; c < C; ++c) {
    for (int f = 0; f < F; ++f) {
      try {
        const cplx* lt = cov.v_at(c, f);
        double lt_tr = 0.0;
        for (int i = 0; i < P; ++i) lt_tr += lt[i * P + i].real();
        std::vector<cplx> lt_norm(lt, lt + size_t(P) * P);
        if (lt_tr > 1e-300)
          for (auto& v : lt_norm) v /= lt_tr / P;

        // sliding window sum of V V^H over [t - delta, t + delta], rebuilt
        // from scratch once per window length so rounding drift stays
        // bounded by the window size instead of growing with T
        std::vector<cplx> win(size_t(P) * P, cplx(0.0, 0.0));
        int lo = 0, hi = -1;  // inclusive bounds currently in the window
        int since_refresh = 0;
        auto add_frame = [&](int t, double sign) {
          const cplx* v = residuals.at(c, t, f);
          for (int i = 0; i < P; ++i)
            for (int j = 0; j < P; ++j)
              win[i * P + j] += sign * v[i] * std::conj(v[j]);
        };

        std::vector<cplx> phi(size_t(P) * P);
        for (int t = 0; t < T; ++t) {
          const int want_lo = std::max(0, t - cfg.delta);
          const int want_hi = std::min(T - 1, t + cfg.delta);
          if (++since_refresh > 2 * cfg.delta + 1) {
            std::fill(win.begin(), win.end(), cplx(0.0, 0.0));
            lo = want_lo;
            hi = lo - 1;
            since_refresh = 0;
          }
          while (hi < want_hi) add_frame(++hi, 1.0);
          while (lo < want_lo) add_frame(lo++, -1.0);

          double tr = 0.0;
          for (int i = 0; i < P; ++i) tr += win[i * P + i].real();

          if (tr < 1e-12) {
            for (size_t i = 0; i < phi.size(); ++i) phi[i] = lt_norm[i];
          } else {
            for (int i = 0; i < P * P; ++i)
              phi[i] = cfg.alpha * win[i] / (tr / P) +
                       (1.0 - cfg.alpha) * lt_norm[i];
          }
          hermitian_symmetrize(phi.data(), P);
          std::vector<cplx> wtf =
              mvdr_weights_single(phi.data(), sv.at(c, f), P);
          std::copy(wtf.begin(), wtf.end(), w.at(c, t, f));
        }
      } catch (const std::exception& e) {
#pragma omp critical
        error = e.what();
      }
    }
  }
  require(error.empty(), error);
  return w;
}

void dump_weights_json(const std::string& path, const BeamformerWeights& w) {
  nlohmann::json j;
  j["sources"] = w.sources;
  j["bins"] = w.bins;
  j["mics"] = w.mics;
  j["frames"] = w.frames;
  std::vector<double> flat;
  flat.reserve(2 * w.w.size());
  for (const cplx& v : w.w) {
    flat.push_back(v.real());
    flat.push_back(v.imag());
  }
  j["weights_ri"] = flat;
  std::ofstream f(path);
  require(f.good(), "cannot write weight dump: " + path);
  f << j.dump() << "\n";
}

}  // namespace mcss
