// tests/test_beamform.cc

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mcss/beamform.h"
#include "mcss/reference.h"
#include "mcss/rng.h"
#include "mcss/simulate.h"
#include "oracles.h"

using namespace mcss;

namespace {

// far-field steering vector for a plane wave from azimuth theta
std::vector<cplx> plane_wave_steering(const ArrayGeometry& geom, double theta,
                                      double freq_hz) {
  const int P = static_cast<int>(geom.mic_positions.size());
  std::vector<double> tau(P);
  for (int p = 0; p < P; ++p) {
    const double proj =
        (geom.mic_positions[p][0] - geom.center[0]) * std::cos(theta) +
        (geom.mic_positions[p][1] - geom.center[1]) * std::sin(theta);
    tau[p] = -proj / kSpeedOfSound;
  }
  std::vector<cplx> d(P);
  for (int p = 0; p < P; ++p) {
    const double phase = -2.0 * M_PI * freq_hz * (tau[p] - tau[0]);
    d[p] = std::exp(cplx(0.0, phase));
  }
  return d;
}

struct PlaneWaveScene {
  MultichannelSpectrogram mix;
  PerMicEstimates truth;                 // aligned by construction
  std::vector<std::vector<cplx>> d;      // [source][bin * P]
  int bins, frames, mics;
  double fs = 8000.0;
  int dft = 128;
};

// noiseless sum of point-source plane waves with random band-limited spectra
PlaneWaveScene make_scene(Rng& rng, const std::vector<double>& thetas,
                          int frames = 40, double lo_hz = 300.0,
                          double hi_hz = 3400.0) {
  PlaneWaveScene sc;
  ArrayGeometry geom =
      ArrayGeometry::make(ArrayLayout::pure_circle, 6, 0.10, {0.0, 0.0, 0.0});
  sc.mics = 6;
  sc.frames = frames;
  sc.bins = sc.dft / 2 + 1;
  const int C = static_cast<int>(thetas.size());

  std::vector<std::vector<cplx>> s(C);
  for (int c = 0; c < C; ++c) {
    s[c].resize(size_t(frames) * sc.bins, cplx(0.0, 0.0));
    for (int t = 0; t < frames; ++t)
      for (int f = 0; f < sc.bins; ++f) {
        const double hz = f * sc.fs / sc.dft;
        if (hz < lo_hz || hz > hi_hz) continue;
        s[c][size_t(t) * sc.bins + f] = cplx(rng.normal(), rng.normal());
      }
  }

  sc.d.resize(C);
  for (int c = 0; c < C; ++c) {
    sc.d[c].resize(size_t(sc.bins) * sc.mics);
    for (int f = 0; f < sc.bins; ++f) {
      const auto dv = plane_wave_steering(geom, thetas[c], f * sc.fs / sc.dft);
      for (int p = 0; p < sc.mics; ++p) sc.d[c][size_t(f) * sc.mics + p] = dv[p];
    }
  }

  sc.mix.sample_rate = sc.fs;
  sc.mix.ch.assign(sc.mics, Spectrogram(frames, sc.bins));
  sc.truth.assign(sc.mics, SourceEstimates{});
  for (int p = 0; p < sc.mics; ++p)
    for (int c = 0; c < C; ++c)
      sc.truth[p].src.push_back(Spectrogram(frames, sc.bins));

  for (int p = 0; p < sc.mics; ++p)
    for (int t = 0; t < frames; ++t)
      for (int f = 0; f < sc.bins; ++f) {
        cplx acc(0.0, 0.0);
        for (int c = 0; c < C; ++c) {
          const cplx v =
              sc.d[c][size_t(f) * sc.mics + p] * s[c][size_t(t) * sc.bins + f];
          sc.truth[p].src[c].at(t, f) = v;
          acc += v;
        }
        sc.mix.ch[p].at(t, f) = acc;
      }
  return sc;
}

double max_hermitian_violation(const CovarianceStack& cov) {
  double worst = 0.0;
  const int P = cov.mics;
  for (int c = 0; c < cov.sources; ++c)
    for (int f = 0; f < cov.bins; ++f)
      for (int i = 0; i < P; ++i)
        for (int j = 0; j < P; ++j)
          worst = std::max(worst,
                           std::abs(cov.s_at(c, f)[i * P + j] -
                                    std::conj(cov.s_at(c, f)[j * P + i])));
  return worst;
}

}  // namespace

TEST_SUITE("beamform") {

TEST_CASE("rank-1 plane wave covariance") {
  Rng rng(201);
  PlaneWaveScene sc = make_scene(rng, {0.7});
  const CovarianceStack cov = covariance_from_estimates(sc.truth, sc.mix);

  CHECK(max_hermitian_violation(cov) < 1e-10);

  // phi_s = mean|s|^2 d d^H, so the second eigenvalue vanishes
  const int P = sc.mics;
  for (int f = 5; f < sc.bins; f += 13) {
    const EigResult e = hermitian_eig(cov.s_at(0, f), P);
    CHECK(e.values[P - 1] >= 0.0);
    CHECK(std::abs(e.values[P - 2]) < 1e-10 * std::max(e.values[P - 1], 1.0));
    // and phi_v = 0 since the estimate equals the mixture
    for (int i = 0; i < P * P; ++i)
      CHECK(std::abs(cov.v_at(0, f)[i]) < 1e-12);
  }
}

TEST_CASE("covariances match the naive per-frame oracle") {
  Rng rng(202);
  const int P = 4, T = 50, F = 10, C = 2;
  MultichannelSpectrogram mix;
  mix.sample_rate = 8000.0;
  PerMicEstimates est(P);
  for (int p = 0; p < P; ++p) {
    Spectrogram y(T, F);
    for (auto& v : y.data) v = cplx(rng.normal(), rng.normal());
    mix.ch.push_back(std::move(y));
    for (int c = 0; c < C; ++c) {
      Spectrogram s(T, F);
      for (auto& v : s.data) v = cplx(rng.normal(), rng.normal());
      est[p].src.push_back(std::move(s));
    }
  }

  const CovarianceStack got = covariance_from_estimates(est, mix);
  const CovarianceStack want = ref::covariance_from_estimates(est, mix);
  for (int c = 0; c < C; ++c)
    for (int f = 0; f < F; ++f)
      for (int i = 0; i < P * P; ++i) {
        CHECK(std::abs(got.s_at(c, f)[i] - want.s_at(c, f)[i]) < 1e-12);
        CHECK(std::abs(got.v_at(c, f)[i] - want.v_at(c, f)[i]) < 1e-12);
      }

  // positive semidefinite within -1e-8 * trace
  for (int c = 0; c < C; ++c)
    for (int f = 0; f < F; f += 3) {
      const EigResult e = hermitian_eig(got.s_at(c, f), P);
      double tr = 0.0;
      for (int i = 0; i < P; ++i) tr += got.s_at(c, f)[i * P + i].real();
      CHECK(e.values[0] >= -1e-8 * tr);
    }

  // an empty mixture has no frames to average
  MultichannelSpectrogram empty;
  empty.sample_rate = 8000.0;
  empty.ch.assign(P, Spectrogram(0, F));
  PerMicEstimates empty_est(P);
  for (int p = 0; p < P; ++p)
    for (int c = 0; c < C; ++c)
      empty_est[p].src.push_back(Spectrogram(0, F));
  CHECK_THROWS_AS(covariance_from_estimates(empty_est, empty), Error);
}

TEST_CASE("mask covariance endpoints and oracle equivalence") {
  Rng rng(203);
  const int P = 3, T = 30, F = 8;
  MultichannelSpectrogram mix;
  mix.sample_rate = 8000.0;
  for (int p = 0; p < P; ++p) {
    Spectrogram y(T, F);
    for (auto& v : y.data) v = cplx(rng.normal(), rng.normal());
    mix.ch.push_back(std::move(y));
  }

  MaskSpectrogram ones, zeros, rand_mask;
  ones.src.push_back(RealTf(T, F));
  zeros.src.push_back(RealTf(T, F));
  rand_mask.src.push_back(RealTf(T, F));
  for (int i = 0; i < T * F; ++i) {
    ones.src[0].data[i] = 1.0;
    rand_mask.src[0].data[i] = rng.uniform();
  }

  const CovarianceStack all = covariance_from_mask(ones, mix);
  const CovarianceStack none = covariance_from_mask(zeros, mix);
  for (int f = 0; f < F; ++f)
    for (int i = 0; i < P * P; ++i) {
      CHECK(std::abs(none.s_at(0, f)[i]) == 0.0);
      // lambda == 1 gives the plain mixture covariance
      cplx plain(0.0, 0.0);
      const int r = i / P, cidx = i % P;
      for (int t = 0; t < T; ++t)
        plain += mix.ch[r].at(t, f) * std::conj(mix.ch[cidx].at(t, f));
      plain /= static_cast<double>(T);
      CHECK(std::abs(all.s_at(0, f)[i] - plain) < 1e-12);
    }

  const CovarianceStack got = covariance_from_mask(rand_mask, mix);
  const CovarianceStack want = ref::covariance_from_mask(rand_mask, mix);
  for (int f = 0; f < F; ++f)
    for (int i = 0; i < P * P; ++i)
      CHECK(std::abs(got.s_at(0, f)[i] - want.s_at(0, f)[i]) < 1e-12);
}

TEST_CASE("steering vector of a rank-1 covariance recovers the direction") {
  Rng rng(204);
  PlaneWaveScene sc = make_scene(rng, {1.2});
  const CovarianceStack cov = covariance_from_estimates(sc.truth, sc.mix);
  const SteeringVectors sv = steering_vectors(cov, 0);

  for (int f = 7; f < sc.bins; f += 7) {
    const double hz = f * sc.fs / sc.dft;
    if (hz < 400.0 || hz > 3300.0) continue;  // only voiced bins carry energy
    const cplx* d = sv.at(0, f);
    CHECK(d[0] == cplx(1.0, 0.0));  // exact by construction
    for (int p = 0; p < sc.mics; ++p) {
      const cplx want = sc.d[0][size_t(f) * sc.mics + p];  // ref entry is 1
      CHECK(std::abs(d[p] - want) < 1e-8);
    }
  }
}

TEST_CASE("steering vector matches the power-iteration oracle on random psd") {
  Rng rng(205);
  const int P = 6;
  CovarianceStack cov;
  cov.sources = 1;
  cov.bins = 3;
  cov.mics = P;
  cov.frames = 1;
  cov.phi_s.resize(size_t(P) * P * 3);
  cov.phi_v.assign(size_t(P) * P * 3, cplx(0.0, 0.0));
  for (int f = 0; f < 3; ++f) {
    std::vector<cplx> a(size_t(P) * P, cplx(0.0, 0.0));
    for (int r = 0; r < 2 * P; ++r) {
      std::vector<cplx> v(P);
      for (auto& x : v) x = cplx(rng.normal(), rng.normal());
      for (int i = 0; i < P; ++i)
        for (int j = 0; j < P; ++j) a[i * P + j] += v[i] * std::conj(v[j]);
    }
    std::copy(a.begin(), a.end(), cov.s_at(0, f));
  }

  const SteeringVectors sv = steering_vectors(cov, 0);
  for (int f = 0; f < 3; ++f) {
    const std::vector<cplx> r =
        oracles::power_iteration_principal(cov.s_at(0, f), P);
    // normalize the oracle the same way (reference entry = 1)
    std::vector<cplx> want(P);
    for (int p = 0; p < P; ++p) want[p] = r[p] / r[0];
    for (int p = 0; p < P; ++p) CHECK(std::abs(sv.at(0, f)[p] - want[p]) < 1e-8);

    // eigen residual bound
    const double lambda = oracles::rayleigh_quotient(cov.s_at(0, f), r);
    std::vector<cplx> got(P);
    for (int p = 0; p < P; ++p) got[p] = sv.at(0, f)[p];
    double nrm = 0.0;
    for (const auto& v : got) nrm += std::norm(v);
    nrm = std::sqrt(nrm);
    std::vector<cplx> av(P);
    matvec(cov.s_at(0, f), P, got.data(), av.data());
    double resid = 0.0;
    for (int p = 0; p < P; ++p) resid += std::norm(av[p] - lambda * got[p]);
    CHECK(std::sqrt(resid) / nrm < 1e-8 * frobenius_norm(cov.s_at(0, f), P));
  }
}

TEST_CASE("identity covariance still yields a deterministic unit reference") {
  CovarianceStack cov;
  cov.sources = 1;
  cov.bins = 1;
  cov.mics = 4;
  cov.frames = 1;
  cov.phi_s.assign(16, cplx(0.0, 0.0));
  cov.phi_v.assign(16, cplx(0.0, 0.0));
  for (int i = 0; i < 4; ++i) cov.phi_s[i * 4 + i] = cplx(1.0, 0.0);

  const SteeringVectors a = steering_vectors(cov, 0);
  const SteeringVectors b = steering_vectors(cov, 0);
  CHECK(a.at(0, 0)[0] == cplx(1.0, 0.0));
  for (int p = 0; p < 4; ++p) CHECK(a.at(0, 0)[p] == b.at(0, 0)[p]);
}

TEST_CASE("vanishing reference entry raises an error") {
  CovarianceStack cov;
  cov.sources = 1;
  cov.bins = 1;
  cov.mics = 2;
  cov.frames = 1;
  // principal eigenvector is e2; its first (reference) entry is zero
  cov.phi_s = {cplx(0.0, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0), cplx(2.0, 0.0)};
  cov.phi_v.assign(4, cplx(0.0, 0.0));
  CHECK_THROWS_WITH_AS(steering_vectors(cov, 0),
                       doctest::Contains("reference element vanishes"), Error);
}

TEST_CASE("scaling the estimates leaves the steering vector invariant") {
  Rng rng(206);
  PlaneWaveScene sc = make_scene(rng, {0.4});
  const CovarianceStack cov = covariance_from_estimates(sc.truth, sc.mix);

  PerMicEstimates scaled = sc.truth;
  const cplx k(0.3, -1.1);
  for (auto& mic : scaled)
    for (auto& s : mic.src)
      for (auto& v : s.data) v *= k;
  MultichannelSpectrogram mix2 = sc.mix;  // mixture scale does not matter here
  const CovarianceStack cov2 = covariance_from_estimates(scaled, mix2);

  for (int f = 5; f < sc.bins; f += 11) {
    // phi_s scales by |k|^2
    for (int i = 0; i < sc.mics * sc.mics; ++i)
      CHECK(std::abs(cov2.s_at(0, f)[i] - std::norm(k) * cov.s_at(0, f)[i]) <
            1e-10 * std::abs(cov.s_at(0, f)[i]) + 1e-12);
  }
  const SteeringVectors sv1 = steering_vectors(cov, 0);
  const SteeringVectors sv2 = steering_vectors(cov2, 0);
  for (int f = 5; f < sc.bins; f += 11)
    for (int p = 0; p < sc.mics; ++p)
      CHECK(std::abs(sv1.at(0, f)[p] - sv2.at(0, f)[p]) < 1e-9);
}

TEST_CASE("isotropic noise reduces mvdr to the matched filter") {
  Rng rng(207);
  const int P = 5;
  std::vector<cplx> phi(size_t(P) * P, cplx(0.0, 0.0));
  for (int i = 0; i < P; ++i) phi[i * P + i] = cplx(0.7, 0.0);
  std::vector<cplx> d(P);
  for (auto& v : d) v = std::exp(cplx(0.0, rng.uniform(-M_PI, M_PI)));

  const std::vector<cplx> w = mvdr_weights_single(phi.data(), d.data(), P);
  const cplx denom = dot_conj(d.data(), d.data(), P);  // = P
  for (int p = 0; p < P; ++p)
    CHECK(std::abs(w[p] - d[p] / denom) < 1e-8);
}

TEST_CASE("distortionless constraint and optimality on random instances") {
  Rng rng(208);
  for (int P : {2, 3, 6, 7}) {
    for (int trial = 0; trial < 5; ++trial) {
      // well-conditioned random Wishart
      std::vector<cplx> phi(size_t(P) * P, cplx(0.0, 0.0));
      for (int r = 0; r < 2 * P; ++r) {
        std::vector<cplx> v(P);
        for (auto& x : v) x = cplx(rng.normal(), rng.normal());
        for (int i = 0; i < P; ++i)
          for (int j = 0; j < P; ++j)
            phi[i * P + j] += v[i] * std::conj(v[j]) / (2.0 * P);
      }
      std::vector<cplx> d(P);
      for (auto& v : d) v = std::exp(cplx(0.0, rng.uniform(-M_PI, M_PI)));

      const std::vector<cplx> w = mvdr_weights_single(phi.data(), d.data(), P);
      CHECK(std::abs(dot_conj(w.data(), d.data(), P) - cplx(1.0, 0.0)) < 1e-8);

      // no feasible perturbation does better
      std::vector<cplx> pw(P);
      matvec(phi.data(), P, w.data(), pw.data());
      const double base = dot_conj(w.data(), pw.data(), P).real();
      const double dd = dot_conj(d.data(), d.data(), P).real();
      for (int k = 0; k < 200; ++k) {
        std::vector<cplx> delta(P);
        for (auto& v : delta) v = 0.01 * cplx(rng.normal(), rng.normal());
        const cplx proj = dot_conj(d.data(), delta.data(), P);
        std::vector<cplx> cand(P);
        for (int p = 0; p < P; ++p) cand[p] = w[p] + delta[p] - proj / dd * d[p];
        CHECK(std::abs(dot_conj(cand.data(), d.data(), P) - cplx(1.0, 0.0)) <
              1e-8);
        std::vector<cplx> pc(P);
        matvec(phi.data(), P, cand.data(), pc.data());
        CHECK(dot_conj(cand.data(), pc.data(), P).real() >= base - 1e-10);
      }
    }
  }
}

TEST_CASE("beamformer passes the target exactly and suppresses an interferer") {
  Rng rng(209);
  PlaneWaveScene sc = make_scene(rng, {0.3, 0.3 + M_PI / 3});
  const CovarianceStack cov = covariance_from_estimates(sc.truth, sc.mix);
  const SteeringVectors sv = steering_vectors(cov, 0);
  const BeamformerWeights w = mvdr_weights(cov, sv);
  const SourceEstimates bf = apply_beamformer(w, sc.mix);

  // output = s_target + w^H d_interf * s_interf; compare against the
  // reference-mic components
  for (int c = 0; c < 2; ++c) {
    double target_in = 0.0, target_out_err = 0.0, interf_in = 0.0,
           interf_out = 0.0;
    const int o = 1 - c;
    for (int t = 0; t < sc.frames; ++t)
      for (int f = 0; f < sc.bins; ++f) {
        const cplx tgt = sc.truth[0].src[c].at(t, f);
        const cplx itf = sc.truth[0].src[o].at(t, f);
        // what the beamformer leaves of each component
        const cplx* wcf = w.at(c, f);
        cplx pass_t(0.0, 0.0), pass_i(0.0, 0.0);
        for (int p = 0; p < sc.mics; ++p) {
          pass_t += std::conj(wcf[p]) * sc.truth[p].src[c].at(t, f);
          pass_i += std::conj(wcf[p]) * sc.truth[p].src[o].at(t, f);
        }
        target_in += std::norm(tgt);
        target_out_err += std::norm(pass_t - tgt);
        interf_in += std::norm(itf);
        interf_out += std::norm(pass_i);
      }
    CHECK(target_out_err < 1e-12 * target_in);  // distortionless passthrough
    CHECK(db10(interf_in / interf_out) > 20.0);
  }
}

TEST_CASE("zero weights give zero output") {
  Rng rng(210);
  PlaneWaveScene sc = make_scene(rng, {0.5});
  BeamformerWeights w;
  w.sources = 1;
  w.bins = sc.bins;
  w.mics = sc.mics;
  w.w.assign(size_t(sc.bins) * sc.mics, cplx(0.0, 0.0));
  const SourceEstimates bf = apply_beamformer(w, sc.mix);
  for (const cplx& v : bf.src[0].data) CHECK(v == cplx(0.0, 0.0));
}

TEST_CASE("weight dump writes a readable json") {
  BeamformerWeights w;
  w.sources = 1;
  w.bins = 2;
  w.mics = 2;
  w.w = {cplx(1.0, -2.0), cplx(0.5, 0.0), cplx(0.0, 1.0), cplx(3.0, 4.0)};
  const std::string path = "/tmp/mcss_weights.json";
  dump_weights_json(path, w);
  std::ifstream f(path);
  REQUIRE(f.good());
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("\"mics\":2") != std::string::npos);
  CHECK(text.find("-2.0") != std::string::npos);
  std::filesystem::remove(path);
}

TEST_CASE("tv mvdr at alpha 0 equals the time-invariant weights") {
  Rng rng(211);
  PlaneWaveScene sc = make_scene(rng, {0.2, 1.5});
  const CovarianceStack cov = covariance_from_estimates(sc.truth, sc.mix);
  const SteeringVectors sv = steering_vectors(cov, 0);
  const ResidualStack res = residuals_from_estimates(sc.truth, sc.mix);

  TvMvdrConfig cfg;
  cfg.alpha = 0.0;
  cfg.delta = 2;
  const BeamformerWeights ti = mvdr_weights(cov, sv);
  const BeamformerWeights tv = tv_mvdr_weights(res, cov, sv, cfg);

  const SourceEstimates out_ti = apply_beamformer(ti, sc.mix);
  const SourceEstimates out_tv = apply_beamformer(tv, sc.mix);
  for (int c = 0; c < 2; ++c)
    for (size_t i = 0; i < out_ti.src[c].data.size(); ++i)
      CHECK(std::abs(out_ti.src[c].data[i] - out_tv.src[c].data[i]) < 1e-10);
}

TEST_CASE("tv mvdr matches the naive per-frame recomputation") {
  Rng rng(212);
  PlaneWaveScene sc = make_scene(rng, {0.2, 1.5}, 25);
  // degrade the estimates so residuals are non-trivial
  PerMicEstimates est = sc.truth;
  for (auto& mic : est)
    for (auto& s : mic.src)
      for (auto& v : s.data) v += 0.1 * cplx(rng.normal(), rng.normal());

  const CovarianceStack cov = covariance_from_estimates(est, sc.mix);
  const SteeringVectors sv = steering_vectors(cov, 0);
  const ResidualStack res = residuals_from_estimates(est, sc.mix);

  for (int delta : {0, 1, 2, 3}) {
    TvMvdrConfig cfg;
    cfg.alpha = 0.5;
    cfg.delta = delta;
    const BeamformerWeights got = tv_mvdr_weights(res, cov, sv, cfg);
    const BeamformerWeights want = ref::tv_mvdr_weights(res, cov, sv, cfg);
    REQUIRE(got.w.size() == want.w.size());
    const SourceEstimates out_got = apply_beamformer(got, sc.mix);
    const SourceEstimates out_want = ref::apply_beamformer(want, sc.mix);
    for (int c = 0; c < 2; ++c)
      for (size_t i = 0; i < out_got.src[c].data.size(); ++i)
        CHECK(std::abs(out_got.src[c].data[i] - out_want.src[c].data[i]) <
              1e-10);
  }
}

TEST_CASE("silent frames fall back to the long-term covariance") {
  Rng rng(213);
  // single source: the residual Y - S is exactly zero everywhere
  PlaneWaveScene sc = make_scene(rng, {0.2}, 10);
  PerMicEstimates est = sc.truth;
  const CovarianceStack cov = covariance_from_estimates(est, sc.mix);

  // inject a scalar long-term phi_v so the fallback is well defined
  CovarianceStack cov2 = cov;
  for (int f = 0; f < sc.bins; ++f)
    for (int i = 0; i < sc.mics; ++i)
      cov2.v_at(0, f)[i * sc.mics + i] += cplx(0.5, 0.0);

  const SteeringVectors sv = steering_vectors(cov2, 0);
  const ResidualStack res = residuals_from_estimates(est, sc.mix);
  TvMvdrConfig cfg;
  cfg.alpha = 0.7;
  cfg.delta = 1;
  const BeamformerWeights tv = tv_mvdr_weights(res, cov2, sv, cfg);
  const BeamformerWeights ti = mvdr_weights(cov2, sv);
  // zero residual windows: every frame falls back to the long-term term,
  // which for a scalar matrix gives exactly the time-invariant weights
  for (int f = 5; f < sc.bins; f += 9)
    for (int p = 0; p < sc.mics; ++p)
      CHECK(std::abs(tv.at(0, 0, f)[p] - ti.at(0, f)[p]) < 1e-9);
}

}  // TEST_SUITE beamform
