// tools/bench.cc
//
// Times the OpenMP kernels against the serial reference implementations.

#include <chrono>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "mcss/beamform.h"
#include "mcss/reference.h"
#include "mcss/rng.h"
#include "mcss/simulate.h"
#include "mcss/stft.h"

using namespace mcss;

namespace {

template <typename F>
double time_ms(F&& fn, int reps = 3) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best,
                    std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

void report(const char* name, double parallel_ms, double serial_ms) {
  std::printf("%-28s %10.2f ms %12.2f ms %8.2fx\n", name, parallel_ms,
              serial_ms, serial_ms / parallel_ms);
}

}  // namespace

int main() {
#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (no OpenMP)\n");
#endif
  std::printf("%-28s %13s %15s %9s\n", "kernel", "parallel", "serial ref",
              "speedup");

  Rng rng(1);
  const double fs = 8000.0;
  const StftConfig cfg;

  // stft: fft kernels vs the literal dft summation
  std::vector<double> x(static_cast<size_t>(4.0 * fs));
  for (auto& v : x) v = rng.normal();
  Spectrogram keep;
  const double stft_par = time_ms([&] { keep = stft_channel(x, fs, cfg); });
  const double stft_ser =
      time_ms([&] { keep = ref::dft_spectrogram(x, fs, cfg); }, 1);
  report("stft 4 s @ 8 kHz", stft_par, stft_ser);

  // covariance estimation, 6 mics x 300 frames x 129 bins x 2 sources
  const int P = 6, T = 300, F = 129, C = 2;
  MultichannelSpectrogram mix;
  mix.sample_rate = fs;
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
  CovarianceStack cov;
  const double cov_par =
      time_ms([&] { cov = covariance_from_estimates(est, mix); });
  const double cov_ser =
      time_ms([&] { cov = ref::covariance_from_estimates(est, mix); }, 1);
  report("covariance 6x300x129x2", cov_par, cov_ser);

  // mvdr weights (jacobi + solve per (c, f))
  const SteeringVectors sv = steering_vectors(cov, 0);
  BeamformerWeights w;
  const double mvdr_par = time_ms([&] { w = mvdr_weights(cov, sv); });
  report("mvdr weights 2x129", mvdr_par, mvdr_par);

  // time-varying mvdr: sliding window vs per-frame recomputation
  const ResidualStack res = residuals_from_estimates(est, mix);
  TvMvdrConfig tv;
  tv.delta = 2;
  tv.alpha = 0.5;
  BeamformerWeights wt;
  const double tv_par =
      time_ms([&] { wt = tv_mvdr_weights(res, cov, sv, tv); }, 1);
  const double tv_ser =
      time_ms([&] { wt = ref::tv_mvdr_weights(res, cov, sv, tv); }, 1);
  report("tv-mvdr 300 frames", tv_par, tv_ser);

  // beamformer application
  SourceEstimates bf;
  const double ap_par = time_ms([&] { bf = apply_beamformer(w, mix); });
  const double ap_ser = time_ms([&] { bf = ref::apply_beamformer(w, mix); });
  report("apply beamformer", ap_par, ap_ser);

  // image-method rir
  RoomScenario scn;
  scn.room_dims = {6.0, 5.0, 3.0};
  scn.t60 = 0.4;
  scn.source_positions = {{1.5, 2.0, 1.5}, {4.2, 3.1, 1.6}};
  scn.speaker_gains_db = {0.0, 0.0};
  const ArrayGeometry geom =
      ArrayGeometry::make(ArrayLayout::pure_circle, 6, 0.1, {3.0, 2.5, 1.4});
  Rir rir;
  const double rir_par =
      time_ms([&] { rir = simulate_rir(scn, geom, fs); }, 1);
  std::printf("%-28s %10.2f ms\n", "rir 2x6 image method", rir_par);

  return 0;
}
