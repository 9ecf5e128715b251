// simulate.cc

#include "mcss/simulate.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "mcss/fft.h"
#include "mcss/wav.h"

namespace mcss {

namespace {

constexpr int kSincTaps = 16;  // fractional-delay window width (order 16)

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(x) / x; }

double dist3(const Point3& a, const Point3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

// Hann-windowed sinc centered at the fractional arrival time.
void add_impulse(std::vector<double>& taps, double t_center, double gain) {
  const double fdist = std::floor(t_center);
  const int start = static_cast<int>(fdist) - kSincTaps / 2 + 1;
  for (int n = 0; n < kSincTaps; ++n) {
    const double t = (n - 0.5 * kSincTaps + 1) - (t_center - fdist);
    const double lpi =
        0.5 * (1.0 + std::cos(2.0 * M_PI * t / kSincTaps)) * sinc(M_PI * t);
    const int idx = start + n;
    if (idx >= 0 && idx < static_cast<int>(taps.size()))
      taps[idx] += gain * lpi;
  }
}

double sabine_absorption(const Point3& room, double t60) {
  const double volume = room[0] * room[1] * room[2];
  const double surface = 2.0 * (room[0] * room[1] + room[0] * room[2] +
                                room[1] * room[2]);
  return 24.0 * std::log(10.0) * volume / (kSpeedOfSound * surface * t60);
}

// The specular image sum with uniform walls decays slower than the
// mean-free-path model behind Eyring's formula (low-order axial paths
// dominate the tail). Schroeder fits across typical rooms put the gap at
// a stable 1.6x, which this factor folds into the wall absorption.
constexpr double kDecayCalibration = 1.6;

}  // namespace

ArrayGeometry ArrayGeometry::make(ArrayLayout layout, int num_mics,
                                  double radius, const Point3& center) {
  require(num_mics >= 2, "array needs at least two mics");
  ArrayGeometry g;
  g.layout = layout;
  g.radius = radius;
  g.num_mics = num_mics;
  g.center = center;
  const int on_circle = g.circle_mics();
  require(on_circle >= 1, "circle_plus_center needs at least one circle mic");
  for (int i = 0; i < on_circle; ++i) {
    const double a = 2.0 * M_PI * i / on_circle;
    g.mic_positions.push_back(
        {center[0] + radius * std::cos(a), center[1] + radius * std::sin(a),
         center[2]});
  }
  if (layout == ArrayLayout::circle_plus_center)
    g.mic_positions.push_back(center);
  g.reference_index = 0;
  return g;
}

void RoomScenario::validate(int num_sources) const {
  require(num_sources >= 1, "scenario needs at least one source");
  require(static_cast<int>(source_positions.size()) == num_sources,
          "source count mismatch");
  for (const auto& p : source_positions)
    for (int d = 0; d < 3; ++d)
      require(p[d] > 0.0 && p[d] < room_dims[d],
              "source position outside the room");
  require(t60 >= 0.0, "negative t60");
}

Rir simulate_rir(const RoomScenario& scn, const ArrayGeometry& geom,
                 double sample_rate) {
  scn.validate(static_cast<int>(scn.source_positions.size()));
  for (const auto& m : geom.mic_positions)
    for (int d = 0; d < 3; ++d)
      require(m[d] > 0.0 && m[d] < scn.room_dims[d],
              "mic position outside the room");

  const double fs = sample_rate;
  const int num_src = static_cast<int>(scn.source_positions.size());
  const int num_mic = geom.num_mics;
  const bool anechoic = scn.t60 < 1e-3;
  if (!anechoic)
    require(sabine_absorption(scn.room_dims, scn.t60) <= 1.0, "infeasible t60");

  const double diag = dist3({0, 0, 0}, scn.room_dims);
  const int n_taps =
      static_cast<int>(std::ceil((scn.t60 + diag / kSpeedOfSound) * fs)) +
      kSincTaps;
  const double min_dim =
      std::min({scn.room_dims[0], scn.room_dims[1], scn.room_dims[2]});
  const int max_order =
      anechoic ? 0
               : static_cast<int>(
                     std::ceil(scn.t60 * kSpeedOfSound / min_dim)) +
                     1;
  const double beta =
      anechoic ? 0.0
               : std::exp(-0.5 * kDecayCalibration *
                          sabine_absorption(scn.room_dims, scn.t60));

  Rir rir;
  rir.sources = num_src;
  rir.mics = num_mic;
  rir.sample_rate = fs;
  rir.taps.assign(num_src, std::vector<std::vector<double>>(
                               num_mic, std::vector<double>(n_taps, 0.0)));
  rir.direct_delay.assign(num_src, std::vector<double>(num_mic, 0.0));
  rir.direct_delay_samples.assign(num_src, std::vector<int>(num_mic, 0));
  rir.direct_gain.assign(num_src, std::vector<double>(num_mic, 0.0));

  const double max_dist = n_taps * kSpeedOfSound / fs;
  const int n1 = static_cast<int>(std::ceil(max_dist / (2.0 * scn.room_dims[0])));
  const int n2 = static_cast<int>(std::ceil(max_dist / (2.0 * scn.room_dims[1])));
  const int n3 = static_cast<int>(std::ceil(max_dist / (2.0 * scn.room_dims[2])));

#pragma omp parallel for collapse(2) schedule(dynamic)
  for (int c = 0; c < num_src; ++c) {
    for (int m = 0; m < num_mic; ++m) {
      const Point3& s = scn.source_positions[c];
      const Point3& r = geom.mic_positions[m];
      std::vector<double>& h = rir.taps[c][m];

      const double d_direct = dist3(s, r);
      rir.direct_delay[c][m] = d_direct / kSpeedOfSound * fs;
      rir.direct_delay_samples[c][m] =
          static_cast<int>(std::lround(d_direct / kSpeedOfSound * fs));
      rir.direct_gain[c][m] = 1.0 / (4.0 * M_PI * d_direct);

      for (int mx = -n1; mx <= n1; ++mx) {
        for (int my = -n2; my <= n2; ++my) {
          for (int mz = -n3; mz <= n3; ++mz) {
            for (int qx = 0; qx <= 1; ++qx) {
              for (int qy = 0; qy <= 1; ++qy) {
                for (int qz = 0; qz <= 1; ++qz) {
                  const int order = std::abs(2 * mx - qx) +
                                    std::abs(2 * my - qy) +
                                    std::abs(2 * mz - qz);
                  if (order > max_order) continue;
                  const double ix =
                      (1 - 2 * qx) * s[0] - r[0] + 2.0 * mx * scn.room_dims[0];
                  const double iy =
                      (1 - 2 * qy) * s[1] - r[1] + 2.0 * my * scn.room_dims[1];
                  const double iz =
                      (1 - 2 * qz) * s[2] - r[2] + 2.0 * mz * scn.room_dims[2];
                  const double d = std::sqrt(ix * ix + iy * iy + iz * iz);
                  const double t_center = d / kSpeedOfSound * fs;
                  if (t_center >= n_taps - kSincTaps) continue;
                  const int refl = std::abs(mx - qx) + std::abs(mx) +
                                   std::abs(my - qy) + std::abs(my) +
                                   std::abs(mz - qz) + std::abs(mz);
                  const double gain =
                      std::pow(beta, refl) / (4.0 * M_PI * std::max(d, 1e-3));
                  add_impulse(h, t_center, gain);
                }
              }
            }
          }
        }
      }
    }
  }
  return rir;
}

Rir direct_path_target(const Rir& rir) {
  Rir out = rir;
  for (int c = 0; c < rir.sources; ++c) {
    for (int m = 0; m < rir.mics; ++m) {
      std::fill(out.taps[c][m].begin(), out.taps[c][m].end(), 0.0);
      add_impulse(out.taps[c][m], rir.direct_delay[c][m],
                  rir.direct_gain[c][m]);
    }
  }
  return out;
}

MixtureBundle synthesize_mixture(const std::vector<std::vector<double>>& dry,
                                 const RoomScenario& scn,
                                 const ArrayGeometry& geom,
                                 double sample_rate) {
  const int num_src = static_cast<int>(dry.size());
  scn.validate(num_src);
  require(static_cast<int>(scn.speaker_gains_db.size()) == num_src,
          "speaker gain count mismatch");
  for (const auto& s : dry)
    require(energy(s) > 0.0, "degenerate source");

  size_t max_len = 0;
  for (const auto& s : dry) max_len = std::max(max_len, s.size());
  std::vector<std::vector<double>> padded = dry;
  for (auto& s : padded) s.resize(max_len, 0.0);

  const Rir rir = simulate_rir(scn, geom, sample_rate);
  const Rir drir = direct_path_target(rir);
  const int P = geom.num_mics;
  const size_t out_len = max_len + rir.taps[0][0].size() - 1;

  MixtureBundle bundle;
  bundle.scenario = scn;
  bundle.geometry = geom;
  bundle.direct.assign(num_src, Waveform(P, out_len, sample_rate));
  bundle.image.assign(num_src, Waveform(P, out_len, sample_rate));

#pragma omp parallel for collapse(2) schedule(dynamic)
  for (int c = 0; c < num_src; ++c) {
    for (int m = 0; m < P; ++m) {
      bundle.direct[c].ch[m] = fft_convolve(padded[c], drir.taps[c][m]);
      bundle.image[c].ch[m] = fft_convolve(padded[c], rir.taps[c][m]);
    }
  }

  // per-speaker gains are defined on the spatialized direct signals,
  // relative to speaker 0
  const double e0 = energy(bundle.direct[0]);
  for (int c = 0; c < num_src; ++c) {
    const double ec = energy(bundle.direct[c]);
    require(ec > 0.0, "degenerate source");
    const double target_db = scn.speaker_gains_db[c] - scn.speaker_gains_db[0];
    const double s = std::sqrt(e0 / ec * db_to_lin10(target_db));
    for (int m = 0; m < P; ++m)
      for (size_t n = 0; n < out_len; ++n) {
        bundle.direct[c].ch[m][n] *= s;
        bundle.image[c].ch[m][n] *= s;
      }
  }

  // noise scaled against the anechoic mixture
  Waveform anechoic(P, out_len, sample_rate);
  for (int c = 0; c < num_src; ++c)
    for (int m = 0; m < P; ++m)
      for (size_t n = 0; n < out_len; ++n)
        anechoic.ch[m][n] += bundle.direct[c].ch[m][n];

  bundle.noise = Waveform(P, out_len, sample_rate);
  Rng noise_rng = Rng(scn.seed).split(101);
  for (int m = 0; m < P; ++m) {
    Rng ch_rng = noise_rng.split(static_cast<uint64_t>(m));
    for (size_t n = 0; n < out_len; ++n)
      bundle.noise.ch[m][n] = ch_rng.normal();
    if (scn.noise_kind == NoiseKind::filtered) {
      const double a = std::exp(-2.0 * M_PI * 600.0 / sample_rate);
      double prev = 0.0;
      for (size_t n = 0; n < out_len; ++n) {
        prev = a * prev + (1.0 - a) * bundle.noise.ch[m][n];
        bundle.noise.ch[m][n] = prev;
      }
    }
  }
  const double e_an = energy(anechoic);
  const double e_nz = energy(bundle.noise);
  const double nf = std::sqrt(e_an / (e_nz * db_to_lin10(scn.snr_db)));
  for (int m = 0; m < P; ++m)
    for (size_t n = 0; n < out_len; ++n) bundle.noise.ch[m][n] *= nf;

  bundle.mixture = Waveform(P, out_len, sample_rate);
  for (int m = 0; m < P; ++m)
    for (size_t n = 0; n < out_len; ++n) {
      double acc = 0.0;
      for (int c = 0; c < num_src; ++c) acc += bundle.image[c].ch[m][n];
      bundle.mixture.ch[m][n] = acc + bundle.noise.ch[m][n];
    }
  return bundle;
}

SampledScenario sample_scenario(ScenarioProfile profile, Rng& rng) {
  SampledScenario out;
  RoomScenario& scn = out.scenario;

  scn.room_dims = {rng.uniform(5.0, 8.0), rng.uniform(4.0, 7.0),
                   rng.uniform(2.6, 3.5)};
  const bool sms = profile == ScenarioProfile::smswsj_like;
  scn.t60 = sms ? rng.uniform(0.2, 0.5) : rng.uniform(0.2, 0.6);
  scn.noise_kind = sms ? NoiseKind::white : NoiseKind::filtered;
  scn.snr_db = rng.uniform(10.0, 30.0);

  const Point3 center{scn.room_dims[0] / 2.0 + rng.uniform(-0.3, 0.3),
                      scn.room_dims[1] / 2.0 + rng.uniform(-0.3, 0.3),
                      rng.uniform(1.0, 1.5)};
  out.geometry = sms ? ArrayGeometry::make(ArrayLayout::pure_circle, 6, 0.10,
                                           center)
                     : ArrayGeometry::make(ArrayLayout::circle_plus_center, 7,
                                           0.0425, center);

  const int C = 2;
  const double dist_lo = sms ? 1.0 : 0.75;
  const double dist_hi = sms ? 2.0 : 2.5;
  std::vector<double> angles;
  for (int c = 0; c < C; ++c) {
    for (int attempt = 0; attempt < 256; ++attempt) {
      const double ang = rng.uniform(-M_PI, M_PI);
      bool ok = true;
      for (double prev : angles) {
        double diff = std::abs(ang - prev);
        diff = std::min(diff, 2.0 * M_PI - diff);
        if (diff < scn.min_angle_deg * M_PI / 180.0) ok = false;
      }
      if (!ok) continue;
      double d = rng.uniform(dist_lo, dist_hi);
      const double h = rng.uniform(1.2, 1.8);
      Point3 p{center[0] + d * std::cos(ang), center[1] + d * std::sin(ang),
               h};
      bool inside = true;
      for (int axis = 0; axis < 2; ++axis)
        if (p[axis] < 0.2 || p[axis] > scn.room_dims[axis] - 0.2)
          inside = false;
      if (!inside) continue;
      angles.push_back(ang);
      scn.source_positions.push_back(p);
      break;
    }
  }
  require(static_cast<int>(scn.source_positions.size()) == C,
          "could not place sources in the room");

  scn.speaker_gains_db = {0.0, rng.uniform(-7.0, 7.0)};
  scn.seed = rng.next_u64();
  return out;
}

ArrayGeometry perturb_geometry(const ArrayGeometry& geom, double sigma_mm,
                               Rng& rng) {
  require(sigma_mm >= 0.0, "negative sigma");
  ArrayGeometry out = geom;
  for (auto& m : out.mic_positions)
    for (int d = 0; d < 3; ++d) m[d] += rng.normal(0.0, sigma_mm / 1000.0);
  return out;
}

std::vector<double> synth_speech(Rng& rng, double duration_s,
                                 double sample_rate) {
  const size_t len = static_cast<size_t>(duration_s * sample_rate);
  std::vector<double> x(len, 0.0);
  size_t pos = static_cast<size_t>(rng.uniform(0.0, 0.05) * sample_rate);
  while (pos < len) {
    const size_t seg =
        static_cast<size_t>(rng.uniform(0.25, 0.8) * sample_rate);
    double f0 = rng.uniform(90.0, 250.0);
    const int harmonics = 8;
    std::vector<double> phase(harmonics);
    for (int k = 0; k < harmonics; ++k) phase[k] = rng.uniform(0.0, 2.0 * M_PI);
    const double amp = rng.uniform(0.4, 1.0);
    for (size_t n = 0; n < seg && pos + n < len; ++n) {
      f0 += rng.normal(0.0, 0.08);
      f0 = std::clamp(f0, 70.0, 300.0);
      double v = 0.0;
      for (int k = 0; k < harmonics; ++k) {
        phase[k] += 2.0 * M_PI * f0 * (k + 1) / sample_rate;
        v += std::sin(phase[k]) / (1.0 + k);
      }
      v += 0.05 * rng.normal();
      const double t = static_cast<double>(n);
      const double ramp_len = 0.03 * sample_rate;
      double env = 1.0;
      if (t < ramp_len) env = t / ramp_len;
      const double tail = static_cast<double>(seg - 1 - n);
      if (tail < ramp_len) env = std::min(env, tail / ramp_len);
      x[pos + n] = 0.15 * amp * env * v;
    }
    pos += seg + static_cast<size_t>(rng.uniform(0.05, 0.4) * sample_rate);
  }
  if (energy(x) <= 0.0) x[len / 2] = 0.1;  // degenerate draw guard
  return x;
}

namespace {

nlohmann::json point_json(const Point3& p) {
  return nlohmann::json::array({p[0], p[1], p[2]});
}

Point3 point_from(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

}  // namespace

void save_bundle(const std::string& dir, const MixtureBundle& bundle) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  wav_write(dir + "/mixture.wav", bundle.mixture);
  wav_write(dir + "/noise.wav", bundle.noise);
  for (size_t c = 0; c < bundle.direct.size(); ++c) {
    wav_write(dir + "/direct_c" + std::to_string(c + 1) + ".wav",
              bundle.direct[c]);
    wav_write(dir + "/image_c" + std::to_string(c + 1) + ".wav",
              bundle.image[c]);
  }

  nlohmann::json j;
  const RoomScenario& s = bundle.scenario;
  j["room_dims"] = point_json(s.room_dims);
  j["t60"] = s.t60;
  j["snr_db"] = s.snr_db;
  j["noise_kind"] = s.noise_kind == NoiseKind::white ? "white" : "filtered";
  j["seed"] = s.seed;
  j["min_angle_deg"] = s.min_angle_deg;
  j["speaker_gains_db"] = s.speaker_gains_db;
  j["source_positions"] = nlohmann::json::array();
  for (const auto& p : s.source_positions)
    j["source_positions"].push_back(point_json(p));

  const ArrayGeometry& g = bundle.geometry;
  j["geometry"]["layout"] = g.layout == ArrayLayout::pure_circle
                                ? "pure_circle"
                                : "circle_plus_center";
  j["geometry"]["radius"] = g.radius;
  j["geometry"]["num_mics"] = g.num_mics;
  j["geometry"]["center"] = point_json(g.center);
  j["geometry"]["reference_index"] = g.reference_index;
  j["geometry"]["mic_positions"] = nlohmann::json::array();
  for (const auto& p : g.mic_positions)
    j["geometry"]["mic_positions"].push_back(point_json(p));

  std::ofstream f(dir + "/scenario.json");
  require(f.good(), "cannot write scenario.json in " + dir);
  f << j.dump(2) << "\n";
}

MixtureBundle load_bundle(const std::string& dir) {
  MixtureBundle bundle;
  bundle.mixture = wav_read(dir + "/mixture.wav");
  bundle.noise = wav_read(dir + "/noise.wav");

  std::ifstream f(dir + "/scenario.json");
  require(f.good(), "cannot read scenario.json in " + dir);
  nlohmann::json j;
  f >> j;

  RoomScenario& s = bundle.scenario;
  s.room_dims = point_from(j.at("room_dims"));
  s.t60 = j.at("t60").get<double>();
  s.snr_db = j.at("snr_db").get<double>();
  s.noise_kind = j.at("noise_kind").get<std::string>() == "white"
                     ? NoiseKind::white
                     : NoiseKind::filtered;
  s.seed = j.at("seed").get<uint64_t>();
  s.min_angle_deg = j.at("min_angle_deg").get<double>();
  s.speaker_gains_db = j.at("speaker_gains_db").get<std::vector<double>>();
  for (const auto& p : j.at("source_positions"))
    s.source_positions.push_back(point_from(p));

  ArrayGeometry& g = bundle.geometry;
  g.layout = j.at("geometry").at("layout").get<std::string>() == "pure_circle"
                 ? ArrayLayout::pure_circle
                 : ArrayLayout::circle_plus_center;
  g.radius = j.at("geometry").at("radius").get<double>();
  g.num_mics = j.at("geometry").at("num_mics").get<int>();
  g.center = point_from(j.at("geometry").at("center"));
  g.reference_index = j.at("geometry").at("reference_index").get<int>();
  for (const auto& p : j.at("geometry").at("mic_positions"))
    g.mic_positions.push_back(point_from(p));

  const int C = static_cast<int>(s.source_positions.size());
  for (int c = 0; c < C; ++c) {
    bundle.direct.push_back(
        wav_read(dir + "/direct_c" + std::to_string(c + 1) + ".wav"));
    bundle.image.push_back(
        wav_read(dir + "/image_c" + std::to_string(c + 1) + ".wav"));
  }
  return bundle;
}

}  // namespace mcss
