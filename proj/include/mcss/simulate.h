// mcss/simulate.h
//
// Image-method room simulation: RIR generation for circular microphone
// arrays, direct-path targets, and mixture synthesis with full per-source
// ground truth (direct path, reverberant image, noise).

#ifndef MCSS_SIMULATE_H_
#define MCSS_SIMULATE_H_

#include <array>
#include <string>
#include <vector>

#include "mcss/common.h"
#include "mcss/rng.h"

namespace mcss {

using Point3 = std::array<double, 3>;

enum class ArrayLayout { pure_circle, circle_plus_center };

struct ArrayGeometry {
  ArrayLayout layout = ArrayLayout::pure_circle;
  double radius = 0.1;
  int num_mics = 6;
  Point3 center{0.0, 0.0, 0.0};
  std::vector<Point3> mic_positions;
  int reference_index = 0;  // first circle mic

  // Uniformly spaced circle mics; circle_plus_center puts the last mic at
  // the center.
  static ArrayGeometry make(ArrayLayout layout, int num_mics, double radius,
                            const Point3& center);
  int circle_mics() const {
    return layout == ArrayLayout::circle_plus_center ? num_mics - 1 : num_mics;
  }
};

enum class NoiseKind { white, filtered };

struct RoomScenario {
  Point3 room_dims{6.0, 5.0, 3.0};
  double t60 = 0.3;
  std::vector<Point3> source_positions;
  std::vector<double> speaker_gains_db;
  double snr_db = 20.0;
  NoiseKind noise_kind = NoiseKind::white;
  uint64_t seed = 0;
  double min_angle_deg = 10.0;

  void validate(int num_sources) const;
};

struct Rir {
  int sources = 0;
  int mics = 0;
  double sample_rate = 0.0;
  std::vector<std::vector<std::vector<double>>> taps;  // [src][mic][tap]
  std::vector<std::vector<double>> direct_delay;       // fractional samples
  std::vector<std::vector<int>> direct_delay_samples;  // rounded
  std::vector<std::vector<double>> direct_gain;        // 1 / (4 pi d)
};

struct MixtureBundle {
  Waveform mixture;                 // P channels
  std::vector<Waveform> direct;     // per source, P channels
  std::vector<Waveform> image;      // per source, P channels
  Waveform noise;                   // P channels
  RoomScenario scenario;
  ArrayGeometry geometry;
};

// Image-method RIR with uniform Eyring wall absorption derived from t60.
// t60 below 1 ms is treated as anechoic (direct path only). Throws
// "infeasible t60" when the Sabine absorption exceeds one.
Rir simulate_rir(const RoomScenario& scn, const ArrayGeometry& geom,
                 double sample_rate);

// Keeps only the direct-path impulse of each (source, mic) response.
Rir direct_path_target(const Rir& rir);

// Convolves dry sources with the RIRs, applies per-speaker gains, scales
// noise to the requested SNR against the anechoic mixture, and sums.
// mixture == sum(image) + noise holds sample-exact.
MixtureBundle synthesize_mixture(const std::vector<std::vector<double>>& dry,
                                 const RoomScenario& scn,
                                 const ArrayGeometry& geom,
                                 double sample_rate);

enum class ScenarioProfile { smswsj_like, libricss_like };

struct SampledScenario {
  RoomScenario scenario;
  ArrayGeometry geometry;
};

// Draws a scenario from the profile's parameter ranges (deterministic for a
// given rng state). smswsj_like: P=6 circle, r=0.10 m, T60 in [0.2, 0.5] s,
// source distance [1.0, 2.0] m, white noise. libricss_like: P=7
// circle+center, r=0.0425 m, T60 in [0.2, 0.6] s, distance [0.75, 2.5] m,
// low-pass-filtered noise. Both: two sources >= 10 deg apart, gains in
// [-7, 7] dB, SNR in [10, 30] dB.
SampledScenario sample_scenario(ScenarioProfile profile, Rng& rng);

// Adds N(0, sigma_mm^2) millimeter offsets to every mic coordinate.
ArrayGeometry perturb_geometry(const ArrayGeometry& geom, double sigma_mm,
                               Rng& rng);

// Synthetic speech-like dry source: voiced harmonic segments with pauses.
std::vector<double> synth_speech(Rng& rng, double duration_s,
                                 double sample_rate);

// On-disk bundle layout: mixture.wav, direct_cN.wav, image_cN.wav,
// noise.wav, scenario.json under dir.
void save_bundle(const std::string& dir, const MixtureBundle& bundle);
MixtureBundle load_bundle(const std::string& dir);

}  // namespace mcss

#endif  // MCSS_SIMULATE_H_
