// mcss/stft.h
//
// STFT analysis/synthesis with square-root Hann windows (32 ms window,
// 8 ms shift by default) plus the signal- and feature-level variance
// normalization used throughout the pipeline.

#ifndef MCSS_STFT_H_
#define MCSS_STFT_H_

#include <vector>

#include "mcss/common.h"

namespace mcss {

struct StftConfig {
  double window_ms = 32.0;
  double shift_ms = 8.0;
  int dft_size = 0;  // 0: window samples, padded to the next power of two

  int window_samples(double fs) const;
  int shift_samples(double fs) const;
  int dft(double fs) const;
  int bins(double fs) const { return dft(fs) / 2 + 1; }
  void validate(double fs) const;
};

// Square-root Hann (periodic) analysis window, length w.
std::vector<double> sqrt_hann_window(int w);

// Complex spectrogram of one channel, data[t * bins + f].
struct Spectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<cplx> data;

  Spectrogram() = default;
  Spectrogram(int t, int f) : frames(t), bins(f), data(size_t(t) * f) {}
  cplx& at(int t, int f) { return data[size_t(t) * bins + f]; }
  const cplx& at(int t, int f) const { return data[size_t(t) * bins + f]; }
};

struct MultichannelSpectrogram {
  std::vector<Spectrogram> ch;
  double sample_rate = 0.0;

  int channels() const { return static_cast<int>(ch.size()); }
  int frames() const { return ch.empty() ? 0 : ch[0].frames; }
  int bins() const { return ch.empty() ? 0 : ch[0].bins; }
};

// Frames: T = floor((len - window) / shift) + 1; a trailing partial window
// is dropped. Throws "too short" if the signal has less than one window.
MultichannelSpectrogram stft(const Waveform& wave, const StftConfig& cfg);
Spectrogram stft_channel(const std::vector<double>& x, double fs,
                         const StftConfig& cfg);

// Overlap-add synthesis with the same sqrt-Hann window; the accumulated
// squared-window envelope is divided out. out_len must not exceed
// (T - 1) * shift + window.
Waveform istft(const MultichannelSpectrogram& spec, const StftConfig& cfg,
               size_t out_len);
std::vector<double> istft_channel(const Spectrogram& spec, double fs,
                                  const StftConfig& cfg, size_t out_len);

enum class NormalizationMode { offline, online };

struct NormalizationTrace {
  double scale = 1.0;  // multiplier applied to the samples (offline)
  NormalizationMode mode = NormalizationMode::offline;
  std::vector<double> per_block_scales;  // online mode
  size_t block = 0;
  bool degenerate = false;  // all-zero input, identity scale applied
};

// Scales the signal so its pooled sample variance is one. In online mode
// block b is scaled using the variance of all samples up to the end of
// block b.
std::pair<Waveform, NormalizationTrace> normalize_variance(
    const Waveform& wave, NormalizationMode mode, size_t block = 0);

// Exact inverse of normalize_variance.
Waveform denormalize_variance(const Waveform& wave,
                              const NormalizationTrace& trace);

// Per-frequency std over the pooled {Re, Im} population (zero mean assumed),
// floored at 1e-8.
std::vector<double> feature_std(const MultichannelSpectrogram& spec);

// Divides both RI components at frequency f by stats[f]; phase is unchanged.
MultichannelSpectrogram feature_normalize(const MultichannelSpectrogram& spec,
                                          const std::vector<double>& stats);

}  // namespace mcss

#endif  // MCSS_STFT_H_
