// stft.cc

#include "mcss/stft.h"

#include <cmath>

#include "mcss/fft.h"

namespace mcss {

int StftConfig::window_samples(double fs) const {
  return static_cast<int>(std::lround(window_ms * fs / 1000.0));
}

int StftConfig::shift_samples(double fs) const {
  return static_cast<int>(std::lround(shift_ms * fs / 1000.0));
}

int StftConfig::dft(double fs) const {
  const int w = window_samples(fs);
  if (dft_size > 0) return dft_size;
  return static_cast<int>(next_pow2(static_cast<size_t>(w)));
}

void StftConfig::validate(double fs) const {
  const int w = window_samples(fs);
  const int h = shift_samples(fs);
  require(w > 0 && h > 0, "stft window/shift must be positive");
  require(w % h == 0, "stft shift must divide the window");
  require(dft(fs) >= w, "dft size smaller than the window");
}

std::vector<double> sqrt_hann_window(int w) {
  std::vector<double> win(w);
  for (int n = 0; n < w; ++n)
    win[n] = std::sqrt(0.5 - 0.5 * std::cos(2.0 * M_PI * n / w));
  return win;
}

Spectrogram stft_channel(const std::vector<double>& x, double fs,
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

#pragma omp parallel for schedule(static)
  for (int t = 0; t < frames; ++t) {
    std::vector<cplx> buf(n, cplx(0.0, 0.0));
    const size_t off = static_cast<size_t>(t) * h;
    for (int m = 0; m < w; ++m) buf[m] = cplx(win[m] * x[off + m], 0.0);
    fft_inplace(buf, false);
    for (int f = 0; f < bins; ++f) spec.at(t, f) = buf[f];
  }
  return spec;
}

MultichannelSpectrogram stft(const Waveform& wave, const StftConfig& cfg) {
  wave.check();
  MultichannelSpectrogram out;
  out.sample_rate = wave.sample_rate;
  out.ch.reserve(wave.channels());
  for (const auto& c : wave.ch)
    out.ch.push_back(stft_channel(c, wave.sample_rate, cfg));
  return out;
}

std::vector<double> istft_channel(const Spectrogram& spec, double fs,
                                  const StftConfig& cfg, size_t out_len) {
  cfg.validate(fs);
  const int w = cfg.window_samples(fs);
  const int h = cfg.shift_samples(fs);
  const int n = cfg.dft(fs);
  const int bins = n / 2 + 1;
  require(spec.bins == bins, "spectrogram bins inconsistent with config");
  const size_t max_len =
      spec.frames > 0 ? static_cast<size_t>(spec.frames - 1) * h + w : 0;
  require(out_len <= max_len, "requested length exceeds representable length");

  const std::vector<double> win = sqrt_hann_window(w);
  std::vector<double> acc(max_len, 0.0), env(max_len, 0.0);

  for (int t = 0; t < spec.frames; ++t) {
    std::vector<cplx> buf(n, cplx(0.0, 0.0));
    for (int f = 0; f < bins; ++f) buf[f] = spec.at(t, f);
    for (int f = 1; f < n - bins + 1; ++f) buf[n - f] = std::conj(buf[f]);
    fft_inplace(buf, true);
    const size_t off = static_cast<size_t>(t) * h;
    for (int m = 0; m < w; ++m) {
      acc[off + m] += win[m] * buf[m].real();
      env[off + m] += win[m] * win[m];
    }
  }

  std::vector<double> out(out_len, 0.0);
  for (size_t i = 0; i < out_len; ++i)
    if (env[i] > 1e-12) out[i] = acc[i] / env[i];
  return out;
}

Waveform istft(const MultichannelSpectrogram& spec, const StftConfig& cfg,
               size_t out_len) {
  require(!spec.ch.empty(), "empty spectrogram");
  const double fs = spec.sample_rate;
  cfg.validate(fs);
  const size_t max_len =
      spec.frames() > 0
          ? static_cast<size_t>(spec.frames() - 1) * cfg.shift_samples(fs) +
                cfg.window_samples(fs)
          : 0;
  require(out_len <= max_len, "requested length exceeds representable length");
  for (const auto& c : spec.ch)
    require(c.bins == cfg.dft(fs) / 2 + 1 && c.frames == spec.frames(),
            "spectrogram dims inconsistent with config");

  Waveform out(spec.channels(), out_len, spec.sample_rate);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < spec.channels(); ++c)
    out.ch[c] = istft_channel(spec.ch[c], spec.sample_rate, cfg, out_len);
  return out;
}

namespace {

struct Moments {
  double sum = 0.0, sumsq = 0.0;
  size_t count = 0;
  double variance() const {
    if (count == 0) return 0.0;
    const double mean = sum / static_cast<double>(count);
    return sumsq / static_cast<double>(count) - mean * mean;
  }
};

}  // namespace

std::pair<Waveform, NormalizationTrace> normalize_variance(
    const Waveform& wave, NormalizationMode mode, size_t block) {
  wave.check();
  NormalizationTrace trace;
  trace.mode = mode;
  Waveform out = wave;

  if (mode == NormalizationMode::offline) {
    Moments m;
    for (const auto& c : wave.ch)
      for (double v : c) {
        m.sum += v;
        m.sumsq += v * v;
        ++m.count;
      }
    const double var = m.variance();
    if (var <= 1e-30) {
      trace.degenerate = true;
      trace.scale = 1.0;
      return {out, trace};
    }
    trace.scale = 1.0 / std::sqrt(var);
    for (auto& c : out.ch)
      for (double& v : c) v *= trace.scale;
    return {out, trace};
  }

  require(block > 0, "online normalization needs a positive block size");
  trace.block = block;
  const size_t len = wave.length();
  Moments m;
  for (size_t start = 0; start < len; start += block) {
    const size_t end = std::min(len, start + block);
    for (const auto& c : wave.ch)
      for (size_t i = start; i < end; ++i) {
        m.sum += c[i];
        m.sumsq += c[i] * c[i];
        ++m.count;
      }
    const double var = m.variance();
    double scale = 1.0;
    if (var <= 1e-30) {
      trace.degenerate = true;
    } else {
      scale = 1.0 / std::sqrt(var);
    }
    trace.per_block_scales.push_back(scale);
    for (auto& c : out.ch)
      for (size_t i = start; i < end; ++i) c[i] *= scale;
  }
  return {out, trace};
}

Waveform denormalize_variance(const Waveform& wave,
                              const NormalizationTrace& trace) {
  Waveform out = wave;
  if (trace.mode == NormalizationMode::offline) {
    for (auto& c : out.ch)
      for (double& v : c) v /= trace.scale;
    return out;
  }
  const size_t len = wave.length();
  size_t b = 0;
  for (size_t start = 0; start < len; start += trace.block, ++b) {
    require(b < trace.per_block_scales.size(), "trace has too few blocks");
    const size_t end = std::min(len, start + trace.block);
    const double s = trace.per_block_scales[b];
    for (auto& c : out.ch)
      for (size_t i = start; i < end; ++i) c[i] /= s;
  }
  return out;
}

std::vector<double> feature_std(const MultichannelSpectrogram& spec) {
  const int bins = spec.bins();
  const int frames = spec.frames();
  std::vector<double> stats(bins, 0.0);
#pragma omp parallel for schedule(static)
  for (int f = 0; f < bins; ++f) {
    double s = 0.0;
    for (const auto& c : spec.ch)
      for (int t = 0; t < frames; ++t) s += std::norm(c.at(t, f));
    const double denom = 2.0 * spec.channels() * std::max(frames, 1);
    stats[f] = std::max(std::sqrt(s / denom), 1e-8);
  }
  return stats;
}

MultichannelSpectrogram feature_normalize(const MultichannelSpectrogram& spec,
                                          const std::vector<double>& stats) {
  require(static_cast<int>(stats.size()) == spec.bins(),
          "stats size must match bin count");
  for (double s : stats) require(s > 0.0, "stats must be positive");
  MultichannelSpectrogram out = spec;
  for (auto& c : out.ch) {
#pragma omp parallel for schedule(static)
    for (int f = 0; f < c.bins; ++f)
      for (int t = 0; t < c.frames; ++t) c.at(t, f) /= stats[f];
  }
  return out;
}

}  // namespace mcss
