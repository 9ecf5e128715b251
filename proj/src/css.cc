// css.cc

#include "mcss/css.h"

#include <algorithm>
#include <cmath>

namespace mcss {

namespace {

// mean sample power of a T-F region, dBFS (Parseval for the unnormalized
// DFT with a sqrt-Hann analysis window)
double region_power_dbfs(const std::vector<const Spectrogram*>& specs,
                         int t_begin, int t_end, int dft, int window) {
  double acc = 0.0;
  size_t cells = 0;
  for (const Spectrogram* s : specs) {
    for (int t = t_begin; t < t_end; ++t) {
      for (int f = 0; f < s->bins; ++f) {
        const double wgt = (f == 0 || f == s->bins - 1) ? 1.0 : 2.0;
        acc += wgt * std::norm(s->at(t, f));
      }
      ++cells;
    }
  }
  if (cells == 0) return -300.0;
  // sum_f |X|^2 = N sum_n (w x)^2 and sum w^2 = window / 2
  const double frame_power =
      acc / (static_cast<double>(cells) * dft * (window / 2.0));
  return frame_power > 0.0 ? db10(frame_power) : -300.0;
}

std::vector<int> median_filter(const std::vector<int>& x, int window) {
  if (window <= 1 || x.empty()) return x;
  const int half = window / 2;
  std::vector<int> out(x.size());
  std::vector<int> buf;
  for (int i = 0; i < static_cast<int>(x.size()); ++i) {
    buf.clear();
    for (int k = i - half; k <= i + half; ++k) {
      const int j = std::clamp(k, 0, static_cast<int>(x.size()) - 1);
      buf.push_back(x[j]);
    }
    std::nth_element(buf.begin(), buf.begin() + buf.size() / 2, buf.end());
    out[i] = buf[buf.size() / 2];
  }
  return out;
}

}  // namespace

std::vector<BlockRef> segment_blocks(size_t stream_len, double sample_rate,
                                     const CssConfig& cfg) {
  cfg.validate();
  require(stream_len > 0, "empty stream");
  const size_t block =
      static_cast<size_t>(std::lround(cfg.block_s * sample_rate));
  const size_t shift =
      static_cast<size_t>(std::lround(cfg.shift_s * sample_rate));
  require(block > 0 && shift > 0, "degenerate block/shift");

  std::vector<BlockRef> blocks;
  for (size_t off = 0; off < stream_len; off += shift) {
    BlockRef b;
    b.offset = off;
    b.length = std::min(block, stream_len - off);
    blocks.push_back(b);
    if (off + block >= stream_len) break;
  }
  return blocks;
}

PermutationAssignment stitch(CssState& state, const SourceEstimates& new_block,
                             int shift_frames, const CssConfig& cfg) {
  require(new_block.sources() == 2, "stitching expects two streams");
  PermutationAssignment identity;
  identity.map = {0, 1};
  PermutationAssignment swapped;
  swapped.map = {1, 0};

  if (!state.has_prev) {
    state.perm = identity;
  } else {
    // frame i of the new block covers the same samples as stored frame i
    const int ov = std::min(new_block.frames(), state.prev_overlap[0].frames);
    // gate on the energy actually present in the shared region
    std::vector<const Spectrogram*> region;
    for (const auto& s : state.prev_overlap) region.push_back(&s);
    for (const auto& s : new_block.src) region.push_back(&s);
    const int dft = 2 * (new_block.bins() - 1);
    const double level =
        region_power_dbfs(region, 0, ov, dft, dft /* window == dft here */);

    if (ov <= 0 || level < cfg.stitch_threshold_dbfs) {
      // keep the previous permutation
    } else {
      double d_id = 0.0, d_sw = 0.0;
      for (int slot = 0; slot < 2; ++slot) {
        const Spectrogram& prev = state.prev_overlap[slot];
        for (int cand = 0; cand < 2; ++cand) {
          const Spectrogram& cur = new_block.src[cand];
          double d = 0.0;
          for (int t = 0; t < ov; ++t)
            for (int f = 0; f < prev.bins; ++f) {
              const double diff =
                  std::abs(prev.at(t, f)) - std::abs(cur.at(t, f));
              d += cfg.stitch_l2 ? diff * diff : std::abs(diff);
            }
          if (cand == slot)
            d_id += d;
          else
            d_sw += d;
        }
      }
      state.perm = d_sw < d_id ? swapped : identity;
    }
  }

  // remember the stream-ordered frames past the shift point; those cover
  // exactly the samples the next block will see again
  const int tail = std::max(0, new_block.frames() - shift_frames);
  state.prev_overlap.assign(2, Spectrogram());
  for (int slot = 0; slot < 2; ++slot) {
    const Spectrogram& src = new_block.src[state.perm.map[slot]];
    Spectrogram t(tail, src.bins);
    for (int i = 0; i < tail; ++i)
      for (int f = 0; f < src.bins; ++f)
        t.at(i, f) = src.at(shift_frames + i, f);
    state.prev_overlap[slot] = std::move(t);
  }
  state.has_prev = true;
  return state.perm;
}

FrameCounts count_speakers_oracle(const std::vector<Waveform>& direct,
                                  int ref_channel, const StftConfig& stft,
                                  const CssConfig& cfg, size_t stream_len) {
  require(!direct.empty(), "oracle counting needs per-speaker ground truth");
  const double fs = direct[0].sample_rate;
  const int w = stft.window_samples(fs);
  const int h = stft.shift_samples(fs);
  require(stream_len >= static_cast<size_t>(w), "too short");
  const int frames = static_cast<int>((stream_len - w) / h) + 1;

  FrameCounts counts;
  counts.count.assign(frames, 0);

  // threshold relative to the loudest frame across all speakers, so a
  // speaker far below the stream level does not count as active
  std::vector<std::vector<double>> rms(direct.size(),
                                       std::vector<double>(frames, 0.0));
  double peak = 0.0;
  for (size_t c = 0; c < direct.size(); ++c) {
    const std::vector<double>& x = direct[c].ch.at(ref_channel);
    for (int t = 0; t < frames; ++t) {
      double e = 0.0;
      for (int m = 0; m < w; ++m) {
        const size_t idx = static_cast<size_t>(t) * h + m;
        if (idx < x.size()) e += x[idx] * x[idx];
      }
      rms[c][t] = std::sqrt(e / w);
      peak = std::max(peak, rms[c][t]);
    }
  }
  if (peak <= 0.0) return counts;

  const double thresh = peak * db_to_lin20(cfg.vad_threshold_db);
  for (size_t c = 0; c < direct.size(); ++c) {
    int hang = 0;
    for (int t = 0; t < frames; ++t) {
      if (rms[c][t] > thresh)
        hang = cfg.vad_hangover + 1;
      else if (hang > 0)
        --hang;
      if (hang > 0) ++counts.count[t];
    }
  }
  return counts;
}

void merge_and_suppress(std::vector<Waveform>& streams,
                        const FrameCounts& counts, const StftConfig& stft,
                        const CssConfig& cfg) {
  require(streams.size() == 2, "counting merge expects two streams");
  const double fs = streams[0].sample_rate;
  const int h = stft.shift_samples(fs);
  const size_t len = streams[0].length();
  const int frames = static_cast<int>(counts.count.size());

  const std::vector<int> smooth = median_filter(counts.count, cfg.count_median);

  int t = 0;
  while (t < frames) {
    if (smooth[t] != 1) {
      ++t;
      continue;
    }
    int end = t;
    while (end + 1 < frames && smooth[end + 1] == 1) ++end;

    const size_t s_begin = static_cast<size_t>(t) * h;
    const size_t s_end =
        end == frames - 1 ? len
                          : std::min(len, static_cast<size_t>(end + 1) * h);
    double e0 = 0.0, e1 = 0.0;
    for (size_t i = s_begin; i < s_end; ++i) {
      e0 += streams[0].ch[0][i] * streams[0].ch[0][i];
      e1 += streams[1].ch[0][i] * streams[1].ch[0][i];
    }
    const int strong = e0 >= e1 ? 0 : 1;
    const int weak = 1 - strong;
    for (size_t i = s_begin; i < s_end; ++i) {
      streams[strong].ch[0][i] += streams[weak].ch[0][i];
      streams[weak].ch[0][i] *= cfg.suppress_gain;
    }
    t = end + 1;
  }
}

CssResult run_css(const Waveform& stream, const PipelineConfig& pipeline_cfg,
                  const CssConfig& css_cfg, const MixtureBundle* truth) {
  stream.check();
  css_cfg.validate();
  const double fs = stream.sample_rate;
  const size_t len = stream.length();
  const std::vector<BlockRef> blocks = segment_blocks(len, fs, css_cfg);

  PipelineConfig pcfg = pipeline_cfg;
  pcfg.normalize = false;  // normalization is done here, online
  const int w = pcfg.stft.window_samples(fs);
  const int h = pcfg.stft.shift_samples(fs);
  require(len >= static_cast<size_t>(w), "too short");
  const size_t shift =
      static_cast<size_t>(std::lround(css_cfg.shift_s * fs));
  require(shift % h == 0, "block shift must be a whole number of STFT hops");
  const int shift_frames = static_cast<int>(shift / h);

  CssResult result;
  result.streams.assign(2, Waveform(1, len, fs));
  CssState state;

  for (const BlockRef& b : blocks) {
    // cumulative variance over all samples up to the block end
    const size_t upto = b.offset + b.length;
    for (size_t i = state.consumed; i < upto; ++i)
      for (int c = 0; c < stream.channels(); ++c) {
        const double v = stream.ch[c][i];
        state.running_sum += v;
        state.running_sumsq += v * v;
        ++state.running_count;
      }
    state.consumed = std::max(state.consumed, upto);
    const double n = static_cast<double>(state.running_count);
    const double mean = state.running_sum / n;
    const double var = state.running_sumsq / n - mean * mean;
    const double scale = var > 1e-30 ? 1.0 / std::sqrt(var) : 1.0;

    const size_t emit_begin = state.cursor;
    const size_t emit_end = upto;

    if (b.length < static_cast<size_t>(w)) {
      // tail shorter than one analysis window: nothing to transform
      state.cursor = emit_end;
      continue;
    }

    Waveform blk(stream.channels(), b.length, fs);
    for (int c = 0; c < stream.channels(); ++c)
      for (size_t i = 0; i < b.length; ++i)
        blk.ch[c][i] = stream.ch[c][b.offset + i] * scale;

    SeparatorContext ctx;
    ctx.sample_offset = b.offset;
    ctx.sample_count = b.length;
    ctx.norm_scale = scale;
    PipelineResult res = run_pipeline(blk, pcfg, &ctx);

    // reverse the normalization before stitching
    SourceEstimates denorm = res.final_spec;
    for (auto& s : denorm.src)
      for (auto& v : s.data) v /= res.total_scale;

    const PermutationAssignment perm =
        stitch(state, denorm, shift_frames, css_cfg);
    result.block_perms.push_back(perm);

    // pipeline waveforms are still in the normalized domain (its own
    // normalization was off); undo the online scale on emission
    for (int slot = 0; slot < 2; ++slot) {
      const std::vector<double>& est = res.sources[perm.map[slot]].ch[0];
      for (size_t i = emit_begin; i < emit_end; ++i)
        result.streams[slot].ch[0][i] = est[i - b.offset] / scale;
    }
    state.cursor = emit_end;
  }

  if (css_cfg.counting == CssConfig::Counting::oracle) {
    require(truth != nullptr, "oracle counting needs ground truth");
    const int q = truth->geometry.reference_index;
    result.counts = count_speakers_oracle(truth->direct, q, pcfg.stft,
                                          css_cfg, len);
    merge_and_suppress(result.streams, result.counts, pcfg.stft, css_cfg);
  }
  return result;
}

}  // namespace mcss
