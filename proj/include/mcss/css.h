// mcss/css.h
//
// Block-online continuous speech separation: overlapped blocks run through
// the utterance pipeline, stitched across block boundaries, with an
// optional speaker-count-driven merge of one-speaker segments.

#ifndef MCSS_CSS_H_
#define MCSS_CSS_H_

#include <vector>

#include "mcss/pipeline.h"

namespace mcss {

struct CssConfig {
  double block_s = 2.424;
  double shift_s = 1.2;
  int sources = 2;
  double suppress_gain = 1e-3;
  enum class Counting { none, oracle } counting = Counting::none;
  double stitch_threshold_dbfs = -50.0;  // overlap RMS gate for stitching
  bool stitch_l2 = false;
  double vad_threshold_db = -40.0;  // relative to the stream's peak frame
  int vad_hangover = 10;            // frames
  int count_median = 11;            // median filter before segment extraction

  void validate() const {
    require(shift_s > 0.0 && shift_s < block_s,
            "shift must be positive and smaller than the block");
    require(sources == 2, "block-online separation runs with two streams");
  }
};

struct BlockRef {
  size_t offset = 0;
  size_t length = 0;
};

// Blocks at offsets k * shift; the final block is truncated at the stream
// end. Throws on an empty stream; streams shorter than one block yield a
// single truncated block.
std::vector<BlockRef> segment_blocks(size_t stream_len, double sample_rate,
                                     const CssConfig& cfg);

struct CssState {
  std::vector<Spectrogram> prev_overlap;  // stream-ordered tail of last block
  PermutationAssignment perm;             // stream slot -> block output
  bool has_prev = false;

  // online variance accumulator
  double running_sum = 0.0;
  double running_sumsq = 0.0;
  size_t running_count = 0;
  size_t consumed = 0;  // samples folded into the accumulator

  size_t cursor = 0;  // emitted samples
};

// Chooses identity or swap by the L1 magnitude distance over the frames the
// new block shares with the previous one (frame i of the new block pairs
// with frame shift_frames + i of the previous one); low-energy overlaps
// keep the previous permutation. Updates the state's overlap memory.
PermutationAssignment stitch(CssState& state,
                             const SourceEstimates& new_block,
                             int shift_frames, const CssConfig& cfg);

struct FrameCounts {
  std::vector<int> count;  // per frame, 0..2
};

// Per-speaker energy VAD on the direct-path signals (frame active when its
// RMS is within vad_threshold_db of the stream's peak frame, held for
// vad_hangover frames), summed into per-frame speaker counts.
FrameCounts count_speakers_oracle(const std::vector<Waveform>& direct,
                                  int ref_channel, const StftConfig& stft,
                                  const CssConfig& cfg, size_t stream_len);

// Within each maximal one-speaker segment (after median smoothing), adds
// the weaker stream into the stronger one and scales the weaker segment by
// suppress_gain. Outside the segments the streams are untouched.
void merge_and_suppress(std::vector<Waveform>& streams,
                        const FrameCounts& counts, const StftConfig& stft,
                        const CssConfig& cfg);

struct CssResult {
  std::vector<Waveform> streams;  // two single-channel streams
  std::vector<PermutationAssignment> block_perms;
  FrameCounts counts;  // filled when counting is enabled
};

// Per block: online variance normalization (cumulative over all samples up
// to the block end), pipeline, denormalization, stitching, then emission of
// the block's new samples. The emitted sample at time t only depends on
// input up to t + shift. truth is required for oracle separators and
// oracle counting.
CssResult run_css(const Waveform& stream, const PipelineConfig& pipeline_cfg,
                  const CssConfig& css_cfg,
                  const MixtureBundle* truth = nullptr);

}  // namespace mcss

#endif  // MCSS_CSS_H_
