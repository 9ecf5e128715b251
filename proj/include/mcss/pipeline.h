// mcss/pipeline.h
//
// System compositions: stage-1 separation (single-mic per channel, or
// multi-mic with circular channel shifting), cross-microphone source
// alignment, TI/time-varying MVDR, and joint or per-speaker post-filtering.

#ifndef MCSS_PIPELINE_H_
#define MCSS_PIPELINE_H_

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mcss/beamform.h"
#include "mcss/separator.h"

namespace mcss {

enum class Topology {
  SISO1,
  SISO1_BF,
  SISO1_BF_SISO2,
  MISO1,
  MISO1_BF,
  MISO1_BF_MISO2,
  MISO1_BF_MISO3,
  MISO1_MISO4,
  MISO1_MISO5,
};

std::string topology_name(Topology t);
Topology topology_from_name(const std::string& name);
std::vector<std::string> topology_names();

bool topology_is_miso(Topology t);
bool topology_has_beamformer(Topology t);
bool topology_has_stage2(Topology t);
bool topology_stage2_per_speaker(Topology t);

struct PipelineConfig {
  Topology topology = Topology::MISO1_BF_MISO3;
  int num_sources = 2;
  ArrayLayout layout = ArrayLayout::pure_circle;
  std::shared_ptr<Separator> stage1;
  std::shared_ptr<Separator> stage2;
  bool include_magnitude_feature = false;
  std::optional<TvMvdrConfig> tv_mvdr;
  StftConfig stft;
  bool normalize = true;
  bool mask_based_covariance = false;  // cheap q-only mode
  bool align_l2 = false;
  bool keep_intermediates = false;
};

// Channel orderings for running one multi-mic model at every microphone.
// pure_circle: rotation <p, ..., P, 1, ..., p-1> for each p. With a center
// mic, the circle mics rotate and the center mic always comes last; only
// the circle mics get orderings (and are used for beamforming downstream).
std::vector<std::vector<int>> circular_orders(int num_mics,
                                              ArrayLayout layout);

struct AlignedEstimates {
  PerMicEstimates per_mic;                   // consistent speaker indexing
  std::vector<PermutationAssignment> perms;  // per mic, slot -> raw index
};

// Aligns every non-reference mic's estimates to the reference mic's by
// minimizing the summed magnitude distance (L1, or L2 when use_l2).
AlignedEstimates align_sources(const PerMicEstimates& est, int reference,
                               bool use_l2 = false);

struct PipelineResult {
  SourceEstimates final_spec;     // normalized domain, at the reference mic
  std::vector<Waveform> sources;  // single-channel, original level
  double norm_scale = 1.0;        // scale the pipeline itself applied
  double total_scale = 1.0;       // incl. any externally applied scale

  // intermediates, kept when cfg.keep_intermediates
  PerMicEstimates stage1;
  std::vector<int> stage1_mics;
  AlignedEstimates aligned;
  SourceEstimates beamformed;
  SourceEstimates stage2;
};

// Runs <normalize -> STFT -> stage 1 (per circular order) -> align ->
// MVDR -> stage 2 -> iSTFT -> denormalize> as required by the topology.
// base_ctx carries the caller's sample offset and normalization scale for
// block-online use.
PipelineResult run_pipeline(const Waveform& mix, const PipelineConfig& cfg,
                            const SeparatorContext* base_ctx = nullptr);

// Unbound pipeline description as read from JSON; separators are named and
// bound to per-mixture ground truth later.
struct PipelineSpec {
  Topology topology = Topology::MISO1_BF_MISO3;
  int num_sources = 2;
  std::string stage1 = "oracle:complex";
  std::string stage2;
  bool include_magnitude_feature = false;
  std::optional<TvMvdrConfig> tv_mvdr;
  StftConfig stft;
  bool mask_based_covariance = false;
  bool align_l2 = false;
};

PipelineSpec parse_pipeline_spec(const std::string& json_text);
std::string pipeline_spec_to_json(const PipelineSpec& spec);

// Separator names: "oracle:complex" | "oracle:psm" | "oracle:smm" |
// "oracle_noisy:<snr_db>" | "blend" | "linear:<model.json>".
std::shared_ptr<Separator> make_separator(const std::string& name,
                                          const MixtureBundle* truth,
                                          uint64_t seed = 17);

PipelineConfig bind_pipeline(const PipelineSpec& spec,
                             const MixtureBundle* truth,
                             ArrayLayout layout);

}  // namespace mcss

#endif  // MCSS_PIPELINE_H_
