// mcss/separator.h
//
// Pluggable separators producing per-source complex spectra at a reference
// microphone, the utterance-level permutation-invariant loss they are
// trained with, and oracle separators built from simulation ground truth.

#ifndef MCSS_SEPARATOR_H_
#define MCSS_SEPARATOR_H_

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mcss/simulate.h"
#include "mcss/stft.h"

namespace mcss {

// Per-source estimates [source](t, f) at one microphone.
struct SourceEstimates {
  std::vector<Spectrogram> src;
  int stage = 1;  // which network stage produced them

  int sources() const { return static_cast<int>(src.size()); }
  int frames() const { return src.empty() ? 0 : src[0].frames; }
  int bins() const { return src.empty() ? 0 : src[0].bins; }
};

// Real-valued T-F plane, data[t * bins + f].
struct RealTf {
  int frames = 0;
  int bins = 0;
  std::vector<double> data;
  RealTf() = default;
  RealTf(int t, int f) : frames(t), bins(f), data(size_t(t) * f, 0.0) {}
  double& at(int t, int f) { return data[size_t(t) * bins + f]; }
  double at(int t, int f) const { return data[size_t(t) * bins + f]; }
};

struct MaskSpectrogram {
  std::vector<RealTf> src;
};

struct PermutationAssignment {
  std::vector<int> map;  // estimate index -> reference index

  bool identity() const {
    for (size_t i = 0; i < map.size(); ++i)
      if (map[i] != static_cast<int>(i)) return false;
    return true;
  }
};

// L1 loss on RI components plus magnitude, minimized over all pairings of
// estimates to references (or evaluated at the identity pairing when
// resolve_permutation is false). Ties break to the lexicographically
// smallest permutation. Throws for more than 10 sources. magnitude_weight
// scales the magnitude term (1 = the three terms weigh equally).
std::pair<double, PermutationAssignment> upit_loss(
    const SourceEstimates& est, const SourceEstimates& ref,
    bool resolve_permutation, double magnitude_weight = 1.0);

// Pairing cost of one estimate/reference spectrogram pair (the summand of
// the loss above).
double pair_loss(const Spectrogram& est, const Spectrogram& ref,
                 double magnitude_weight = 1.0);

enum class OracleKind { smm, psm, complex_spectrum };

// Oracle masks from Table-I definitions: SMM = |S|/|Y|,
// PSM = |S| cos(angle(S) - angle(Y)) / |Y|; zero where |Y| = 0.
MaskSpectrogram oracle_mask(OracleKind kind, const Spectrogram& mix_ref,
                            const SourceEstimates& truth, bool clamp = false);

// smm/psm: mask times the reference-mic mixture (mixture phase retained);
// complex_spectrum: the exact truth spectra.
SourceEstimates oracle_separate(OracleKind kind,
                                const MultichannelSpectrogram& mix,
                                const SourceEstimates& truth, int ref_channel,
                                bool clamp = false);

// Context a pipeline hands to a separator along with the input planes.
struct SeparatorContext {
  StftConfig stft;
  double sample_rate = 0.0;
  double norm_scale = 1.0;    // gain already applied to the mixture
  size_t sample_offset = 0;   // block start within the underlying stream
  size_t sample_count = 0;    // 0 = whole stream
  int ref_mic = 0;            // microphone whose sources are predicted
  int num_sources = 2;
  int only_source = -1;       // >= 0: per-speaker post-filter run
};

// Input plane layout for a separator invocation. Planes are stacked in the
// contractual order <mics..., BF(s)..., stage-1 estimate(s)..., |Y_q|>.
struct PlaneLayout {
  int mics = 0;
  int beamformed = 0;
  int stage1 = 0;
  bool magnitude = false;
  int total() const { return mics + beamformed + stage1 + (magnitude ? 1 : 0); }
  std::string describe() const;
};

class Separator {
 public:
  virtual ~Separator() = default;
  virtual std::string name() const = 0;
  // Fixed input arity, if any (layout-agnostic separators return nullopt).
  virtual std::optional<int> fixed_arity() const { return std::nullopt; }
  virtual SourceEstimates separate(
      const std::vector<const Spectrogram*>& planes, const PlaneLayout& layout,
      const SeparatorContext& ctx) const = 0;
};

// Checks the plane count against the separator's declared arity, then runs.
SourceEstimates apply_separator(const Separator& sep,
                                const std::vector<const Spectrogram*>& planes,
                                const PlaneLayout& layout,
                                const SeparatorContext& ctx);

// Oracle separator: extracts truth spectra for ctx.ref_mic from the bundle's
// direct-path signals (sliced and scaled to match the pipeline's view of the
// mixture) and applies the chosen oracle.
class OracleSeparator : public Separator {
 public:
  OracleSeparator(OracleKind kind, const MixtureBundle* truth,
                  bool clamp = false)
      : kind_(kind), truth_(truth), clamp_(clamp) {}
  std::string name() const override;
  SourceEstimates separate(const std::vector<const Spectrogram*>& planes,
                           const PlaneLayout& layout,
                           const SeparatorContext& ctx) const override;

  SourceEstimates truth_at(const SeparatorContext& ctx) const;

 private:
  OracleKind kind_;
  const MixtureBundle* truth_;
  bool clamp_;
};

// Complex oracle corrupted by circular complex Gaussian noise at a fixed
// SNR. Noise is a deterministic function of (seed, source, frame, bin) so
// results do not depend on evaluation order.
class DegradedOracleSeparator : public Separator {
 public:
  DegradedOracleSeparator(const MixtureBundle* truth, double snr_db,
                          uint64_t seed)
      : oracle_(OracleKind::complex_spectrum, truth), snr_db_(snr_db),
        seed_(seed) {}
  std::string name() const override;
  SourceEstimates separate(const std::vector<const Spectrogram*>& planes,
                           const PlaneLayout& layout,
                           const SeparatorContext& ctx) const override;

 private:
  OracleSeparator oracle_;
  double snr_db_;
  uint64_t seed_;
};

// Minimal post-filter: averages each source's beamformed plane with its
// stage-1 estimate plane. Exercises the contractual stage-2 plane order.
class BlendPostFilter : public Separator {
 public:
  std::string name() const override { return "blend"; }
  SourceEstimates separate(const std::vector<const Spectrogram*>& planes,
                           const PlaneLayout& layout,
                           const SeparatorContext& ctx) const override;
};

}  // namespace mcss

#endif  // MCSS_SEPARATOR_H_
