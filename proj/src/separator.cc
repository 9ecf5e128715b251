// separator.cc

#include "mcss/separator.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mcss {

double pair_loss(const Spectrogram& est, const Spectrogram& ref,
                 double magnitude_weight) {
  require(est.frames == ref.frames && est.bins == ref.bins,
          "estimate/reference dims differ");
  double loss = 0.0;
  for (size_t i = 0; i < est.data.size(); ++i) {
    const cplx e = est.data[i];
    const cplx r = ref.data[i];
    loss += std::abs(e.real() - r.real());
    loss += std::abs(e.imag() - r.imag());
    loss += magnitude_weight * std::abs(std::abs(e) - std::abs(r));
  }
  return loss;
}

std::pair<double, PermutationAssignment> upit_loss(
    const SourceEstimates& est, const SourceEstimates& ref,
    bool resolve_permutation, double magnitude_weight) {
  const int C = est.sources();
  require(C >= 1 && C == ref.sources(), "source count mismatch");
  require(est.frames() == ref.frames() && est.bins() == ref.bins(),
          "estimate/reference dims differ");
  require(C <= 10, "exhaustive permutation search is limited to 10 sources");

  std::vector<std::vector<double>> cost(C, std::vector<double>(C, 0.0));
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < C; ++j)
      cost[i][j] = pair_loss(est.src[i], ref.src[j], magnitude_weight);

  PermutationAssignment best;
  best.map.resize(C);
  std::iota(best.map.begin(), best.map.end(), 0);

  if (!resolve_permutation) {
    double loss = 0.0;
    for (int i = 0; i < C; ++i) loss += cost[i][i];
    return {loss, best};
  }

  std::vector<int> perm(C);
  std::iota(perm.begin(), perm.end(), 0);
  double best_loss = std::numeric_limits<double>::infinity();
  do {
    double loss = 0.0;
    for (int i = 0; i < C; ++i) loss += cost[i][perm[i]];
    if (loss < best_loss) {
      best_loss = loss;
      best.map = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return {best_loss, best};
}

MaskSpectrogram oracle_mask(OracleKind kind, const Spectrogram& mix_ref,
                            const SourceEstimates& truth, bool clamp) {
  require(kind != OracleKind::complex_spectrum,
          "complex oracle has no mask form");
  MaskSpectrogram masks;
  for (const auto& s : truth.src) {
    require(s.frames == mix_ref.frames && s.bins == mix_ref.bins,
            "truth dims differ from the mixture");
    RealTf m(s.frames, s.bins);
#pragma omp parallel for schedule(static)
    for (int t = 0; t < s.frames; ++t) {
      for (int f = 0; f < s.bins; ++f) {
        const cplx y = mix_ref.at(t, f);
        const double ay = std::abs(y);
        if (ay == 0.0) {
          m.at(t, f) = 0.0;
          continue;
        }
        const cplx sv = s.at(t, f);
        double v;
        if (kind == OracleKind::smm) {
          v = std::abs(sv) / ay;
        } else {
          // |S| cos(angle(S) - angle(Y)) / |Y| = Re(S conj(Y)) / |Y|^2
          v = (sv * std::conj(y)).real() / (ay * ay);
        }
        if (clamp) v = std::clamp(v, 0.0, 1.0);
        m.at(t, f) = v;
      }
    }
    masks.src.push_back(std::move(m));
  }
  return masks;
}

SourceEstimates oracle_separate(OracleKind kind,
                                const MultichannelSpectrogram& mix,
                                const SourceEstimates& truth, int ref_channel,
                                bool clamp) {
  require(ref_channel >= 0 && ref_channel < mix.channels(),
          "reference channel out of range");
  const Spectrogram& y = mix.ch[ref_channel];

  SourceEstimates out;
  out.stage = 1;
  if (kind == OracleKind::complex_spectrum) {
    out.src = truth.src;
    return out;
  }
  MaskSpectrogram masks = oracle_mask(kind, y, truth, clamp);
  for (const auto& m : masks.src) {
    Spectrogram s(y.frames, y.bins);
    for (size_t i = 0; i < s.data.size(); ++i) s.data[i] = m.data[i] * y.data[i];
    out.src.push_back(std::move(s));
  }
  return out;
}

std::string PlaneLayout::describe() const {
  std::string s = "<" + std::to_string(mics) + " mic plane(s)";
  if (beamformed) s += ", " + std::to_string(beamformed) + " beamformed";
  if (stage1) s += ", " + std::to_string(stage1) + " stage-1 estimate(s)";
  if (magnitude) s += ", |Y_q|";
  s += ">";
  return s;
}

SourceEstimates apply_separator(const Separator& sep,
                                const std::vector<const Spectrogram*>& planes,
                                const PlaneLayout& layout,
                                const SeparatorContext& ctx) {
  require(static_cast<int>(planes.size()) == layout.total(),
          "plane count does not match layout " + layout.describe());
  if (auto arity = sep.fixed_arity(); arity.has_value())
    require(*arity == static_cast<int>(planes.size()),
            "separator '" + sep.name() + "' expects " +
                std::to_string(*arity) + " planes, got layout " +
                layout.describe());
  require(!planes.empty() && planes[0] != nullptr, "missing mixture plane");
  return sep.separate(planes, layout, ctx);
}

std::string OracleSeparator::name() const {
  switch (kind_) {
    case OracleKind::smm: return "oracle:smm";
    case OracleKind::psm: return "oracle:psm";
    default: return "oracle:complex";
  }
}

SourceEstimates OracleSeparator::truth_at(const SeparatorContext& ctx) const {
  require(truth_ != nullptr, "oracle separator has no ground truth bound");
  const int C = static_cast<int>(truth_->direct.size());
  std::vector<int> wanted;
  if (ctx.only_source >= 0) {
    require(ctx.only_source < C, "per-speaker source index out of range");
    wanted.push_back(ctx.only_source);
  } else {
    for (int c = 0; c < C; ++c) wanted.push_back(c);
  }
  SourceEstimates truth;
  truth.stage = 1;
  for (int c : wanted) {
    const std::vector<double>& full = truth_->direct[c].ch.at(ctx.ref_mic);
    const size_t count =
        ctx.sample_count == 0 ? full.size() : ctx.sample_count;
    std::vector<double> slice(count, 0.0);
    for (size_t i = 0; i < count; ++i) {
      const size_t idx = ctx.sample_offset + i;
      if (idx < full.size()) slice[i] = full[idx] * ctx.norm_scale;
    }
    truth.src.push_back(stft_channel(slice, ctx.sample_rate, ctx.stft));
  }
  return truth;
}

SourceEstimates OracleSeparator::separate(
    const std::vector<const Spectrogram*>& planes, const PlaneLayout& layout,
    const SeparatorContext& ctx) const {
  (void)layout;
  SourceEstimates truth = truth_at(ctx);
  MultichannelSpectrogram mix;
  mix.sample_rate = ctx.sample_rate;
  mix.ch.push_back(*planes[0]);
  return oracle_separate(kind_, mix, truth, 0, clamp_);
}

std::string DegradedOracleSeparator::name() const {
  return "oracle_noisy:" + std::to_string(snr_db_);
}

SourceEstimates DegradedOracleSeparator::separate(
    const std::vector<const Spectrogram*>& planes, const PlaneLayout& layout,
    const SeparatorContext& ctx) const {
  SourceEstimates est = oracle_.separate(planes, layout, ctx);
  const double snr_lin = db_to_lin10(snr_db_);
  for (int c = 0; c < est.sources(); ++c) {
    const uint64_t src_id =
        ctx.only_source >= 0 ? uint64_t(ctx.only_source) : uint64_t(c);
    Spectrogram& s = est.src[c];
    double sig = 0.0;
    for (const cplx& v : s.data) sig += std::norm(v);
    sig /= std::max<size_t>(s.data.size(), 1);
    const double nstd = std::sqrt(sig / snr_lin / 2.0);
#pragma omp parallel for schedule(static)
    for (int t = 0; t < s.frames; ++t) {
      for (int f = 0; f < s.bins; ++f) {
        uint64_t h = seed_ ^ (0x9e3779b97f4a7c15ULL * (src_id + 1));
        h ^= 0xc2b2ae3d27d4eb4fULL * (uint64_t(ctx.sample_offset) + 1);
        h ^= 0x165667b19e3779f9ULL * (uint64_t(t) + 1);
        h ^= 0x27d4eb2f165667c5ULL * (uint64_t(f) + 1);
        h ^= 0xd6e8feb86659fd93ULL * (uint64_t(ctx.ref_mic) + 1);
        Rng r(h);
        s.at(t, f) += cplx(nstd * r.normal(), nstd * r.normal());
      }
    }
  }
  return est;
}

SourceEstimates BlendPostFilter::separate(
    const std::vector<const Spectrogram*>& planes, const PlaneLayout& layout,
    const SeparatorContext& ctx) const {
  require(layout.stage1 >= 1, "blend post-filter needs stage-1 planes");
  require(layout.beamformed == 0 || layout.beamformed == layout.stage1,
          "blend post-filter needs matching beamformed/stage-1 plane counts");
  (void)ctx;
  SourceEstimates out;
  out.stage = 2;
  for (int c = 0; c < layout.stage1; ++c) {
    const Spectrogram& s1 = *planes[layout.mics + layout.beamformed + c];
    Spectrogram s(s1.frames, s1.bins);
    if (layout.beamformed > 0) {
      const Spectrogram& bf = *planes[layout.mics + c];
      require(bf.frames == s1.frames && bf.bins == s1.bins,
              "plane dims differ");
      for (size_t i = 0; i < s.data.size(); ++i)
        s.data[i] = 0.5 * (bf.data[i] + s1.data[i]);
    } else {
      s.data = s1.data;  // no beamformed plane: pass the estimate through
    }
    out.src.push_back(std::move(s));
  }
  return out;
}

}  // namespace mcss
