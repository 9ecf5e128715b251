// pipeline.cc

#include "mcss/pipeline.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "mcss/linear_model.h"

namespace mcss {

namespace {

const std::vector<std::pair<Topology, std::string>>& topology_table() {
  static const std::vector<std::pair<Topology, std::string>> table = {
      {Topology::SISO1, "SISO1"},
      {Topology::SISO1_BF, "SISO1_BF"},
      {Topology::SISO1_BF_SISO2, "SISO1_BF_SISO2"},
      {Topology::MISO1, "MISO1"},
      {Topology::MISO1_BF, "MISO1_BF"},
      {Topology::MISO1_BF_MISO2, "MISO1_BF_MISO2"},
      {Topology::MISO1_BF_MISO3, "MISO1_BF_MISO3"},
      {Topology::MISO1_MISO4, "MISO1_MISO4"},
      {Topology::MISO1_MISO5, "MISO1_MISO5"},
  };
  return table;
}

Spectrogram magnitude_plane(const Spectrogram& s) {
  Spectrogram m(s.frames, s.bins);
  for (size_t i = 0; i < s.data.size(); ++i)
    m.data[i] = cplx(std::abs(s.data[i]), 0.0);
  return m;
}

double magnitude_distance(const Spectrogram& a, const Spectrogram& b,
                          bool use_l2) {
  double d = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double diff = std::abs(a.data[i]) - std::abs(b.data[i]);
    d += use_l2 ? diff * diff : std::abs(diff);
  }
  return d;
}

}  // namespace

std::string topology_name(Topology t) {
  for (const auto& [val, name] : topology_table())
    if (val == t) return name;
  return "?";
}

Topology topology_from_name(const std::string& name) {
  for (const auto& [val, n] : topology_table())
    if (n == name) return val;
  std::string valid;
  for (const auto& [val, n] : topology_table()) valid += n + " ";
  throw Error("unknown topology '" + name + "' (valid: " + valid + ")");
}

std::vector<std::string> topology_names() {
  std::vector<std::string> out;
  for (const auto& [val, n] : topology_table()) out.push_back(n);
  return out;
}

bool topology_is_miso(Topology t) {
  switch (t) {
    case Topology::MISO1:
    case Topology::MISO1_BF:
    case Topology::MISO1_BF_MISO2:
    case Topology::MISO1_BF_MISO3:
    case Topology::MISO1_MISO4:
    case Topology::MISO1_MISO5:
      return true;
    default:
      return false;
  }
}

bool topology_has_beamformer(Topology t) {
  switch (t) {
    case Topology::SISO1_BF:
    case Topology::SISO1_BF_SISO2:
    case Topology::MISO1_BF:
    case Topology::MISO1_BF_MISO2:
    case Topology::MISO1_BF_MISO3:
      return true;
    default:
      return false;
  }
}

bool topology_has_stage2(Topology t) {
  switch (t) {
    case Topology::SISO1_BF_SISO2:
    case Topology::MISO1_BF_MISO2:
    case Topology::MISO1_BF_MISO3:
    case Topology::MISO1_MISO4:
    case Topology::MISO1_MISO5:
      return true;
    default:
      return false;
  }
}

bool topology_stage2_per_speaker(Topology t) {
  return t == Topology::MISO1_BF_MISO3 || t == Topology::MISO1_MISO5;
}

std::vector<std::vector<int>> circular_orders(int num_mics,
                                              ArrayLayout layout) {
  require(num_mics >= 2, "need at least two mics for circular shifting");
  std::vector<std::vector<int>> orders;
  const int circle =
      layout == ArrayLayout::circle_plus_center ? num_mics - 1 : num_mics;
  for (int p = 0; p < circle; ++p) {
    std::vector<int> order;
    for (int i = 0; i < circle; ++i) order.push_back((p + i) % circle);
    if (layout == ArrayLayout::circle_plus_center)
      order.push_back(num_mics - 1);
    orders.push_back(std::move(order));
  }
  return orders;
}

AlignedEstimates align_sources(const PerMicEstimates& est, int reference,
                               bool use_l2) {
  require(!est.empty(), "no estimates to align");
  require(reference >= 0 && reference < static_cast<int>(est.size()),
          "reference out of range");
  const int C = est[reference].sources();
  for (const auto& e : est)
    require(e.sources() == C && e.frames() == est[reference].frames() &&
                e.bins() == est[reference].bins(),
            "per-mic estimate dims differ");
  require(C <= 10, "exhaustive permutation search is limited to 10 sources");

  AlignedEstimates out;
  out.per_mic.resize(est.size());
  out.perms.resize(est.size());

  for (size_t p = 0; p < est.size(); ++p) {
    PermutationAssignment perm;
    perm.map.resize(C);
    std::iota(perm.map.begin(), perm.map.end(), 0);
    if (static_cast<int>(p) != reference) {
      std::vector<std::vector<double>> cost(C, std::vector<double>(C, 0.0));
      for (int i = 0; i < C; ++i)
        for (int j = 0; j < C; ++j)
          cost[i][j] = magnitude_distance(est[p].src[i],
                                          est[reference].src[j], use_l2);
      // choose sigma minimizing sum_c cost[sigma(c)][c]
      std::vector<int> sigma(C);
      std::iota(sigma.begin(), sigma.end(), 0);
      std::vector<int> best = sigma;
      double best_cost = std::numeric_limits<double>::infinity();
      do {
        double d = 0.0;
        for (int c = 0; c < C; ++c) d += cost[sigma[c]][c];
        if (d < best_cost) {
          best_cost = d;
          best = sigma;
        }
      } while (std::next_permutation(sigma.begin(), sigma.end()));
      perm.map = best;
    }
    SourceEstimates aligned;
    aligned.stage = est[p].stage;
    for (int c = 0; c < C; ++c) aligned.src.push_back(est[p].src[perm.map[c]]);
    out.per_mic[p] = std::move(aligned);
    out.perms[p] = std::move(perm);
  }
  return out;
}

PipelineResult run_pipeline(const Waveform& mix, const PipelineConfig& cfg,
                            const SeparatorContext* base_ctx) {
  mix.check();
  const Topology topo = cfg.topology;
  const int P = mix.channels();
  const int q = 0;  // reference microphone
  require(cfg.stage1 != nullptr,
          "topology " + topology_name(topo) + " has no stage-1 binding");
  if (topology_has_stage2(topo))
    require(cfg.stage2 != nullptr,
            "topology " + topology_name(topo) + " has no stage-2 binding");
  if (topology_is_miso(topo)) require(P >= 2, "MISO topologies need P >= 2");
  if (cfg.mask_based_covariance)
    require(!cfg.tv_mvdr.has_value(),
            "time-varying MVDR needs estimate-based covariances");

  PipelineResult result;

  // signal-level variance normalization
  Waveform work = mix;
  double own_scale = 1.0;
  if (cfg.normalize) {
    auto [normed, trace] = normalize_variance(mix, NormalizationMode::offline);
    work = std::move(normed);
    own_scale = trace.scale;
  }
  result.norm_scale = own_scale;

  SeparatorContext ctx;
  if (base_ctx != nullptr) ctx = *base_ctx;
  ctx.stft = cfg.stft;
  ctx.sample_rate = mix.sample_rate;
  ctx.norm_scale = (base_ctx ? base_ctx->norm_scale : 1.0) * own_scale;
  ctx.num_sources = cfg.num_sources;
  if (ctx.sample_count == 0) ctx.sample_count = mix.length();
  result.total_scale = ctx.norm_scale;

  const MultichannelSpectrogram Y = stft(work, cfg.stft);

  const bool needs_bf = topology_has_beamformer(topo);
  const bool miso = topology_is_miso(topo);

  // stage 1: which mics need estimates
  std::vector<std::vector<int>> runs;  // channel ordering per run
  if (miso) {
    const auto orders = circular_orders(P, cfg.layout);
    if (needs_bf && !cfg.mask_based_covariance)
      runs = orders;
    else
      runs = {orders[q]};
  } else {
    std::vector<int> mics;
    if (needs_bf && !cfg.mask_based_covariance)
      for (int m = 0; m < P; ++m) mics.push_back(m);
    else
      mics.push_back(q);
    for (int m : mics) runs.push_back({m});
  }

  PerMicEstimates stage1(P);
  std::vector<bool> have(P, false);
  for (const auto& order : runs) {
    std::vector<const Spectrogram*> planes;
    for (int m : order) planes.push_back(&Y.ch[m]);
    PlaneLayout layout;
    layout.mics = static_cast<int>(order.size());
    layout.magnitude = cfg.include_magnitude_feature;
    Spectrogram mag;
    if (layout.magnitude) {
      mag = magnitude_plane(Y.ch[order[0]]);
      planes.push_back(&mag);
    }
    SeparatorContext run_ctx = ctx;
    run_ctx.ref_mic = order[0];
    SourceEstimates est = apply_separator(*cfg.stage1, planes, layout, run_ctx);
    require(est.sources() == cfg.num_sources,
            "stage-1 separator produced a wrong source count");
    stage1[order[0]] = std::move(est);
    have[order[0]] = true;
  }

  // MVDR stage
  SourceEstimates bf;
  if (needs_bf) {
    std::vector<int> bf_mics;
    if (cfg.mask_based_covariance) {
      for (int m = 0; m < P; ++m) bf_mics.push_back(m);
    } else if (miso && cfg.layout == ArrayLayout::circle_plus_center) {
      for (int m = 0; m < P - 1; ++m) bf_mics.push_back(m);
    } else {
      for (int m = 0; m < P; ++m) bf_mics.push_back(m);
    }

    MultichannelSpectrogram sub;
    sub.sample_rate = Y.sample_rate;
    for (int m : bf_mics) sub.ch.push_back(Y.ch[m]);

    CovarianceStack cov;
    AlignedEstimates aligned;
    if (cfg.mask_based_covariance) {
      MaskSpectrogram masks;
      const Spectrogram& yq = Y.ch[q];
      for (int c = 0; c < cfg.num_sources; ++c) {
        RealTf m(yq.frames, yq.bins);
        for (int t = 0; t < yq.frames; ++t)
          for (int f = 0; f < yq.bins; ++f) {
            const double ay = std::abs(yq.at(t, f));
            m.at(t, f) = ay > 0.0
                             ? std::clamp(std::abs(stage1[q].src[c].at(t, f)) /
                                              ay, 0.0, 1.0)
                             : 0.0;
          }
        masks.src.push_back(std::move(m));
      }
      cov = covariance_from_mask(masks, sub);
    } else {
      PerMicEstimates subset;
      for (int m : bf_mics) {
        require(have[m], "stage-1 estimate missing at mic " +
                             std::to_string(m + 1));
        subset.push_back(stage1[m]);
      }
      aligned = align_sources(subset, q, cfg.align_l2);
      cov = covariance_from_estimates(aligned.per_mic, sub);
    }

    const SteeringVectors sv = steering_vectors(cov, q);
    BeamformerWeights w;
    if (cfg.tv_mvdr.has_value()) {
      const ResidualStack res = residuals_from_estimates(aligned.per_mic, sub);
      w = tv_mvdr_weights(res, cov, sv, *cfg.tv_mvdr);
    } else {
      w = mvdr_weights(cov, sv);
    }
    bf = apply_beamformer(w, sub);
    if (cfg.keep_intermediates) result.aligned = std::move(aligned);
  }

  // stage 2 post-filter
  SourceEstimates stage2;
  if (topology_has_stage2(topo)) {
    std::vector<int> mic_planes;
    if (miso)
      for (int m = 0; m < P; ++m) mic_planes.push_back(m);
    else
      mic_planes.push_back(q);

    Spectrogram mag;
    if (cfg.include_magnitude_feature) mag = magnitude_plane(Y.ch[q]);

    const bool per_speaker = topology_stage2_per_speaker(topo);
    const int C = cfg.num_sources;
    stage2.stage = 2;

    auto run_stage2 = [&](int only) {
      std::vector<const Spectrogram*> planes;
      PlaneLayout layout;
      layout.mics = static_cast<int>(mic_planes.size());
      layout.magnitude = cfg.include_magnitude_feature;
      for (int m : mic_planes) planes.push_back(&Y.ch[m]);
      if (needs_bf) {
        if (only >= 0) {
          planes.push_back(&bf.src[only]);
          layout.beamformed = 1;
        } else {
          for (int c = 0; c < C; ++c) planes.push_back(&bf.src[c]);
          layout.beamformed = C;
        }
      }
      if (only >= 0) {
        planes.push_back(&stage1[q].src[only]);
        layout.stage1 = 1;
      } else {
        for (int c = 0; c < C; ++c) planes.push_back(&stage1[q].src[c]);
        layout.stage1 = C;
      }
      if (layout.magnitude) planes.push_back(&mag);
      SeparatorContext run_ctx = ctx;
      run_ctx.ref_mic = q;
      run_ctx.only_source = only;
      return apply_separator(*cfg.stage2, planes, layout, run_ctx);
    };

    if (per_speaker) {
      for (int c = 0; c < C; ++c) {
        SourceEstimates one = run_stage2(c);
        require(one.sources() == 1,
                "per-speaker post-filter must produce one source");
        stage2.src.push_back(std::move(one.src[0]));
      }
    } else {
      stage2 = run_stage2(-1);
      require(stage2.sources() == C,
              "joint post-filter produced a wrong source count");
      stage2.stage = 2;
    }
  }

  // outputs
  if (topology_has_stage2(topo))
    result.final_spec = stage2;
  else if (needs_bf)
    result.final_spec = bf;
  else
    result.final_spec = stage1[q];

  MultichannelSpectrogram out_spec;
  out_spec.sample_rate = mix.sample_rate;
  out_spec.ch = result.final_spec.src;
  // the dropped partial analysis window leaves an uncovered tail; synthesize
  // what the frames represent and zero-pad the remainder
  const size_t representable =
      static_cast<size_t>(out_spec.frames() - 1) *
          cfg.stft.shift_samples(mix.sample_rate) +
      cfg.stft.window_samples(mix.sample_rate);
  const size_t synth_len = std::min(mix.length(), representable);
  Waveform out_wave = istft(out_spec, cfg.stft, synth_len);
  for (int c = 0; c < cfg.num_sources; ++c) {
    Waveform one(1, mix.length(), mix.sample_rate);
    for (size_t i = 0; i < synth_len; ++i)
      one.ch[0][i] = out_wave.ch[c][i] / own_scale;
    result.sources.push_back(std::move(one));
  }

  if (cfg.keep_intermediates) {
    for (int m = 0; m < P; ++m)
      if (have[m]) {
        result.stage1.push_back(stage1[m]);
        result.stage1_mics.push_back(m);
      }
    result.beamformed = std::move(bf);
    result.stage2 = std::move(stage2);
  }
  return result;
}

PipelineSpec parse_pipeline_spec(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  PipelineSpec spec;
  spec.topology = topology_from_name(j.at("topology").get<std::string>());
  spec.num_sources = j.value("num_sources", 2);
  spec.stage1 = j.value("stage1", std::string("oracle:complex"));
  spec.stage2 = j.value("stage2", std::string());
  spec.include_magnitude_feature = j.value("include_magnitude_feature", false);
  spec.mask_based_covariance = j.value("mask_based_covariance", false);
  spec.align_l2 = j.value("align_l2", false);
  if (j.contains("tv_mvdr") && !j["tv_mvdr"].is_null()) {
    TvMvdrConfig tv;
    tv.delta = j["tv_mvdr"].value("delta", 2);
    tv.alpha = j["tv_mvdr"].value("alpha", 0.5);
    spec.tv_mvdr = tv;
  }
  if (j.contains("stft")) {
    spec.stft.window_ms = j["stft"].value("window_ms", 32.0);
    spec.stft.shift_ms = j["stft"].value("shift_ms", 8.0);
    spec.stft.dft_size = j["stft"].value("dft_size", 0);
  }
  return spec;
}

std::string pipeline_spec_to_json(const PipelineSpec& spec) {
  nlohmann::json j;
  j["topology"] = topology_name(spec.topology);
  j["num_sources"] = spec.num_sources;
  j["stage1"] = spec.stage1;
  if (!spec.stage2.empty()) j["stage2"] = spec.stage2;
  j["include_magnitude_feature"] = spec.include_magnitude_feature;
  j["mask_based_covariance"] = spec.mask_based_covariance;
  j["align_l2"] = spec.align_l2;
  if (spec.tv_mvdr.has_value())
    j["tv_mvdr"] = {{"delta", spec.tv_mvdr->delta},
                    {"alpha", spec.tv_mvdr->alpha}};
  j["stft"] = {{"window_ms", spec.stft.window_ms},
               {"shift_ms", spec.stft.shift_ms},
               {"dft_size", spec.stft.dft_size}};
  return j.dump(2);
}

std::shared_ptr<Separator> make_separator(const std::string& name,
                                          const MixtureBundle* truth,
                                          uint64_t seed) {
  if (name == "oracle:complex")
    return std::make_shared<OracleSeparator>(OracleKind::complex_spectrum,
                                             truth);
  if (name == "oracle:psm")
    return std::make_shared<OracleSeparator>(OracleKind::psm, truth);
  if (name == "oracle:psm_clamped")
    return std::make_shared<OracleSeparator>(OracleKind::psm, truth, true);
  if (name == "oracle:smm")
    return std::make_shared<OracleSeparator>(OracleKind::smm, truth);
  if (name == "blend") return std::make_shared<BlendPostFilter>();
  if (name.rfind("oracle_noisy:", 0) == 0) {
    const double snr = std::stod(name.substr(13));
    return std::make_shared<DegradedOracleSeparator>(truth, snr, seed);
  }
  if (name.rfind("linear:", 0) == 0)
    return std::make_shared<LinearSeparator>(
        load_linear_model(name.substr(7)));
  throw Error("unknown separator '" + name +
              "' (valid: oracle:complex, oracle:psm, oracle:smm, "
              "oracle_noisy:<snr_db>, blend, linear:<model.json>)");
}

PipelineConfig bind_pipeline(const PipelineSpec& spec,
                             const MixtureBundle* truth, ArrayLayout layout) {
  PipelineConfig cfg;
  cfg.topology = spec.topology;
  cfg.num_sources = spec.num_sources;
  cfg.layout = layout;
  cfg.include_magnitude_feature = spec.include_magnitude_feature;
  cfg.tv_mvdr = spec.tv_mvdr;
  cfg.stft = spec.stft;
  cfg.mask_based_covariance = spec.mask_based_covariance;
  cfg.align_l2 = spec.align_l2;
  cfg.stage1 = make_separator(spec.stage1, truth);
  if (topology_has_stage2(spec.topology)) {
    require(!spec.stage2.empty(), "topology " + topology_name(spec.topology) +
                                      " has no stage-2 binding");
    cfg.stage2 = make_separator(spec.stage2, truth);
  }
  return cfg;
}

}  // namespace mcss
