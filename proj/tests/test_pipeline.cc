// tests/test_pipeline.cc

#include <algorithm>

#include "doctest.h"
#include "fixtures.h"
#include "mcss/metrics.h"
#include "mcss/pipeline.h"
#include "oracles.h"

using namespace mcss;

namespace {

Spectrogram random_spec(Rng& rng, int frames, int bins) {
  Spectrogram s(frames, bins);
  for (auto& v : s.data) v = cplx(rng.normal(), rng.normal());
  return s;
}

PipelineConfig oracle_config(Topology topo, const MixtureBundle& b,
                             const std::string& stage1 = "oracle:complex",
                             const std::string& stage2 = "") {
  PipelineSpec spec;
  spec.topology = topo;
  spec.stage1 = stage1;
  spec.stage2 = stage2.empty() && topology_has_stage2(topo)
                    ? "oracle:complex"
                    : stage2;
  return bind_pipeline(spec, &b, b.geometry.layout);
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("circular orders match the published sequences") {
  // P = 6 pure circle, p = 3 (1-based): <3,4,5,6,1,2>
  const auto pure = circular_orders(6, ArrayLayout::pure_circle);
  REQUIRE(pure.size() == 6);
  CHECK(pure[2] == std::vector<int>{2, 3, 4, 5, 0, 1});
  CHECK(pure[0] == std::vector<int>{0, 1, 2, 3, 4, 5});  // identity at p=1

  // P = 7 circle+center, p = 2 (1-based): <2,3,4,5,6,1,7>
  const auto center = circular_orders(7, ArrayLayout::circle_plus_center);
  REQUIRE(center.size() == 6);  // one rotation per circle mic
  CHECK(center[1] == std::vector<int>{1, 2, 3, 4, 5, 0, 6});
  for (const auto& o : center) CHECK(o.back() == 6);  // center mic is last
}

TEST_CASE("circular orders form a group action") {
  const int P = 6;
  const auto orders = circular_orders(P, ArrayLayout::pure_circle);
  // composing rotation a then b gives rotation (a + b) mod P
  for (int a = 0; a < P; ++a)
    for (int b = 0; b < P; ++b) {
      std::vector<int> composed(P);
      for (int i = 0; i < P; ++i) composed[i] = orders[a][orders[b][i]];
      CHECK(composed == orders[(a + b) % P]);
    }
}

TEST_CASE("alignment fixes a constructed swap and is idempotent") {
  Rng rng(301);
  const int C = 2, T = 12, F = 20;
  SourceEstimates ref_est;
  for (int c = 0; c < C; ++c) ref_est.src.push_back(random_spec(rng, T, F));

  // mic 1 sees the same sources but swapped
  SourceEstimates swapped;
  swapped.src = {ref_est.src[1], ref_est.src[0]};

  PerMicEstimates est = {ref_est, swapped};
  const AlignedEstimates aligned = align_sources(est, 0);
  CHECK(aligned.perms[0].identity());
  CHECK(aligned.perms[1].map == std::vector<int>{1, 0});
  for (int c = 0; c < C; ++c)
    for (size_t i = 0; i < ref_est.src[c].data.size(); ++i)
      CHECK(aligned.per_mic[1].src[c].data[i] == ref_est.src[c].data[i]);

  // aligning aligned estimates changes nothing
  const AlignedEstimates again = align_sources(aligned.per_mic, 0);
  for (size_t p = 0; p < est.size(); ++p) CHECK(again.perms[p].identity());
}

TEST_CASE("alignment matches the exhaustive oracle on random C=3") {
  Rng rng(302);
  for (int trial = 0; trial < 10; ++trial) {
    const int C = 3, T = 6, F = 8;
    SourceEstimates ref_est;
    for (int c = 0; c < C; ++c) ref_est.src.push_back(random_spec(rng, T, F));
    SourceEstimates other;
    for (int c = 0; c < C; ++c) other.src.push_back(random_spec(rng, T, F));

    PerMicEstimates est = {ref_est, other};
    const AlignedEstimates aligned = align_sources(est, 0);

    // exhaustive search over assignments sigma: slot c <- other[sigma[c]]
    std::vector<int> sigma = {0, 1, 2};
    std::vector<int> best = sigma;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
      double cost = 0.0;
      for (int c = 0; c < C; ++c)
        for (size_t i = 0; i < ref_est.src[c].data.size(); ++i)
          cost += std::abs(std::abs(other.src[sigma[c]].data[i]) -
                           std::abs(ref_est.src[c].data[i]));
      if (cost < best_cost) {
        best_cost = cost;
        best = sigma;
      }
    } while (std::next_permutation(sigma.begin(), sigma.end()));
    CHECK(aligned.perms[1].map == best);
  }
}

TEST_CASE("siso1 with the complex oracle reproduces the direct path") {
  const MixtureBundle& b = fixtures::smswsj_batch(2)[0];
  const PipelineConfig cfg = oracle_config(Topology::SISO1, b);
  const PipelineResult res = run_pipeline(b.mixture, cfg);
  REQUIRE(res.sources.size() == 2);
  for (int c = 0; c < 2; ++c)
    CHECK(si_sdr(res.sources[c].ch[0], b.direct[c].ch[0]) == 60.0);
}

TEST_CASE("stage binding errors name the stage") {
  const MixtureBundle& b = fixtures::smswsj_batch(2)[0];
  PipelineConfig cfg = oracle_config(Topology::MISO1, b);
  cfg.topology = Topology::MISO1_BF_MISO3;  // stage2 left unbound
  CHECK_THROWS_WITH_AS(run_pipeline(b.mixture, cfg),
                       doctest::Contains("no stage-2 binding"), Error);

  PipelineConfig cfg2 = oracle_config(Topology::MISO1, b);
  cfg2.stage1 = nullptr;
  CHECK_THROWS_WITH_AS(run_pipeline(b.mixture, cfg2),
                       doctest::Contains("no stage-1 binding"), Error);
}

TEST_CASE("unknown topology names list the valid ones") {
  CHECK_THROWS_WITH_AS(topology_from_name("MISO9"),
                       doctest::Contains("MISO1_BF_MISO3"), Error);
}

TEST_CASE("miso1_bf beats the unprocessed mixture on oracle statistics") {
  const auto& batch = fixtures::smswsj_batch(3);
  double improvement = 0.0;
  for (const auto& b : batch) {
    const PipelineConfig cfg = oracle_config(Topology::MISO1_BF, b);
    const PipelineResult res = run_pipeline(b.mixture, cfg);
    const EvalRow row = eval_mixture(
        {res.sources[0].ch[0], res.sources[1].ch[0]},
        {b.direct[0].ch[0], b.direct[1].ch[0]}, b.mixture.ch[0]);
    improvement += row.improvement_db;
  }
  CHECK(improvement / batch.size() > 3.0);
}

TEST_CASE("oracle stage-2 dominates regardless of stage-1 quality") {
  const MixtureBundle& b = fixtures::smswsj_batch(2)[1];
  const PipelineConfig good =
      oracle_config(Topology::MISO1_BF_MISO3, b, "oracle:complex");
  const PipelineConfig bad =
      oracle_config(Topology::MISO1_BF_MISO3, b, "oracle_noisy:0");

  const PipelineResult res_good = run_pipeline(b.mixture, good);
  const PipelineResult res_bad = run_pipeline(b.mixture, bad);
  for (int c = 0; c < 2; ++c) {
    CHECK(si_sdr(res_good.sources[c].ch[0], b.direct[c].ch[0]) == 60.0);
    CHECK(si_sdr(res_bad.sources[c].ch[0], b.direct[c].ch[0]) == 60.0);
  }
}

TEST_CASE("per-speaker post-filter sees P + 2 planes (+1 with magnitude)") {
  const MixtureBundle& b = fixtures::smswsj_batch(2)[0];

  struct ArityProbe : Separator {
    mutable std::vector<int> seen;
    std::string name() const override { return "probe"; }
    SourceEstimates separate(const std::vector<const Spectrogram*>& planes,
                             const PlaneLayout& layout,
                             const SeparatorContext& ctx) const override {
      seen.push_back(static_cast<int>(planes.size()));
      SourceEstimates out;
      const int n = ctx.only_source >= 0 ? 1 : ctx.num_sources;
      for (int c = 0; c < n; ++c)
        out.src.push_back(Spectrogram(planes[0]->frames, planes[0]->bins));
      (void)layout;
      return out;
    }
  };

  auto probe = std::make_shared<ArityProbe>();
  PipelineConfig cfg = oracle_config(Topology::MISO1_BF_MISO3, b);
  cfg.stage2 = probe;
  run_pipeline(b.mixture, cfg);
  const int P = b.mixture.channels();
  REQUIRE(probe->seen.size() == 2);  // one run per speaker
  CHECK(probe->seen[0] == P + 2);
  CHECK(probe->seen[1] == P + 2);

  probe->seen.clear();
  cfg.include_magnitude_feature = true;
  run_pipeline(b.mixture, cfg);
  CHECK(probe->seen[0] == P + 3);
}

TEST_CASE("joint post-filter stacking for miso2 and miso4") {
  const MixtureBundle& b = fixtures::smswsj_batch(2)[0];

  struct LayoutProbe : Separator {
    mutable PlaneLayout last;
    std::string name() const override { return "probe"; }
    SourceEstimates separate(const std::vector<const Spectrogram*>& planes,
                             const PlaneLayout& layout,
                             const SeparatorContext& ctx) const override {
      last = layout;
      SourceEstimates out;
      for (int c = 0; c < ctx.num_sources; ++c)
        out.src.push_back(Spectrogram(planes[0]->frames, planes[0]->bins));
      return out;
    }
  };

  auto probe = std::make_shared<LayoutProbe>();
  PipelineConfig cfg = oracle_config(Topology::MISO1_BF_MISO2, b);
  cfg.stage2 = probe;
  run_pipeline(b.mixture, cfg);
  CHECK(probe->last.mics == 6);
  CHECK(probe->last.beamformed == 2);
  CHECK(probe->last.stage1 == 2);

  // miso4 omits the beamformed planes
  PipelineConfig cfg4 = oracle_config(Topology::MISO1_MISO4, b);
  cfg4.stage2 = probe;
  run_pipeline(b.mixture, cfg4);
  CHECK(probe->last.beamformed == 0);
  CHECK(probe->last.stage1 == 2);
}

TEST_CASE("pipeline is deterministic") {
  const MixtureBundle& b = fixtures::smswsj_batch(2)[1];
  const PipelineConfig cfg =
      oracle_config(Topology::MISO1_BF_MISO3, b, "oracle_noisy:5", "blend");
  const PipelineResult a = run_pipeline(b.mixture, cfg);
  const PipelineResult c = run_pipeline(b.mixture, cfg);
  for (int s = 0; s < 2; ++s)
    for (size_t i = 0; i < a.sources[s].ch[0].size(); ++i)
      CHECK(a.sources[s].ch[0][i] == c.sources[s].ch[0][i]);
}

TEST_CASE("center layout uses only circle mics for beamforming") {
  const MixtureBundle b =
      fixtures::make_bundle(ScenarioProfile::libricss_like, 9001);
  PipelineConfig cfg = oracle_config(Topology::MISO1_BF, b);
  cfg.keep_intermediates = true;
  const PipelineResult res = run_pipeline(b.mixture, cfg);

  // stage-1 ran once per circle mic, never for the center mic
  CHECK(res.stage1_mics == std::vector<int>{0, 1, 2, 3, 4, 5});
  // and the result still separates
  const EvalRow row = eval_mixture(
      {res.sources[0].ch[0], res.sources[1].ch[0]},
      {b.direct[0].ch[0], b.direct[1].ch[0]}, b.mixture.ch[0]);
  CHECK(row.improvement_db > 0.0);
}

TEST_CASE("mask-based covariance mode runs stage 1 only at the reference") {
  const MixtureBundle& b = fixtures::smswsj_batch(2)[0];
  PipelineConfig cfg = oracle_config(Topology::MISO1_BF, b);
  cfg.mask_based_covariance = true;
  cfg.keep_intermediates = true;
  const PipelineResult res = run_pipeline(b.mixture, cfg);
  CHECK(res.stage1_mics == std::vector<int>{0});
  const EvalRow row = eval_mixture(
      {res.sources[0].ch[0], res.sources[1].ch[0]},
      {b.direct[0].ch[0], b.direct[1].ch[0]}, b.mixture.ch[0]);
  CHECK(row.improvement_db > 0.0);
}

TEST_CASE("time-varying mvdr config runs through the pipeline") {
  const MixtureBundle& b = fixtures::smswsj_batch(2)[0];
  PipelineConfig cfg = oracle_config(Topology::MISO1_BF, b, "oracle_noisy:5");
  TvMvdrConfig tv;
  tv.delta = 2;
  tv.alpha = 0.5;
  cfg.tv_mvdr = tv;
  const PipelineResult res = run_pipeline(b.mixture, cfg);
  const EvalRow row = eval_mixture(
      {res.sources[0].ch[0], res.sources[1].ch[0]},
      {b.direct[0].ch[0], b.direct[1].ch[0]}, b.mixture.ch[0]);
  CHECK(row.improvement_db > 0.0);

  // combining it with the mask-based covariance mode is rejected
  cfg.mask_based_covariance = true;
  CHECK_THROWS_WITH_AS(run_pipeline(b.mixture, cfg),
                       doctest::Contains("estimate-based"), Error);
}

TEST_CASE("every topology runs end to end") {
  const MixtureBundle& b = fixtures::smswsj_batch(2)[0];
  for (const std::string& name : topology_names()) {
    const Topology topo = topology_from_name(name);
    CAPTURE(name);
    const PipelineConfig cfg = oracle_config(topo, b, "oracle_noisy:5",
                                             topology_has_stage2(topo)
                                                 ? "blend"
                                                 : "");
    const PipelineResult res = run_pipeline(b.mixture, cfg);
    REQUIRE(res.sources.size() == 2);
    for (const auto& s : res.sources)
      REQUIRE(std::all_of(s.ch[0].begin(), s.ch[0].end(),
                          [](double v) { return std::isfinite(v); }));
    const EvalRow row = eval_mixture(
        {res.sources[0].ch[0], res.sources[1].ch[0]},
        {b.direct[0].ch[0], b.direct[1].ch[0]}, b.mixture.ch[0]);
    // every composition does something useful on oracle-grade inputs
    CHECK(row.improvement_db > 0.0);
  }
}

TEST_CASE("pipeline spec json round trip") {
  PipelineSpec spec;
  spec.topology = Topology::MISO1_BF_MISO3;
  spec.stage1 = "oracle_noisy:5";
  spec.stage2 = "blend";
  spec.include_magnitude_feature = true;
  TvMvdrConfig tv;
  tv.delta = 3;
  tv.alpha = 0.25;
  spec.tv_mvdr = tv;

  const PipelineSpec back = parse_pipeline_spec(pipeline_spec_to_json(spec));
  CHECK(back.topology == spec.topology);
  CHECK(back.stage1 == spec.stage1);
  CHECK(back.stage2 == spec.stage2);
  CHECK(back.include_magnitude_feature == spec.include_magnitude_feature);
  REQUIRE(back.tv_mvdr.has_value());
  CHECK(back.tv_mvdr->delta == 3);
  CHECK(back.tv_mvdr->alpha == 0.25);
}

}  // TEST_SUITE pipeline
