// tests/fixtures.h

#ifndef MCSS_TESTS_FIXTURES_H_
#define MCSS_TESTS_FIXTURES_H_

#include <map>
#include <vector>

#include "mcss/simulate.h"
#include "mcss/stft.h"

namespace mcss {
namespace fixtures {

inline MixtureBundle make_bundle(ScenarioProfile profile, uint64_t seed,
                                 double fs = 8000.0, double duration_s = 2.0) {
  Rng rng(seed);
  SampledScenario s = sample_scenario(profile, rng);
  std::vector<std::vector<double>> dry;
  for (size_t c = 0; c < s.scenario.source_positions.size(); ++c) {
    Rng src_rng = rng.split(1000 + c);
    dry.push_back(synth_speech(src_rng, duration_s, fs));
  }
  return synthesize_mixture(dry, s.scenario, s.geometry, fs);
}

// cached batch so several tests can share the simulation cost
inline const std::vector<MixtureBundle>& smswsj_batch(int n,
                                                      uint64_t seed = 7000) {
  static std::map<std::pair<int, uint64_t>, std::vector<MixtureBundle>> cache;
  auto& slot = cache[{n, seed}];
  while (static_cast<int>(slot.size()) < n)
    slot.push_back(make_bundle(ScenarioProfile::smswsj_like,
                               seed + slot.size()));
  return slot;
}

inline StftConfig default_stft() { return StftConfig{}; }

}  // namespace fixtures
}  // namespace mcss

#endif  // MCSS_TESTS_FIXTURES_H_
