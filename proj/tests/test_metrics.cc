// tests/test_metrics.cc

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "mcss/metrics.h"
#include "mcss/rng.h"
#include "oracles.h"

using namespace mcss;

namespace {

std::vector<double> random_signal(Rng& rng, size_t n) {
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  return x;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("exact match and scaled match hit the cap") {
  Rng rng(601);
  const std::vector<double> ref = random_signal(rng, 4000);
  CHECK(si_sdr(ref, ref) == 60.0);

  std::vector<double> half = ref;
  for (auto& v : half) v *= 0.5;
  CHECK(si_sdr(half, ref) == 60.0);
}

TEST_CASE("scale invariance is exact") {
  Rng rng(602);
  const std::vector<double> ref = random_signal(rng, 3000);
  std::vector<double> est = ref;
  for (size_t i = 0; i < est.size(); ++i) est[i] += 0.3 * rng.normal();

  const double base = si_sdr(est, ref);
  for (double k : {2.0, -0.7, 1e-3, 1e3}) {
    std::vector<double> scaled = est;
    for (auto& v : scaled) v *= k;
    CHECK(std::abs(si_sdr(scaled, ref) - base) < 1e-9);
  }
}

TEST_CASE("orthogonal noise at a tenth of the energy gives 10 dB") {
  Rng rng(603);
  const size_t n = 8000;
  std::vector<double> ref = random_signal(rng, n);
  std::vector<double> noise = random_signal(rng, n);

  // project out the reference component, then set the energy ratio exactly
  double dot = 0.0, ref_e = 0.0;
  for (size_t i = 0; i < n; ++i) {
    dot += noise[i] * ref[i];
    ref_e += ref[i] * ref[i];
  }
  for (size_t i = 0; i < n; ++i) noise[i] -= dot / ref_e * ref[i];
  const double target = 0.1 * ref_e;
  const double k = std::sqrt(target / energy(noise));
  std::vector<double> est = ref;
  for (size_t i = 0; i < n; ++i) est[i] += k * noise[i];

  CHECK(si_sdr(est, ref) == doctest::Approx(10.0).epsilon(0.001));
}

TEST_CASE("edge cases: zero signals") {
  Rng rng(604);
  const std::vector<double> ref = random_signal(rng, 100);
  const std::vector<double> zero(100, 0.0);
  CHECK(si_sdr(zero, ref) == -60.0);
  CHECK_THROWS_WITH_AS(si_sdr(ref, zero), doctest::Contains("zero"), Error);
}

TEST_CASE("eval picks the best permutation") {
  Rng rng(605);
  const std::vector<double> r0 = random_signal(rng, 2000);
  const std::vector<double> r1 = random_signal(rng, 2000);

  const EvalRow row = eval_mixture({r1, r0}, {r0, r1});
  CHECK(row.perm.map == std::vector<int>{1, 0});
  CHECK(row.mean_db == 60.0);
}

TEST_CASE("duplicated mixture as output gives no improvement") {
  Rng rng(606);
  std::vector<double> mix = random_signal(rng, 2000);
  const std::vector<double> r0 = random_signal(rng, 2000);
  const std::vector<double> r1 = random_signal(rng, 2000);
  for (size_t i = 0; i < mix.size(); ++i) mix[i] = r0[i] + r1[i];

  const EvalRow row = eval_mixture({mix, mix}, {r0, r1}, mix);
  CHECK(std::abs(row.improvement_db) < 1e-9);
}

TEST_CASE("random C=3 matches the exhaustive permutation oracle") {
  Rng rng(607);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::vector<double>> refs, outs;
    for (int c = 0; c < 3; ++c) refs.push_back(random_signal(rng, 500));
    for (int c = 0; c < 3; ++c) {
      std::vector<double> o = refs[c];
      for (auto& v : o) v += 0.5 * rng.normal();
      outs.push_back(o);
    }

    const EvalRow row = eval_mixture(outs, refs);

    std::vector<int> perm = {0, 1, 2};
    double best = -1e18;
    do {
      double mean = 0.0;
      for (int c = 0; c < 3; ++c) mean += si_sdr(outs[c], refs[perm[c]]);
      best = std::max(best, mean / 3.0);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(row.mean_db == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("length mismatch trims and flags") {
  Rng rng(608);
  std::vector<double> ref = random_signal(rng, 1000);
  std::vector<double> est = ref;
  est.resize(900);
  const EvalRow row = eval_mixture({est}, {ref});
  CHECK(row.trimmed);
  CHECK(row.mean_db == 60.0);
}

TEST_CASE("csv and json aggregates match a recomputation from rows") {
  Rng rng(609);
  EvalReport report;
  for (int i = 0; i < 4; ++i) {
    const std::vector<double> ref = random_signal(rng, 800);
    std::vector<double> est = ref;
    for (auto& v : est) v += 0.2 * rng.normal();
    EvalRow row = eval_mixture({est}, {ref}, est);
    row.id = "mix_" + std::to_string(i);
    report.rows.push_back(row);
  }

  double want = 0.0;
  for (const auto& r : report.rows) want += r.mean_db;
  want /= report.rows.size();
  CHECK(report.mean_db() == doctest::Approx(want).epsilon(1e-12));

  const std::string csv = "/tmp/mcss_report.csv";
  const std::string json = "/tmp/mcss_report.json";
  write_report_csv(csv, report);
  write_report_json(json, report);

  // recompute the aggregate from the csv rows
  std::ifstream f(csv);
  std::string line;
  std::getline(f, line);  // header
  double acc = 0.0;
  int count = 0;
  while (std::getline(f, line)) {
    size_t pos = 0;
    for (int comma = 0; comma < 2; ++comma) pos = line.find(',', pos) + 1;
    acc += std::stod(line.substr(pos));
    ++count;
  }
  CHECK(count == 4);
  CHECK(acc / count == doctest::Approx(report.mean_db()).epsilon(1e-5));
  std::filesystem::remove(csv);
  std::filesystem::remove(json);
}

}  // TEST_SUITE metrics
