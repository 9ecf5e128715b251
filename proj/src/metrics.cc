// metrics.cc

#include "mcss/metrics.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace mcss {

double si_sdr(const std::vector<double>& est, const std::vector<double>& ref) {
  require(est.size() == ref.size(), "si_sdr needs equal lengths");
  require(!ref.empty(), "si_sdr on empty signals");
  double ref_energy = 0.0, dot = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    ref_energy += ref[i] * ref[i];
    dot += est[i] * ref[i];
  }
  require(ref_energy > 0.0, "si_sdr reference is zero");

  double est_energy = 0.0;
  for (double v : est) est_energy += v * v;
  if (est_energy <= 0.0) return -60.0;

  const double alpha = dot / ref_energy;
  const double target = alpha * alpha * ref_energy;
  double err = 0.0;
  for (size_t i = 0; i < ref.size(); ++i) {
    const double d = alpha * ref[i] - est[i];
    err += d * d;
  }
  if (err <= 0.0 || target / err > 1e6) return 60.0;
  if (target <= 0.0) return -60.0;
  return std::clamp(db10(target / err), -60.0, 60.0);
}

EvalRow eval_mixture(const std::vector<std::vector<double>>& outputs,
                     const std::vector<std::vector<double>>& refs,
                     const std::vector<double>& mixture_ref) {
  const int C = static_cast<int>(outputs.size());
  require(C >= 1, "no outputs");
  require(static_cast<int>(refs.size()) == C,
          "output/reference count mismatch");
  require(C <= 10, "exhaustive permutation search is limited to 10 sources");

  size_t len = outputs[0].size();
  for (const auto& o : outputs) len = std::min(len, o.size());
  for (const auto& r : refs) len = std::min(len, r.size());
  require(len > 0, "empty signals");

  EvalRow row;
  for (const auto& o : outputs) row.trimmed |= o.size() != len;
  for (const auto& r : refs) row.trimmed |= r.size() != len;

  auto trim = [len](const std::vector<double>& x) {
    return std::vector<double>(x.begin(), x.begin() + len);
  };
  std::vector<std::vector<double>> est, ref;
  for (const auto& o : outputs) est.push_back(trim(o));
  for (const auto& r : refs) ref.push_back(trim(r));

  std::vector<std::vector<double>> score(C, std::vector<double>(C, 0.0));
  for (int i = 0; i < C; ++i)
    for (int j = 0; j < C; ++j) score[i][j] = si_sdr(est[i], ref[j]);

  std::vector<int> perm(C);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_mean = -std::numeric_limits<double>::infinity();
  do {
    double mean = 0.0;
    for (int i = 0; i < C; ++i) mean += score[i][perm[i]];
    mean /= C;
    if (mean > best_mean) {
      best_mean = mean;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));

  row.perm.map = best;
  for (int i = 0; i < C; ++i) row.per_source_db.push_back(score[i][best[i]]);
  row.mean_db = best_mean;

  if (!mixture_ref.empty()) {
    const std::vector<double> mix = trim(mixture_ref);
    double unproc = 0.0;
    for (int j = 0; j < C; ++j) unproc += si_sdr(mix, ref[j]);
    row.unprocessed_db = unproc / C;
    row.improvement_db = row.mean_db - row.unprocessed_db;
  }
  return row;
}

double EvalReport::mean_db() const {
  double s = 0.0;
  for (const auto& r : rows) s += r.mean_db;
  return rows.empty() ? 0.0 : s / rows.size();
}

double EvalReport::mean_unprocessed_db() const {
  double s = 0.0;
  for (const auto& r : rows) s += r.unprocessed_db;
  return rows.empty() ? 0.0 : s / rows.size();
}

double EvalReport::mean_improvement_db() const {
  double s = 0.0;
  for (const auto& r : rows) s += r.improvement_db;
  return rows.empty() ? 0.0 : s / rows.size();
}

void write_report_csv(const std::string& path, const EvalReport& report) {
  std::ofstream f(path);
  require(f.good(), "cannot write report: " + path);
  size_t max_c = 0;
  for (const auto& r : report.rows)
    max_c = std::max(max_c, r.per_source_db.size());
  f << "id";
  for (size_t c = 0; c < max_c; ++c) f << ",sisdr_c" << (c + 1);
  f << ",mean_sisdr,unprocessed_sisdr,improvement,permutation,trimmed\n";
  f.setf(std::ios::fixed);
  f.precision(6);
  for (const auto& r : report.rows) {
    f << r.id;
    for (size_t c = 0; c < max_c; ++c) {
      f << ",";
      if (c < r.per_source_db.size()) f << r.per_source_db[c];
    }
    f << "," << r.mean_db << "," << r.unprocessed_db << ","
      << r.improvement_db << ",";
    for (size_t i = 0; i < r.perm.map.size(); ++i) {
      if (i) f << " ";
      f << (r.perm.map[i] + 1);
    }
    f << "," << (r.trimmed ? 1 : 0) << "\n";
  }
}

void write_report_json(const std::string& path, const EvalReport& report) {
  nlohmann::json j;
  j["count"] = report.rows.size();
  j["mean_sisdr_db"] = report.mean_db();
  j["mean_unprocessed_db"] = report.mean_unprocessed_db();
  j["mean_improvement_db"] = report.mean_improvement_db();
  j["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row;
    row["id"] = r.id;
    row["per_source_db"] = r.per_source_db;
    row["mean_db"] = r.mean_db;
    row["unprocessed_db"] = r.unprocessed_db;
    row["improvement_db"] = r.improvement_db;
    std::vector<int> perm;
    for (int v : r.perm.map) perm.push_back(v + 1);
    row["permutation"] = perm;
    row["trimmed"] = r.trimmed;
    j["rows"].push_back(row);
  }
  std::ofstream f(path);
  require(f.good(), "cannot write report: " + path);
  f << j.dump(2) << "\n";
}

}  // namespace mcss
