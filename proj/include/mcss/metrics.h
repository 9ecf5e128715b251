// mcss/metrics.h
//
// Scale-invariant SDR and permutation-resolved multi-source evaluation
// against direct-path references.

#ifndef MCSS_METRICS_H_
#define MCSS_METRICS_H_

#include <string>
#include <vector>

#include "mcss/common.h"
#include "mcss/separator.h"

namespace mcss {

// SI-SDR in dB, capped at +-60. alpha = <est, ref> / ||ref||^2,
// value = 10 log10(||alpha ref||^2 / ||alpha ref - est||^2). Throws on a
// zero reference; a zero estimate returns the -60 cap.
double si_sdr(const std::vector<double>& est, const std::vector<double>& ref);

struct EvalRow {
  std::string id;
  std::vector<double> per_source_db;
  double mean_db = 0.0;
  double unprocessed_db = 0.0;  // mixture at the reference mic vs refs
  double improvement_db = 0.0;
  PermutationAssignment perm;
  bool trimmed = false;  // lengths differed, trimmed to the shortest
};

// Best output-to-reference pairing by mean SI-SDR. Lengths are trimmed to
// the shortest signal. mixture_ref may be empty (no unprocessed column).
EvalRow eval_mixture(const std::vector<std::vector<double>>& outputs,
                     const std::vector<std::vector<double>>& refs,
                     const std::vector<double>& mixture_ref = {});

struct EvalReport {
  std::vector<EvalRow> rows;

  double mean_db() const;
  double mean_unprocessed_db() const;
  double mean_improvement_db() const;
};

// One row per mixture: id, per-source SI-SDR, mean, unprocessed,
// improvement, permutation.
void write_report_csv(const std::string& path, const EvalReport& report);
// Aggregates plus the per-row data.
void write_report_json(const std::string& path, const EvalReport& report);

}  // namespace mcss

#endif  // MCSS_METRICS_H_
