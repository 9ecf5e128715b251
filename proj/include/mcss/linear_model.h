// mcss/linear_model.h
//
// Desk-scale trainable separator: an independent complex linear map per
// frequency from a K-frame context of stacked input planes to one output
// bin per source, trained on the permutation-invariant RI + magnitude loss
// by subgradient descent.

#ifndef MCSS_LINEAR_MODEL_H_
#define MCSS_LINEAR_MODEL_H_

#include <string>
#include <vector>

#include "mcss/separator.h"

namespace mcss {

struct LinearSeparatorModel {
  int version = 1;
  int sources = 0;
  int bins = 0;
  int planes = 0;
  int context = 1;  // K, odd
  std::vector<cplx> w;  // ((c * bins + f) * planes + j) * context + k
  std::vector<double> epoch_loss;

  size_t index(int c, int f, int j, int k) const {
    return ((size_t(c) * bins + f) * planes + j) * context + k;
  }
};

struct TrainExample {
  std::vector<Spectrogram> planes;
  SourceEstimates target;
};

struct TrainOptions {
  int epochs = 200;
  double lr = 0.1;  // step size in weight units (normalized subgradient)
  // normalized subgradient steps with the rate halved when the loss
  // plateaus; adam = true switches to Adam (worse on this piecewise-linear
  // loss, its first moment cancels under sign oscillation)
  bool adam = false;
  bool resolve_permutation = true;
  double magnitude_weight = 1.0;
  double divergence_factor = 10.0;
};

SourceEstimates linear_apply(const LinearSeparatorModel& model,
                             const std::vector<const Spectrogram*>& planes);

// Loss and subgradient at the current weights; grad entries pack
// (d/d Re w, d/d Im w) as a complex number in the weight layout.
double linear_loss_and_grad(const LinearSeparatorModel& model,
                            const TrainExample& ex, bool resolve_permutation,
                            std::vector<cplx>* grad,
                            double magnitude_weight = 1.0);

// Full-batch training. Aborts with a diagnostic if the loss exceeds
// divergence_factor times its initial value. epoch_loss[e] is the loss
// evaluated before the e-th update; a final entry records the loss after
// the last update.
LinearSeparatorModel train_linear_separator(
    const std::vector<TrainExample>& dataset, int sources, int context,
    const TrainOptions& opts);

// Mixture/direct-path STFT pair for one simulated bundle, variance
// normalized as the pipeline would.
TrainExample make_train_example(const MixtureBundle& bundle,
                                const StftConfig& cfg);

void save_linear_model(const std::string& path,
                       const LinearSeparatorModel& model);
LinearSeparatorModel load_linear_model(const std::string& path);

class LinearSeparator : public Separator {
 public:
  explicit LinearSeparator(LinearSeparatorModel model)
      : model_(std::move(model)) {}
  std::string name() const override { return "linear"; }
  std::optional<int> fixed_arity() const override { return model_.planes; }
  SourceEstimates separate(const std::vector<const Spectrogram*>& planes,
                           const PlaneLayout& layout,
                           const SeparatorContext& ctx) const override;
  const LinearSeparatorModel& model() const { return model_; }

 private:
  LinearSeparatorModel model_;
};

}  // namespace mcss

#endif  // MCSS_LINEAR_MODEL_H_
