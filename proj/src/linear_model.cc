// linear_model.cc

#include "mcss/linear_model.h"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace mcss {

namespace {

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

cplx context_sample(const Spectrogram& plane, int t, int f) {
  if (t < 0 || t >= plane.frames) return cplx(0.0, 0.0);
  return plane.at(t, f);
}

}  // namespace

SourceEstimates linear_apply(const LinearSeparatorModel& model,
                             const std::vector<const Spectrogram*>& planes) {
  require(static_cast<int>(planes.size()) == model.planes,
          "plane count does not match the model");
  const Spectrogram& first = *planes.at(0);
  require(first.bins == model.bins, "bin count does not match the model");
  for (const Spectrogram* p : planes)
    require(p->frames == first.frames && p->bins == first.bins,
            "plane dims differ");

  const int K = model.context;
  const int half = K / 2;
  SourceEstimates out;
  out.stage = 1;
  for (int c = 0; c < model.sources; ++c) {
    Spectrogram s(first.frames, first.bins);
#pragma omp parallel for schedule(static)
    for (int t = 0; t < first.frames; ++t) {
      for (int f = 0; f < first.bins; ++f) {
        cplx acc(0.0, 0.0);
        for (int j = 0; j < model.planes; ++j)
          for (int k = 0; k < K; ++k)
            acc += model.w[model.index(c, f, j, k)] *
                   context_sample(*planes[j], t + k - half, f);
        s.at(t, f) = acc;
      }
    }
    out.src.push_back(std::move(s));
  }
  return out;
}

double linear_loss_and_grad(const LinearSeparatorModel& model,
                            const TrainExample& ex, bool resolve_permutation,
                            std::vector<cplx>* grad, double magnitude_weight) {
  std::vector<const Spectrogram*> planes;
  for (const auto& p : ex.planes) planes.push_back(&p);
  SourceEstimates est = linear_apply(model, planes);
  auto [loss, perm] =
      upit_loss(est, ex.target, resolve_permutation, magnitude_weight);
  if (grad == nullptr) return loss;

  grad->assign(model.w.size(), cplx(0.0, 0.0));
  const int K = model.context;
  const int half = K / 2;
  const int F = model.bins;
  const int T = est.frames();

#pragma omp parallel for collapse(2) schedule(static)
  for (int c = 0; c < model.sources; ++c) {
    for (int f = 0; f < F; ++f) {
      const Spectrogram& ref = ex.target.src[perm.map[c]];
      for (int t = 0; t < T; ++t) {
        const cplx e = est.src[c].at(t, f);
        const cplx r = ref.at(t, f);
        const double mag = std::abs(e);
        const double mag_sign =
            magnitude_weight * sgn(mag - std::abs(r));
        double g_re = sgn(e.real() - r.real());
        double g_im = sgn(e.imag() - r.imag());
        if (mag > 0.0) {
          g_re += mag_sign * e.real() / mag;
          g_im += mag_sign * e.imag() / mag;
        }
        if (g_re == 0.0 && g_im == 0.0) continue;
        for (int j = 0; j < model.planes; ++j)
          for (int k = 0; k < K; ++k) {
            const cplx x = context_sample(ex.planes[j], t + k - half, f);
            cplx& g = (*grad)[model.index(c, f, j, k)];
            g += cplx(g_re * x.real() + g_im * x.imag(),
                      -g_re * x.imag() + g_im * x.real());
          }
      }
    }
  }
  return loss;
}

LinearSeparatorModel train_linear_separator(
    const std::vector<TrainExample>& dataset, int sources, int context,
    const TrainOptions& opts) {
  require(!dataset.empty(), "empty training set");
  require(context >= 1 && context % 2 == 1, "context must be odd");
  for (const auto& ex : dataset) {
    require(!ex.planes.empty(), "example without input planes");
    require(ex.target.sources() == sources, "target source count mismatch");
  }

  LinearSeparatorModel model;
  model.sources = sources;
  model.bins = dataset[0].planes[0].bins;
  model.planes = static_cast<int>(dataset[0].planes.size());
  model.context = context;
  model.w.assign(size_t(sources) * model.bins * model.planes * context,
                 cplx(0.0, 0.0));

  std::vector<double> m1(2 * model.w.size(), 0.0), m2(2 * model.w.size(), 0.0);
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double lr = opts.lr;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  double initial = -1.0;

  std::vector<cplx> grad, batch_grad;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    batch_grad.assign(model.w.size(), cplx(0.0, 0.0));
    double loss = 0.0;
    for (const auto& ex : dataset) {
      loss += linear_loss_and_grad(model, ex, opts.resolve_permutation, &grad,
                                   opts.magnitude_weight);
      for (size_t i = 0; i < grad.size(); ++i) batch_grad[i] += grad[i];
    }
    model.epoch_loss.push_back(loss);
    if (initial < 0.0) initial = loss;
    if (loss > opts.divergence_factor * initial)
      throw Error("training diverged: loss " + std::to_string(loss) +
                  " vs initial " + std::to_string(initial) + " at epoch " +
                  std::to_string(epoch));

    // halve the rate when the loss stops improving
    if (loss < best - 1e-12 * std::max(1.0, best)) {
      best = loss;
      stale = 0;
    } else if (++stale >= 3) {
      lr *= 0.5;
      stale = 0;
    }

    if (opts.adam) {
      const double t = epoch + 1;
      const double bc1 = 1.0 - std::pow(beta1, t);
      const double bc2 = 1.0 - std::pow(beta2, t);
      for (size_t i = 0; i < model.w.size(); ++i) {
        const double g[2] = {batch_grad[i].real(), batch_grad[i].imag()};
        double upd[2];
        for (int d = 0; d < 2; ++d) {
          double& m = m1[2 * i + d];
          double& v = m2[2 * i + d];
          m = beta1 * m + (1.0 - beta1) * g[d];
          v = beta2 * v + (1.0 - beta2) * g[d] * g[d];
          upd[d] = lr * (m / bc1) / (std::sqrt(v / bc2) + adam_eps);
        }
        model.w[i] -= cplx(upd[0], upd[1]);
      }
    } else {
      // normalized subgradient step: lr is a step size in weight units,
      // independent of the dataset scale
      double g2 = 0.0;
      for (const cplx& g : batch_grad) g2 += std::norm(g);
      const double rms = std::sqrt(g2 / (2.0 * model.w.size()));
      if (rms > 0.0)
        for (size_t i = 0; i < model.w.size(); ++i)
          model.w[i] -= lr / rms * batch_grad[i];
    }
  }

  // record the post-training loss
  double final_loss = 0.0;
  for (const auto& ex : dataset)
    final_loss +=
        linear_loss_and_grad(model, ex, opts.resolve_permutation, nullptr,
                             opts.magnitude_weight);
  model.epoch_loss.push_back(final_loss);
  return model;
}

TrainExample make_train_example(const MixtureBundle& bundle,
                                const StftConfig& cfg) {
  auto [norm, trace] =
      normalize_variance(bundle.mixture, NormalizationMode::offline);
  TrainExample ex;
  const MultichannelSpectrogram mix = stft(norm, cfg);
  ex.planes = mix.ch;
  ex.target.stage = 1;
  const int q = bundle.geometry.reference_index;
  for (const auto& d : bundle.direct) {
    std::vector<double> scaled = d.ch.at(q);
    for (double& v : scaled) v *= trace.scale;
    ex.target.src.push_back(
        stft_channel(scaled, bundle.mixture.sample_rate, cfg));
  }
  return ex;
}

void save_linear_model(const std::string& path,
                       const LinearSeparatorModel& model) {
  nlohmann::json j;
  j["format"] = "mcss-linear";
  j["version"] = model.version;
  j["sources"] = model.sources;
  j["bins"] = model.bins;
  j["planes"] = model.planes;
  j["context"] = model.context;
  std::vector<double> flat;
  flat.reserve(2 * model.w.size());
  for (const cplx& v : model.w) {
    flat.push_back(v.real());
    flat.push_back(v.imag());
  }
  j["weights"] = flat;
  j["epoch_loss"] = model.epoch_loss;
  std::ofstream f(path);
  require(f.good(), "cannot write model file: " + path);
  f << j.dump() << "\n";
}

LinearSeparatorModel load_linear_model(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot read model file: " + path);
  nlohmann::json j;
  f >> j;
  require(j.at("format").get<std::string>() == "mcss-linear",
          "not a linear model file: " + path);
  LinearSeparatorModel model;
  model.version = j.at("version").get<int>();
  model.sources = j.at("sources").get<int>();
  model.bins = j.at("bins").get<int>();
  model.planes = j.at("planes").get<int>();
  model.context = j.at("context").get<int>();
  const auto flat = j.at("weights").get<std::vector<double>>();
  require(flat.size() ==
              2 * size_t(model.sources) * model.bins * model.planes *
                  model.context,
          "weight count does not match the shape header: " + path);
  model.w.resize(flat.size() / 2);
  for (size_t i = 0; i < model.w.size(); ++i)
    model.w[i] = cplx(flat[2 * i], flat[2 * i + 1]);
  model.epoch_loss = j.at("epoch_loss").get<std::vector<double>>();
  return model;
}

SourceEstimates LinearSeparator::separate(
    const std::vector<const Spectrogram*>& planes, const PlaneLayout& layout,
    const SeparatorContext& ctx) const {
  (void)layout;
  (void)ctx;
  return linear_apply(model_, planes);
}

}  // namespace mcss
