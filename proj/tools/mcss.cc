// tools/mcss.cc
//
// Command-line entry points: simulate, run, css, eval, train.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"
#include "mcss/css.h"
#include "mcss/linear_model.h"
#include "mcss/metrics.h"
#include "mcss/pipeline.h"
#include "mcss/simulate.h"
#include "mcss/wav.h"

namespace fs = std::filesystem;
using namespace mcss;

namespace {

constexpr const char* kVersion = "1.0.0";

void apply_thread_env() {
#ifdef _OPENMP
  if (const char* env = std::getenv("MCSS_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
#endif
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const nlohmann::json& params) {
  nlohmann::json j;
  j["tool"] = "mcss";
  j["version"] = kVersion;
  j["command"] = command;
  j["params"] = params;
  j["timestamp"] = timestamp();
  std::ofstream f(out_dir + "/manifest.json");
  require(f.good(), "cannot write manifest in " + out_dir);
  f << j.dump(2) << "\n";
}

std::string mixture_dir_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "mix_%05d", index);
  return buf;
}

std::vector<std::string> list_mixture_dirs(const std::string& dataset) {
  std::vector<std::string> dirs;
  require(fs::is_directory(dataset), "dataset not found: " + dataset);
  for (const auto& e : fs::directory_iterator(dataset))
    if (e.is_directory() && fs::exists(e.path() / "scenario.json"))
      dirs.push_back(e.path().filename().string());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot read " + path);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

int cmd_simulate(const std::string& profile_name, int n, uint64_t seed,
                 const std::string& out_dir, double sr, double duration,
                 double perturb_mm) {
  ScenarioProfile profile;
  if (profile_name == "smswsj_like")
    profile = ScenarioProfile::smswsj_like;
  else if (profile_name == "libricss_like")
    profile = ScenarioProfile::libricss_like;
  else
    throw Error("unknown profile '" + profile_name +
                "' (valid: smswsj_like, libricss_like)");

  fs::create_directories(out_dir);
  for (int i = 0; i < n; ++i) {
    Rng rng(seed + static_cast<uint64_t>(i));
    SampledScenario s = sample_scenario(profile, rng);
    if (perturb_mm > 0.0) {
      Rng prng = rng.split(777);
      s.geometry = perturb_geometry(s.geometry, perturb_mm, prng);
    }
    std::vector<std::vector<double>> dry;
    for (size_t c = 0; c < s.scenario.source_positions.size(); ++c) {
      Rng src_rng = rng.split(1000 + c);
      dry.push_back(synth_speech(src_rng, duration, sr));
    }
    const MixtureBundle bundle =
        synthesize_mixture(dry, s.scenario, s.geometry, sr);
    save_bundle(out_dir + "/" + mixture_dir_name(i), bundle);
    std::cout << mixture_dir_name(i) << ": t60 " << s.scenario.t60 << " s, snr "
              << s.scenario.snr_db << " dB\n";
  }

  nlohmann::json params;
  params["profile"] = profile_name;
  params["n"] = n;
  params["seed"] = seed;
  params["sample_rate"] = sr;
  params["duration_s"] = duration;
  params["perturb_mm"] = perturb_mm;
  params["out"] = out_dir;
  write_manifest(out_dir, "simulate", params);
  return 0;
}

int cmd_run(const std::string& dataset, const std::string& config_path,
            const std::string& out_dir) {
  const std::string config_text = read_file(config_path);
  const PipelineSpec spec = parse_pipeline_spec(config_text);
  const auto dirs = list_mixture_dirs(dataset);
  fs::create_directories(out_dir);

  for (const auto& name : dirs) {
    const MixtureBundle bundle = load_bundle(dataset + "/" + name);
    PipelineConfig cfg = bind_pipeline(spec, &bundle, bundle.geometry.layout);
    const PipelineResult res = run_pipeline(bundle.mixture, cfg);
    const std::string mix_out = out_dir + "/" + name;
    fs::create_directories(mix_out);
    for (size_t c = 0; c < res.sources.size(); ++c)
      wav_write(mix_out + "/est_c" + std::to_string(c + 1) + ".wav",
                res.sources[c]);
    std::cout << name << ": done\n";
  }

  nlohmann::json params;
  params["dataset"] = dataset;
  params["config_path"] = config_path;
  params["config"] = nlohmann::json::parse(config_text);
  params["out"] = out_dir;
  write_manifest(out_dir, "run", params);
  return 0;
}

int cmd_css(const std::string& input, const std::string& ref_dir,
            const std::string& config_path, const std::string& out_dir,
            double block_s, double shift_s, double suppress_gain,
            const std::string& counting) {
  const std::string config_text = read_file(config_path);
  const PipelineSpec spec = parse_pipeline_spec(config_text);

  MixtureBundle bundle;
  const MixtureBundle* truth = nullptr;
  Waveform stream;
  if (!ref_dir.empty()) {
    bundle = load_bundle(ref_dir);
    truth = &bundle;
    stream = input.empty() ? bundle.mixture : wav_read(input);
  } else {
    require(!input.empty(), "css needs --input or --ref-dir");
    stream = wav_read(input);
  }

  CssConfig ccfg;
  ccfg.block_s = block_s;
  ccfg.shift_s = shift_s;
  ccfg.suppress_gain = suppress_gain;
  if (counting == "oracle")
    ccfg.counting = CssConfig::Counting::oracle;
  else if (counting == "none")
    ccfg.counting = CssConfig::Counting::none;
  else
    throw Error("unknown counting mode '" + counting +
                "' (valid: oracle, none)");

  const PipelineConfig cfg =
      bind_pipeline(spec, truth,
                    truth ? truth->geometry.layout : ArrayLayout::pure_circle);
  const CssResult res = run_css(stream, cfg, ccfg, truth);

  fs::create_directories(out_dir);
  for (int s = 0; s < 2; ++s)
    wav_write(out_dir + "/stream" + std::to_string(s + 1) + ".wav",
              res.streams[s]);

  nlohmann::json params;
  params["input"] = input;
  params["ref_dir"] = ref_dir;
  params["config_path"] = config_path;
  params["config"] = nlohmann::json::parse(config_text);
  params["block_s"] = block_s;
  params["shift_s"] = shift_s;
  params["suppress_gain"] = suppress_gain;
  params["counting"] = counting;
  params["out"] = out_dir;
  write_manifest(out_dir, "css", params);
  return 0;
}

int cmd_eval(const std::string& est_dir, const std::string& ref_dir,
             const std::string& out_dir) {
  const auto refs = list_mixture_dirs(ref_dir);
  require(!refs.empty(), "no mixtures found in " + ref_dir);

  EvalReport report;
  std::vector<std::string> missing;
  for (const auto& name : refs) {
    const std::string est_mix = est_dir + "/" + name;
    if (!fs::is_directory(est_mix)) {
      missing.push_back(name);
      continue;
    }
    const MixtureBundle bundle = load_bundle(ref_dir + "/" + name);
    const int C = static_cast<int>(bundle.direct.size());
    const int q = bundle.geometry.reference_index;

    std::vector<std::vector<double>> outputs, targets;
    for (int c = 0; c < C; ++c) {
      const std::string est_path =
          est_mix + "/est_c" + std::to_string(c + 1) + ".wav";
      require(fs::exists(est_path), "missing estimate: " + est_path);
      outputs.push_back(wav_read(est_path).ch.at(0));
      targets.push_back(bundle.direct[c].ch.at(q));
    }
    EvalRow row = eval_mixture(outputs, targets, bundle.mixture.ch.at(q));
    row.id = name;
    report.rows.push_back(row);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += " " + m;
    throw Error("estimates missing for:" + list);
  }

  fs::create_directories(out_dir);
  write_report_csv(out_dir + "/report.csv", report);
  write_report_json(out_dir + "/report.json", report);
  std::cout << "mixtures: " << report.rows.size()
            << "  mean si-sdr: " << report.mean_db()
            << " dB  improvement: " << report.mean_improvement_db()
            << " dB\n";

  nlohmann::json params;
  params["est_dir"] = est_dir;
  params["ref_dir"] = ref_dir;
  params["out"] = out_dir;
  write_manifest(out_dir, "eval", params);
  return 0;
}

int cmd_train(const std::string& dataset, const std::string& model_out,
              int context, int epochs, double lr) {
  const auto dirs = list_mixture_dirs(dataset);
  require(!dirs.empty(), "no mixtures found in " + dataset);

  std::vector<TrainExample> examples;
  int sources = 0;
  for (const auto& name : dirs) {
    const MixtureBundle bundle = load_bundle(dataset + "/" + name);
    sources = static_cast<int>(bundle.direct.size());
    examples.push_back(make_train_example(bundle, StftConfig{}));
  }

  TrainOptions opts;
  opts.epochs = epochs;
  opts.lr = lr;
  const LinearSeparatorModel model =
      train_linear_separator(examples, sources, context, opts);
  save_linear_model(model_out, model);
  std::cout << "epochs: " << epochs
            << "  loss: " << model.epoch_loss.front() << " -> "
            << model.epoch_loss.back() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  apply_thread_env();

  CLI::App app{"multi-microphone speech separation toolkit"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate mixture bundles");
  std::string profile = "smswsj_like", out_dir;
  int n = 20;
  uint64_t seed = 0;
  double sr = 8000.0, duration = 3.0, perturb_mm = 0.0;
  sim->add_option("--profile", profile, "smswsj_like | libricss_like");
  sim->add_option("-n,--num", n, "number of mixtures");
  sim->add_option("--seed", seed, "rng seed");
  sim->add_option("--out", out_dir, "output directory")->required();
  sim->add_option("--sr", sr, "sample rate (Hz)");
  sim->add_option("--duration-s", duration, "dry source duration");
  sim->add_option("--perturb-mm", perturb_mm,
                  "mic position perturbation stddev (mm)");

  // run
  auto* run = app.add_subcommand("run", "utterance-wise separation");
  std::string dataset, config_path, run_out;
  run->add_option("--dataset", dataset, "simulated dataset directory")
     ->required();
  run->add_option("--config", config_path, "pipeline config json")->required();
  run->add_option("--out", run_out, "output directory")->required();

  // css
  auto* css = app.add_subcommand("css", "block-online continuous separation");
  std::string css_input, css_ref, css_config, css_out, counting = "none";
  double block_s = 2.424, shift_s = 1.2, suppress_gain = 1e-3;
  css->add_option("--input", css_input, "input stream wav");
  css->add_option("--ref-dir", css_ref,
                  "mixture bundle dir (ground truth for oracles)");
  css->add_option("--config", css_config, "pipeline config json")->required();
  css->add_option("--out", css_out, "output directory")->required();
  css->add_option("--block-s", block_s, "block size (s)");
  css->add_option("--shift-s", shift_s, "block shift (s)");
  css->add_option("--suppress-gain", suppress_gain,
                  "weak-stream suppression factor");
  css->add_option("--counting", counting, "oracle | none");

  // eval
  auto* ev = app.add_subcommand("eval", "si-sdr evaluation report");
  std::string est_dir, ref_dir, eval_out;
  ev->add_option("--est-dir", est_dir, "estimates directory")->required();
  ev->add_option("--ref-dir", ref_dir, "reference dataset directory")
    ->required();
  ev->add_option("--out", eval_out, "report directory")->required();

  // train
  auto* tr = app.add_subcommand("train", "train the linear separator");
  std::string train_dataset, model_out;
  int context = 1, epochs = 200;
  double lr = 0.1;
  tr->add_option("--dataset", train_dataset, "training dataset directory")
    ->required();
  tr->add_option("--model-out", model_out, "output model json")->required();
  tr->add_option("--context", context, "frame context K (odd)");
  tr->add_option("--epochs", epochs, "training epochs");
  tr->add_option("--lr", lr, "learning rate");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed())
      return cmd_simulate(profile, n, seed, out_dir, sr, duration, perturb_mm);
    if (run->parsed()) return cmd_run(dataset, config_path, run_out);
    if (css->parsed())
      return cmd_css(css_input, css_ref, css_config, css_out, block_s,
                     shift_s, suppress_gain, counting);
    if (ev->parsed()) return cmd_eval(est_dir, ref_dir, eval_out);
    if (tr->parsed())
      return cmd_train(train_dataset, model_out, context, epochs, lr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
