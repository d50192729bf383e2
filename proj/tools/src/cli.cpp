// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddit_cli/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#ifdef DDIT_CLI11_PACKAGE
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif

#include "ddit/analysis.hpp"
#include "ddit/config.hpp"
#include "ddit/container.hpp"
#include "ddit/data.hpp"
#include "ddit/errors.hpp"
#include "ddit/gradcheck.hpp"
#include "ddit/interpolant.hpp"
#include "ddit/sampler.hpp"
#include "ddit/trainer.hpp"

namespace ddit::cli {

namespace {

struct TrainArgs {
  std::string config;
  std::string out;
  std::string resume;
};

struct SampleArgs {
  std::string ckpt;
  std::string mode = "sde";
  std::size_t steps = 250;
  double cfg = 1.0;
  std::size_t class_id = 0;
  bool uncond = false;
  std::size_t n = 16;
  std::uint64_t seed = 0;
  std::string out;
};

struct AnalyzeArgs {
  std::string ckpt;
  double t = 0.5;
  std::size_t batch = 64;
  std::string kernel = "rbf";
  std::size_t max_rows = 512;
  std::uint64_t seed = 0;
  std::string out;
  std::string dump_features;
};

struct GradcheckArgs {
  std::string config;
  std::size_t draws = 5;
  bool corrupt = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const RunConfig cfg = load_run_config(a.config);
  TrainLoopOptions opts;
  opts.out_dir = a.out;
  if (!a.resume.empty()) opts.resume_from = a.resume;
  const std::size_t every = std::max<std::size_t>(cfg.train.log_interval, 1);
  opts.on_step = [&out, every, total = cfg.train.total_steps](const StepMetrics& m) {
    if (m.step % every == 0 || m.step == total) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "step %zu  l_fm %.6f  l_div %.6f  w %.3f  l_total %.6f\n", m.step, m.l_fm,
                    m.l_div, m.w, m.l_total);
      out << buf;
    }
  };
  const TrainLoopResult res = run_training(cfg, opts);
  out << "trained to step " << res.state.step << ", outputs in " << a.out << '\n';
  return kExitOk;
}

void write_points_csv(const std::string& path, const Tensor& samples, std::optional<std::size_t> cls) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  if (samples.dim(0) == 0) return;
  f << "x,y,class\n";
  const auto d = samples.data();
  char buf[96];
  const long long label = cls ? static_cast<long long>(*cls) : -1;
  for (std::size_t i = 0; i < samples.dim(0); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%lld\n", d[2 * i], d[2 * i + 1], label);
    f << buf;
  }
}

int cmd_sample(const SampleArgs& a, const CLI::App& app, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  // The checkpoint's sample group supplies defaults; flags override.
  SampleConfig sc = ck.config.sample;
  if (app.count("--mode")) sc.mode = parse_sample_mode(a.mode);
  if (app.count("--steps")) sc.num_steps = a.steps;
  if (app.count("--cfg")) sc.cfg_scale = a.cfg;
  if (app.count("--class")) sc.class_id = a.class_id;
  if (a.uncond) sc.class_id.reset();
  if (app.count("--n")) sc.num_samples = a.n;
  if (app.count("--seed")) sc.seed = a.seed;
  sc.validate();
  const ModelConfig& mc = ck.config.model;
  if (sc.class_id && *sc.class_id >= mc.num_classes) {
    throw ValueError("class id " + std::to_string(*sc.class_id) + " out of range [0, " +
                     std::to_string(mc.num_classes) + ")");
  }

  if (sc.num_samples == 0) {
    std::ofstream f(a.out, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + a.out + "' for writing");
    out << "wrote 0 samples to " << a.out << '\n';
    return kExitOk;
  }
  const Tensor samples = sample(ck.state.params, mc, sc);
  if (mc.input_mode == DataMode::kPoints) {
    write_points_csv(a.out, samples, sc.class_id);
  } else {
    Container c;
    c.add("samples", samples);
    c.meta["mode"] = to_string(sc.mode);
    c.meta["steps"] = sc.num_steps;
    c.meta["cfg"] = sc.cfg_scale;
    c.meta["class"] = sc.class_id ? nlohmann::json(*sc.class_id) : nlohmann::json(nullptr);
    c.meta["seed"] = sc.seed;
    c.meta["checkpoint_step"] = ck.state.step;
    write_container(a.out, c);
  }
  out << "wrote " << sc.num_samples << " samples to " << a.out << '\n';
  return kExitOk;
}

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  if (!(a.t > 0.0 && a.t <= 1.0)) throw ValueError("--t must lie in (0, 1]");
  if (a.batch == 0) throw ValueError("--batch must be >= 1");
  const Kernel kernel = parse_kernel(a.kernel);
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const RunConfig& cfg = ck.config;

  Rng rng(a.seed, /*stream=*/0xa7a1);
  const Batch batch = sample_batch(cfg.data, a.batch, rng);
  const Tensor eps = Tensor::randn(batch.x.shape(), rng);
  const Tensor x_t = interpolate(batch.x, eps, a.t);
  const std::vector<double> ts(a.batch, a.t);
  const ModelParams params = ck.state.params.detached();
  const FeatureStack features = forward(params, cfg.model, x_t, ts, batch.y).features;

  CkaMatrix m = similarity_matrix(features, kernel, a.max_rows, a.seed);
  m.step = ck.state.step;
  m.t = a.t;
  write_cka_csv(a.out, m);
  if (!a.dump_features.empty()) write_feature_dump(a.dump_features, features, ck.state.step, a.t);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "diversity_summary %.10g\n", diversity_summary(m));
  out << buf;
  return kExitOk;
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  const RunConfig cfg = a.config.empty() ? tiny_gradcheck_config() : load_run_config(a.config);
  GradcheckOptions opts;
  opts.draws = a.draws;
  opts.corrupt_gradient = a.corrupt;
  const GradcheckReport report = run_gradcheck(cfg, opts);
  out << report.to_string();
  return report.passed() ? kExitOk : kExitFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ddit: diffusion transformers with block-diversity regularisation"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a model from a JSON run file");
  train->add_option("--config", ta.config, "Run configuration (JSON)")->required();
  train->add_option("--out", ta.out, "Output directory for checkpoints and metrics.jsonl")->required();
  train->add_option("--resume", ta.resume, "Checkpoint to resume from (default: none)");

  SampleArgs sa;
  auto* samp = app.add_subcommand("sample", "Draw samples from a checkpoint");
  samp->add_option("--ckpt", sa.ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  samp->add_option("--mode", sa.mode, "Integrator: sde or ode (default: checkpoint's sample.mode)")
      ->check(CLI::IsMember({"sde", "ode"}))
      ->capture_default_str();
  samp->add_option("--steps", sa.steps, "Integration steps (default: checkpoint's sample.num_steps)")
      ->capture_default_str();
  samp->add_option("--cfg", sa.cfg, "Guidance scale; 1 disables the unconditional branch")->capture_default_str();
  auto* cls = samp->add_option("--class", sa.class_id, "Class id to condition on");
  auto* unc = samp->add_flag("--uncond", sa.uncond, "Sample unconditionally (null class)");
  cls->excludes(unc);
  samp->add_option("--n", sa.n, "Number of samples (default: checkpoint's sample.num_samples)")
      ->capture_default_str();
  samp->add_option("--seed", sa.seed, "Sampling seed (default: checkpoint's sample.seed)")->capture_default_str();
  samp->add_option("--out", sa.out, "Output: CSV x,y,class for points, container otherwise")->required();

  AnalyzeArgs aa;
  auto* anal = app.add_subcommand("analyze", "Block-by-block CKA similarity of a checkpoint");
  anal->add_option("--ckpt", aa.ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  anal->add_option("--t", aa.t, "Timestep in (0, 1]")->capture_default_str();
  anal->add_option("--batch", aa.batch, "Fresh samples per analysis batch")->capture_default_str();
  anal->add_option("--kernel", aa.kernel, "linear, rbf or polynomialK")->capture_default_str();
  anal->add_option("--max-rows", aa.max_rows, "Token rows kept before building Gram matrices")
      ->capture_default_str();
  anal->add_option("--seed", aa.seed, "Data and subsampling seed")->capture_default_str();
  anal->add_option("--out", aa.out, "CKA matrix CSV")->required();
  anal->add_option("--dump-features", aa.dump_features, "Also write per-block features (default: none)");

  GradcheckArgs ga;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every loss gradient");
  grad->add_option("--config", ga.config, "Tiny run configuration (default: built-in L=4, D=16)");
  grad->add_option("--draws", ga.draws, "Random draws")->capture_default_str();
  grad->add_flag("--corrupt-gradient", ga.corrupt, "Test hook: perturb analytic gradients (must fail)");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    // Subcommand help requests surface here too.
    if (e.get_exit_code() == 0) {
      for (const auto* sub : app.get_subcommands()) out << sub->help();
      if (app.get_subcommands().empty()) out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (*train) return cmd_train(ta, out);
    if (*samp) return cmd_sample(sa, *samp, out);
    if (*anal) return cmd_analyze(aa, out);
    if (*grad) return cmd_gradcheck(ga, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace ddit::cli
