// Copyright 2026 The ddit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddit/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ddit/errors.hpp"
#include "ddit/interpolant.hpp"

namespace ddit {

using nlohmann::json;

namespace {

constexpr std::uint64_t kProjectorStream = 0x9203ec;

void check_metric(double v, const char* name) {
  if (!std::isfinite(v)) throw NumericError(std::string("non-finite loss component ") + name);
}

}  // namespace

ModelParams::Named TrainState::parameter_refs() {
  auto out = params.named_parameters();
  if (projector) {
    for (auto& p : projector->named_parameters()) out.push_back(p);
  }
  return out;
}

ModelParams::ConstNamed TrainState::parameter_refs() const {
  ModelParams::ConstNamed out;
  for (auto& [n, p] : const_cast<TrainState*>(this)->parameter_refs()) out.emplace_back(n, p);
  return out;
}

json StepMetrics::to_json() const {
  return {{"step", step}, {"l_fm", l_fm},   {"l_orth", l_orth},   {"l_mi", l_mi},
          {"l_disp", l_disp}, {"l_div", l_div}, {"w", w},       {"l_align", l_align},
          {"l_total", l_total}, {"wallclock_ms", wallclock_ms}};
}

ParamGrads collect_grads(const TrainState& state, const Gradients& grads) {
  ParamGrads out;
  for (const auto& [_, p] : state.parameter_refs()) {
    auto g = grads.of(*p);
    if (g.empty()) {
      out.emplace_back(p->numel(), 0.0);
    } else {
      out.emplace_back(g.begin(), g.end());
    }
  }
  return out;
}

TrainState adamw_step(TrainState state, const ParamGrads& grads, const TrainConfig& cfg) {
  auto refs = state.parameter_refs();
  if (grads.size() != refs.size() || state.moments.size() != refs.size()) {
    throw ShapeError("adamw_step: gradient/moment count differs from parameter count");
  }
  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    auto& [name, param] = refs[i];
    const auto& g = grads[i];
    auto& mom = state.moments[i];
    if (g.size() != param->numel() || mom.m.size() != g.size() || mom.v.size() != g.size()) {
      throw ShapeError("adamw_step: shape mismatch for " + name);
    }
    for (double v : g) {
      if (!std::isfinite(v)) throw NumericError("adamw_step: non-finite gradient for " + name);
    }
    const auto pd = param->data();
    std::vector<double> next(pd.begin(), pd.end());
    for (std::size_t k = 0; k < g.size(); ++k) {
      mom.m[k] = cfg.beta1 * mom.m[k] + (1.0 - cfg.beta1) * g[k];
      mom.v[k] = cfg.beta2 * mom.v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double mhat = mom.m[k] / bc1;
      const double vhat = mom.v[k] / bc2;
      if (cfg.weight_decay != 0.0) next[k] -= cfg.learning_rate * cfg.weight_decay * next[k];
      next[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
    *param = Tensor::from(param->shape(), std::move(next), true);
  }
  ++state.step;
  return state;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(RunConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.finalize();
  const std::size_t l = cfg_.model.num_blocks;
  if (cfg_.train.diversity) {
    pairs_ = select_pairs(l, cfg_.diversity.subset_size(l), cfg_.diversity.selection_seed);
  }
  encoder_ = make_alignment_encoder(cfg_.model.token_dim(), cfg_.train.alignment_dim, cfg_.train.encoder_seed);
}

TrainState Trainer::init_state() const {
  TrainState s;
  s.params = init_model(cfg_.model);
  if (cfg_.train.alignment) {
    Rng prng(cfg_.model.init_seed, kProjectorStream);
    s.projector = init_projector(cfg_.model.hidden_dim, cfg_.train.projector_hidden, cfg_.train.alignment_dim, prng);
  }
  for (const auto& [_, p] : s.parameter_refs()) {
    s.moments.push_back({std::vector<double>(p->numel(), 0.0), std::vector<double>(p->numel(), 0.0)});
  }
  s.rng = Rng(cfg_.train.seed, cfg_.data.seed);
  return s;
}

PreparedBatch Trainer::prepare(const Batch& batch, Rng& rng) const {
  PreparedBatch p;
  const std::size_t n = batch.x.dim(0);
  p.x_star = batch.x;
  p.labels = batch.y;
  if (cfg_.train.label_dropout_prob > 0.0) {
    for (auto& y : p.labels) {
      if (rng.uniform() < cfg_.train.label_dropout_prob) y = cfg_.model.null_class();
    }
  }
  p.t.resize(n);
  for (auto& t : p.t) t = rng.uniform();
  p.eps = Tensor::randn(batch.x.shape(), rng);
  return p;
}

LossWeights Trainer::default_weights() const {
  LossWeights w;
  w.diversity = cfg_.train.diversity;
  w.alignment = cfg_.train.alignment;
  w.alignment_coef = cfg_.train.alignment_coef;
  w.diversity_cfg = cfg_.diversity;
  return w;
}

LossEvaluation Trainer::evaluate(const ModelParams& params, const std::optional<Projector>& projector,
                                 const PreparedBatch& batch, const LossWeights& weights) const {
  LossEvaluation ev;
  const Tensor x_t = interpolate(batch.x_star, batch.eps, batch.t);
  ev.forward = forward(params, cfg_.model, x_t, batch.t, batch.labels);
  Tensor projected, targets;
  if (weights.alignment) {
    if (!projector) throw ConfigError("alignment loss requested without a projector");
    const std::size_t depth = cfg_.train.alignment_depth;
    if (depth >= ev.forward.features.size()) throw ConfigError("alignment depth outside the model");
    const Tensor clean_tokens = cfg_.model.input_mode == DataMode::kPoints
                                    ? reshape(batch.x_star, {batch.x_star.dim(0), 1, cfg_.model.point_dim})
                                    : patchify(batch.x_star, cfg_.model.patch_size);
    targets = alignment_targets(encoder_, clean_tokens);
    projected = project(*projector, ev.forward.features[depth]);
  }
  ev.losses = total_loss(ev.forward.v_pred, batch.x_star, batch.eps, batch.t, ev.forward.features, pairs_,
                         weights, projected, targets);
  return ev;
}

StepMetrics Trainer::step(TrainState& state, const Batch& batch) const {
  const auto start = std::chrono::steady_clock::now();
  const PreparedBatch prepared = prepare(batch, state.rng);
  const LossEvaluation ev = evaluate(state.params, state.projector, prepared, default_weights());
  const auto& l = ev.losses;
  check_metric(l.l_fm, "l_fm");
  check_metric(l.l_orth, "l_orth");
  check_metric(l.l_mi, "l_mi");
  check_metric(l.l_disp, "l_disp");
  check_metric(l.l_div, "l_div");
  check_metric(l.l_align, "l_align");
  check_metric(l.total.item(), "l_total");

  ParamGrads grads = collect_grads(state, backward(l.total));
  state = adamw_step(std::move(state), grads, cfg_.train);

  StepMetrics m;
  m.step = state.step;
  m.l_fm = l.l_fm;
  m.l_orth = l.l_orth;
  m.l_mi = l.l_mi;
  m.l_disp = l.l_disp;
  m.l_div = l.l_div;
  m.w = l.w;
  m.l_align = l.l_align;
  m.l_total = l.total.item();
  state.stats.count += 1;
  state.stats.sum_l_fm += m.l_fm;
  state.stats.sum_l_total += m.l_total;
  m.wallclock_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return m;
}

StepMetrics Trainer::step(TrainState& state) const {
  const Batch batch = sample_batch(cfg_.data, cfg_.train.batch_size, state.rng);
  return step(state, batch);
}

// ---------------------------------------------------------------------------
// Checkpoints

Container checkpoint_container(const RunConfig& cfg, const TrainState& state) {
  Container c;
  const auto refs = state.parameter_refs();
  for (const auto& [name, p] : refs) c.add("param/" + name, *p);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& shape = refs[i].second->shape();
    c.add("adam_m/" + refs[i].first, Tensor::from(shape, state.moments[i].m));
    c.add("adam_v/" + refs[i].first, Tensor::from(shape, state.moments[i].v));
  }
  c.meta["config"] = to_json(cfg);
  c.meta["step"] = state.step;
  c.meta["rng"] = state.rng.to_hex();
  c.meta["stats"] = {{"count", state.stats.count},
                     {"sum_l_fm", state.stats.sum_l_fm},
                     {"sum_l_total", state.stats.sum_l_total}};
  return c;
}

void save_checkpoint(const std::string& path, const RunConfig& cfg, const TrainState& state) {
  write_container(path, checkpoint_container(cfg, state));
}

Checkpoint checkpoint_from_container(const Container& c) {
  Checkpoint ck;
  try {
    ck.config = run_config_from_json(c.meta.at("config"));
    ck.state = Trainer(ck.config).init_state();
    ck.state.step = c.meta.at("step").get<std::size_t>();
    ck.state.rng = Rng::from_hex(c.meta.at("rng").get<std::string>());
    const auto& st = c.meta.at("stats");
    ck.state.stats.count = st.at("count").get<std::size_t>();
    ck.state.stats.sum_l_fm = st.at("sum_l_fm").get<double>();
    ck.state.stats.sum_l_total = st.at("sum_l_total").get<double>();
  } catch (const json::exception& e) {
    throw MalformedError(std::string("checkpoint manifest: ") + e.what());
  } catch (const ConfigError& e) {
    throw MalformedError(std::string("checkpoint config: ") + e.what());
  }
  auto refs = ck.state.parameter_refs();
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& [name, p] = refs[i];
    const Tensor& v = c.get("param/" + name);
    const Tensor& m = c.get("adam_m/" + name);
    const Tensor& s = c.get("adam_v/" + name);
    if (v.shape() != p->shape() || m.shape() != p->shape() || s.shape() != p->shape()) {
      throw MalformedError("shape mismatch for parameter " + name);
    }
    *p = v.as_leaf(true);
    ck.state.moments[i].m.assign(m.data().begin(), m.data().end());
    ck.state.moments[i].v.assign(s.data().begin(), s.data().end());
  }
  const std::size_t expected = 3 * refs.size();
  if (c.tensors.size() != expected) throw MalformedError("checkpoint holds unexpected tensors");
  return ck;
}

Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_container(read_container(path)); }

// ---------------------------------------------------------------------------
// Loop

namespace {

std::string checkpoint_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%08zu.ddit", step);
  return buf;
}

}  // namespace

TrainLoopResult run_training(const RunConfig& cfg_in, const TrainLoopOptions& opts) {
  const Trainer trainer(cfg_in);
  const RunConfig& cfg = trainer.config();
  TrainLoopResult res;
  if (opts.resume_from) {
    Checkpoint ck = load_checkpoint(*opts.resume_from);
    const json a = to_json(ck.config), b = to_json(cfg);
    for (const char* group : {"model", "diversity", "data"}) {
      if (a.at(group) != b.at(group)) {
        throw ConfigError(std::string("resume: \"") + group + "\" differs from the checkpoint's");
      }
    }
    for (const char* key : {"alignment", "diversity", "batch_size", "seed", "label_dropout_prob"}) {
      if (a.at("train").at(key) != b.at("train").at(key)) {
        throw ConfigError(std::string("resume: train.") + key + " differs from the checkpoint's");
      }
    }
    res.state = std::move(ck.state);
  } else {
    res.state = trainer.init_state();
  }

  const bool write = !opts.out_dir.empty();
  std::ofstream log;
  if (write) {
    std::filesystem::create_directories(opts.out_dir);
    const auto log_path = std::filesystem::path(opts.out_dir) / "metrics.jsonl";
    log.open(log_path, opts.resume_from ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open " + log_path.string());
    if (!opts.resume_from) save_checkpoint((std::filesystem::path(opts.out_dir) / checkpoint_name(0)).string(), cfg, res.state);
  }

  const auto start = std::chrono::steady_clock::now();
  std::size_t last_saved = res.state.step;
  while (res.state.step < cfg.train.total_steps) {
    StepMetrics m = trainer.step(res.state);
    m.wallclock_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (opts.on_step) opts.on_step(m);
    if (write && cfg.train.log_interval > 0 && m.step % cfg.train.log_interval == 0) {
      log << m.to_json().dump() << '\n';
    }
    if (write && cfg.train.checkpoint_interval > 0 && m.step % cfg.train.checkpoint_interval == 0) {
      save_checkpoint((std::filesystem::path(opts.out_dir) / checkpoint_name(m.step)).string(), cfg, res.state);
      last_saved = m.step;
    }
    res.metrics.push_back(m);
  }
  if (write && last_saved != res.state.step) {
    save_checkpoint((std::filesystem::path(opts.out_dir) / checkpoint_name(res.state.step)).string(), cfg, res.state);
  }
  return res;
}

}  // namespace ddit
