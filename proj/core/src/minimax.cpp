#include "vidpriv/minimax.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vidpriv {

using torch::autograd::AutogradContext;
using torch::autograd::variable_list;

namespace {

class GradReverse : public torch::autograd::Function<GradReverse> {
 public:
  static torch::Tensor forward(AutogradContext* ctx, const torch::Tensor& x, double omega) {
    ctx->saved_data["omega"] = omega;
    return x.view_as(x);
  }

  static variable_list backward(AutogradContext* ctx, variable_list grad_out) {
    const double omega = ctx->saved_data["omega"].toDouble();
    return {grad_out[0] * -omega, torch::Tensor()};
  }
};

constexpr std::uint64_t kValStream = 0x7A11DA7E;

// Puts a module in eval mode and restores the previous mode on exit.
class EvalGuard {
 public:
  explicit EvalGuard(torch::nn::Module& m) : module_(m), was_training_(m.is_training()) { m.eval(); }
  ~EvalGuard() { module_.train(was_training_); }
  EvalGuard(const EvalGuard&) = delete;
  EvalGuard& operator=(const EvalGuard&) = delete;

 private:
  torch::nn::Module& module_;
  bool was_training_;
};

torch::Tensor anonymize_frozen(MinimaxState& state, const torch::Tensor& clips) {
  torch::NoGradGuard no_grad;
  EvalGuard eval(*state.anonymizer);
  return anonymize_batch(state.anonymizer, clips);
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double lr_or_zero(const std::unique_ptr<ScheduledAdam>& opt) { return opt ? opt->lr() : 0.0; }

}  // namespace

torch::Tensor grad_reverse(const torch::Tensor& x, double omega) {
  if (omega < 0) throw Error("grad_reverse weight must be non-negative");
  return GradReverse::apply(x, omega);
}

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::init_A: return "init_A";
    case Phase::init_T: return "init_T";
    case Phase::init_B: return "init_B";
    case Phase::adversarial: return "adversarial";
    case Phase::done: return "done";
  }
  return "?";
}

nlohmann::json StepRecord::to_json() const {
  nlohmann::json j{{"phase", to_string(phase)}, {"kind", kind}, {"step", step},  {"epoch", epoch},
                   {"lr_a", lr_a},              {"lr_t", lr_t}, {"lr_b", lr_b}};
  j["l_a"] = l_a ? nlohmann::json(*l_a) : nlohmann::json(nullptr);
  j["l_t"] = l_t ? nlohmann::json(*l_t) : nlohmann::json(nullptr);
  j["l_b"] = l_b ? nlohmann::json(*l_b) : nlohmann::json(nullptr);
  return j;
}

MinimaxState::MinimaxState(const MinimaxConfig& cfg, const LabelSpace& labels)
    : anonymizer(cfg.anonymizer),
      utility(cfg.utility_encoder, labels),
      ssl(SslBranchSpec::from_config(cfg)),
      rng(make_rng(cfg.seed, 0x313)) {
  if (cfg.objective == SslObjective::momentum_contrast) {
    moco = std::make_unique<MomentumContrast>(ssl, cfg.moco_queue, cfg.moco_momentum);
  }
}

void MinimaxState::advance(Phase next) {
  if (static_cast<int>(next) < static_cast<int>(phase_)) {
    throw Error("minimax phase cannot go back from " + to_string(phase_) + " to " + to_string(next));
  }
  phase_ = next;
}

void MinimaxState::record(StepRecord r) {
  r.phase = phase_;
  r.lr_a = lr_or_zero(opt_a);
  r.lr_t = lr_or_zero(opt_t);
  r.lr_b = lr_or_zero(opt_b);
  log.push_back(r);
  if (on_record) on_record(log.back());
}

StepOneTerms step_one_terms(MinimaxState& state, const torch::Tensor& clips, const torch::Tensor& targets,
                            const MinimaxConfig& cfg, Rng& rng, bool augment) {
  StepOneTerms t;
  auto anon = anonymize_batch(state.anonymizer, clips);
  auto utility_in = augment ? augment_batch(anon, cfg.augment.supervised, rng) : anon;
  t.l_t = utility_loss(state.utility, utility_in, targets);
  auto ssl = ssl_loss_detail(state.ssl, grad_reverse(anon, cfg.omega), cfg.sampler, rng, cfg.augment.ssl,
                             state.moco.get());
  t.l_b = ssl.loss;
  t.moco_keys = ssl.moco_keys;
  t.total = t.l_t + t.l_b;
  return t;
}

AdversarialStepResult adversarial_step(MinimaxState& state, const ClipBatch& first, const ClipBatch& second,
                                       const DatasetManifest& data, const MinimaxConfig& cfg) {
  if (state.phase() != Phase::adversarial) throw Error("adversarial_step outside the adversarial phase");
  if (!state.opt_a || !state.opt_t || !state.opt_b) throw Error("adversarial_step before the optimizers exist");
  AdversarialStepResult out;

  // Step 1: theta_A only.
  {
    FreezeGuard freeze_t(*state.utility.net);
    FreezeGuard freeze_b(*state.ssl);
    EvalGuard eval_t(*state.utility.net);
    EvalGuard eval_b(*state.ssl);
    state.anonymizer->train();
    auto terms = step_one_terms(state, first.clips, action_targets(data, first.samples), cfg, state.rng);
    state.opt_a->optimizer->zero_grad();
    terms.total.backward();
    state.opt_a->optimizer->step();
    out.l_t_step1 = terms.l_t.item<double>();
    out.l_b_step1 = terms.l_b.item<double>();
    StepRecord r;
    r.kind = "step1";
    r.step = state.iteration;
    r.l_t = out.l_t_step1;
    r.l_b = out.l_b_step1;
    state.record(r);
  }

  // Step 2: theta_T and theta_B on the next batch with f_A frozen.
  {
    FreezeGuard freeze_a(*state.anonymizer);
    auto anon = anonymize_frozen(state, second.clips);
    state.utility.net->train();
    state.ssl->train();

    state.opt_t->optimizer->zero_grad();
    auto l_t = utility_loss(state.utility, augment_batch(anon, cfg.augment.supervised, state.rng),
                            action_targets(data, second.samples));
    l_t.backward();
    state.opt_t->optimizer->step();

    state.opt_b->optimizer->zero_grad();
    auto ssl = ssl_loss_detail(state.ssl, anon, cfg.sampler, state.rng, cfg.augment.ssl, state.moco.get());
    ssl.loss.backward();
    state.opt_b->optimizer->step();
    if (state.moco) {
      state.moco->update_encoder(state.ssl);
      state.moco->enqueue(ssl.moco_keys);
    }
    out.l_t_step2 = l_t.item<double>();
    out.l_b_step2 = ssl.loss.item<double>();
    StepRecord r;
    r.kind = "step2";
    r.step = state.iteration;
    r.l_t = out.l_t_step2;
    r.l_b = out.l_b_step2;
    state.record(r);
  }
  ++state.iteration;
  return out;
}

namespace {

double validate_utility(MinimaxState& state, const DatasetManifest& data, const std::vector<std::size_t>& samples,
                        const MinimaxConfig& cfg) {
  torch::NoGradGuard no_grad;
  EvalGuard eval(*state.utility.net);
  ClipBatcher batcher(data, samples, cfg.geometry, cfg.batch_size, 0, false, false);
  double sum = 0.0;
  std::size_t n = 0;
  while (auto b = batcher.next()) {
    auto anon = anonymize_frozen(state, b->clips);
    sum += utility_loss(state.utility, anon, action_targets(data, b->samples)).item<double>() *
           static_cast<double>(b->samples.size());
    n += b->samples.size();
  }
  return sum / static_cast<double>(std::max<std::size_t>(n, 1));
}

double validate_ssl(MinimaxState& state, const DatasetManifest& data, const std::vector<std::size_t>& samples,
                    const MinimaxConfig& cfg) {
  torch::NoGradGuard no_grad;
  EvalGuard eval(*state.ssl);
  Rng rng = make_rng(cfg.seed, kValStream);
  ClipBatcher batcher(data, samples, cfg.geometry, cfg.batch_size, 0, false, false);
  std::vector<double> losses;
  while (auto b = batcher.next()) {
    if (b->samples.size() < 2) continue;
    auto anon = anonymize_frozen(state, b->clips);
    losses.push_back(ssl_loss(state.ssl, anon, cfg.sampler, rng, cfg.augment.ssl, state.moco.get()).item<double>());
  }
  if (losses.empty()) throw Error("SSL validation needs at least two clips");
  return mean_of(losses);
}

}  // namespace

ValidationLosses validate_minimax(MinimaxState& state, const DatasetManifest& data,
                                  const std::vector<std::size_t>& samples, const MinimaxConfig& cfg) {
  return {validate_utility(state, data, samples, cfg), validate_ssl(state, data, samples, cfg)};
}

InitResult init_auxiliaries(MinimaxState& state, const MinimaxConfig& cfg, const DatasetManifest& data,
                            const std::vector<std::size_t>& train, const std::vector<std::size_t>& val,
                            const EpochHook& hook) {
  if (static_cast<int>(state.phase()) < static_cast<int>(Phase::init_T)) state.advance(Phase::init_T);
  InitResult result;
  FreezeGuard freeze_a(*state.anonymizer);

  state.opt_t = std::make_unique<ScheduledAdam>(state.utility.net->parameters(), cfg.lr_utility, cfg.plateau_patience,
                                                cfg.plateau_rel_improvement);
  state.opt_b = std::make_unique<ScheduledAdam>(state.ssl->parameters(), cfg.lr_ssl, cfg.plateau_patience,
                                                cfg.plateau_rel_improvement);

  std::int64_t step = 0;
  double l_t = validate_utility(state, data, val, cfg);
  if (l_t > cfg.th_t0) {
    ClipBatcher batcher(data, train, cfg.geometry, cfg.batch_size, cfg.seed ^ 0x7117, true, true);
    for (int epoch = 1; epoch <= cfg.epochs_init_utility; ++epoch) {
      batcher.reset();
      state.utility.net->train();
      std::vector<double> losses;
      while (auto b = batcher.next()) {
        auto anon = anonymize_frozen(state, b->clips);
        state.opt_t->optimizer->zero_grad();
        auto loss = utility_loss(state.utility, augment_batch(anon, cfg.augment.supervised, state.rng),
                                 action_targets(data, b->samples));
        loss.backward();
        state.opt_t->optimizer->step();
        losses.push_back(loss.item<double>());
        StepRecord r;
        r.step = step++;
        r.epoch = epoch;
        r.l_t = losses.back();
        state.record(r);
      }
      l_t = validate_utility(state, data, val, cfg);
      StepRecord v;
      v.kind = "val";
      v.epoch = epoch;
      v.l_t = l_t;
      state.record(v);
      state.opt_t->step_schedule(l_t);
      result.utility_epochs = epoch;
      if (hook) hook("init_T", epoch, mean_of(losses), l_t);
      if (l_t <= cfg.th_t0) break;
    }
  }

  state.advance(Phase::init_B);
  step = 0;
  double l_b = validate_ssl(state, data, val, cfg);
  const bool reached = cfg.th_b0 && l_b <= *cfg.th_b0;
  if (!reached) {
    PlateauDetector stop(cfg.plateau_patience, cfg.plateau_rel_improvement);
    stop.observe(l_b);
    ClipBatcher batcher(data, train, cfg.geometry, cfg.batch_size, cfg.seed ^ 0xB0B0, true, true);
    for (int epoch = 1; epoch <= cfg.epochs_init_ssl; ++epoch) {
      batcher.reset();
      state.ssl->train();
      std::vector<double> losses;
      while (auto b = batcher.next(/*drop_last=*/true)) {
        auto anon = anonymize_frozen(state, b->clips);
        state.opt_b->optimizer->zero_grad();
        auto ssl = ssl_loss_detail(state.ssl, anon, cfg.sampler, state.rng, cfg.augment.ssl, state.moco.get());
        ssl.loss.backward();
        state.opt_b->optimizer->step();
        if (state.moco) {
          state.moco->update_encoder(state.ssl);
          state.moco->enqueue(ssl.moco_keys);
        }
        losses.push_back(ssl.loss.item<double>());
        StepRecord r;
        r.step = step++;
        r.epoch = epoch;
        r.l_b = losses.back();
        state.record(r);
      }
      l_b = validate_ssl(state, data, val, cfg);
      StepRecord v;
      v.kind = "val";
      v.epoch = epoch;
      v.l_b = l_b;
      state.record(v);
      state.opt_b->step_schedule(l_b);
      result.ssl_epochs = epoch;
      if (hook) hook("init_B", epoch, mean_of(losses), l_b);
      if (cfg.th_b0 ? l_b <= *cfg.th_b0 : stop.observe(l_b)) break;
    }
  }
  result.after = {l_t, l_b};
  return result;
}

MinimaxResult run_minimax(const DatasetManifest& data, const MinimaxConfig& cfg, const MinimaxHooks& hooks,
                          std::optional<AnonymizerNet> pretrained) {
  cfg.validate();
  if (data.empty()) throw Error("run_minimax: empty dataset");
  if (data.size() < 2) throw Error("run_minimax needs at least two samples");
  torch::manual_seed(cfg.seed);

  MinimaxState state(cfg, data.labels);
  state.on_record = hooks.on_record;
  MinimaxResult result;

  auto [train, val] = split_indices(data.size(), cfg.val_fraction, cfg.seed);
  if (val.size() < 2) val = train;
  if (train.empty()) train = val;

  // init_A: identity pretraining of f_A.
  if (pretrained) {
    load_state(capture_checkpoint(Role::anonymizer, (*pretrained)->arch().to_json(), **pretrained), *state.anonymizer);
  } else {
    result.pretrain = reconstruct_pretrain(state.anonymizer, data, cfg, hooks.on_epoch);
    for (std::size_t e = 0; e < result.pretrain.val_curve.size(); ++e) {
      StepRecord v;
      v.kind = "val";
      v.epoch = static_cast<int>(e);
      v.l_a = result.pretrain.val_curve[e];
      state.record(v);
    }
  }

  result.init = init_auxiliaries(state, cfg, data, train, val, hooks.on_epoch);

  state.advance(Phase::adversarial);
  state.opt_a = std::make_unique<ScheduledAdam>(state.anonymizer->parameters(), cfg.lr_anonymizer,
                                                cfg.plateau_patience, cfg.plateau_rel_improvement);
  const auto post_init = validate_minimax(state, data, val, cfg);
  result.post_init_l_b = post_init.l_b;
  result.final_l_b = post_init.l_b;
  const double th_bmax = cfg.resolved_th_bmax();
  const double divergence_limit = cfg.divergence_factor * std::max(post_init.l_t, 1e-8);
  result.stopped_by = "budget";

  std::vector<double> l_b_history;
  ClipBatcher batcher(data, train, cfg.geometry, cfg.batch_size, cfg.seed ^ 0xAD5E, true, true);
  for (int epoch = 1; epoch <= cfg.epochs_adversarial; ++epoch) {
    batcher.reset();
    std::vector<double> step_lt;
    while (auto first = batcher.next(/*drop_last=*/true)) {
      auto second = batcher.next(/*drop_last=*/true);
      if (!second) break;
      step_lt.push_back(adversarial_step(state, *first, *second, data, cfg).l_t_step1);
    }
    const auto v = validate_minimax(state, data, val, cfg);
    StepRecord rec;
    rec.kind = "val";
    rec.epoch = epoch;
    rec.l_t = v.l_t;
    rec.l_b = v.l_b;
    state.record(rec);
    state.opt_a->step_schedule(v.l_t - cfg.omega * v.l_b);
    state.opt_t->step_schedule(v.l_t);
    state.opt_b->step_schedule(v.l_b);
    result.adversarial_epochs = epoch;
    result.final_l_b = v.l_b;
    if (hooks.on_epoch) hooks.on_epoch("adversarial", epoch, mean_of(step_lt), v.l_b);
    if (hooks.on_adversarial_epoch) hooks.on_adversarial_epoch(epoch, state.anonymizer);

    if (!std::isfinite(v.l_t) || v.l_t > divergence_limit) {
      throw DivergenceError("utility loss diverged at adversarial epoch " + std::to_string(epoch) + ": L_T = " +
                            std::to_string(v.l_t) + " exceeds " + std::to_string(cfg.divergence_factor) +
                            " x post-init value " + std::to_string(post_init.l_t) +
                            "; lower omega or lr_anonymizer");
    }
    l_b_history.push_back(v.l_b);
    if (l_b_history.size() < static_cast<std::size_t>(kTerminationWindow)) continue;
    const double running =
        std::accumulate(l_b_history.end() - kTerminationWindow, l_b_history.end(), 0.0) / kTerminationWindow;
    if (running >= th_bmax) {
      result.stopped_by = "th_bmax";
      break;
    }
  }

  state.advance(Phase::done);
  set_frozen(*state.anonymizer, true);
  state.anonymizer->eval();
  result.anonymizer = state.anonymizer;
  result.log = std::move(state.log);
  return result;
}

void save_anonymizer(AnonymizerNet& net, const std::filesystem::path& path, nlohmann::json extra) {
  write_checkpoint(capture_checkpoint(Role::anonymizer, net->arch().to_json(), *net, std::move(extra)), path);
}

AnonymizerNet load_anonymizer(const std::filesystem::path& path) {
  auto ckpt = read_checkpoint(path);
  if (ckpt.role != Role::anonymizer) {
    throw Error(path.string() + " holds a " + to_string(ckpt.role) + " model, not an anonymizer");
  }
  AnonymizerNet net(AnonymizerArch::from_json(ckpt.arch));
  load_state(ckpt, *net);
  set_frozen(*net, true);
  net->eval();
  return net;
}

}  // namespace vidpriv
