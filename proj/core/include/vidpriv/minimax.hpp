#pragma once

// The alternating minimax procedure: identity initialization of f_A,
// initialization of the auxiliaries f_T and f_B on anonymized data, then
// two-step adversarial iterations until L_B saturates or the budget ends.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "vidpriv/anonymizer.hpp"
#include "vidpriv/config.hpp"
#include "vidpriv/ssl_privacy.hpp"
#include "vidpriv/training.hpp"
#include "vidpriv/utility.hpp"

namespace vidpriv {

/// Identity in the forward pass; multiplies the incoming gradient by -omega.
torch::Tensor grad_reverse(const torch::Tensor& x, double omega);

enum class Phase { init_A, init_T, init_B, adversarial, done };
std::string to_string(Phase phase);

/// One log line. kind is "train" for optimizer steps (step 1 / step 2 of an
/// adversarial iteration are "step1" / "step2") and "val" for validation.
struct StepRecord {
  Phase phase = Phase::init_A;
  std::string kind = "train";
  std::int64_t step = 0;
  int epoch = 0;
  std::optional<double> l_a;  ///< per-pixel reconstruction L1 (init_A)
  std::optional<double> l_t;
  std::optional<double> l_b;
  double lr_a = 0.0;
  double lr_t = 0.0;
  double lr_b = 0.0;

  nlohmann::json to_json() const;
};

/// The three networks, their optimizers and the procedure's bookkeeping.
class MinimaxState {
 public:
  MinimaxState(const MinimaxConfig& cfg, const LabelSpace& labels);

  AnonymizerNet anonymizer{nullptr};
  UtilityModel utility;
  SslBranch ssl{nullptr};
  std::unique_ptr<MomentumContrast> moco;

  std::unique_ptr<ScheduledAdam> opt_a;
  std::unique_ptr<ScheduledAdam> opt_t;
  std::unique_ptr<ScheduledAdam> opt_b;

  Phase phase() const { return phase_; }
  /// Moves to a later phase; throws when asked to go backwards.
  void advance(Phase next);

  std::int64_t iteration = 0;
  std::vector<StepRecord> log;
  Rng rng;

  void record(StepRecord r);
  std::function<void(const StepRecord&)> on_record;

 private:
  Phase phase_ = Phase::init_A;
};

/// The three losses of one step-1 evaluation on a batch. total is
/// L_T + L_B(f_B(grad_reverse(f_A(x), omega))), so its gradient with respect
/// to theta_A is grad(L_T - omega * L_B).
struct StepOneTerms {
  torch::Tensor total;
  torch::Tensor l_t;
  torch::Tensor l_b;
  torch::Tensor moco_keys;
};

/// Forward pass of step 1 on clips [B, T, 3, H, W] with targets from
/// action_targets(). augment applies the supervised draw before f_T.
StepOneTerms step_one_terms(MinimaxState& state, const torch::Tensor& clips, const torch::Tensor& targets,
                            const MinimaxConfig& cfg, Rng& rng, bool augment = true);

struct AdversarialStepResult {
  double l_t_step1 = 0.0;
  double l_b_step1 = 0.0;
  double l_t_step2 = 0.0;
  double l_b_step2 = 0.0;
};

/// One adversarial iteration. Step 1 updates theta_A on `first` with theta_T
/// and theta_B frozen; step 2 updates theta_T and theta_B on `second` with
/// theta_A frozen.
AdversarialStepResult adversarial_step(MinimaxState& state, const ClipBatch& first, const ClipBatch& second,
                                       const DatasetManifest& data, const MinimaxConfig& cfg);

struct ValidationLosses {
  double l_t = 0.0;
  double l_b = 0.0;
};

/// Utility and SSL losses on anonymized validation clips with a fixed
/// generator, so repeated calls are comparable.
ValidationLosses validate_minimax(MinimaxState& state, const DatasetManifest& data,
                                  const std::vector<std::size_t>& samples, const MinimaxConfig& cfg);

struct InitResult {
  int utility_epochs = 0;
  int ssl_epochs = 0;
  ValidationLosses after;
};

/// Trains f_T and then f_B on f_A(X) with f_A frozen, each until its
/// validation loss reaches th_t0 / th_b0 (plateau when th_b0 is unset) or its
/// budget runs out.
InitResult init_auxiliaries(MinimaxState& state, const MinimaxConfig& cfg, const DatasetManifest& data,
                            const std::vector<std::size_t>& train, const std::vector<std::size_t>& val,
                            const EpochHook& hook = {});

struct MinimaxHooks {
  EpochHook on_epoch;
  /// Called after every adversarial epoch with the current anonymizer.
  std::function<void(int epoch, AnonymizerNet&)> on_adversarial_epoch;
  std::function<void(const StepRecord&)> on_record;
};

struct MinimaxResult {
  AnonymizerNet anonymizer{nullptr};  ///< frozen f*_A; auxiliaries are discarded
  std::vector<StepRecord> log;
  PretrainResult pretrain;
  InitResult init;
  double post_init_l_b = 0.0;
  double final_l_b = 0.0;
  int adversarial_epochs = 0;
  std::string stopped_by;  ///< "th_bmax" or "budget"
};

/// Number of trailing validation checks whose mean L_B is compared with
/// th_bmax. Termination needs a full window.
inline constexpr int kTerminationWindow = 3;

/// The whole procedure. When `pretrained` is given the identity phase is
/// skipped. Seeds the torch generator with cfg.seed first. Throws
/// DivergenceError when validation L_T exceeds divergence_factor times its
/// post-initialization value.
MinimaxResult run_minimax(const DatasetManifest& data, const MinimaxConfig& cfg, const MinimaxHooks& hooks = {},
                          std::optional<AnonymizerNet> pretrained = std::nullopt);

/// Anonymizer checkpoints carry the architecture in their header.
void save_anonymizer(AnonymizerNet& net, const std::filesystem::path& path,
                     nlohmann::json extra = nlohmann::json::object());
AnonymizerNet load_anonymizer(const std::filesystem::path& path);

}  // namespace vidpriv
