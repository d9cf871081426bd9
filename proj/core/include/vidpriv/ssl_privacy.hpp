#pragma once

// Self-supervised privacy-removal branch: 2D backbone f_B, projection head g,
// and the contrastive / momentum-contrast / rotation objectives evaluated on
// anonymized clips.

#include <optional>

#include <torch/torch.h>

#include "vidpriv/augment.hpp"
#include "vidpriv/config.hpp"
#include "vidpriv/networks.hpp"

namespace vidpriv {

/// NT-Xent over N positive pairs (Z_i, Z'_i). For anchor Z_i the denominator
/// runs over every Z_j with j != i and every Z'_j; similarities are cosine
/// similarities divided by tau. With symmetric = true the loss is the mean
/// over the anchors of both views, otherwise over the Z anchors only.
torch::Tensor nt_xent(const torch::Tensor& z, const torch::Tensor& z_prime, double tau, bool symmetric = true);

/// InfoNCE with one positive key per query and a shared negative set
/// [K, D] (K may be 0). Inputs are L2-normalized internally.
torch::Tensor info_nce(const torch::Tensor& queries, const torch::Tensor& keys, const torch::Tensor& negatives,
                       double tau);

/// Mean cross-entropy of 4-way rotation logits [N, 4] against labels [N].
torch::Tensor rotation_cross_entropy(const torch::Tensor& logits, const torch::Tensor& labels);

/// Rotates frames [N, C, H, W] by k quarter turns (counter-clockwise). Square
/// frames only.
torch::Tensor rotate_quarter_turns(const torch::Tensor& frames, int k);

struct SslBranchSpec {
  Encoder2dSpec encoder = Encoder2dSpec::preset("resnet18");
  Encoder3dSpec clip_encoder = Encoder3dSpec::preset("toy_r3d");
  int projection_dim = 128;
  SslObjective objective = SslObjective::ntxent;
  double tau = 0.1;
  bool symmetric = true;

  static SslBranchSpec from_config(const MinimaxConfig& cfg);
  nlohmann::json to_json() const;
  static SslBranchSpec from_json(const nlohmann::json& j);
};

class SslBranchImpl : public torch::nn::Module {
 public:
  explicit SslBranchImpl(const SslBranchSpec& spec);

  /// Frames [N, 3, H, W] -> unit-norm projections [N, projection_dim].
  torch::Tensor project(const torch::Tensor& frames);
  /// Clips [N, T, 3, H, W] -> unit-norm projections (ntxent_clip only).
  torch::Tensor project_clips(const torch::Tensor& clips);
  /// Frames [N, 3, H, W] -> rotation logits [N, 4] (rotnet only).
  torch::Tensor rotation_logits(const torch::Tensor& frames);

  const SslBranchSpec& spec() const { return spec_; }

 private:
  SslBranchSpec spec_;
  Encoder2d encoder_{nullptr};
  Encoder3d clip_encoder_{nullptr};
  torch::nn::Sequential head_{nullptr};
  torch::nn::Linear rotation_head_{nullptr};
};
TORCH_MODULE(SslBranch);

/// Momentum encoder and FIFO key queue for the momentum-contrast objective.
class MomentumContrast {
 public:
  MomentumContrast(SslBranch& branch, int queue_size, double momentum);

  /// key <- m * key + (1 - m) * query for every parameter.
  void update_encoder(SslBranch& branch);
  /// Keys from the momentum encoder, detached.
  torch::Tensor keys(const torch::Tensor& frames);
  /// Pushes keys, overwriting the oldest entries once full.
  void enqueue(const torch::Tensor& keys);
  /// Filled part of the queue [K, D] in insertion order.
  torch::Tensor queue() const;
  double momentum() const { return momentum_; }
  SslBranch& encoder() { return key_encoder_; }

 private:
  SslBranch key_encoder_{nullptr};
  torch::Tensor queue_;
  std::int64_t filled_ = 0;
  std::int64_t head_ = 0;
  double momentum_;
};

/// Momentum-contrast loss for a batch of frame pairs. Queries come from the
/// branch, keys from the momentum encoder. With an empty queue (warm-up) the
/// other keys of the batch serve as negatives.
struct MomentumLoss {
  torch::Tensor loss;
  torch::Tensor keys;  ///< detached; enqueue after updating the branch
};
MomentumLoss momentum_contrast_loss(SslBranch& branch, const torch::Tensor& frames_q, const torch::Tensor& frames_k,
                                    MomentumContrast& state, double tau);

/// Rotates each frame by a random quarter turn and scores the 4-way
/// prediction.
torch::Tensor rotnet_loss(SslBranch& branch, const torch::Tensor& frames, Rng& rng);

struct SslLoss {
  torch::Tensor loss;
  torch::Tensor moco_keys;  ///< defined for momentum_contrast only
};

/// The branch's objective on a batch of anonymized clips [N, T, 3, H, W]:
/// sample a frame pair per clip with the strategy, augment each frame with its
/// own ssl-mode draw, project and score. Gradients reach both the branch
/// parameters and the input clips.
SslLoss ssl_loss_detail(SslBranch& branch, const torch::Tensor& clips, const SamplerStrategy& strategy, Rng& rng,
                        const AugmentStrength& augmentation, MomentumContrast* moco = nullptr);

torch::Tensor ssl_loss(SslBranch& branch, const torch::Tensor& clips, const SamplerStrategy& strategy, Rng& rng,
                       const AugmentStrength& augmentation, MomentumContrast* moco = nullptr);

}  // namespace vidpriv
