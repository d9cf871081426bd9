#include "vidpriv/ssl_privacy.hpp"

#include <limits>

#include "vidpriv/substrate.hpp"

namespace vidpriv {

namespace nn = torch::nn;
namespace F = torch::nn::functional;

namespace {

torch::Tensor normalize_rows(const torch::Tensor& z) { return F::normalize(z, F::NormalizeFuncOptions().dim(1)); }

// Per-anchor NT-Xent for anchors in `a` against the same view `a` (self
// excluded) and the other view `b`.
torch::Tensor ntxent_anchor_losses(const torch::Tensor& a, const torch::Tensor& b, double tau) {
  const auto n = a.size(0);
  auto same = torch::mm(a, a.t()) / tau;
  auto cross = torch::mm(a, b.t()) / tau;
  auto self_mask = torch::eye(n, torch::TensorOptions().dtype(torch::kBool));
  same = same.masked_fill(self_mask, -std::numeric_limits<double>::infinity());
  auto denom = torch::logsumexp(torch::cat({same, cross}, 1), 1);
  return denom - cross.diagonal();
}

}  // namespace

torch::Tensor nt_xent(const torch::Tensor& z, const torch::Tensor& z_prime, double tau, bool symmetric) {
  if (z.dim() != 2 || z.sizes() != z_prime.sizes()) {
    throw ShapeError("nt_xent expects two [N, D] batches of equal shape");
  }
  if (z.size(0) < 2) throw Error("nt_xent needs N >= 2 (no negatives otherwise)");
  if (tau <= 0) throw Error("nt_xent temperature must be positive");
  auto a = normalize_rows(z);
  auto b = normalize_rows(z_prime);
  auto losses = ntxent_anchor_losses(a, b, tau);
  if (symmetric) losses = torch::cat({losses, ntxent_anchor_losses(b, a, tau)});
  return losses.mean();
}

torch::Tensor info_nce(const torch::Tensor& queries, const torch::Tensor& keys, const torch::Tensor& negatives,
                       double tau) {
  if (queries.dim() != 2 || queries.sizes() != keys.sizes()) throw ShapeError("info_nce: queries and keys must be [N, D]");
  if (negatives.dim() != 2 || (negatives.size(0) > 0 && negatives.size(1) != queries.size(1))) {
    throw ShapeError("info_nce: negatives have dimension " + std::to_string(negatives.size(-1)) +
                     ", queries have " + std::to_string(queries.size(1)));
  }
  auto q = normalize_rows(queries);
  auto k = normalize_rows(keys);
  auto pos = (q * k).sum(1, /*keepdim=*/true) / tau;
  auto logits = pos;
  if (negatives.size(0) > 0) logits = torch::cat({pos, torch::mm(q, normalize_rows(negatives).t()) / tau}, 1);
  return (torch::logsumexp(logits, 1) - pos.squeeze(1)).mean();
}

torch::Tensor rotation_cross_entropy(const torch::Tensor& logits, const torch::Tensor& labels) {
  if (logits.dim() != 2 || logits.size(1) != 4) throw ShapeError("rotation logits must be [N, 4]");
  return F::cross_entropy(logits, labels);
}

torch::Tensor rotate_quarter_turns(const torch::Tensor& frames, int k) {
  if (frames.size(-1) != frames.size(-2)) {
    throw ShapeError("rotation needs square frames, got " + std::to_string(frames.size(-2)) + "x" +
                     std::to_string(frames.size(-1)));
  }
  return torch::rot90(frames, ((k % 4) + 4) % 4, {-2, -1});
}

SslBranchSpec SslBranchSpec::from_config(const MinimaxConfig& cfg) {
  SslBranchSpec s;
  s.encoder = cfg.ssl_encoder;
  s.clip_encoder = cfg.utility_encoder;
  s.projection_dim = cfg.projection_dim;
  s.objective = cfg.objective;
  s.tau = cfg.tau;
  s.symmetric = cfg.symmetric_ntxent;
  return s;
}

nlohmann::json SslBranchSpec::to_json() const {
  return {{"type", "ssl_branch"},          {"encoder", encoder.to_json()}, {"clip_encoder", clip_encoder.to_json()},
          {"projection_dim", projection_dim}, {"objective", to_string(objective)}, {"tau", tau},
          {"symmetric", symmetric}};
}

SslBranchSpec SslBranchSpec::from_json(const nlohmann::json& j) {
  SslBranchSpec s;
  s.encoder = Encoder2dSpec::from_json(j.at("encoder"));
  s.clip_encoder = Encoder3dSpec::from_json(j.at("clip_encoder"));
  s.projection_dim = j.at("projection_dim").get<int>();
  s.objective = ssl_objective_from_string(j.at("objective").get<std::string>());
  s.tau = j.at("tau").get<double>();
  s.symmetric = j.value("symmetric", true);
  return s;
}

SslBranchImpl::SslBranchImpl(const SslBranchSpec& spec) : spec_(spec) {
  if (spec.tau <= 0) throw ConfigError("SSL temperature must be positive");
  int dim = 0;
  if (spec.objective == SslObjective::ntxent_clip) {
    clip_encoder_ = register_module("clip_encoder", Encoder3d(spec.clip_encoder));
    dim = clip_encoder_->feature_dim();
  } else {
    encoder_ = register_module("encoder", Encoder2d(spec.encoder));
    dim = encoder_->feature_dim();
  }
  if (spec.objective == SslObjective::rotnet) {
    rotation_head_ = register_module("rotation_head", nn::Linear(dim, 4));
  } else {
    head_ = register_module("head", nn::Sequential(nn::Linear(dim, dim), nn::ReLU(), nn::Linear(dim, spec.projection_dim)));
  }
}

torch::Tensor SslBranchImpl::project(const torch::Tensor& frames) {
  if (!encoder_ || !head_) throw Error("this SSL branch has no frame projection (objective " + to_string(spec_.objective) + ")");
  return normalize_rows(head_->forward(encoder_(frames)));
}

torch::Tensor SslBranchImpl::project_clips(const torch::Tensor& clips) {
  if (!clip_encoder_) throw Error("this SSL branch has no clip encoder (objective " + to_string(spec_.objective) + ")");
  return normalize_rows(head_->forward(clip_encoder_(clips.permute({0, 2, 1, 3, 4}))));
}

torch::Tensor SslBranchImpl::rotation_logits(const torch::Tensor& frames) {
  if (!rotation_head_) throw Error("this SSL branch has no rotation head");
  return rotation_head_(encoder_(frames));
}

MomentumContrast::MomentumContrast(SslBranch& branch, int queue_size, double momentum) : momentum_(momentum) {
  if (queue_size < 1) throw ConfigError("momentum-contrast queue must hold at least one key");
  if (momentum < 0 || momentum > 1) throw ConfigError("momentum must lie in [0,1]");
  key_encoder_ = SslBranch(branch->spec());
  const auto params = branch->parameters();
  const auto dtype = params.empty() ? torch::kFloat32 : params.front().scalar_type();
  key_encoder_->to(dtype);
  {
    torch::NoGradGuard no_grad;
    auto src = branch->named_parameters(true);
    for (auto& item : key_encoder_->named_parameters(true)) item.value().copy_(src[item.key()]);
    auto src_buf = branch->named_buffers(true);
    for (auto& item : key_encoder_->named_buffers(true)) item.value().copy_(src_buf[item.key()]);
  }
  set_frozen(*key_encoder_, true);
  queue_ = torch::zeros({queue_size, branch->spec().projection_dim}, torch::TensorOptions().dtype(dtype));
}

void MomentumContrast::update_encoder(SslBranch& branch) {
  torch::NoGradGuard no_grad;
  auto src = branch->named_parameters(true);
  for (auto& item : key_encoder_->named_parameters(true)) {
    item.value().mul_(momentum_).add_(src[item.key()].detach(), 1.0 - momentum_);
  }
}

torch::Tensor MomentumContrast::keys(const torch::Tensor& frames) {
  torch::NoGradGuard no_grad;
  return key_encoder_->project(frames.detach());
}

void MomentumContrast::enqueue(const torch::Tensor& keys) {
  if (keys.dim() != 2 || keys.size(1) != queue_.size(1)) throw ShapeError("key dimension does not match the queue");
  const auto cap = queue_.size(0);
  for (std::int64_t i = 0; i < keys.size(0); ++i) {
    queue_[head_].copy_(keys[i].detach());
    head_ = (head_ + 1) % cap;
    filled_ = std::min(filled_ + 1, cap);
  }
}

torch::Tensor MomentumContrast::queue() const {
  const auto cap = queue_.size(0);
  if (filled_ < cap) return queue_.narrow(0, 0, filled_);
  return torch::cat({queue_.narrow(0, head_, cap - head_), queue_.narrow(0, 0, head_)});
}

MomentumLoss momentum_contrast_loss(SslBranch& branch, const torch::Tensor& frames_q, const torch::Tensor& frames_k,
                                    MomentumContrast& state, double tau) {
  auto q = branch->project(frames_q);
  auto k = state.keys(frames_k);
  auto negatives = state.queue();
  if (negatives.size(0) > 0 && negatives.size(1) != q.size(1)) {
    throw ShapeError("query dimension " + std::to_string(q.size(1)) + " does not match queued keys " +
                     std::to_string(negatives.size(1)));
  }
  torch::Tensor loss;
  if (negatives.size(0) == 0) {
    // Warm-up: in-batch keys as negatives.
    auto logits = torch::mm(q, k.t()) / tau;
    loss = F::cross_entropy(logits, torch::arange(q.size(0), torch::kInt64));
  } else {
    loss = info_nce(q, k, negatives, tau);
  }
  return {loss, k};
}

torch::Tensor rotnet_loss(SslBranch& branch, const torch::Tensor& frames, Rng& rng) {
  std::vector<torch::Tensor> rotated;
  auto labels = torch::empty({frames.size(0)}, torch::kInt64);
  for (std::int64_t i = 0; i < frames.size(0); ++i) {
    const int k = uniform_int(rng, 0, 3);
    labels[i] = k;
    rotated.push_back(rotate_quarter_turns(frames[i], k));
  }
  return rotation_cross_entropy(branch->rotation_logits(torch::stack(rotated)), labels);
}

SslLoss ssl_loss_detail(SslBranch& branch, const torch::Tensor& clips, const SamplerStrategy& strategy, Rng& rng,
                        const AugmentStrength& augmentation, MomentumContrast* moco) {
  if (clips.dim() != 5) throw ShapeError("ssl_loss expects anonymized clips [N, T, 3, H, W]");
  const auto n = clips.size(0);
  const auto t = static_cast<int>(clips.size(1));
  const auto& spec = branch->spec();

  if (spec.objective == SslObjective::ntxent_clip) {
    if (n < 2) throw Error("ntxent_clip needs at least 2 clips");
    const int len = std::max(1, t / 2);
    std::vector<torch::Tensor> first, second;
    for (std::int64_t i = 0; i < n; ++i) {
      const int s1 = uniform_int(rng, 0, t - len);
      const int s2 = uniform_int(rng, 0, t - len);
      first.push_back(augment_frames(clips[i].narrow(0, s1, len), augmentation, rng));
      second.push_back(augment_frames(clips[i].narrow(0, s2, len), augmentation, rng));
    }
    return {nt_xent(branch->project_clips(torch::stack(first)), branch->project_clips(torch::stack(second)), spec.tau,
                    spec.symmetric),
            {}};
  }

  std::vector<torch::Tensor> view_a, view_b;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto [fi, fj] = sample_frame_pair(t, strategy, rng);
    view_a.push_back(augment_frames(clips[i].narrow(0, fi, 1), augmentation, rng).squeeze(0));
    view_b.push_back(augment_frames(clips[i].narrow(0, fj, 1), augmentation, rng).squeeze(0));
  }
  auto a = torch::stack(view_a);
  auto b = torch::stack(view_b);

  switch (spec.objective) {
    case SslObjective::ntxent:
      if (n < 2) throw Error("ntxent needs at least 2 clips");
      return {nt_xent(branch->project(a), branch->project(b), spec.tau, spec.symmetric), {}};
    case SslObjective::momentum_contrast: {
      if (moco == nullptr) throw Error("momentum_contrast objective needs momentum-encoder state");
      auto out = momentum_contrast_loss(branch, a, b, *moco, spec.tau);
      return {out.loss, out.keys};
    }
    case SslObjective::rotnet:
      return {rotnet_loss(branch, a, rng), {}};
    default:
      break;
  }
  throw Error("unhandled SSL objective");
}

torch::Tensor ssl_loss(SslBranch& branch, const torch::Tensor& clips, const SamplerStrategy& strategy, Rng& rng,
                       const AugmentStrength& augmentation, MomentumContrast* moco) {
  return ssl_loss_detail(branch, clips, strategy, rng, augmentation, moco).loss;
}

}  // namespace vidpriv
