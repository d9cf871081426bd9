#pragma once

#include <functional>
#include <vector>

#include <torch/torch.h>

#include "vidpriv/config.hpp"
#include "vidpriv/manifest.hpp"
#include "vidpriv/video.hpp"

namespace vidpriv {

/// The learnable anonymization function: a UNet-style encoder-decoder applied
/// to each frame independently, squashed by a sigmoid. Outputs lie strictly
/// inside (0, 1) and keep the input's spatial shape.
class AnonymizerNetImpl : public torch::nn::Module {
 public:
  explicit AnonymizerNetImpl(const AnonymizerArch& arch = {});

  /// frames [N, 3, H, W] -> [N, 3, H, W]. H and W must be divisible by
  /// total_stride().
  torch::Tensor forward(torch::Tensor frames);

  const AnonymizerArch& arch() const { return arch_; }
  int total_stride() const { return arch_.total_stride(); }

 private:
  AnonymizerArch arch_;
  std::vector<torch::nn::Sequential> down_;
  std::vector<torch::nn::Sequential> up_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(AnonymizerNet);

/// Throws ShapeError naming the required divisibility when the side does not
/// fit the network's stride.
void check_anonymizer_input(const AnonymizerNetImpl& net, std::int64_t height, std::int64_t width);

/// Applies f_A to every frame of every clip of [B, T, 3, H, W]. Differentiable.
torch::Tensor anonymize_batch(AnonymizerNet& net, const torch::Tensor& clips);

VideoClip anonymize(AnonymizerNet& net, const VideoClip& clip);

/// Sum over channels, rows and columns of |x - x_hat|. For batched input
/// [..., C, H, W] the per-frame sums are averaged over the leading dims.
torch::Tensor l1_loss(const torch::Tensor& x, const torch::Tensor& x_hat);

/// l1_loss divided by C * H * W: the per-pixel mean used for th_a0.
torch::Tensor per_pixel_l1(const torch::Tensor& x, const torch::Tensor& x_hat);

struct PretrainResult {
  std::vector<double> train_curve;  ///< mean per-pixel L1 per epoch
  std::vector<double> val_curve;    ///< validation per-pixel L1; entry 0 is before training
  int epochs_run = 0;
  std::int64_t steps = 0;
  bool threshold_met = false;
};

using EpochHook = std::function<void(const char* phase, int epoch, double train_loss, double val_loss)>;

/// Identity initialization: Adam on the L1 reconstruction loss until the
/// validation per-pixel L1 reaches cfg.th_a0 or cfg.epochs_pretrain runs out.
/// The threshold is checked once before the first step.
PretrainResult reconstruct_pretrain(AnonymizerNet& net, const DatasetManifest& data, const MinimaxConfig& cfg,
                                    const EpochHook& hook = {});

/// Mean per-pixel L1 of the anonymizer over the given samples (first clip of
/// each, no augmentation).
double reconstruction_error(AnonymizerNet& net, const DatasetManifest& data, const std::vector<std::size_t>& samples,
                            const ClipGeometry& geometry, int batch_size = 16);

}  // namespace vidpriv
