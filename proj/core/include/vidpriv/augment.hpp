#pragma once

#include <array>
#include <utility>

#include <torch/torch.h>

#include "vidpriv/common.hpp"
#include "vidpriv/config.hpp"
#include "vidpriv/video.hpp"

namespace vidpriv {

/// Two distinct frame indices in [0, clip_len) honoring the strategy's gap
/// constraint. Throws when no pair satisfies it.
std::pair<int, int> sample_frame_pair(int clip_len, const SamplerStrategy& strategy, Rng& rng);

enum class AugmentMode { supervised, ssl };

/// One random parameter draw. Applying the same draw to every frame keeps a
/// clip temporally consistent.
struct AugmentDraw {
  int crop_x = 0, crop_y = 0, crop_w = 0, crop_h = 0;
  bool flip = false;
  bool jitter = false;
  double brightness = 1.0, contrast = 1.0, saturation = 1.0, hue = 0.0;
  std::array<int, 4> jitter_order{0, 1, 2, 3};
  bool gray = false;
  bool cutout = false;
  int cut_x = 0, cut_y = 0, cut_size = 0;
};

AugmentDraw draw_augment(const AugmentStrength& strength, int height, int width, Rng& rng);

/// Applies a draw to frames [T, 3, H, W]. Built from differentiable tensor
/// ops, so gradients flow back to the input. Output stays in [0, 1].
torch::Tensor apply_augment(const torch::Tensor& frames, const AugmentDraw& draw);

torch::Tensor augment_frames(const torch::Tensor& frames, const AugmentStrength& strength, Rng& rng);

VideoClip augment(const VideoClip& clip, AugmentMode mode, Rng& rng, const AugmentConfig& config = {});

/// ITU-R 601 luma, broadcast back to three channels.
torch::Tensor to_grayscale(const torch::Tensor& frames);

}  // namespace vidpriv
