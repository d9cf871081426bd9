#pragma once

// Non-learned anonymization baselines: resolution downsampling and
// box-driven obfuscation.

#include <string>
#include <vector>

#include <torch/torch.h>

#include "vidpriv/manifest.hpp"
#include "vidpriv/video.hpp"

namespace vidpriv {

/// Spatial average pooling by `factor` over clips [..., H, W]. Throws when a
/// side is not divisible.
torch::Tensor downsample(const torch::Tensor& frames, int factor);
VideoClip downsample(const VideoClip& clip, int factor);

enum class ObfuscationMode { blacken, blur_strong, blur_weak };

struct ObfuscationSpec {
  ObfuscationMode mode = ObfuscationMode::blacken;
  int kernel = 0;
  double sigma = 0.0;

  /// blacken; blur_strong (21, 10.0); blur_weak (13, 10.0).
  static ObfuscationSpec preset(ObfuscationMode mode);
  /// Throws ConfigError for even or too small blur kernels.
  void validate() const;
};

std::string to_string(ObfuscationMode mode);
ObfuscationMode obfuscation_mode_from_string(const std::string& s);

/// Normalized 1D Gaussian taps, center at kernel / 2.
std::vector<double> gaussian_kernel(int kernel, double sigma);

/// Applies the spec inside each frame's boxes; pixels outside every box are
/// copied unchanged. frames [T, 3, H, W]; boxes has one entry per frame, or a
/// single entry applied to every frame.
torch::Tensor obfuscate(const torch::Tensor& frames, const std::vector<FrameBoxes>& boxes, const ObfuscationSpec& spec);
VideoClip obfuscate(const VideoClip& clip, const std::vector<FrameBoxes>& boxes, const ObfuscationSpec& spec);

/// Maps boxes from a source frame size to a clip frame size (rounding outward)
/// and picks the entries for the given source frame indices.
std::vector<FrameBoxes> clip_boxes(const std::vector<FrameBoxes>& source_boxes, const std::vector<int>& indices,
                                   int src_width, int src_height, int side);

}  // namespace vidpriv
