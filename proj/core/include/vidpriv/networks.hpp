#pragma once

// Convolutional feature extractors shared by the utility, privacy and SSL
// models. Each spec round-trips through JSON so checkpoints can rebuild the
// exact architecture.

#include <string>

#include <torch/torch.h>

#include "json.hpp"

namespace vidpriv {

struct Encoder2dSpec {
  int width = 16;
  int stages = 2;
  int blocks_per_stage = 1;
  bool residual = false;
  bool batch_norm = false;

  /// "tiny", "small", "medium", "resnet18".
  static Encoder2dSpec preset(const std::string& name);
  nlohmann::json to_json() const;
  static Encoder2dSpec from_json(const nlohmann::json& j);
  int feature_dim() const { return width << (stages - 1); }
};

/// Frames [N, 3, H, W] -> features [N, feature_dim] (global average pool).
class Encoder2dImpl : public torch::nn::Module {
 public:
  explicit Encoder2dImpl(const Encoder2dSpec& spec);
  torch::Tensor forward(torch::Tensor x);
  int feature_dim() const { return spec_.feature_dim(); }
  const Encoder2dSpec& spec() const { return spec_; }

 private:
  Encoder2dSpec spec_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(Encoder2d);

struct Encoder3dSpec {
  /// "c3d" (plain 3x3x3 stacks), "r2plus1d" (factored spatial/temporal
  /// convolutions) or "r3d" (residual 3x3x3 blocks).
  std::string kind = "c3d";
  int width = 8;
  int stages = 2;
  int blocks_per_stage = 1;
  bool batch_norm = false;
  /// "avg" or "max" global pooling. Max keeps small moving objects visible.
  std::string pool = "avg";

  /// "toy_c3d", "toy_r2plus1d", "toy_r3d", "r3d18", "r2plus1d18", "c3d".
  static Encoder3dSpec preset(const std::string& name);
  nlohmann::json to_json() const;
  static Encoder3dSpec from_json(const nlohmann::json& j);
  int feature_dim() const { return width << (stages - 1); }
};

/// Clips [N, 3, T, H, W] -> features [N, feature_dim].
class Encoder3dImpl : public torch::nn::Module {
 public:
  explicit Encoder3dImpl(const Encoder3dSpec& spec);
  torch::Tensor forward(torch::Tensor x);
  int feature_dim() const { return spec_.feature_dim(); }
  const Encoder3dSpec& spec() const { return spec_; }

 private:
  Encoder3dSpec spec_;
  torch::nn::Sequential body_{nullptr};
};
TORCH_MODULE(Encoder3d);

/// Clip classifier (utility f_T and target f'_T). Input clips are batched as
/// [N, T, 3, H, W], the layout produced by the data pipeline.
class VideoClassifierImpl : public torch::nn::Module {
 public:
  VideoClassifierImpl(const Encoder3dSpec& spec, int num_classes);
  torch::Tensor forward(torch::Tensor clips);
  int num_classes() const { return num_classes_; }
  nlohmann::json arch() const;
  static std::shared_ptr<VideoClassifierImpl> from_arch(const nlohmann::json& arch);

 private:
  Encoder3d encoder_{nullptr};
  torch::nn::Linear fc_{nullptr};
  int num_classes_;
};
TORCH_MODULE(VideoClassifier);

/// Frame classifier (target privacy model f'_B). Frames [N, 3, H, W].
class FrameClassifierImpl : public torch::nn::Module {
 public:
  FrameClassifierImpl(const Encoder2dSpec& spec, int num_classes);
  torch::Tensor forward(torch::Tensor frames);
  int num_classes() const { return num_classes_; }
  nlohmann::json arch() const;
  static std::shared_ptr<FrameClassifierImpl> from_arch(const nlohmann::json& arch);

 private:
  Encoder2d encoder_{nullptr};
  torch::nn::Linear fc_{nullptr};
  int num_classes_;
};
TORCH_MODULE(FrameClassifier);

}  // namespace vidpriv
