#include "vidpriv/networks.hpp"

#include "vidpriv/common.hpp"

namespace vidpriv {

namespace nn = torch::nn;

namespace {

class Block2dImpl : public nn::Module {
 public:
  Block2dImpl(int in, int out, int stride, bool residual, bool bn) : residual_(residual) {
    conv1_ = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(!bn)));
    if (bn) bn1_ = register_module("bn1", nn::BatchNorm2d(out));
    if (residual_) {
      conv2_ = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1).bias(!bn)));
      if (bn) bn2_ = register_module("bn2", nn::BatchNorm2d(out));
      if (stride != 1 || in != out) {
        shortcut_ = register_module("shortcut", nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)));
      }
    }
  }

  torch::Tensor forward(torch::Tensor x) {
    auto y = conv1_(x);
    if (bn1_) y = bn1_(y);
    if (!residual_) return torch::relu(y);
    y = torch::relu(y);
    y = conv2_(y);
    if (bn2_) y = bn2_(y);
    return torch::relu(y + (shortcut_ ? shortcut_(x) : x));
  }

 private:
  bool residual_;
  nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, shortcut_{nullptr};
  nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr};
};
TORCH_MODULE(Block2d);

class Block3dImpl : public nn::Module {
 public:
  Block3dImpl(const std::string& kind, int in, int out, std::vector<std::int64_t> stride, bool bn)
      : residual_(kind == "r3d") {
    if (kind == "r2plus1d") {
      // Spatial then temporal factorization of a 3x3x3 kernel.
      spatial_ = register_module("spatial", nn::Conv3d(nn::Conv3dOptions(in, out, {1, 3, 3})
                                                          .stride({1, stride[1], stride[2]})
                                                          .padding({0, 1, 1})
                                                          .bias(!bn)));
      conv1_ = register_module("temporal", nn::Conv3d(nn::Conv3dOptions(out, out, {3, 1, 1})
                                                          .stride({stride[0], 1, 1})
                                                          .padding({1, 0, 0})
                                                          .bias(!bn)));
    } else if (kind == "c3d" || kind == "r3d") {
      conv1_ = register_module("conv1", nn::Conv3d(nn::Conv3dOptions(in, out, 3).stride(stride).padding(1).bias(!bn)));
    } else {
      throw ConfigError("unknown 3D encoder kind '" + kind + "'");
    }
    if (bn) bn1_ = register_module("bn1", nn::BatchNorm3d(out));
    if (residual_) {
      conv2_ = register_module("conv2", nn::Conv3d(nn::Conv3dOptions(out, out, 3).padding(1).bias(!bn)));
      if (bn) bn2_ = register_module("bn2", nn::BatchNorm3d(out));
      const bool strided = stride[0] != 1 || stride[1] != 1 || stride[2] != 1;
      if (strided || in != out) {
        shortcut_ = register_module("shortcut", nn::Conv3d(nn::Conv3dOptions(in, out, 1).stride(stride).bias(false)));
      }
    }
  }

  torch::Tensor forward(torch::Tensor x) {
    auto y = spatial_ ? conv1_(torch::relu(spatial_(x))) : conv1_(x);
    if (bn1_) y = bn1_(y);
    if (!residual_) return torch::relu(y);
    y = torch::relu(y);
    y = conv2_(y);
    if (bn2_) y = bn2_(y);
    return torch::relu(y + (shortcut_ ? shortcut_(x) : x));
  }

 private:
  bool residual_;
  nn::Conv3d spatial_{nullptr}, conv1_{nullptr}, conv2_{nullptr}, shortcut_{nullptr};
  nn::BatchNorm3d bn1_{nullptr}, bn2_{nullptr};
};
TORCH_MODULE(Block3d);

}  // namespace

Encoder2dSpec Encoder2dSpec::preset(const std::string& name) {
  if (name == "tiny") return {8, 2, 1, false, false};
  if (name == "small") return {16, 2, 1, false, false};
  if (name == "medium") return {32, 3, 1, false, false};
  if (name == "resnet18") return {64, 4, 2, true, true};
  throw ConfigError("unknown 2D encoder preset '" + name + "'");
}

nlohmann::json Encoder2dSpec::to_json() const {
  return {{"width", width}, {"stages", stages}, {"blocks_per_stage", blocks_per_stage}, {"residual", residual},
          {"batch_norm", batch_norm}};
}

Encoder2dSpec Encoder2dSpec::from_json(const nlohmann::json& j) {
  if (j.is_string()) return preset(j.get<std::string>());
  Encoder2dSpec s;
  s.width = j.value("width", s.width);
  s.stages = j.value("stages", s.stages);
  s.blocks_per_stage = j.value("blocks_per_stage", s.blocks_per_stage);
  s.residual = j.value("residual", s.residual);
  s.batch_norm = j.value("batch_norm", s.batch_norm);
  if (s.width < 1 || s.stages < 1 || s.blocks_per_stage < 1) throw ConfigError("2D encoder sizes must be positive");
  return s;
}

Encoder2dImpl::Encoder2dImpl(const Encoder2dSpec& spec) : spec_(spec) {
  nn::Sequential body;
  body->push_back(nn::Conv2d(nn::Conv2dOptions(3, spec.width, 3).padding(1).bias(!spec.batch_norm)));
  if (spec.batch_norm) body->push_back(nn::BatchNorm2d(spec.width));
  body->push_back(nn::ReLU());
  int in = spec.width;
  for (int s = 0; s < spec.stages; ++s) {
    const int out = spec.width << s;
    for (int b = 0; b < spec.blocks_per_stage; ++b) {
      body->push_back(Block2d(in, out, b == 0 ? 2 : 1, spec.residual, spec.batch_norm));
      in = out;
    }
  }
  body->push_back(nn::AdaptiveAvgPool2d(1));
  body->push_back(nn::Flatten());
  body_ = register_module("body", body);
}

torch::Tensor Encoder2dImpl::forward(torch::Tensor x) { return body_->forward(x); }

Encoder3dSpec Encoder3dSpec::preset(const std::string& name) {
  if (name == "toy_c3d") return {"c3d", 8, 2, 1, true, "max"};
  if (name == "toy_r2plus1d") return {"r2plus1d", 8, 2, 1, true, "max"};
  if (name == "toy_r3d") return {"r3d", 8, 2, 1, true, "max"};
  if (name == "c3d") return {"c3d", 64, 4, 1, true};
  if (name == "r3d18") return {"r3d", 64, 4, 2, true};
  if (name == "r2plus1d18") return {"r2plus1d", 64, 4, 2, true};
  throw ConfigError("unknown 3D encoder preset '" + name + "'");
}

nlohmann::json Encoder3dSpec::to_json() const {
  return {{"kind", kind}, {"width", width}, {"stages", stages}, {"blocks_per_stage", blocks_per_stage},
          {"batch_norm", batch_norm}, {"pool", pool}};
}

Encoder3dSpec Encoder3dSpec::from_json(const nlohmann::json& j) {
  if (j.is_string()) return preset(j.get<std::string>());
  Encoder3dSpec s;
  s.kind = j.value("kind", s.kind);
  s.width = j.value("width", s.width);
  s.stages = j.value("stages", s.stages);
  s.blocks_per_stage = j.value("blocks_per_stage", s.blocks_per_stage);
  s.batch_norm = j.value("batch_norm", s.batch_norm);
  s.pool = j.value("pool", s.pool);
  if (s.pool != "avg" && s.pool != "max") throw ConfigError("3D encoder pool must be 'avg' or 'max'");
  if (s.width < 1 || s.stages < 1 || s.blocks_per_stage < 1) throw ConfigError("3D encoder sizes must be positive");
  return s;
}

Encoder3dImpl::Encoder3dImpl(const Encoder3dSpec& spec) : spec_(spec) {
  nn::Sequential body;
  body->push_back(nn::Conv3d(nn::Conv3dOptions(3, spec.width, 3).padding(1).bias(!spec.batch_norm)));
  if (spec.batch_norm) body->push_back(nn::BatchNorm3d(spec.width));
  body->push_back(nn::ReLU());
  int in = spec.width;
  for (int s = 0; s < spec.stages; ++s) {
    const int out = spec.width << s;
    for (int b = 0; b < spec.blocks_per_stage; ++b) {
      // Spatial downsampling every stage; temporal from the second stage on.
      std::vector<std::int64_t> stride{1, 1, 1};
      if (b == 0) stride = {s == 0 ? 1 : 2, 2, 2};
      body->push_back(Block3d(spec.kind, in, out, stride, spec.batch_norm));
      in = out;
    }
  }
  if (spec.pool == "max") {
    body->push_back(nn::AdaptiveMaxPool3d(1));
  } else {
    body->push_back(nn::AdaptiveAvgPool3d(1));
  }
  body->push_back(nn::Flatten());
  body_ = register_module("body", body);
}

torch::Tensor Encoder3dImpl::forward(torch::Tensor x) { return body_->forward(x); }

VideoClassifierImpl::VideoClassifierImpl(const Encoder3dSpec& spec, int num_classes) : num_classes_(num_classes) {
  if (num_classes < 1) throw ConfigError("classifier needs at least one class");
  encoder_ = register_module("encoder", Encoder3d(spec));
  fc_ = register_module("fc", nn::Linear(spec.feature_dim(), num_classes));
}

torch::Tensor VideoClassifierImpl::forward(torch::Tensor clips) {
  if (clips.dim() != 5) throw ShapeError("video classifier expects [N, T, 3, H, W], got " + c10::str(clips.sizes()));
  return fc_(encoder_(clips.permute({0, 2, 1, 3, 4})));
}

nlohmann::json VideoClassifierImpl::arch() const {
  return {{"type", "video_classifier"}, {"encoder", encoder_->spec().to_json()}, {"num_classes", num_classes_}};
}

std::shared_ptr<VideoClassifierImpl> VideoClassifierImpl::from_arch(const nlohmann::json& arch) {
  if (arch.value("type", "") != "video_classifier") throw ConfigError("checkpoint is not a video classifier");
  return std::make_shared<VideoClassifierImpl>(Encoder3dSpec::from_json(arch.at("encoder")),
                                               arch.at("num_classes").get<int>());
}

FrameClassifierImpl::FrameClassifierImpl(const Encoder2dSpec& spec, int num_classes) : num_classes_(num_classes) {
  if (num_classes < 1) throw ConfigError("classifier needs at least one class");
  encoder_ = register_module("encoder", Encoder2d(spec));
  fc_ = register_module("fc", nn::Linear(spec.feature_dim(), num_classes));
}

torch::Tensor FrameClassifierImpl::forward(torch::Tensor frames) {
  if (frames.dim() != 4) throw ShapeError("frame classifier expects [N, 3, H, W], got " + c10::str(frames.sizes()));
  return fc_(encoder_(frames));
}

nlohmann::json FrameClassifierImpl::arch() const {
  return {{"type", "frame_classifier"}, {"encoder", encoder_->spec().to_json()}, {"num_classes", num_classes_}};
}

std::shared_ptr<FrameClassifierImpl> FrameClassifierImpl::from_arch(const nlohmann::json& arch) {
  if (arch.value("type", "") != "frame_classifier") throw ConfigError("checkpoint is not a frame classifier");
  return std::make_shared<FrameClassifierImpl>(Encoder2dSpec::from_json(arch.at("encoder")),
                                               arch.at("num_classes").get<int>());
}

}  // namespace vidpriv
