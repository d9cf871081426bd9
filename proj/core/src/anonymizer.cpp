#include "vidpriv/anonymizer.hpp"

#include "vidpriv/training.hpp"

namespace vidpriv {

namespace nn = torch::nn;

namespace {

constexpr double kRangeEps = 1e-6;

nn::Sequential double_conv(int in, int out) {
  return nn::Sequential(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1)), nn::ReLU(),
                        nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1)), nn::ReLU());
}

}  // namespace

AnonymizerNetImpl::AnonymizerNetImpl(const AnonymizerArch& arch) : arch_(arch) {
  if (arch.depth < 1 || arch.base_width < 1) throw ConfigError("anonymizer depth and width must be positive");
  auto width = [&](int level) { return arch_.base_width << level; };
  down_.push_back(register_module("enc0", double_conv(3, width(0))));
  for (int i = 1; i <= arch_.depth; ++i) {
    nn::Sequential stage(nn::MaxPool2d(nn::MaxPool2dOptions(2)));
    stage->extend(*double_conv(width(i - 1), width(i)));
    down_.push_back(register_module("enc" + std::to_string(i), stage));
  }
  for (int i = arch_.depth; i >= 1; --i) {
    up_.push_back(register_module("dec" + std::to_string(i), double_conv(width(i) + width(i - 1), width(i - 1))));
  }
  head_ = register_module("head", nn::Conv2d(nn::Conv2dOptions(width(0), 3, 1)));
}

torch::Tensor AnonymizerNetImpl::forward(torch::Tensor frames) {
  if (frames.dim() != 4 || frames.size(1) != 3) {
    throw ShapeError("anonymizer expects frames [N, 3, H, W], got " + c10::str(frames.sizes()));
  }
  check_anonymizer_input(*this, frames.size(2), frames.size(3));
  std::vector<torch::Tensor> skips;
  auto x = frames;
  for (auto& stage : down_) {
    x = stage->forward(x);
    skips.push_back(x);
  }
  skips.pop_back();
  for (auto& stage : up_) {
    auto skip = skips.back();
    skips.pop_back();
    namespace F = torch::nn::functional;
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<std::int64_t>{skip.size(2), skip.size(3)})
                              .mode(torch::kBilinear)
                              .align_corners(false));
    x = stage->forward(torch::cat({x, skip}, 1));
  }
  return torch::sigmoid(head_(x)).clamp(kRangeEps, 1.0 - kRangeEps);
}

void check_anonymizer_input(const AnonymizerNetImpl& net, std::int64_t height, std::int64_t width) {
  const int stride = net.total_stride();
  if (height % stride != 0 || width % stride != 0) {
    throw ShapeError("anonymizer input " + std::to_string(height) + "x" + std::to_string(width) +
                     " must have height and width divisible by " + std::to_string(stride));
  }
}

torch::Tensor anonymize_batch(AnonymizerNet& net, const torch::Tensor& clips) {
  if (clips.dim() != 5) throw ShapeError("anonymize_batch expects [B, T, 3, H, W], got " + c10::str(clips.sizes()));
  const auto sizes = clips.sizes().vec();
  auto out = net->forward(clips.reshape({sizes[0] * sizes[1], sizes[2], sizes[3], sizes[4]}));
  return out.view(sizes);
}

VideoClip anonymize(AnonymizerNet& net, const VideoClip& clip) {
  return VideoClip::unchecked(net->forward(clip.frames()), clip.fps());
}

torch::Tensor l1_loss(const torch::Tensor& x, const torch::Tensor& x_hat) {
  if (x.sizes() != x_hat.sizes()) {
    throw ShapeError("l1_loss shape mismatch: " + c10::str(x.sizes()) + " vs " + c10::str(x_hat.sizes()));
  }
  if (x.dim() < 3) throw ShapeError("l1_loss expects [..., C, H, W]");
  auto per_frame = (x - x_hat).abs().sum({-3, -2, -1});
  return x.dim() == 3 ? per_frame : per_frame.mean();
}

torch::Tensor per_pixel_l1(const torch::Tensor& x, const torch::Tensor& x_hat) {
  const auto chw = x.size(-3) * x.size(-2) * x.size(-1);
  return vidpriv::l1_loss(x, x_hat) / static_cast<double>(chw);
}

double reconstruction_error(AnonymizerNet& net, const DatasetManifest& data, const std::vector<std::size_t>& samples,
                            const ClipGeometry& geometry, int batch_size) {
  if (samples.empty()) throw Error("reconstruction_error: no samples");
  torch::NoGradGuard no_grad;
  ClipBatcher batcher(data, samples, geometry, batch_size, 0, /*shuffle=*/false, /*random_offset=*/false);
  double total = 0.0;
  std::int64_t frames = 0;
  while (auto batch = batcher.next()) {
    const auto s = batch->clips.sizes();
    auto x = batch->clips.reshape({s[0] * s[1], s[2], s[3], s[4]});
    total += (x - net->forward(x)).abs().mean({1, 2, 3}).sum().item<double>();
    frames += x.size(0);
  }
  return total / static_cast<double>(frames);
}

PretrainResult reconstruct_pretrain(AnonymizerNet& net, const DatasetManifest& data, const MinimaxConfig& cfg,
                                    const EpochHook& hook) {
  if (data.empty()) throw Error("reconstruct_pretrain: empty dataset");
  check_anonymizer_input(*net, cfg.geometry.side, cfg.geometry.side);
  auto [train, val] = split_indices(data.size(), cfg.val_fraction, cfg.seed);
  if (val.empty()) val = train;
  if (train.empty()) train = val;

  PretrainResult result;
  double val_l1 = reconstruction_error(net, data, val, cfg.geometry, cfg.batch_size);
  result.val_curve.push_back(val_l1);
  if (val_l1 <= cfg.th_a0) {
    result.threshold_met = true;
    return result;
  }

  net->train();
  ScheduledAdam opt(net->parameters(), cfg.lr_pretrain.value_or(cfg.lr_anonymizer), cfg.plateau_patience, cfg.plateau_rel_improvement);
  ClipBatcher batcher(data, train, cfg.geometry, cfg.batch_size, cfg.seed ^ 0xA0A0, true, true);
  for (int epoch = 1; epoch <= cfg.epochs_pretrain; ++epoch) {
    batcher.reset();
    double sum = 0.0;
    int count = 0;
    while (auto batch = batcher.next()) {
      const auto s = batch->clips.sizes();
      auto x = batch->clips.reshape({s[0] * s[1], s[2], s[3], s[4]});
      opt.optimizer->zero_grad();
      auto loss = vidpriv::l1_loss(x, net->forward(x));
      loss.backward();
      opt.optimizer->step();
      sum += loss.item<double>() / static_cast<double>(s[2] * s[3] * s[4]);
      ++count;
      ++result.steps;
    }
    val_l1 = reconstruction_error(net, data, val, cfg.geometry, cfg.batch_size);
    result.train_curve.push_back(sum / std::max(count, 1));
    result.val_curve.push_back(val_l1);
    result.epochs_run = epoch;
    opt.step_schedule(val_l1);
    if (hook) hook("pretrain", epoch, result.train_curve.back(), val_l1);
    if (val_l1 <= cfg.th_a0) {
      result.threshold_met = true;
      break;
    }
  }
  return result;
}

}  // namespace vidpriv
