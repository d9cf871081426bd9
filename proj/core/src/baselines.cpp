#include "vidpriv/baselines.hpp"

#include <algorithm>
#include <cmath>

namespace vidpriv {

namespace F = torch::nn::functional;

torch::Tensor downsample(const torch::Tensor& frames, int factor) {
  if (factor < 1) throw ConfigError("downsample factor must be >= 1");
  if (frames.dim() < 3) throw ShapeError("downsample expects [..., C, H, W]");
  const auto h = frames.size(-2);
  const auto w = frames.size(-1);
  if (h % factor != 0 || w % factor != 0) {
    throw ShapeError("frame size " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible by factor " +
                     std::to_string(factor));
  }
  if (factor == 1) return frames;
  auto lead = frames.sizes().vec();
  lead.resize(lead.size() - 2);
  auto flat = frames.reshape({-1, 1, h, w});
  auto pooled = F::avg_pool2d(flat, F::AvgPool2dFuncOptions(factor).stride(factor));
  lead.push_back(h / factor);
  lead.push_back(w / factor);
  return pooled.reshape(lead);
}

VideoClip downsample(const VideoClip& clip, int factor) {
  return VideoClip::unchecked(downsample(clip.frames(), factor), clip.fps());
}

ObfuscationSpec ObfuscationSpec::preset(ObfuscationMode mode) {
  switch (mode) {
    case ObfuscationMode::blacken: return {mode, 0, 0.0};
    case ObfuscationMode::blur_strong: return {mode, 21, 10.0};
    case ObfuscationMode::blur_weak: return {mode, 13, 10.0};
  }
  throw ConfigError("unknown obfuscation mode");
}

void ObfuscationSpec::validate() const {
  if (mode == ObfuscationMode::blacken) return;
  if (kernel < 3 || kernel % 2 == 0) throw ConfigError("blur kernel must be odd and >= 3, got " + std::to_string(kernel));
  if (sigma <= 0) throw ConfigError("blur sigma must be positive");
}

std::string to_string(ObfuscationMode mode) {
  switch (mode) {
    case ObfuscationMode::blacken: return "blacken";
    case ObfuscationMode::blur_strong: return "blur_strong";
    case ObfuscationMode::blur_weak: return "blur_weak";
  }
  return "?";
}

ObfuscationMode obfuscation_mode_from_string(const std::string& s) {
  if (s == "blacken") return ObfuscationMode::blacken;
  if (s == "blur_strong" || s == "strongblur") return ObfuscationMode::blur_strong;
  if (s == "blur_weak" || s == "weakblur") return ObfuscationMode::blur_weak;
  throw ConfigError("unknown obfuscation mode '" + s + "'");
}

std::vector<double> gaussian_kernel(int kernel, double sigma) {
  std::vector<double> taps(static_cast<std::size_t>(kernel));
  const double half = (kernel - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < kernel; ++i) {
    const double x = (i - half) / sigma;
    taps[static_cast<std::size_t>(i)] = std::exp(-0.5 * x * x);
    sum += taps[static_cast<std::size_t>(i)];
  }
  for (auto& t : taps) t /= sum;
  return taps;
}

namespace {

// Reflect-without-edge-repeat index, repeated as often as needed so crops
// smaller than the kernel radius still work.
std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  std::int64_t m = ((i % period) + period) % period;
  return m < n ? m : period - m;
}

torch::Tensor reflect_indices(std::int64_t n, std::int64_t pad) {
  auto idx = torch::empty({n + 2 * pad}, torch::kInt64);
  auto* p = idx.data_ptr<std::int64_t>();
  for (std::int64_t i = 0; i < n + 2 * pad; ++i) p[i] = reflect_index(i - pad, n);
  return idx;
}

// Separable Gaussian blur of a crop [C, h, w], reflect-padded within the crop.
torch::Tensor blur_crop(const torch::Tensor& crop, const std::vector<double>& taps) {
  const auto pad = static_cast<std::int64_t>(taps.size() / 2);
  const auto c = crop.size(0);
  const auto k = static_cast<std::int64_t>(taps.size());
  auto kernel = torch::tensor(taps, torch::kFloat64).to(crop.dtype());
  auto padded = crop.index_select(1, reflect_indices(crop.size(1), pad)).index_select(2, reflect_indices(crop.size(2), pad));
  auto x = padded.unsqueeze(0);
  x = F::conv2d(x, kernel.view({1, 1, k, 1}).expand({c, 1, k, 1}), F::Conv2dFuncOptions().groups(c));
  x = F::conv2d(x, kernel.view({1, 1, 1, k}).expand({c, 1, 1, k}), F::Conv2dFuncOptions().groups(c));
  return x.squeeze(0);
}

}  // namespace

torch::Tensor obfuscate(const torch::Tensor& frames, const std::vector<FrameBoxes>& boxes, const ObfuscationSpec& spec) {
  spec.validate();
  if (frames.dim() != 4) throw ShapeError("obfuscate expects frames [T, 3, H, W]");
  const auto t = frames.size(0);
  const int h = static_cast<int>(frames.size(2));
  const int w = static_cast<int>(frames.size(3));
  if (!boxes.empty() && boxes.size() != 1 && static_cast<std::int64_t>(boxes.size()) != t) {
    throw ShapeError("need one box list per frame (" + std::to_string(t) + "), got " + std::to_string(boxes.size()));
  }
  auto out = frames.clone();
  if (boxes.empty()) return out;
  std::vector<double> taps;
  if (spec.mode != ObfuscationMode::blacken) taps = gaussian_kernel(spec.kernel, spec.sigma);
  torch::NoGradGuard no_grad;
  for (std::int64_t f = 0; f < t; ++f) {
    const auto& frame_boxes = boxes.size() == 1 ? boxes.front() : boxes[static_cast<std::size_t>(f)];
    for (const auto& b : frame_boxes) {
      if (!b.within(w, h)) {
        throw ShapeError("box (" + std::to_string(b.x0) + "," + std::to_string(b.y0) + "," + std::to_string(b.x1) + "," +
                         std::to_string(b.y1) + ") lies outside the " + std::to_string(w) + "x" + std::to_string(h) +
                         " frame");
      }
      auto region = out[f].narrow(1, b.y0, b.y1 - b.y0).narrow(2, b.x0, b.x1 - b.x0);
      if (spec.mode == ObfuscationMode::blacken) {
        region.zero_();
      } else {
        region.copy_(blur_crop(region.clone(), taps));
      }
    }
  }
  return out;
}

VideoClip obfuscate(const VideoClip& clip, const std::vector<FrameBoxes>& boxes, const ObfuscationSpec& spec) {
  return VideoClip::unchecked(obfuscate(clip.frames(), boxes, spec), clip.fps());
}

std::vector<FrameBoxes> clip_boxes(const std::vector<FrameBoxes>& source_boxes, const std::vector<int>& indices,
                                   int src_width, int src_height, int side) {
  std::vector<FrameBoxes> out;
  if (source_boxes.empty()) return out;
  const double sx = static_cast<double>(side) / src_width;
  const double sy = static_cast<double>(side) / src_height;
  for (int idx : indices) {
    const auto& src = source_boxes.size() == 1 ? source_boxes.front()
                                                : source_boxes.at(static_cast<std::size_t>(idx) % source_boxes.size());
    FrameBoxes scaled;
    for (const auto& b : src) {
      Box s{static_cast<int>(std::floor(b.x0 * sx)), static_cast<int>(std::floor(b.y0 * sy)),
            static_cast<int>(std::ceil(b.x1 * sx)), static_cast<int>(std::ceil(b.y1 * sy))};
      s.x0 = std::clamp(s.x0, 0, side - 1);
      s.y0 = std::clamp(s.y0, 0, side - 1);
      s.x1 = std::clamp(s.x1, s.x0 + 1, side);
      s.y1 = std::clamp(s.y1, s.y0 + 1, side);
      scaled.push_back(s);
    }
    out.push_back(std::move(scaled));
  }
  return out;
}

}  // namespace vidpriv
