#include "vidpriv/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace vidpriv {

namespace F = torch::nn::functional;

std::pair<int, int> sample_frame_pair(int clip_len, const SamplerStrategy& strategy, Rng& rng) {
  if (clip_len < 2) throw Error("frame sampler needs at least 2 frames, got " + std::to_string(clip_len));
  switch (strategy.kind) {
    case SamplerKind::unconstrained: {
      const int i = uniform_int(rng, 0, clip_len - 1);
      int j = uniform_int(rng, 0, clip_len - 2);
      if (j >= i) ++j;
      return {i, j};
    }
    case SamplerKind::min_gap: {
      // Pairs with |i - j| > gap; sample the distance first, weighted by the
      // number of pairs at that distance, so pairs are uniform.
      const int gap = strategy.gap;
      if (gap < 1 || clip_len <= gap + 1) {
        throw Error("min_gap(" + std::to_string(gap) + ") is infeasible for " + std::to_string(clip_len) + " frames");
      }
      std::vector<double> weights;
      for (int d = gap + 1; d < clip_len; ++d) weights.push_back(static_cast<double>(clip_len - d));
      std::discrete_distribution<int> pick(weights.begin(), weights.end());
      const int d = gap + 1 + pick(rng);
      const int lo = uniform_int(rng, 0, clip_len - 1 - d);
      return bernoulli(rng, 0.5) ? std::pair{lo, lo + d} : std::pair{lo + d, lo};
    }
    case SamplerKind::max_gap: {
      const int gap = strategy.gap;
      if (gap < 2) throw Error("max_gap(" + std::to_string(gap) + ") admits no distinct pair");
      std::vector<double> weights;
      for (int d = 1; d < std::min(gap, clip_len); ++d) weights.push_back(static_cast<double>(clip_len - d));
      std::discrete_distribution<int> pick(weights.begin(), weights.end());
      const int d = 1 + pick(rng);
      const int lo = uniform_int(rng, 0, clip_len - 1 - d);
      return bernoulli(rng, 0.5) ? std::pair{lo, lo + d} : std::pair{lo + d, lo};
    }
  }
  throw Error("unknown sampler kind");
}

AugmentDraw draw_augment(const AugmentStrength& s, int height, int width, Rng& rng) {
  AugmentDraw d;
  d.crop_w = width;
  d.crop_h = height;
  if (s.crop_min_scale < 1.0) {
    const double area = uniform(rng, s.crop_min_scale, 1.0);
    const double log_ratio = uniform(rng, std::log(3.0 / 4.0), std::log(4.0 / 3.0));
    const double ratio = std::exp(log_ratio);
    d.crop_w = std::clamp(static_cast<int>(std::lround(std::sqrt(area * ratio) * width)), 1, width);
    d.crop_h = std::clamp(static_cast<int>(std::lround(std::sqrt(area / ratio) * height)), 1, height);
    d.crop_x = uniform_int(rng, 0, width - d.crop_w);
    d.crop_y = uniform_int(rng, 0, height - d.crop_h);
  }
  d.flip = bernoulli(rng, s.flip_prob);
  d.jitter = bernoulli(rng, s.jitter_prob);
  if (d.jitter) {
    d.brightness = uniform(rng, std::max(0.0, 1.0 - s.brightness), 1.0 + s.brightness);
    d.contrast = uniform(rng, std::max(0.0, 1.0 - s.contrast), 1.0 + s.contrast);
    d.saturation = uniform(rng, std::max(0.0, 1.0 - s.saturation), 1.0 + s.saturation);
    d.hue = uniform(rng, -s.hue, s.hue);
    std::shuffle(d.jitter_order.begin(), d.jitter_order.end(), rng);
  }
  d.gray = bernoulli(rng, s.gray_prob);
  d.cutout = bernoulli(rng, s.cutout_prob);
  if (d.cutout) {
    d.cut_size = std::max(1, static_cast<int>(std::lround(s.cutout_frac * std::min(height, width))));
    d.cut_x = uniform_int(rng, 0, width - d.cut_size);
    d.cut_y = uniform_int(rng, 0, height - d.cut_size);
  }
  return d;
}

torch::Tensor to_grayscale(const torch::Tensor& frames) {
  auto y = frames.select(1, 0) * 0.299 + frames.select(1, 1) * 0.587 + frames.select(1, 2) * 0.114;
  return y.unsqueeze(1).expand_as(frames);
}

namespace {

torch::Tensor rotate_hue(const torch::Tensor& x, double turns) {
  // Rotation of the chroma plane in YIQ space.
  const double a = 2.0 * std::numbers::pi * turns;
  const double c = std::cos(a);
  const double s = std::sin(a);
  auto r = x.select(1, 0), g = x.select(1, 1), b = x.select(1, 2);
  auto y = 0.299 * r + 0.587 * g + 0.114 * b;
  auto i = 0.596 * r - 0.274 * g - 0.322 * b;
  auto q = 0.211 * r - 0.523 * g + 0.312 * b;
  auto i2 = c * i - s * q;
  auto q2 = s * i + c * q;
  auto r2 = y + 0.956 * i2 + 0.621 * q2;
  auto g2 = y - 0.272 * i2 - 0.647 * q2;
  auto b2 = y - 1.106 * i2 + 1.703 * q2;
  return torch::stack({r2, g2, b2}, 1);
}

}  // namespace

torch::Tensor apply_augment(const torch::Tensor& frames, const AugmentDraw& d) {
  if (frames.dim() != 4 || frames.size(1) != 3) throw ShapeError("augment expects [T, 3, H, W]");
  const auto h = frames.size(2);
  const auto w = frames.size(3);
  auto x = frames;
  if (d.crop_w != w || d.crop_h != h || d.crop_x != 0 || d.crop_y != 0) {
    x = x.narrow(2, d.crop_y, d.crop_h).narrow(3, d.crop_x, d.crop_w);
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<std::int64_t>{h, w})
                              .mode(torch::kBilinear)
                              .align_corners(false));
  }
  if (d.flip) x = x.flip({3});
  if (d.jitter) {
    for (int op : d.jitter_order) {
      switch (op) {
        case 0: x = (x * d.brightness).clamp(0.0, 1.0); break;
        case 1: {
          auto mean = to_grayscale(x).mean({1, 2, 3}, /*keepdim=*/true);
          x = (mean + d.contrast * (x - mean)).clamp(0.0, 1.0);
          break;
        }
        case 2: {
          auto gray = to_grayscale(x);
          x = (gray + d.saturation * (x - gray)).clamp(0.0, 1.0);
          break;
        }
        case 3:
          if (d.hue != 0.0) x = rotate_hue(x, d.hue).clamp(0.0, 1.0);
          break;
        default: break;
      }
    }
  }
  if (d.gray) x = to_grayscale(x);
  if (d.cutout) {
    auto mask = torch::ones({1, 1, h, w}, x.options().requires_grad(false));
    mask.narrow(2, d.cut_y, d.cut_size).narrow(3, d.cut_x, d.cut_size).zero_();
    x = x * mask;
  }
  return x.clamp(0.0, 1.0);
}

torch::Tensor augment_frames(const torch::Tensor& frames, const AugmentStrength& strength, Rng& rng) {
  const auto draw = draw_augment(strength, static_cast<int>(frames.size(2)), static_cast<int>(frames.size(3)), rng);
  return apply_augment(frames, draw);
}

VideoClip augment(const VideoClip& clip, AugmentMode mode, Rng& rng, const AugmentConfig& config) {
  const auto& strength = mode == AugmentMode::supervised ? config.supervised : config.ssl;
  return VideoClip::unchecked(augment_frames(clip.frames(), strength, rng), clip.fps());
}

}  // namespace vidpriv
