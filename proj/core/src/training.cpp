#include "vidpriv/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vidpriv {

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double val_fraction,
                                                                            std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, 0x5A17);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
  if (val_fraction > 0 && n >= 2) n_val = std::max<std::size_t>(n_val, 1);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {train, val};
}

ClipBatcher::ClipBatcher(const DatasetManifest& manifest, std::vector<std::size_t> subset, ClipGeometry geometry,
                         int batch_size, std::uint64_t seed, bool shuffle, bool random_offset)
    : manifest_(manifest),
      subset_(std::move(subset)),
      geometry_(geometry),
      batch_size_(batch_size),
      shuffle_(shuffle),
      random_offset_(random_offset),
      rng_(make_rng(seed, 0xBA7C)) {
  if (batch_size_ < 1) throw ConfigError("batch size must be positive");
  reset();
}

void ClipBatcher::reset() {
  order_ = subset_;
  if (shuffle_) std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::size_t ClipBatcher::batches_per_epoch(bool drop_last) const {
  const auto b = static_cast<std::size_t>(batch_size_);
  return drop_last ? subset_.size() / b : (subset_.size() + b - 1) / b;
}

std::optional<ClipBatch> ClipBatcher::next(bool drop_last) {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(batch_size_));
  if (drop_last && end - cursor_ < static_cast<std::size_t>(batch_size_)) {
    cursor_ = order_.size();
    return std::nullopt;
  }
  ClipBatch batch;
  std::vector<torch::Tensor> clips;
  for (std::size_t k = cursor_; k < end; ++k) {
    const auto& sample = manifest_.samples[order_[k]];
    int start = 0;
    if (random_offset_) {
      const auto video = sample.decode();
      const int slack = video->frames() - geometry_.span();
      start = slack > 0 ? uniform_int(rng_, 0, slack) : 0;
    }
    clips.push_back(load_clip_tensor(sample, start, geometry_));
    batch.samples.push_back(order_[k]);
  }
  cursor_ = end;
  batch.clips = torch::stack(clips);
  return batch;
}

torch::Tensor load_clip_tensor(const Sample& sample, int start, const ClipGeometry& geometry) {
  const auto video = sample.decode();
  return make_clip(*video, std::max(start, 0), geometry).frames();
}

torch::Tensor augment_batch(const torch::Tensor& clips, const AugmentStrength& strength, Rng& rng) {
  std::vector<torch::Tensor> out;
  out.reserve(static_cast<std::size_t>(clips.size(0)));
  for (std::int64_t b = 0; b < clips.size(0); ++b) out.push_back(augment_frames(clips[b], strength, rng));
  return torch::stack(out);
}

torch::Tensor action_targets(const DatasetManifest& manifest, const std::vector<std::size_t>& samples) {
  const auto n = static_cast<std::int64_t>(samples.size());
  if (!manifest.labels.action_is_multilabel) {
    auto t = torch::empty({n}, torch::kInt64);
    auto* p = t.data_ptr<std::int64_t>();
    for (std::int64_t i = 0; i < n; ++i) p[i] = manifest.samples[samples[static_cast<std::size_t>(i)]].action_index();
    return t;
  }
  const auto k = static_cast<std::int64_t>(manifest.labels.num_actions());
  auto t = torch::zeros({n, k}, torch::kFloat32);
  auto* p = t.data_ptr<float>();
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& vec = std::get<BinaryVector>(manifest.samples[samples[static_cast<std::size_t>(i)]].action());
    for (std::int64_t c = 0; c < k; ++c) p[i * k + c] = vec[static_cast<std::size_t>(c)] ? 1.0f : 0.0f;
  }
  return t;
}

PlateauDetector::PlateauDetector(int patience, double rel_improvement, Mode mode)
    : patience_(patience), rel_(rel_improvement), mode_(mode) {}

bool PlateauDetector::improves(double value) const {
  if (!best_) return true;
  const double scale = std::max(std::abs(*best_), 1e-12);
  return mode_ == Mode::minimize ? (*best_ - value) > rel_ * scale : (value - *best_) > rel_ * scale;
}

bool PlateauDetector::observe(double value) {
  if (improves(value)) {
    best_ = value;
    since_improvement_ = 0;
    return false;
  }
  if (++since_improvement_ >= patience_) {
    since_improvement_ = 0;
    return true;
  }
  return false;
}

double current_lr(const torch::optim::Optimizer& opt) {
  return static_cast<const torch::optim::AdamOptions&>(opt.param_groups().front().options()).lr();
}

void scale_lr(torch::optim::Optimizer& opt, double factor) {
  for (auto& group : opt.param_groups()) {
    auto& o = static_cast<torch::optim::AdamOptions&>(group.options());
    o.lr(o.lr() * factor);
  }
}

ScheduledAdam::ScheduledAdam(std::vector<torch::Tensor> params, double lr, int patience, double rel_improvement,
                             PlateauDetector::Mode mode)
    : optimizer(std::make_unique<torch::optim::Adam>(std::move(params), torch::optim::AdamOptions(lr))),
      plateau(patience, rel_improvement, mode) {}

void ScheduledAdam::step_schedule(double monitored) {
  if (plateau.observe(monitored)) scale_lr(*optimizer, 0.1);
}

}  // namespace vidpriv
