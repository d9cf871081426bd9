#pragma once

// Shared training plumbing: deterministic clip batching, train/val splits and
// the reduce-on-plateau learning-rate rule.

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include <torch/torch.h>

#include "vidpriv/augment.hpp"
#include "vidpriv/manifest.hpp"

namespace vidpriv {

/// Deterministic hold-out split of [0, n): returns (train, val) index lists.
/// With fraction > 0 and n >= 2 the validation part has at least one element.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double val_fraction,
                                                                            std::uint64_t seed);

struct ClipBatch {
  torch::Tensor clips;               ///< [B, T, 3, H, W]
  std::vector<std::size_t> samples;  ///< manifest indices
};

/// Iterates a subset of a manifest in mini-batches. Each epoch reshuffles (if
/// enabled) with the batcher's own generator; random_offset picks a random
/// clip start per sample, otherwise clips start at frame 0.
class ClipBatcher {
 public:
  ClipBatcher(const DatasetManifest& manifest, std::vector<std::size_t> subset, ClipGeometry geometry, int batch_size,
              std::uint64_t seed, bool shuffle = true, bool random_offset = true);

  /// Starts a new epoch.
  void reset();
  /// Next batch of the current epoch, or nullopt at the end. With
  /// drop_last, a trailing partial batch is skipped.
  std::optional<ClipBatch> next(bool drop_last = false);

  std::size_t size() const { return subset_.size(); }
  std::size_t batches_per_epoch(bool drop_last = false) const;
  Rng& rng() { return rng_; }

 private:
  const DatasetManifest& manifest_;
  std::vector<std::size_t> subset_;
  std::vector<std::size_t> order_;
  ClipGeometry geometry_;
  int batch_size_;
  bool shuffle_;
  bool random_offset_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

/// Loads one clip of a sample. start < 0 picks frame 0.
torch::Tensor load_clip_tensor(const Sample& sample, int start, const ClipGeometry& geometry);

/// Applies one supervised augmentation draw per clip of a [B, T, 3, H, W] batch.
torch::Tensor augment_batch(const torch::Tensor& clips, const AugmentStrength& strength, Rng& rng);

/// Class targets for a batch: int64 [B] for single-label spaces, float [B, K]
/// multi-hot otherwise.
torch::Tensor action_targets(const DatasetManifest& manifest, const std::vector<std::size_t>& samples);

/// Reduce-on-plateau: the monitored value has plateaued when no check in the
/// last `patience` observations improved on the best value by more than
/// `rel_improvement` (relative).
class PlateauDetector {
 public:
  enum class Mode { minimize, maximize };

  PlateauDetector(int patience = 5, double rel_improvement = 0.01, Mode mode = Mode::minimize);

  /// Records a value; returns true when the plateau condition is met, after
  /// which the patience window starts over.
  bool observe(double value);
  std::optional<double> best() const { return best_; }

 private:
  bool improves(double value) const;

  int patience_;
  double rel_;
  Mode mode_;
  std::optional<double> best_;
  int since_improvement_ = 0;
};

double current_lr(const torch::optim::Optimizer& opt);
void scale_lr(torch::optim::Optimizer& opt, double factor);

/// Adam with a per-optimizer plateau rule (drop to 1/10).
struct ScheduledAdam {
  ScheduledAdam(std::vector<torch::Tensor> params, double lr, int patience, double rel_improvement,
                PlateauDetector::Mode mode = PlateauDetector::Mode::minimize);

  void step_schedule(double monitored);
  double lr() const { return current_lr(*optimizer); }

  std::unique_ptr<torch::optim::Adam> optimizer;
  PlateauDetector plateau;
};

}  // namespace vidpriv
