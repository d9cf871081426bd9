#pragma once

// Action-recognition branch: supervised losses on clip logits, and video-level
// inference by averaging equidistant clips.

#include <filesystem>
#include <functional>
#include <vector>

#include <torch/torch.h>

#include "vidpriv/manifest.hpp"
#include "vidpriv/networks.hpp"
#include "vidpriv/substrate.hpp"
#include "vidpriv/video.hpp"

namespace vidpriv {

/// Cross-entropy over softmax for int64 targets [N]; mean binary
/// cross-entropy over sigmoid for float multi-hot targets [N, K].
torch::Tensor utility_loss(const torch::Tensor& logits, const torch::Tensor& targets, bool multilabel);

/// A clip classifier bound to the label space it was trained for.
struct UtilityModel {
  VideoClassifier net{nullptr};
  LabelSpace labels;

  UtilityModel() = default;
  UtilityModel(const Encoder3dSpec& spec, LabelSpace labels);

  bool multilabel() const { return labels.action_is_multilabel; }
  /// Throws ManifestError when the manifest's action space differs.
  void check_compatible(const LabelSpace& other) const;
};

/// Loss of the model on clips [N, T, 3, H, W]. Throws on a target shape that
/// does not fit the model's label space.
torch::Tensor utility_loss(UtilityModel& model, const torch::Tensor& clips, const torch::Tensor& targets);

/// Frame transform applied to [B, T, 3, H, W] clips before the classifier
/// (an anonymizer, a baseline, or nothing).
using ClipTransform = std::function<torch::Tensor(const torch::Tensor&)>;

/// Start offsets floor(k * (L - span) / (count - 1)), k = 0..count-1, clamped
/// to >= 0.
std::vector<int> equidistant_offsets(int video_len, int span, int count = 10);

/// Mean over the clip axis of per-clip predictions [n_clips, K]. Post-softmax
/// (or sigmoid for multi-label) by default, otherwise raw logits.
torch::Tensor average_predictions(const torch::Tensor& clip_logits, bool multilabel, bool post_softmax = true);

struct VideoPrediction {
  bool hit = false;
  int predicted = -1;
  torch::Tensor scores;  ///< averaged prediction [K]
};

/// Classifies a whole video from 10 equidistant clips.
VideoPrediction video_top1(UtilityModel& model, const Video& video, int label, const ClipGeometry& geometry,
                           const ClipTransform& transform = {}, bool post_softmax = true);

/// Averaged predictions for every video of a subset, [n, K].
torch::Tensor video_scores(UtilityModel& model, const DatasetManifest& data, const std::vector<std::size_t>& samples,
                           const ClipGeometry& geometry, const ClipTransform& transform = {}, bool post_softmax = true);

/// Checkpoint with the architecture and the label-space fingerprint.
void save_utility(const UtilityModel& model, const std::filesystem::path& path,
                  nlohmann::json extra = nlohmann::json::object());
/// Refuses (ManifestError) when the checkpoint was trained for another label
/// space than `expected`.
UtilityModel load_utility(const std::filesystem::path& path, const LabelSpace& expected);

}  // namespace vidpriv
