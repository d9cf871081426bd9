#include "vidpriv/utility.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace vidpriv {

namespace F = torch::nn::functional;

torch::Tensor utility_loss(const torch::Tensor& logits, const torch::Tensor& targets, bool multilabel) {
  if (logits.dim() != 2) throw ShapeError("utility logits must be [N, K], got " + c10::str(logits.sizes()));
  if (multilabel) {
    if (targets.sizes() != logits.sizes()) {
      throw ManifestError("multi-label targets " + c10::str(targets.sizes()) + " do not match logits " +
                          c10::str(logits.sizes()));
    }
    return F::binary_cross_entropy_with_logits(logits, targets.to(logits.dtype()));
  }
  if (targets.dim() != 1 || targets.size(0) != logits.size(0)) {
    throw ManifestError("single-label targets must be [N] class indices");
  }
  if (targets.numel() > 0 && (targets.min().item<std::int64_t>() < 0 || targets.max().item<std::int64_t>() >= logits.size(1))) {
    throw ManifestError("action index outside the model's " + std::to_string(logits.size(1)) + " classes");
  }
  return F::cross_entropy(logits, targets);
}

UtilityModel::UtilityModel(const Encoder3dSpec& spec, LabelSpace label_space)
    : net(spec, static_cast<int>(label_space.num_actions())), labels(std::move(label_space)) {}

void UtilityModel::check_compatible(const LabelSpace& other) const {
  if (other.action_names != labels.action_names || other.action_is_multilabel != labels.action_is_multilabel) {
    throw ManifestError("utility model was trained for action space " + labels.fingerprint() +
                        ", manifest has " + other.fingerprint());
  }
}

torch::Tensor utility_loss(UtilityModel& model, const torch::Tensor& clips, const torch::Tensor& targets) {
  return utility_loss(model.net->forward(clips), targets, model.multilabel());
}

std::vector<int> equidistant_offsets(int video_len, int span, int count) {
  if (count < 1) throw Error("need at least one clip offset");
  std::vector<int> out;
  const int slack = std::max(video_len - span, 0);
  for (int k = 0; k < count; ++k) {
    out.push_back(count == 1 ? 0 : static_cast<int>(static_cast<std::int64_t>(k) * slack / (count - 1)));
  }
  return out;
}

torch::Tensor average_predictions(const torch::Tensor& clip_logits, bool multilabel, bool post_softmax) {
  if (clip_logits.dim() != 2) throw ShapeError("clip predictions must be [n_clips, K]");
  if (!post_softmax) return clip_logits.mean(0);
  auto probs = multilabel ? torch::sigmoid(clip_logits) : torch::softmax(clip_logits, 1);
  return probs.mean(0);
}

namespace {

// Logits for each of the 10 offsets; identical offsets are evaluated once.
torch::Tensor offset_logits(UtilityModel& model, const Video& video, const ClipGeometry& geometry,
                            const ClipTransform& transform) {
  const auto offsets = equidistant_offsets(video.frames(), geometry.span());
  std::map<int, std::int64_t> unique;
  std::vector<torch::Tensor> clips;
  for (int o : offsets) {
    if (unique.count(o)) continue;
    unique[o] = static_cast<std::int64_t>(clips.size());
    clips.push_back(make_clip(video, o, geometry).frames());
  }
  auto batch = torch::stack(clips);
  if (transform) batch = transform(batch);
  auto logits = model.net->forward(batch);
  std::vector<torch::Tensor> rows;
  for (int o : offsets) rows.push_back(logits[unique[o]]);
  return torch::stack(rows);
}

}  // namespace

VideoPrediction video_top1(UtilityModel& model, const Video& video, int label, const ClipGeometry& geometry,
                           const ClipTransform& transform, bool post_softmax) {
  torch::NoGradGuard no_grad;
  VideoPrediction out;
  out.scores = average_predictions(offset_logits(model, video, geometry, transform), model.multilabel(), post_softmax);
  out.predicted = static_cast<int>(out.scores.argmax().item<std::int64_t>());
  out.hit = out.predicted == label;
  return out;
}

torch::Tensor video_scores(UtilityModel& model, const DatasetManifest& data, const std::vector<std::size_t>& samples,
                           const ClipGeometry& geometry, const ClipTransform& transform, bool post_softmax) {
  model.check_compatible(data.labels);
  torch::NoGradGuard no_grad;
  model.net->eval();
  std::vector<torch::Tensor> rows;
  for (auto i : samples) {
    const auto video = data.samples[i].decode();
    rows.push_back(
        average_predictions(offset_logits(model, *video, geometry, transform), model.multilabel(), post_softmax));
  }
  return torch::stack(rows);
}

void save_utility(const UtilityModel& model, const std::filesystem::path& path, nlohmann::json extra) {
  extra["label_fingerprint"] = model.labels.fingerprint();
  extra["action_names"] = model.labels.action_names;
  extra["action_multilabel"] = model.labels.action_is_multilabel;
  write_checkpoint(capture_checkpoint(Role::utility, model.net->arch(), *model.net, std::move(extra)), path);
}

UtilityModel load_utility(const std::filesystem::path& path, const LabelSpace& expected) {
  auto ckpt = read_checkpoint(path);
  if (ckpt.role != Role::utility && ckpt.role != Role::target) {
    throw Error(path.string() + " holds a " + to_string(ckpt.role) + " model, not a utility model");
  }
  const auto fp = ckpt.extra.value("label_fingerprint", std::string{});
  LabelSpace labels = expected;
  labels.action_names = ckpt.extra.value("action_names", std::vector<std::string>{});
  labels.action_is_multilabel = ckpt.extra.value("action_multilabel", false);
  if (labels.action_names != expected.action_names || labels.action_is_multilabel != expected.action_is_multilabel) {
    throw ManifestError("checkpoint " + path.string() + " was trained for action space " + fp +
                        ", manifest has " + expected.fingerprint());
  }
  UtilityModel model;
  model.labels = expected;
  model.net = VideoClassifier(VideoClassifierImpl::from_arch(ckpt.arch));
  load_state(ckpt, *model.net);
  return model;
}

}  // namespace vidpriv
