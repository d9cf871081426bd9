#pragma once

// Evaluation protocols: freeze an anonymization method, train fresh target
// models on its output and score them on transformed test data.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <torch/torch.h>

#include "json.hpp"
#include "vidpriv/anonymizer.hpp"
#include "vidpriv/baselines.hpp"
#include "vidpriv/metrics.hpp"
#include "vidpriv/networks.hpp"
#include "vidpriv/utility.hpp"

namespace vidpriv {

/// An anonymization method as seen by the target models: a per-clip
/// transform plus the frame size it produces.
class Method {
 public:
  enum class Kind { identity, downsample, obfuscate, learned };

  /// "raw", "identity", "downsample-2x", "downsample-4x", "obf-blacken",
  /// "obf-strongblur", "obf-weakblur" or "learned" (needs a checkpoint).
  static Method parse(const std::string& name, const std::optional<std::filesystem::path>& anonymizer = std::nullopt);
  static Method identity(std::string name = "raw");
  static Method learned(std::string name, AnonymizerNet net, std::string checkpoint_sha256 = {});

  const std::string& name() const { return name_; }
  Kind kind() const { return kind_; }
  int output_side(int side) const { return kind_ == Kind::downsample ? side / factor_ : side; }

  /// Transforms frames [T, 3, side, side] of `sample` whose source frame
  /// indices are `indices`; the source size maps boxes into the clip.
  torch::Tensor apply(const torch::Tensor& frames, const Sample& sample, const std::vector<int>& indices,
                      int src_width, int src_height) const;

  /// Identity of the frozen anonymizer (empty for non-learned methods).
  const std::string& checkpoint_sha256() const { return checkpoint_sha256_; }
  std::string parameter_checksum() const;

 private:
  std::string name_;
  Kind kind_ = Kind::identity;
  int factor_ = 1;
  ObfuscationSpec obfuscation_;
  AnonymizerNet net_{nullptr};
  std::string checkpoint_sha256_;
};

/// Transformed clips and frames of one manifest under one method, cached per
/// (sample, start) because the method is frozen.
class MethodView {
 public:
  MethodView(const Method& method, const DatasetManifest& data, ClipGeometry geometry);

  /// [T, 3, s, s] with s = method.output_side(geometry.side).
  torch::Tensor clip(std::size_t sample, int start);
  /// [3, s, s] for one source frame.
  torch::Tensor frame(std::size_t sample, int frame_index);

  const DatasetManifest& data() const { return data_; }
  const ClipGeometry& geometry() const { return geometry_; }
  const Method& method() const { return method_; }
  int video_length(std::size_t sample) const;

 private:
  torch::Tensor transformed(std::size_t sample, int start, int n_frames, int skip);

  const Method& method_;
  const DatasetManifest& data_;
  ClipGeometry geometry_;
  std::map<std::tuple<std::size_t, int, int, int>, torch::Tensor> cache_;
};

struct TargetConfig {
  std::vector<std::string> utility_presets{"toy_c3d"};
  std::vector<std::string> privacy_presets{"small"};
  int epochs_utility = 150;
  int epochs_privacy = 150;
  int batch_size = 8;
  double lr = 1e-3;
  ClipGeometry geometry;
  AugmentStrength augment = AugmentConfig{}.supervised;
  int eval_clips = 10;             ///< equidistant clips / frames per test video
  bool per_video_privacy = true;   ///< false: score every frame separately
  bool post_softmax = true;
  std::uint64_t seed = 0;

  static TargetConfig toy();
  nlohmann::json to_json() const;
  static TargetConfig from_json(const nlohmann::json& j, TargetConfig base);
  static TargetConfig from_json(const nlohmann::json& j);
};

/// Per-frame multi-label privacy classifier f'_B.
struct PrivacyModel {
  FrameClassifier net{nullptr};
  LabelSpace labels;
};

void save_privacy(const PrivacyModel& model, const std::filesystem::path& path,
                  nlohmann::json extra = nlohmann::json::object());
PrivacyModel load_privacy(const std::filesystem::path& path, const LabelSpace& expected);

/// Trains f'_T from scratch (or from `warm_start`) on the method's output.
/// Throws if the method's anonymizer parameters change during training.
UtilityModel train_target_utility(MethodView& train, const std::vector<std::size_t>& samples,
                                  const Encoder3dSpec& preset, const TargetConfig& cfg,
                                  const std::optional<std::filesystem::path>& warm_start = std::nullopt);

/// Trains f'_B with one uniformly drawn frame per video per epoch and BCE on
/// the privacy labels. Throws when a sample has no privacy labels.
PrivacyModel train_target_privacy(MethodView& train, const std::vector<std::size_t>& samples,
                                  const Encoder2dSpec& preset, const TargetConfig& cfg);

struct UtilityScores {
  double value = 0.0;    ///< top-1 (single-label) or cMAP (multi-label)
  std::string metric;
  Matrix scores;
};
UtilityScores evaluate_utility(UtilityModel& model, MethodView& test, const TargetConfig& cfg);

struct PrivacyScores {
  double cmap = 0.0;
  double f1 = 0.0;
  std::optional<double> top1;  ///< when every sample has exactly one positive
  Matrix scores;
  Matrix labels;
};
PrivacyScores evaluate_privacy(PrivacyModel& model, MethodView& test, const TargetConfig& cfg);

/// Accuracy of always predicting the most frequent privacy class.
double privacy_chance(const DatasetManifest& data);

enum class ProtocolKind { same_dataset, cross_dataset, novel_attribute, frozen_privacy, warmstart_utility };
std::string to_string(ProtocolKind kind);
ProtocolKind protocol_kind_from_string(const std::string& s);

struct ProtocolSpec {
  ProtocolKind kind = ProtocolKind::same_dataset;
  std::vector<std::string> methods{"raw"};
  std::optional<std::filesystem::path> anonymizer;
  std::filesystem::path action_train;
  std::filesystem::path action_test;
  std::optional<std::filesystem::path> privacy_train;  ///< unset: the action manifests
  std::optional<std::filesystem::path> privacy_test;
  std::optional<std::filesystem::path> privacy_checkpoint;  ///< frozen_privacy; unset: trained on raw data
  std::optional<std::filesystem::path> warm_start;          ///< warmstart_utility
  TargetConfig target;

  nlohmann::json to_json() const;
  /// Relative paths resolve against base_dir.
  static ProtocolSpec from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

struct ProtocolData {
  DatasetManifest action_train;
  DatasetManifest action_test;
  DatasetManifest privacy_train;
  DatasetManifest privacy_test;
  /// Label space the anonymizer was trained on (novel_attribute check).
  std::optional<LabelSpace> anonymizer_labels;
};

ProtocolData load_protocol_data(const ProtocolSpec& spec);

/// Throws ConfigError when the data does not fit the protocol kind, e.g.
/// overlapping label spaces for novel_attribute.
void check_protocol(const ProtocolSpec& spec, const ProtocolData& data, const std::vector<Method>& methods);

/// One metrics row per method and target preset pair. Learned rows carry the
/// anonymizer checkpoint hash in extra.
std::vector<MethodMetrics> run_protocol(const ProtocolSpec& spec, const ProtocolData& data,
                                        const std::vector<Method>& methods);
std::vector<MethodMetrics> run_protocol(const ProtocolSpec& spec);

}  // namespace vidpriv
