#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "vidpriv/common.hpp"
#include "vidpriv/video.hpp"

namespace vidpriv {

struct LabelSpace {
  std::vector<std::string> action_names;
  std::vector<std::string> privacy_names;
  bool action_is_multilabel = false;

  std::size_t num_actions() const { return action_names.size(); }
  std::size_t num_privacy() const { return privacy_names.size(); }

  /// Throws ManifestError on empty or duplicated names.
  void validate() const;

  /// Stable hash of the ordered names and the multilabel flag. Utility
  /// checkpoints carry it so they refuse mismatched manifests.
  std::string fingerprint() const;

  friend bool operator==(const LabelSpace&, const LabelSpace&) = default;
};

using BinaryVector = std::vector<std::uint8_t>;

/// Either one class index or a multi-hot vector over the action classes.
using ActionLabel = std::variant<int, BinaryVector>;

namespace audit {
/// Number of privacy-label reads since the last reset. Training code that must
/// stay label-free can be checked against this counter.
std::uint64_t privacy_label_reads();
void reset_privacy_label_reads();
}  // namespace audit

class Sample {
 public:
  Sample() = default;
  Sample(std::string id, std::string path, ActionLabel action, std::optional<BinaryVector> privacy = std::nullopt,
         std::optional<std::vector<FrameBoxes>> boxes = std::nullopt);

  const std::string& id() const { return id_; }
  const std::string& path() const { return path_; }
  const ActionLabel& action() const { return action_; }

  /// Single-label class index; throws for multi-label samples.
  int action_index() const;

  bool has_privacy_labels() const { return privacy_.has_value(); }
  /// Length of the privacy vector (0 when absent). Not counted as a read.
  std::size_t privacy_length() const { return privacy_ ? privacy_->size() : 0; }
  /// Audited accessor: every call counts as one privacy-label read.
  const std::optional<BinaryVector>& privacy_labels() const;

  const std::optional<std::vector<FrameBoxes>>& person_boxes() const { return boxes_; }

  /// Decoded frames held in memory (synthetic data or after preload()).
  const std::shared_ptr<const Video>& inline_video() const { return video_; }
  void attach_video(std::shared_ptr<const Video> video) { video_ = std::move(video); }

  /// Returns the in-memory video when present, otherwise decodes path().
  std::shared_ptr<const Video> decode() const;

 private:
  std::string id_;
  std::string path_;
  ActionLabel action_ = 0;
  std::optional<BinaryVector> privacy_;
  std::optional<std::vector<FrameBoxes>> boxes_;
  std::shared_ptr<const Video> video_;
};

struct DatasetManifest {
  std::string split = "train";
  LabelSpace labels;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  /// Checks label lengths, index ranges and box bounds (for inline videos).
  /// Errors name the offending sample id.
  void validate() const;
};

/// Manifest file format (JSON Lines). The first line is a header:
///   {"format":"vidpriv-manifest","version":1,"split":"train",
///    "action_names":[...],"privacy_names":[...],"action_multilabel":false}
/// followed by one record per sample:
///   {"id":"s0","path":"clips/s0.vraw","action":2,
///    "privacy":[0,1,0] | null,"boxes":[[[x0,y0,x1,y1],...], ...] | null}
/// "action" is an integer for single-label spaces and a 0/1 list otherwise.
/// Relative paths resolve against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path, bool check_sources = true);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Decodes every sample into memory.
void preload(DatasetManifest& manifest);

/// Writes each in-memory video as <dir>/clips/<id>.vraw and a manifest at
/// <dir>/<split>.jsonl that references them. Returns the manifest path.
std::filesystem::path write_dataset(const DatasetManifest& manifest, const std::filesystem::path& dir);

}  // namespace vidpriv
