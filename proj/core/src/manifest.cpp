#include "vidpriv/manifest.hpp"

#include <atomic>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "vidpriv/substrate.hpp"

namespace vidpriv {

namespace {

std::atomic<std::uint64_t> g_privacy_reads{0};

using nlohmann::json;

json boxes_to_json(const std::vector<FrameBoxes>& boxes) {
  auto out = json::array();
  for (const auto& frame : boxes) {
    auto f = json::array();
    for (const auto& b : frame) f.push_back({b.x0, b.y0, b.x1, b.y1});
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<FrameBoxes> boxes_from_json(const json& j, const std::string& id) {
  std::vector<FrameBoxes> out;
  for (const auto& frame : j) {
    FrameBoxes fb;
    for (const auto& b : frame) {
      if (!b.is_array() || b.size() != 4) throw ManifestError("sample '" + id + "': each box must be [x0,y0,x1,y1]");
      fb.push_back({b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()});
    }
    out.push_back(std::move(fb));
  }
  return out;
}

}  // namespace

namespace audit {
std::uint64_t privacy_label_reads() { return g_privacy_reads.load(); }
void reset_privacy_label_reads() { g_privacy_reads.store(0); }
}  // namespace audit

void LabelSpace::validate() const {
  auto check = [](const std::vector<std::string>& names, const char* what) {
    std::set<std::string> seen;
    for (const auto& n : names) {
      if (n.empty()) throw ManifestError(std::string(what) + " names must be non-empty");
      if (!seen.insert(n).second) throw ManifestError(std::string("duplicate ") + what + " name '" + n + "'");
    }
  };
  check(action_names, "action");
  check(privacy_names, "privacy");
}

std::string LabelSpace::fingerprint() const {
  std::ostringstream s;
  s << (action_is_multilabel ? "M" : "S") << '\x1f';
  for (const auto& n : action_names) s << n << '\x1f';
  s << '\x1e';
  for (const auto& n : privacy_names) s << n << '\x1f';
  const auto text = s.str();
  return sha256_hex(text.data(), text.size()).substr(0, 16);
}

Sample::Sample(std::string id, std::string path, ActionLabel action, std::optional<BinaryVector> privacy,
               std::optional<std::vector<FrameBoxes>> boxes)
    : id_(std::move(id)), path_(std::move(path)), action_(std::move(action)), privacy_(std::move(privacy)),
      boxes_(std::move(boxes)) {}

int Sample::action_index() const {
  if (const int* idx = std::get_if<int>(&action_)) return *idx;
  throw Error("sample '" + id_ + "' carries a multi-label action vector");
}

const std::optional<BinaryVector>& Sample::privacy_labels() const {
  g_privacy_reads.fetch_add(1, std::memory_order_relaxed);
  return privacy_;
}

std::shared_ptr<const Video> Sample::decode() const {
  if (video_) return video_;
  return std::make_shared<const Video>(read_video(path_));
}

void DatasetManifest::validate() const {
  labels.validate();
  std::set<std::string> ids;
  for (const auto& s : samples) {
    if (!ids.insert(s.id()).second) throw ManifestError("duplicate sample id '" + s.id() + "'");
    if (labels.action_is_multilabel) {
      const auto* vec = std::get_if<BinaryVector>(&s.action());
      if (vec == nullptr) throw ManifestError("sample '" + s.id() + "': multi-label space needs an action vector");
      if (vec->size() != labels.num_actions()) {
        throw ManifestError("sample '" + s.id() + "': action vector has length " + std::to_string(vec->size()) +
                            ", label space has " + std::to_string(labels.num_actions()));
      }
    } else {
      const auto* idx = std::get_if<int>(&s.action());
      if (idx == nullptr) throw ManifestError("sample '" + s.id() + "': single-label space needs an action index");
      if (*idx < 0 || static_cast<std::size_t>(*idx) >= labels.num_actions()) {
        throw ManifestError("sample '" + s.id() + "': action index " + std::to_string(*idx) + " out of range");
      }
    }
    if (s.has_privacy_labels() && s.privacy_length() != labels.num_privacy()) {
      throw ManifestError("sample '" + s.id() + "': privacy vector has length " + std::to_string(s.privacy_length()) +
                          ", label space has " + std::to_string(labels.num_privacy()));
    }
    if (s.person_boxes() && s.inline_video()) {
      const auto& v = *s.inline_video();
      for (const auto& frame : *s.person_boxes()) {
        for (const auto& b : frame) {
          if (!b.within(v.width(), v.height())) throw ManifestError("sample '" + s.id() + "': box outside frame");
        }
      }
    }
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path, bool check_sources) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  const auto base = path.parent_path();

  DatasetManifest m;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ManifestError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!have_header) {
        if (rec.value("format", "") != "vidpriv-manifest") {
          throw ManifestError(path.string() + ": first line must be the manifest header");
        }
        m.split = rec.value("split", "train");
        m.labels.action_names = rec.at("action_names").get<std::vector<std::string>>();
        m.labels.privacy_names = rec.value("privacy_names", std::vector<std::string>{});
        m.labels.action_is_multilabel = rec.value("action_multilabel", false);
        have_header = true;
        continue;
      }
      const auto id = rec.at("id").get<std::string>();
      auto src = std::filesystem::path(rec.at("path").get<std::string>());
      if (src.is_relative()) src = base / src;
      if (check_sources && !std::filesystem::exists(src)) {
        throw ManifestError("sample '" + id + "': clip source " + src.string() + " does not exist");
      }
      ActionLabel action = rec.at("action").is_array() ? ActionLabel(rec["action"].get<BinaryVector>())
                                                       : ActionLabel(rec["action"].get<int>());
      std::optional<BinaryVector> privacy;
      if (rec.contains("privacy") && !rec["privacy"].is_null()) privacy = rec["privacy"].get<BinaryVector>();
      std::optional<std::vector<FrameBoxes>> boxes;
      if (rec.contains("boxes") && !rec["boxes"].is_null()) boxes = boxes_from_json(rec["boxes"], id);
      m.samples.emplace_back(id, src.string(), std::move(action), std::move(privacy), std::move(boxes));
    } catch (const json::exception& e) {
      throw ManifestError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw ManifestError(path.string() + ": empty manifest (no header line)");
  m.validate();
  return m;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ManifestError("cannot write manifest " + path.string());
  json header = {{"format", "vidpriv-manifest"},
                 {"version", 1},
                 {"split", m.split},
                 {"action_names", m.labels.action_names},
                 {"privacy_names", m.labels.privacy_names},
                 {"action_multilabel", m.labels.action_is_multilabel}};
  out << header.dump() << '\n';
  for (const auto& s : m.samples) {
    json rec;
    rec["id"] = s.id();
    rec["path"] = s.path();
    if (const int* idx = std::get_if<int>(&s.action())) {
      rec["action"] = *idx;
    } else {
      rec["action"] = std::get<BinaryVector>(s.action());
    }
    const auto& privacy = s.privacy_labels();
    rec["privacy"] = privacy ? json(*privacy) : json(nullptr);
    rec["boxes"] = s.person_boxes() ? boxes_to_json(*s.person_boxes()) : json(nullptr);
    out << rec.dump() << '\n';
  }
  if (!out) throw ManifestError("short write on " + path.string());
}

void preload(DatasetManifest& manifest) {
  for (auto& s : manifest.samples) {
    if (!s.inline_video()) s.attach_video(std::make_shared<const Video>(read_video(s.path())));
  }
}

std::filesystem::path write_dataset(const DatasetManifest& manifest, const std::filesystem::path& dir) {
  DatasetManifest out;
  out.split = manifest.split;
  out.labels = manifest.labels;
  std::filesystem::create_directories(dir / "clips");
  for (const auto& s : manifest.samples) {
    const auto rel = std::filesystem::path("clips") / (s.id() + ".vraw");
    write_vraw(*s.decode(), dir / rel);
    out.samples.emplace_back(s.id(), rel.string(), s.action(), s.privacy_labels(), s.person_boxes());
  }
  const auto path = dir / (manifest.split + ".jsonl");
  save_manifest(out, path);
  return path;
}

}  // namespace vidpriv
