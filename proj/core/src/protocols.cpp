#include "vidpriv/protocols.hpp"

#include <algorithm>
#include <set>

#include "vidpriv/minimax.hpp"
#include "vidpriv/substrate.hpp"
#include "vidpriv/training.hpp"

namespace vidpriv {

namespace F = torch::nn::functional;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Methods

Method Method::identity(std::string name) {
  Method m;
  m.name_ = std::move(name);
  m.kind_ = Kind::identity;
  return m;
}

Method Method::learned(std::string name, AnonymizerNet net, std::string checkpoint_sha256) {
  Method m;
  m.name_ = std::move(name);
  m.kind_ = Kind::learned;
  m.net_ = std::move(net);
  set_frozen(*m.net_, true);
  m.net_->eval();
  m.checkpoint_sha256_ = std::move(checkpoint_sha256);
  return m;
}

Method Method::parse(const std::string& name, const std::optional<fs::path>& anonymizer) {
  if (name == "raw" || name == "identity") return identity(name);
  if (name == "downsample-2x" || name == "downsample-4x") {
    Method m;
    m.name_ = name;
    m.kind_ = Kind::downsample;
    m.factor_ = name == "downsample-2x" ? 2 : 4;
    return m;
  }
  if (name.rfind("obf-", 0) == 0) {
    Method m;
    m.name_ = name;
    m.kind_ = Kind::obfuscate;
    m.obfuscation_ = ObfuscationSpec::preset(obfuscation_mode_from_string(name.substr(4)));
    return m;
  }
  if (name == "learned") {
    if (!anonymizer) throw ConfigError("method 'learned' needs an anonymizer checkpoint");
    if (!fs::exists(*anonymizer)) throw ConfigError("anonymizer checkpoint " + anonymizer->string() + " not found");
    return learned(name, load_anonymizer(*anonymizer), file_sha256(*anonymizer));
  }
  throw ConfigError("unknown method '" + name + "'");
}

torch::Tensor Method::apply(const torch::Tensor& frames, const Sample& sample, const std::vector<int>& indices,
                            int src_width, int src_height) const {
  switch (kind_) {
    case Kind::identity:
      return frames;
    case Kind::downsample:
      return downsample(frames, factor_);
    case Kind::obfuscate: {
      const auto& boxes = sample.person_boxes();
      if (!boxes) return frames.clone();
      return obfuscate(frames, clip_boxes(*boxes, indices, src_width, src_height, static_cast<int>(frames.size(-1))),
                       obfuscation_);
    }
    case Kind::learned: {
      torch::NoGradGuard no_grad;
      return net_.ptr()->forward(frames);
    }
  }
  throw Error("unknown method kind");
}

std::string Method::parameter_checksum() const { return net_ ? vidpriv::parameter_checksum(*net_) : std::string{}; }

MethodView::MethodView(const Method& method, const DatasetManifest& data, ClipGeometry geometry)
    : method_(method), data_(data), geometry_(geometry) {}

int MethodView::video_length(std::size_t sample) const { return data_.samples.at(sample).decode()->frames(); }

torch::Tensor MethodView::transformed(std::size_t sample, int start, int n_frames, int skip) {
  const auto key = std::make_tuple(sample, start, n_frames, skip);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  const auto& s = data_.samples.at(sample);
  const auto video = s.decode();
  const auto indices = clip_frame_indices(video->frames(), start, n_frames, skip);
  auto frames = make_clip(*video, start, n_frames, skip, geometry_.side).frames();
  auto out = method_.apply(frames, s, indices, video->width(), video->height()).contiguous();
  cache_.emplace(key, out);
  return out;
}

torch::Tensor MethodView::clip(std::size_t sample, int start) {
  return transformed(sample, start, geometry_.n_frames, geometry_.skip);
}

torch::Tensor MethodView::frame(std::size_t sample, int frame_index) {
  return transformed(sample, frame_index, 1, 1)[0];
}

// ---------------------------------------------------------------------------
// Target configuration

TargetConfig TargetConfig::toy() {
  TargetConfig c;
  c.epochs_utility = 15;
  c.epochs_privacy = 15;
  c.batch_size = 16;
  c.geometry = {8, 1, 32};
  c.augment = AugmentStrength{};
  c.augment.gray_prob = 0.1;
  return c;
}

nlohmann::json TargetConfig::to_json() const {
  return {{"utility_presets", utility_presets},
          {"privacy_presets", privacy_presets},
          {"epochs_utility", epochs_utility},
          {"epochs_privacy", epochs_privacy},
          {"batch_size", batch_size},
          {"lr", lr},
          {"geometry", vidpriv::to_json(geometry)},
          {"augment", vidpriv::to_json(augment)},
          {"eval_clips", eval_clips},
          {"per_video_privacy", per_video_privacy},
          {"post_softmax", post_softmax},
          {"seed", seed}};
}

TargetConfig TargetConfig::from_json(const nlohmann::json& j) { return from_json(j, TargetConfig{}); }

TargetConfig TargetConfig::from_json(const nlohmann::json& j, TargetConfig c) {
  if (j.value("preset", std::string{}) == "toy") c = toy();
  if (j.contains("utility_presets")) c.utility_presets = j["utility_presets"].get<std::vector<std::string>>();
  if (j.contains("privacy_presets")) c.privacy_presets = j["privacy_presets"].get<std::vector<std::string>>();
  c.epochs_utility = j.value("epochs_utility", c.epochs_utility);
  c.epochs_privacy = j.value("epochs_privacy", c.epochs_privacy);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  if (j.contains("geometry")) c.geometry = geometry_from_json(j["geometry"], c.geometry);
  if (j.contains("augment")) c.augment = augment_strength_from_json(j["augment"], c.augment);
  c.eval_clips = j.value("eval_clips", c.eval_clips);
  c.per_video_privacy = j.value("per_video_privacy", c.per_video_privacy);
  c.post_softmax = j.value("post_softmax", c.post_softmax);
  c.seed = j.value("seed", c.seed);
  if (c.utility_presets.empty() || c.privacy_presets.empty()) throw ConfigError("target preset lists must not be empty");
  if (c.epochs_utility < 0 || c.epochs_privacy < 0 || c.batch_size < 1 || c.lr <= 0 || c.eval_clips < 1) {
    throw ConfigError("invalid target training budget");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Privacy model persistence

void save_privacy(const PrivacyModel& model, const fs::path& path, nlohmann::json extra) {
  extra["privacy_names"] = model.labels.privacy_names;
  write_checkpoint(capture_checkpoint(Role::target, model.net->arch(), *model.net, std::move(extra)), path);
}

PrivacyModel load_privacy(const fs::path& path, const LabelSpace& expected) {
  auto ckpt = read_checkpoint(path);
  const auto names = ckpt.extra.value("privacy_names", std::vector<std::string>{});
  if (names != expected.privacy_names) {
    throw ManifestError("privacy checkpoint " + path.string() + " was trained for other privacy classes");
  }
  PrivacyModel m;
  m.labels = expected;
  m.net = FrameClassifier(FrameClassifierImpl::from_arch(ckpt.arch));
  load_state(ckpt, *m.net);
  return m;
}

// ---------------------------------------------------------------------------
// Target training

namespace {

class AnonymizerWitness {
 public:
  explicit AnonymizerWitness(const Method& m) : method_(m), before_(m.parameter_checksum()) {}
  void verify() const {
    if (method_.parameter_checksum() != before_) {
      throw Error("anonymizer parameters of method '" + method_.name() + "' changed during target training");
    }
  }

 private:
  const Method& method_;
  std::string before_;
};

torch::Tensor privacy_targets(const DatasetManifest& data, const std::vector<std::size_t>& samples) {
  const auto k = static_cast<std::int64_t>(data.labels.num_privacy());
  auto t = torch::zeros({static_cast<std::int64_t>(samples.size()), k});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = data.samples[samples[i]];
    const auto& labels = s.privacy_labels();
    if (!labels) throw ManifestError("sample " + s.id() + " has no privacy labels");
    for (std::int64_t c = 0; c < k; ++c) t[static_cast<std::int64_t>(i)][c] = (*labels)[static_cast<std::size_t>(c)] ? 1.0 : 0.0;
  }
  return t;
}

std::vector<std::vector<std::size_t>> shuffled_batches(std::vector<std::size_t> order, int batch, Rng& rng) {
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch)) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + static_cast<std::size_t>(batch))));
  }
  return out;
}

Matrix to_matrix(const torch::Tensor& t) {
  auto c = t.to(torch::kFloat64).contiguous();
  Matrix m(static_cast<std::size_t>(c.size(0)), static_cast<std::size_t>(c.size(1)));
  std::copy(c.data_ptr<double>(), c.data_ptr<double>() + c.numel(), m.data.begin());
  return m;
}

std::vector<std::size_t> all_samples(const DatasetManifest& m) {
  std::vector<std::size_t> v(m.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = i;
  return v;
}

}  // namespace

UtilityModel train_target_utility(MethodView& train, const std::vector<std::size_t>& samples,
                                  const Encoder3dSpec& preset, const TargetConfig& cfg,
                                  const std::optional<fs::path>& warm_start) {
  if (samples.empty()) throw Error("train_target_utility: no samples");
  const auto& data = train.data();
  AnonymizerWitness witness(train.method());
  torch::manual_seed(cfg.seed);
  UtilityModel model = warm_start ? load_utility(*warm_start, data.labels) : UtilityModel(preset, data.labels);
  model.net->train();
  ScheduledAdam opt(model.net->parameters(), cfg.lr, 5, 0.01);
  Rng rng = make_rng(cfg.seed, 0x7A86E7);
  const int span = train.geometry().span();
  for (int epoch = 0; epoch < cfg.epochs_utility; ++epoch) {
    double sum = 0.0;
    int count = 0;
    for (const auto& batch : shuffled_batches(samples, cfg.batch_size, rng)) {
      std::vector<torch::Tensor> clips;
      for (auto i : batch) {
        const int slack = train.video_length(i) - span;
        clips.push_back(train.clip(i, slack > 0 ? uniform_int(rng, 0, slack) : 0));
      }
      auto x = augment_batch(torch::stack(clips), cfg.augment, rng);
      opt.optimizer->zero_grad();
      auto loss = utility_loss(model, x, action_targets(data, batch));
      loss.backward();
      opt.optimizer->step();
      sum += loss.item<double>();
      ++count;
    }
    opt.step_schedule(sum / std::max(count, 1));
  }
  witness.verify();
  model.net->eval();
  return model;
}

PrivacyModel train_target_privacy(MethodView& train, const std::vector<std::size_t>& samples,
                                  const Encoder2dSpec& preset, const TargetConfig& cfg) {
  if (samples.empty()) throw Error("train_target_privacy: no samples");
  const auto& data = train.data();
  if (data.labels.num_privacy() == 0) throw ManifestError("manifest has no privacy classes");
  for (auto i : samples) {
    if (!data.samples[i].has_privacy_labels()) {
      throw ManifestError("sample " + data.samples[i].id() + " has no privacy labels");
    }
  }
  AnonymizerWitness witness(train.method());
  torch::manual_seed(cfg.seed);
  PrivacyModel model{FrameClassifier(preset, static_cast<int>(data.labels.num_privacy())), data.labels};
  model.net->train();
  ScheduledAdam opt(model.net->parameters(), cfg.lr, 5, 0.01);
  Rng rng = make_rng(cfg.seed, 0x9A1F);
  for (int epoch = 0; epoch < cfg.epochs_privacy; ++epoch) {
    double sum = 0.0;
    int count = 0;
    for (const auto& batch : shuffled_batches(samples, cfg.batch_size, rng)) {
      std::vector<torch::Tensor> frames;
      for (auto i : batch) {
        const int f = uniform_int(rng, 0, train.video_length(i) - 1);
        frames.push_back(augment_frames(train.frame(i, f).unsqueeze(0), cfg.augment, rng).squeeze(0));
      }
      opt.optimizer->zero_grad();
      auto loss = F::binary_cross_entropy_with_logits(model.net->forward(torch::stack(frames)),
                                                      privacy_targets(data, batch));
      loss.backward();
      opt.optimizer->step();
      sum += loss.item<double>();
      ++count;
    }
    opt.step_schedule(sum / std::max(count, 1));
  }
  witness.verify();
  model.net->eval();
  return model;
}

UtilityScores evaluate_utility(UtilityModel& model, MethodView& test, const TargetConfig& cfg) {
  const auto& data = test.data();
  model.check_compatible(data.labels);
  torch::NoGradGuard no_grad;
  model.net->eval();
  const auto& g = test.geometry();
  std::vector<torch::Tensor> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto offsets = equidistant_offsets(test.video_length(i), g.span(), cfg.eval_clips);
    std::vector<torch::Tensor> clips;
    std::vector<int> unique;
    std::vector<std::int64_t> slot;
    for (int o : offsets) {
      auto it = std::find(unique.begin(), unique.end(), o);
      if (it == unique.end()) {
        slot.push_back(static_cast<std::int64_t>(unique.size()));
        unique.push_back(o);
        clips.push_back(test.clip(i, o));
      } else {
        slot.push_back(it - unique.begin());
      }
    }
    auto logits = model.net->forward(torch::stack(clips));
    auto per_clip = logits.index_select(0, torch::tensor(slot, torch::kInt64));
    rows.push_back(average_predictions(per_clip, model.multilabel(), cfg.post_softmax));
  }
  UtilityScores out;
  out.scores = to_matrix(torch::stack(rows));
  if (model.multilabel()) {
    out.metric = "cmap";
    out.value = cmap(out.scores, to_matrix(action_targets(data, all_samples(data))));
  } else {
    out.metric = "top1";
    std::vector<int> labels;
    for (const auto& s : data.samples) labels.push_back(s.action_index());
    out.value = top1(out.scores, labels);
  }
  return out;
}

PrivacyScores evaluate_privacy(PrivacyModel& model, MethodView& test, const TargetConfig& cfg) {
  const auto& data = test.data();
  if (model.labels.privacy_names != data.labels.privacy_names) {
    throw ManifestError("privacy model classes do not match the manifest");
  }
  torch::NoGradGuard no_grad;
  model.net->eval();
  std::vector<torch::Tensor> score_rows;
  std::vector<std::size_t> label_rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto offsets = equidistant_offsets(test.video_length(i), 1, cfg.eval_clips);
    std::vector<int> unique(offsets.begin(), offsets.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    std::vector<torch::Tensor> frames;
    for (int o : unique) frames.push_back(test.frame(i, o));
    auto probs = torch::sigmoid(model.net->forward(torch::stack(frames)));
    if (cfg.per_video_privacy) {
      // Weight each distinct frame by how often its offset occurs.
      auto weights = torch::zeros({static_cast<std::int64_t>(unique.size())});
      for (int o : offsets) {
        weights[std::find(unique.begin(), unique.end(), o) - unique.begin()] += 1.0 / offsets.size();
      }
      score_rows.push_back((probs * weights.unsqueeze(1)).sum(0));
      label_rows.push_back(i);
    } else {
      for (std::int64_t r = 0; r < probs.size(0); ++r) {
        score_rows.push_back(probs[r]);
        label_rows.push_back(i);
      }
    }
  }
  PrivacyScores out;
  out.scores = to_matrix(torch::stack(score_rows));
  out.labels = to_matrix(privacy_targets(data, label_rows));
  out.cmap = cmap(out.scores, out.labels);
  out.f1 = f1_mean(out.scores, out.labels);
  std::vector<int> single;
  for (std::size_t r = 0; r < out.labels.rows; ++r) {
    int positive = -1, count = 0;
    for (std::size_t c = 0; c < out.labels.cols; ++c) {
      if (out.labels(r, c) != 0.0) {
        positive = static_cast<int>(c);
        ++count;
      }
    }
    if (count != 1) break;
    single.push_back(positive);
  }
  if (single.size() == out.labels.rows) out.top1 = top1(out.scores, single);
  return out;
}

double privacy_chance(const DatasetManifest& data) {
  std::vector<std::size_t> counts(data.labels.num_privacy(), 0);
  std::size_t total = 0;
  for (const auto& s : data.samples) {
    const auto& labels = s.privacy_labels();
    if (!labels) continue;
    auto it = std::find(labels->begin(), labels->end(), 1);
    if (it == labels->end()) continue;
    ++counts[static_cast<std::size_t>(it - labels->begin())];
    ++total;
  }
  if (total == 0) throw ManifestError("no privacy labels to compute chance from");
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Protocols

std::string to_string(ProtocolKind kind) {
  switch (kind) {
    case ProtocolKind::same_dataset: return "same_dataset";
    case ProtocolKind::cross_dataset: return "cross_dataset";
    case ProtocolKind::novel_attribute: return "novel_attribute";
    case ProtocolKind::frozen_privacy: return "frozen_privacy";
    case ProtocolKind::warmstart_utility: return "warmstart_utility";
  }
  return "?";
}

ProtocolKind protocol_kind_from_string(const std::string& s) {
  for (auto k : {ProtocolKind::same_dataset, ProtocolKind::cross_dataset, ProtocolKind::novel_attribute,
                 ProtocolKind::frozen_privacy, ProtocolKind::warmstart_utility}) {
    if (to_string(k) == s) return k;
  }
  throw ConfigError("unknown protocol kind '" + s + "'");
}

namespace {

nlohmann::json opt_path(const std::optional<fs::path>& p) { return p ? nlohmann::json(p->string()) : nlohmann::json(nullptr); }

fs::path resolve(const fs::path& p, const fs::path& base) { return p.is_absolute() || base.empty() ? p : base / p; }

std::optional<fs::path> opt_resolve(const nlohmann::json& j, const char* key, const fs::path& base) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return resolve(j[key].get<std::string>(), base);
}

}  // namespace

nlohmann::json ProtocolSpec::to_json() const {
  return {{"kind", to_string(kind)},
          {"methods", methods},
          {"anonymizer", opt_path(anonymizer)},
          {"action_train", action_train.string()},
          {"action_test", action_test.string()},
          {"privacy_train", opt_path(privacy_train)},
          {"privacy_test", opt_path(privacy_test)},
          {"privacy_checkpoint", opt_path(privacy_checkpoint)},
          {"warm_start", opt_path(warm_start)},
          {"target", target.to_json()}};
}

ProtocolSpec ProtocolSpec::from_json(const nlohmann::json& j, const fs::path& base) {
  ProtocolSpec s;
  s.kind = protocol_kind_from_string(j.value("kind", std::string("same_dataset")));
  if (j.contains("methods")) s.methods = j["methods"].get<std::vector<std::string>>();
  s.anonymizer = opt_resolve(j, "anonymizer", base);
  if (!j.contains("action_train") || !j.contains("action_test")) {
    throw ConfigError("protocol needs action_train and action_test manifests");
  }
  s.action_train = resolve(j["action_train"].get<std::string>(), base);
  s.action_test = resolve(j["action_test"].get<std::string>(), base);
  s.privacy_train = opt_resolve(j, "privacy_train", base);
  s.privacy_test = opt_resolve(j, "privacy_test", base);
  s.privacy_checkpoint = opt_resolve(j, "privacy_checkpoint", base);
  s.warm_start = opt_resolve(j, "warm_start", base);
  if (j.contains("target")) s.target = TargetConfig::from_json(j["target"]);
  return s;
}

ProtocolData load_protocol_data(const ProtocolSpec& spec) {
  ProtocolData d;
  d.action_train = load_manifest(spec.action_train);
  d.action_test = load_manifest(spec.action_test);
  d.privacy_train = spec.privacy_train ? load_manifest(*spec.privacy_train) : d.action_train;
  d.privacy_test = spec.privacy_test ? load_manifest(*spec.privacy_test) : d.action_test;
  if (spec.anonymizer && fs::exists(*spec.anonymizer)) {
    const auto extra = read_checkpoint(*spec.anonymizer).extra;
    if (extra.contains("action_names")) {
      LabelSpace l;
      l.action_names = extra["action_names"].get<std::vector<std::string>>();
      l.privacy_names = extra.value("privacy_names", std::vector<std::string>{});
      l.action_is_multilabel = extra.value("action_multilabel", false);
      d.anonymizer_labels = l;
    }
  }
  return d;
}

void check_protocol(const ProtocolSpec& spec, const ProtocolData& data, const std::vector<Method>& methods) {
  if (data.action_train.labels.action_names != data.action_test.labels.action_names ||
      data.action_train.labels.action_is_multilabel != data.action_test.labels.action_is_multilabel) {
    throw ConfigError("action train and test manifests use different label spaces");
  }
  if (data.privacy_train.labels.privacy_names != data.privacy_test.labels.privacy_names) {
    throw ConfigError("privacy train and test manifests use different label spaces");
  }
  if (data.privacy_test.labels.num_privacy() == 0) throw ConfigError("privacy test manifest has no privacy classes");
  switch (spec.kind) {
    case ProtocolKind::same_dataset:
      if ((spec.privacy_train && *spec.privacy_train != spec.action_train) ||
          (spec.privacy_test && *spec.privacy_test != spec.action_test)) {
        throw ConfigError("same_dataset uses one dataset for both tasks; use cross_dataset for separate manifests");
      }
      break;
    case ProtocolKind::cross_dataset:
      if (!spec.privacy_train || !spec.privacy_test) throw ConfigError("cross_dataset needs privacy manifests");
      break;
    case ProtocolKind::novel_attribute: {
      if (!data.anonymizer_labels) {
        throw ConfigError("novel_attribute needs the label space the anonymizer was trained on");
      }
      auto overlap = [](const std::vector<std::string>& a, const std::vector<std::string>& b) {
        std::set<std::string> sa(a.begin(), a.end());
        for (const auto& n : b) {
          if (sa.count(n)) return n;
        }
        return std::string{};
      };
      if (auto n = overlap(data.anonymizer_labels->action_names, data.action_train.labels.action_names); !n.empty()) {
        throw ConfigError("novel_attribute: action class '" + n + "' was seen while training the anonymizer");
      }
      if (auto n = overlap(data.anonymizer_labels->privacy_names, data.privacy_train.labels.privacy_names); !n.empty()) {
        throw ConfigError("novel_attribute: privacy class '" + n + "' was seen while training the anonymizer");
      }
      break;
    }
    case ProtocolKind::frozen_privacy:
      break;
    case ProtocolKind::warmstart_utility:
      if (!spec.warm_start) throw ConfigError("warmstart_utility needs a warm_start checkpoint");
      break;
  }
  if (methods.empty()) throw ConfigError("protocol needs at least one method");
}

std::vector<MethodMetrics> run_protocol(const ProtocolSpec& spec, const ProtocolData& data,
                                        const std::vector<Method>& methods) {
  check_protocol(spec, data, methods);
  const auto& cfg = spec.target;
  std::vector<MethodMetrics> rows;

  std::optional<PrivacyModel> frozen;
  if (spec.kind == ProtocolKind::frozen_privacy) {
    if (spec.privacy_checkpoint) {
      frozen = load_privacy(*spec.privacy_checkpoint, data.privacy_test.labels);
    } else {
      const Method raw = Method::identity();
      MethodView view(raw, data.privacy_train, cfg.geometry);
      frozen = train_target_privacy(view, all_samples(data.privacy_train),
                                    Encoder2dSpec::preset(cfg.privacy_presets.front()), cfg);
    }
  }

  const bool tag_presets = cfg.utility_presets.size() > 1 || cfg.privacy_presets.size() > 1;
  for (const auto& method : methods) {
    MethodView ut_train(method, data.action_train, cfg.geometry);
    MethodView ut_test(method, data.action_test, cfg.geometry);
    MethodView pv_train(method, data.privacy_train, cfg.geometry);
    MethodView pv_test(method, data.privacy_test, cfg.geometry);

    std::vector<std::pair<std::string, UtilityScores>> utility;
    for (const auto& preset : cfg.utility_presets) {
      auto model = train_target_utility(ut_train, all_samples(data.action_train), Encoder3dSpec::preset(preset), cfg,
                                        spec.kind == ProtocolKind::warmstart_utility ? spec.warm_start : std::nullopt);
      utility.emplace_back(preset, evaluate_utility(model, ut_test, cfg));
    }
    std::vector<std::pair<std::string, PrivacyScores>> privacy;
    if (frozen) {
      privacy.emplace_back("frozen", evaluate_privacy(*frozen, pv_test, cfg));
    } else {
      for (const auto& preset : cfg.privacy_presets) {
        auto model = train_target_privacy(pv_train, all_samples(data.privacy_train), Encoder2dSpec::preset(preset), cfg);
        privacy.emplace_back(preset, evaluate_privacy(model, pv_test, cfg));
      }
    }

    for (const auto& [up, u] : utility) {
      for (const auto& [pp, p] : privacy) {
        MethodMetrics m;
        m.method = tag_presets ? method.name() + "[" + up + "," + pp + "]" : method.name();
        m.utility_metric = u.metric;
        m.utility = u.value;
        m.privacy_cmap = p.cmap;
        m.privacy_f1 = p.f1;
        m.privacy_top1 = p.top1;
        m.extra = {{"protocol", to_string(spec.kind)}, {"utility_preset", up}, {"privacy_preset", pp}};
        if (method.kind() == Method::Kind::learned) {
          m.extra["anonymizer_sha256"] = method.checkpoint_sha256();
          m.extra["anonymizer_parameters"] = method.parameter_checksum();
        }
        rows.push_back(std::move(m));
      }
    }
  }
  return rows;
}

std::vector<MethodMetrics> run_protocol(const ProtocolSpec& spec) {
  const auto data = load_protocol_data(spec);
  std::vector<Method> methods;
  for (const auto& name : spec.methods) methods.push_back(Method::parse(name, spec.anonymizer));
  return run_protocol(spec, data, methods);
}

}  // namespace vidpriv
