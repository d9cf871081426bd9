#include "vidpriv/config.hpp"

#include <cmath>

#include "vidpriv/common.hpp"

namespace vidpriv {

using nlohmann::json;

std::string to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::unconstrained: return "unconstrained";
    case SamplerKind::min_gap: return "min_gap";
    case SamplerKind::max_gap: return "max_gap";
  }
  return "unknown";
}

std::string to_string(SslObjective objective) {
  switch (objective) {
    case SslObjective::ntxent: return "ntxent";
    case SslObjective::ntxent_clip: return "ntxent_clip";
    case SslObjective::momentum_contrast: return "momentum_contrast";
    case SslObjective::rotnet: return "rotnet";
  }
  return "unknown";
}

SamplerKind sampler_kind_from_string(const std::string& s) {
  if (s == "unconstrained") return SamplerKind::unconstrained;
  if (s == "min_gap") return SamplerKind::min_gap;
  if (s == "max_gap") return SamplerKind::max_gap;
  throw ConfigError("unknown sampler kind '" + s + "'");
}

SslObjective ssl_objective_from_string(const std::string& s) {
  if (s == "ntxent") return SslObjective::ntxent;
  if (s == "ntxent_clip") return SslObjective::ntxent_clip;
  if (s == "momentum_contrast" || s == "moco") return SslObjective::momentum_contrast;
  if (s == "rotnet") return SslObjective::rotnet;
  throw ConfigError("unknown SSL objective '" + s + "'");
}

AugmentConfig AugmentConfig::toy() {
  AugmentConfig c;
  c.supervised = {0.85, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  c.ssl = {0.5, 0.5, 0.2, 0.8, 0.8, 0.8, 0.8, 0.2, 0.5, 0.25};
  return c;
}

AnonymizerArch AnonymizerArch::preset(const std::string& name) {
  if (name == "default") return {4, 32};
  if (name == "toy") return {2, 8};
  if (name == "tiny") return {1, 2};
  throw ConfigError("unknown anonymizer preset '" + name + "'");
}

json AnonymizerArch::to_json() const { return {{"type", "unet"}, {"depth", depth}, {"base_width", base_width}}; }

AnonymizerArch AnonymizerArch::from_json(const json& j) {
  if (j.is_string()) return preset(j.get<std::string>());
  AnonymizerArch a;
  a.depth = j.value("depth", a.depth);
  a.base_width = j.value("base_width", a.base_width);
  if (a.depth < 1 || a.base_width < 1) throw ConfigError("anonymizer depth and width must be positive");
  return a;
}

json to_json(const SamplerStrategy& s) { return {{"kind", to_string(s.kind)}, {"gap", s.gap}}; }

SamplerStrategy sampler_from_json(const json& j) {
  SamplerStrategy s;
  s.kind = sampler_kind_from_string(j.value("kind", std::string("unconstrained")));
  s.gap = j.value("gap", 1);
  if (s.kind != SamplerKind::unconstrained && s.gap < 1) throw ConfigError("sampler gap must be >= 1");
  return s;
}

json to_json(const AugmentStrength& a) {
  return {{"crop_min_scale", a.crop_min_scale}, {"flip_prob", a.flip_prob},     {"gray_prob", a.gray_prob},
          {"jitter_prob", a.jitter_prob},       {"brightness", a.brightness},   {"contrast", a.contrast},
          {"saturation", a.saturation},         {"hue", a.hue},                 {"cutout_prob", a.cutout_prob},
          {"cutout_frac", a.cutout_frac}};
}

AugmentStrength augment_strength_from_json(const json& j, AugmentStrength a) {
  a.crop_min_scale = j.value("crop_min_scale", a.crop_min_scale);
  a.flip_prob = j.value("flip_prob", a.flip_prob);
  a.gray_prob = j.value("gray_prob", a.gray_prob);
  a.jitter_prob = j.value("jitter_prob", a.jitter_prob);
  a.brightness = j.value("brightness", a.brightness);
  a.contrast = j.value("contrast", a.contrast);
  a.saturation = j.value("saturation", a.saturation);
  a.hue = j.value("hue", a.hue);
  a.cutout_prob = j.value("cutout_prob", a.cutout_prob);
  a.cutout_frac = j.value("cutout_frac", a.cutout_frac);
  return a;
}

json to_json(const ClipGeometry& g) { return {{"n_frames", g.n_frames}, {"skip", g.skip}, {"side", g.side}}; }

ClipGeometry geometry_from_json(const json& j, ClipGeometry g) {
  g.n_frames = j.value("n_frames", g.n_frames);
  g.skip = j.value("skip", g.skip);
  g.side = j.value("side", g.side);
  if (g.n_frames < 1 || g.skip < 1 || g.side < 1) throw ConfigError("clip geometry values must be positive");
  return g;
}

void MinimaxConfig::validate(bool allow_boundary_omega) const {
  const bool omega_ok = allow_boundary_omega ? (omega >= 0.0 && omega <= 1.0) : (omega > 0.0 && omega < 1.0);
  if (!omega_ok) throw ConfigError("omega must lie in (0,1), got " + std::to_string(omega));
  if (lr_anonymizer <= 0 || lr_utility <= 0 || lr_ssl <= 0 || (lr_pretrain && *lr_pretrain <= 0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (tau <= 0) throw ConfigError("temperature must be positive");
  if (batch_size < 2) throw ConfigError("batch size must be >= 2 for contrastive objectives");
  if (epochs_pretrain < 0 || epochs_init_utility < 0 || epochs_init_ssl < 0 || epochs_adversarial < 0) {
    throw ConfigError("epoch budgets must be non-negative");
  }
  if (val_fraction < 0 || val_fraction >= 1) throw ConfigError("val_fraction must be in [0,1)");
  if (geometry.side % anonymizer.total_stride() != 0) {
    throw ConfigError("clip side " + std::to_string(geometry.side) + " must be divisible by the anonymizer stride " +
                      std::to_string(anonymizer.total_stride()));
  }
}

double MinimaxConfig::resolved_th_bmax() const {
  if (th_bmax) return *th_bmax;
  return 0.95 * std::log(2.0 * batch_size - 1.0);
}

MinimaxConfig MinimaxConfig::toy() {
  MinimaxConfig c;
  c.geometry = {8, 1, 32};
  c.anonymizer = AnonymizerArch::preset("toy");
  c.utility_encoder = Encoder3dSpec::preset("toy_c3d");
  c.ssl_encoder = Encoder2dSpec::preset("small");
  c.augment = AugmentConfig::toy();
  c.batch_size = 16;
  c.epochs_pretrain = 60;
  c.lr_pretrain = 3e-3;
  c.epochs_init_utility = 15;
  c.epochs_init_ssl = 15;
  c.epochs_adversarial = 8;
  c.moco_queue = 256;
  return c;
}

json MinimaxConfig::to_json() const {
  json j;
  j["omega"] = omega;
  j["lr_anonymizer"] = lr_anonymizer;
  j["lr_pretrain"] = lr_pretrain ? json(*lr_pretrain) : json(nullptr);
  j["lr_utility"] = lr_utility;
  j["lr_ssl"] = lr_ssl;
  j["th_a0"] = th_a0;
  j["th_t0"] = th_t0;
  j["th_b0"] = th_b0 ? json(*th_b0) : json(nullptr);
  j["th_bmax"] = th_bmax ? json(*th_bmax) : json(nullptr);
  j["epochs_pretrain"] = epochs_pretrain;
  j["epochs_init_utility"] = epochs_init_utility;
  j["epochs_init_ssl"] = epochs_init_ssl;
  j["epochs_adversarial"] = epochs_adversarial;
  j["batch_size"] = batch_size;
  j["tau"] = tau;
  j["sampler"] = vidpriv::to_json(sampler);
  j["objective"] = to_string(objective);
  j["symmetric_ntxent"] = symmetric_ntxent;
  j["moco_momentum"] = moco_momentum;
  j["moco_queue"] = moco_queue;
  j["projection_dim"] = projection_dim;
  j["geometry"] = vidpriv::to_json(geometry);
  j["anonymizer"] = anonymizer.to_json();
  j["utility_encoder"] = utility_encoder.to_json();
  j["ssl_encoder"] = ssl_encoder.to_json();
  j["augment"] = {{"supervised", vidpriv::to_json(augment.supervised)}, {"ssl", vidpriv::to_json(augment.ssl)}};
  j["val_fraction"] = val_fraction;
  j["plateau_patience"] = plateau_patience;
  j["plateau_rel_improvement"] = plateau_rel_improvement;
  j["divergence_factor"] = divergence_factor;
  j["seed"] = seed;
  return j;
}

MinimaxConfig MinimaxConfig::from_json(const json& j) { return from_json(j, MinimaxConfig{}); }

MinimaxConfig MinimaxConfig::from_json(const json& j, MinimaxConfig c) {
  if (j.contains("preset")) {
    const auto name = j["preset"].get<std::string>();
    if (name == "toy") {
      c = toy();
    } else if (name != "default") {
      throw ConfigError("unknown minimax preset '" + name + "'");
    }
  }
  auto opt = [&](const char* key, std::optional<double>& dst) {
    if (!j.contains(key)) return;
    dst = j[key].is_null() ? std::nullopt : std::optional<double>(j[key].get<double>());
  };
  c.omega = j.value("omega", c.omega);
  c.lr_anonymizer = j.value("lr_anonymizer", c.lr_anonymizer);
  c.lr_utility = j.value("lr_utility", c.lr_utility);
  c.lr_ssl = j.value("lr_ssl", c.lr_ssl);
  c.th_a0 = j.value("th_a0", c.th_a0);
  c.th_t0 = j.value("th_t0", c.th_t0);
  opt("th_b0", c.th_b0);
  opt("th_bmax", c.th_bmax);
  opt("lr_pretrain", c.lr_pretrain);
  c.epochs_pretrain = j.value("epochs_pretrain", c.epochs_pretrain);
  c.epochs_init_utility = j.value("epochs_init_utility", c.epochs_init_utility);
  c.epochs_init_ssl = j.value("epochs_init_ssl", c.epochs_init_ssl);
  c.epochs_adversarial = j.value("epochs_adversarial", c.epochs_adversarial);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.tau = j.value("tau", c.tau);
  if (j.contains("sampler")) c.sampler = sampler_from_json(j["sampler"]);
  if (j.contains("objective")) c.objective = ssl_objective_from_string(j["objective"].get<std::string>());
  c.symmetric_ntxent = j.value("symmetric_ntxent", c.symmetric_ntxent);
  c.moco_momentum = j.value("moco_momentum", c.moco_momentum);
  c.moco_queue = j.value("moco_queue", c.moco_queue);
  c.projection_dim = j.value("projection_dim", c.projection_dim);
  if (j.contains("geometry")) c.geometry = geometry_from_json(j["geometry"], c.geometry);
  if (j.contains("anonymizer")) c.anonymizer = AnonymizerArch::from_json(j["anonymizer"]);
  if (j.contains("utility_encoder")) c.utility_encoder = Encoder3dSpec::from_json(j["utility_encoder"]);
  if (j.contains("ssl_encoder")) c.ssl_encoder = Encoder2dSpec::from_json(j["ssl_encoder"]);
  if (j.contains("augment")) {
    const auto& a = j["augment"];
    if (a.contains("supervised")) c.augment.supervised = augment_strength_from_json(a["supervised"], c.augment.supervised);
    if (a.contains("ssl")) c.augment.ssl = augment_strength_from_json(a["ssl"], c.augment.ssl);
  }
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.plateau_patience = j.value("plateau_patience", c.plateau_patience);
  c.plateau_rel_improvement = j.value("plateau_rel_improvement", c.plateau_rel_improvement);
  c.divergence_factor = j.value("divergence_factor", c.divergence_factor);
  c.seed = j.value("seed", c.seed);
  return c;
}

}  // namespace vidpriv
