#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"
#include "vidpriv/networks.hpp"
#include "vidpriv/video.hpp"

namespace vidpriv {

enum class SamplerKind { unconstrained, min_gap, max_gap };

/// Temporal frame sampler for the SSL branch. min_gap demands |i - j| > gap,
/// max_gap demands |i - j| < gap.
struct SamplerStrategy {
  SamplerKind kind = SamplerKind::unconstrained;
  int gap = 1;

  static SamplerStrategy unconstrained() { return {}; }
  static SamplerStrategy min_gap(int gap) { return {SamplerKind::min_gap, gap}; }
  static SamplerStrategy max_gap(int gap) { return {SamplerKind::max_gap, gap}; }
};

enum class SslObjective { ntxent, ntxent_clip, momentum_contrast, rotnet };

std::string to_string(SamplerKind kind);
std::string to_string(SslObjective objective);
SamplerKind sampler_kind_from_string(const std::string& s);
SslObjective ssl_objective_from_string(const std::string& s);

/// One augmentation family. Probabilities are per clip; every frame of a clip
/// shares the same draw.
struct AugmentStrength {
  double crop_min_scale = 1.0;  ///< random resized crop area fraction lower bound
  double flip_prob = 0.0;
  double gray_prob = 0.0;       ///< grayscale conversion / color drop
  double jitter_prob = 0.0;
  double brightness = 0.0;
  double contrast = 0.0;
  double saturation = 0.0;
  double hue = 0.0;
  double cutout_prob = 0.0;
  double cutout_frac = 0.0;     ///< side of the cut-out square relative to the frame side
};

/// Strengths follow the SimCLR recipe: color jitter with s = 1 (0.8, 0.8,
/// 0.8, 0.2) applied with p = 0.8, color drop p = 0.2. The supervised family
/// uses mild crop/flip/grayscale only.
struct AugmentConfig {
  AugmentStrength supervised{0.8, 0.5, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  AugmentStrength ssl{0.2, 0.5, 0.2, 0.8, 0.8, 0.8, 0.8, 0.2, 0.5, 0.3};

  /// Toy preset: no flips (the synthetic actions are motion directions) and
  /// gentler crops for 32 px frames.
  static AugmentConfig toy();
};

struct AnonymizerArch {
  int depth = 4;  ///< number of 2x downsamplings; total stride is 2^depth
  int base_width = 32;

  int total_stride() const { return 1 << depth; }
  static AnonymizerArch preset(const std::string& name);  ///< "default", "toy", "tiny"
  nlohmann::json to_json() const;
  static AnonymizerArch from_json(const nlohmann::json& j);
};

/// Every scalar of the minimax procedure. Thresholds are loss-valued; th_a0 is
/// a per-pixel mean L1.
struct MinimaxConfig {
  double omega = 0.5;
  double lr_anonymizer = 1e-3;
  double lr_utility = 1e-3;
  double lr_ssl = 1e-3;
  std::optional<double> lr_pretrain;  ///< identity pretraining; unset: lr_anonymizer

  double th_a0 = 0.02;
  double th_t0 = 0.3;
  std::optional<double> th_b0;    ///< unset: stop SSL init on plateau
  std::optional<double> th_bmax;  ///< unset: 0.95 * ln(2N - 1)

  int epochs_pretrain = 100;
  int epochs_init_utility = 150;
  int epochs_init_ssl = 400;
  int epochs_adversarial = 100;

  int batch_size = 8;
  double tau = 0.1;
  SamplerStrategy sampler;
  SslObjective objective = SslObjective::ntxent;
  bool symmetric_ntxent = true;
  double moco_momentum = 0.999;
  int moco_queue = 4096;
  int projection_dim = 128;

  ClipGeometry geometry;
  AnonymizerArch anonymizer;
  Encoder3dSpec utility_encoder = Encoder3dSpec::preset("r3d18");
  Encoder2dSpec ssl_encoder = Encoder2dSpec::preset("resnet18");
  AugmentConfig augment;

  double val_fraction = 0.1;
  int plateau_patience = 5;
  double plateau_rel_improvement = 0.01;
  double divergence_factor = 10.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError when an invariant fails (omega outside (0,1) unless
  /// allow_boundary_omega, non-positive rates or tau, empty budgets).
  void validate(bool allow_boundary_omega = false) const;

  /// th_bmax, resolved.
  double resolved_th_bmax() const;

  /// Desk-scale preset for 32 px, 8-frame synthetic clips.
  static MinimaxConfig toy();

  nlohmann::json to_json() const;
  /// Overrides only the keys present in j.
  static MinimaxConfig from_json(const nlohmann::json& j, MinimaxConfig base);
  static MinimaxConfig from_json(const nlohmann::json& j);
};

nlohmann::json to_json(const SamplerStrategy& s);
SamplerStrategy sampler_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AugmentStrength& a);
AugmentStrength augment_strength_from_json(const nlohmann::json& j, AugmentStrength base);
nlohmann::json to_json(const ClipGeometry& g);
ClipGeometry geometry_from_json(const nlohmann::json& j, ClipGeometry base = {});

}  // namespace vidpriv
