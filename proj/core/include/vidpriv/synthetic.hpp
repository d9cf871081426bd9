#pragma once

#include <cstdint>
#include <string>

#include "vidpriv/manifest.hpp"

namespace vidpriv {

/// Desk-scale factor dataset. The action class is carried only by motion (a
/// colored square translating with a class-specific direction and speed from
/// a uniformly random start), so a single frame says nothing about it. The
/// privacy class is carried only by a static striped patch whose orientation,
/// stripe period (2, 4 or 8 px) and tint depend on the class; the patch is
/// also emitted as the sample's person box.
struct SyntheticSpec {
  int n_action = 4;
  int n_privacy = 4;
  int n_samples = 400;
  int side = 32;
  int frames = 8;
  std::uint64_t seed = 0;
  std::string split = "train";
  /// Shift the class ids (names, motions, textures) so that disjoint label
  /// spaces can be generated for novel-class evaluation.
  int action_offset = 0;
  int privacy_offset = 0;
};

DatasetManifest gen_synthetic_factors(const SyntheticSpec& spec);

inline DatasetManifest gen_synthetic_factors(int n_action, int n_privacy, int n_samples, int side, int frames,
                                             std::uint64_t seed) {
  return gen_synthetic_factors(SyntheticSpec{n_action, n_privacy, n_samples, side, frames, seed, "train", 0, 0});
}

}  // namespace vidpriv
