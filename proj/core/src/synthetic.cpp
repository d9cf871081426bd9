#include "vidpriv/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace vidpriv {

namespace {

constexpr double kBackground = 0.5;
constexpr double kNoiseStd = 0.02;
constexpr double kStripeLo = 0.15;
constexpr double kStripeHi = 0.85;
constexpr std::array<double, 3> kBlobColor = {0.95, 0.15, 0.1};

// Per-channel multipliers; patterns repeat every six classes with a new tint.
constexpr std::array<std::array<double, 3>, 4> kTints = {{
    {1.0, 1.0, 1.0},
    {1.0, 0.7, 0.7},
    {0.7, 1.0, 0.7},
    {0.7, 0.7, 1.0},
}};

std::uint64_t split_stream(const std::string& split) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : split) h = (h ^ c) * 1099511628211ull;
  return h;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

struct Texture {
  bool vertical;
  int period;
  std::array<double, 3> tint;

  explicit Texture(int cls)
      : vertical(cls % 2 == 1), period(2 << ((cls / 2) % 3)), tint(kTints[static_cast<std::size_t>(cls / 6) % kTints.size()]) {}

  double value(int x, int y) const {
    const int coord = vertical ? x : y;
    return ((coord / (period / 2)) % 2) == 1 ? kStripeHi : kStripeLo;
  }
};

}  // namespace

DatasetManifest gen_synthetic_factors(const SyntheticSpec& spec) {
  if (spec.action_offset < 0 || spec.privacy_offset < 0 || spec.n_action < 1 || spec.n_privacy < 1 || spec.n_samples < 1 || spec.side < 8 || spec.frames < 1) {
    throw Error("gen_synthetic_factors: counts must be >= 1 and side >= 8");
  }
  Rng rng = make_rng(spec.seed, split_stream(spec.split));
  std::normal_distribution<double> noise(0.0, kNoiseStd);

  DatasetManifest m;
  m.split = spec.split;
  for (int a = 0; a < spec.n_action; ++a) m.labels.action_names.push_back("motion_" + std::to_string(a + spec.action_offset));
  for (int p = 0; p < spec.n_privacy; ++p) m.labels.privacy_names.push_back("texture_" + std::to_string(p + spec.privacy_offset));

  const int side = spec.side;
  const int patch = side / 2;
  const int blob = std::max(2, side / 8);
  const int base_speed = std::max(1, side / 16);

  for (int n = 0; n < spec.n_samples; ++n) {
    const int action = uniform_int(rng, 0, spec.n_action - 1);
    const int privacy = uniform_int(rng, 0, spec.n_privacy - 1);
    const int px = uniform_int(rng, 0, side - patch);
    const int py = uniform_int(rng, 0, side - patch);
    const int bx = uniform_int(rng, 0, side - 1);
    const int by = uniform_int(rng, 0, side - 1);

    const int motion = action + spec.action_offset;
    const int direction = motion % 4;
    const int speed = base_speed * (1 + motion / 4);
    const int dx = direction == 0 ? speed : direction == 1 ? -speed : 0;
    const int dy = direction == 2 ? speed : direction == 3 ? -speed : 0;
    const Texture tex(privacy + spec.privacy_offset);

    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(spec.frames) * side * side * 3);
    for (int t = 0; t < spec.frames; ++t) {
      const int cx = ((bx + dx * t) % side + side) % side;
      const int cy = ((by + dy * t) % side + side) % side;
      for (int y = 0; y < side; ++y) {
        for (int x = 0; x < side; ++x) {
          std::array<double, 3> rgb{kBackground, kBackground, kBackground};
          if (x >= px && x < px + patch && y >= py && y < py + patch) {
            const double v = tex.value(x, y);
            for (int c = 0; c < 3; ++c) rgb[c] = v * tex.tint[c];
          }
          // Toroidal blob so it never leaves the frame.
          const int ox = ((x - cx) % side + side) % side;
          const int oy = ((y - cy) % side + side) % side;
          if (ox < blob && oy < blob) rgb = kBlobColor;
          const std::size_t base = ((static_cast<std::size_t>(t) * side + y) * side + x) * 3;
          for (int c = 0; c < 3; ++c) pixels[base + c] = to_byte(rgb[c] + noise(rng));
        }
      }
    }

    BinaryVector privacy_vec(static_cast<std::size_t>(spec.n_privacy), 0);
    privacy_vec[static_cast<std::size_t>(privacy)] = 1;
    std::vector<FrameBoxes> boxes(static_cast<std::size_t>(spec.frames), FrameBoxes{Box{px, py, px + patch, py + patch}});
    const std::string id = spec.split + "_" + std::to_string(n);
    Sample s(id, "synthetic://" + std::to_string(spec.seed) + "/" + id, action, std::move(privacy_vec), std::move(boxes));
    s.attach_video(std::make_shared<const Video>(spec.frames, side, side, std::move(pixels)));
    m.samples.push_back(std::move(s));
  }
  return m;
}

}  // namespace vidpriv
