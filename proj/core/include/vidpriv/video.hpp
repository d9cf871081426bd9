#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <torch/torch.h>

#include "vidpriv/common.hpp"

namespace vidpriv {

/// Axis-aligned box in pixel coordinates, half-open: [x0, x1) x [y0, y1).
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  bool within(int width, int height) const { return 0 <= x0 && x0 < x1 && x1 <= width && 0 <= y0 && y0 < y1 && y1 <= height; }
  friend bool operator==(const Box&, const Box&) = default;
};

using FrameBoxes = std::vector<Box>;

/// A decoded source video: T x H x W x 3 bytes, row-major, RGB.
class Video {
 public:
  Video(int frames, int height, int width, std::vector<std::uint8_t> pixels, double fps = 25.0);

  int frames() const { return frames_; }
  int height() const { return height_; }
  int width() const { return width_; }
  double fps() const { return fps_; }
  const std::vector<std::uint8_t>& pixels() const { return pixels_; }
  std::span<const std::uint8_t> frame(int t) const;

  /// Float frames [n, 3, H, W] scaled to [0, 1] for the given source indices.
  torch::Tensor frames_tensor(std::span<const int> indices) const;

  friend bool operator==(const Video&, const Video&) = default;

 private:
  int frames_;
  int height_;
  int width_;
  double fps_;
  std::vector<std::uint8_t> pixels_;
};

/// The unit every transform and model consumes. Frames are stored
/// channel-first as a float tensor [T, 3, H, W] with values in [0, 1].
class VideoClip {
 public:
  /// Validates shape and the [0, 1] range.
  explicit VideoClip(torch::Tensor frames, double fps = 25.0);

  /// Skips the range scan. Shape is still checked.
  static VideoClip unchecked(torch::Tensor frames, double fps = 25.0);

  const torch::Tensor& frames() const { return frames_; }
  double fps() const { return fps_; }
  std::int64_t length() const { return frames_.size(0); }
  std::int64_t height() const { return frames_.size(2); }
  std::int64_t width() const { return frames_.size(3); }

 private:
  struct NoCheck {};
  VideoClip(torch::Tensor frames, double fps, NoCheck);

  torch::Tensor frames_;
  double fps_;
};

/// Clip extraction geometry. Defaults: 16 frames, skip 2, 112 x 112.
struct ClipGeometry {
  int n_frames = 16;
  int skip = 2;
  int side = 112;

  int span() const { return n_frames * skip; }
};

/// Source indices start + i * skip, wrapped modulo the source length.
std::vector<int> clip_frame_indices(int source_len, int start, int n_frames, int skip);

/// Extracts n_frames frames at stride skip from start and resizes each to
/// side x side (bilinear). Short sources wrap around.
VideoClip make_clip(const Video& source, int start, int n_frames, int skip, int side);
VideoClip make_clip(const Video& source, int start, const ClipGeometry& geometry);

/// Quantizes a clip back to bytes (round to nearest).
Video video_from_clip(const VideoClip& clip);

/// Decodes a video from disk. Supported sources: the raw ".vraw" container
/// written by write_vraw, a directory of image frames (sorted by file name),
/// or any container OpenCV can open.
Video read_video(const std::filesystem::path& path);

/// Raw container: magic "VRAW0001", int32 T, H, W, C(=3), float64 fps, then
/// T*H*W*3 bytes.
void write_vraw(const Video& video, const std::filesystem::path& path);

}  // namespace vidpriv
