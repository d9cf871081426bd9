#include "vidpriv/video.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

namespace vidpriv {

namespace {

constexpr char kVrawMagic[8] = {'V', 'R', 'A', 'W', '0', '0', '0', '1'};

void append_mat(const cv::Mat& bgr, int height, int width, std::vector<std::uint8_t>& out, const std::string& what) {
  if (bgr.empty()) throw Error("cannot decode " + what);
  if (bgr.rows != height || bgr.cols != width) {
    throw Error(what + ": frame size " + std::to_string(bgr.cols) + "x" + std::to_string(bgr.rows) +
                " differs from first frame " + std::to_string(width) + "x" + std::to_string(height));
  }
  cv::Mat rgb;
  if (bgr.channels() == 1) {
    cv::cvtColor(bgr, rgb, cv::COLOR_GRAY2RGB);
  } else if (bgr.channels() == 4) {
    cv::cvtColor(bgr, rgb, cv::COLOR_BGRA2RGB);
  } else {
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  }
  if (!rgb.isContinuous()) rgb = rgb.clone();
  out.insert(out.end(), rgb.data, rgb.data + rgb.total() * 3);
}

Video read_vraw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open video " + path.string());
  char magic[8] = {};
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kVrawMagic, 8) != 0) throw Error(path.string() + " is not a VRAW file");
  std::int32_t dims[4] = {};
  double fps = 0.0;
  in.read(reinterpret_cast<char*>(dims), sizeof(dims));
  in.read(reinterpret_cast<char*>(&fps), sizeof(fps));
  if (!in || dims[3] != 3 || dims[0] < 1 || dims[1] < 1 || dims[2] < 1) {
    throw Error(path.string() + ": bad VRAW header");
  }
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(dims[0]) * dims[1] * dims[2] * 3);
  in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!in) throw Error(path.string() + ": truncated VRAW payload");
  return Video(dims[0], dims[1], dims[2], std::move(pixels), fps);
}

Video read_image_dir(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error("no image frames in " + dir.string());
  std::vector<std::uint8_t> pixels;
  int height = 0;
  int width = 0;
  for (const auto& f : files) {
    cv::Mat m = cv::imread(f.string(), cv::IMREAD_COLOR);
    if (height == 0 && !m.empty()) {
      height = m.rows;
      width = m.cols;
    }
    append_mat(m, height, width, pixels, f.string());
  }
  return Video(static_cast<int>(files.size()), height, width, std::move(pixels));
}

Video read_container(const std::filesystem::path& path) {
  cv::VideoCapture cap(path.string());
  if (!cap.isOpened()) throw Error("cannot open video " + path.string());
  const double fps = cap.get(cv::CAP_PROP_FPS);
  std::vector<std::uint8_t> pixels;
  int frames = 0;
  int height = 0;
  int width = 0;
  cv::Mat m;
  while (cap.read(m)) {
    if (frames == 0) {
      height = m.rows;
      width = m.cols;
    }
    append_mat(m, height, width, pixels, path.string());
    ++frames;
  }
  if (frames == 0) throw Error(path.string() + " has no decodable frames");
  return Video(frames, height, width, std::move(pixels), fps > 0 ? fps : 25.0);
}

}  // namespace

Video::Video(int frames, int height, int width, std::vector<std::uint8_t> pixels, double fps)
    : frames_(frames), height_(height), width_(width), fps_(fps), pixels_(std::move(pixels)) {
  if (frames < 1 || height < 1 || width < 1) throw ShapeError("video must have at least one non-empty frame");
  if (pixels_.size() != static_cast<std::size_t>(frames) * height * width * 3) {
    throw ShapeError("video pixel buffer does not match T x H x W x 3");
  }
}

std::span<const std::uint8_t> Video::frame(int t) const {
  if (t < 0 || t >= frames_) throw Error("frame index " + std::to_string(t) + " out of range");
  const std::size_t stride = static_cast<std::size_t>(height_) * width_ * 3;
  return {pixels_.data() + stride * t, stride};
}

torch::Tensor Video::frames_tensor(std::span<const int> indices) const {
  auto out = torch::empty({static_cast<std::int64_t>(indices.size()), height_, width_, 3}, torch::kUInt8);
  const std::size_t stride = static_cast<std::size_t>(height_) * width_ * 3;
  auto* dst = out.data_ptr<std::uint8_t>();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    auto src = frame(indices[k]);
    std::memcpy(dst + k * stride, src.data(), stride);
  }
  return out.permute({0, 3, 1, 2}).to(torch::kFloat32).div_(255.0f).contiguous();
}

VideoClip::VideoClip(torch::Tensor frames, double fps, NoCheck) : frames_(std::move(frames)), fps_(fps) {
  if (frames_.dim() != 4 || frames_.size(1) != 3 || frames_.size(0) < 1) {
    throw ShapeError("clip must be [T>=1, 3, H, W], got " + c10::str(frames_.sizes()));
  }
}

VideoClip::VideoClip(torch::Tensor frames, double fps) : VideoClip(std::move(frames), fps, NoCheck{}) {
  if (frames_.numel() > 0) {
    const auto lo = frames_.min().item<double>();
    const auto hi = frames_.max().item<double>();
    if (lo < 0.0 || hi > 1.0 || std::isnan(lo) || std::isnan(hi)) {
      throw Error("clip intensities must lie in [0,1], got [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
    }
  }
}

VideoClip VideoClip::unchecked(torch::Tensor frames, double fps) { return VideoClip(std::move(frames), fps, NoCheck{}); }

std::vector<int> clip_frame_indices(int source_len, int start, int n_frames, int skip) {
  if (source_len < 1) throw Error("source has no frames");
  if (n_frames < 1 || skip < 1) throw Error("clip needs n_frames >= 1 and skip >= 1");
  std::vector<int> idx(static_cast<std::size_t>(n_frames));
  for (int i = 0; i < n_frames; ++i) {
    const long long raw = static_cast<long long>(start) + static_cast<long long>(i) * skip;
    idx[static_cast<std::size_t>(i)] = static_cast<int>(((raw % source_len) + source_len) % source_len);
  }
  return idx;
}

VideoClip make_clip(const Video& source, int start, int n_frames, int skip, int side) {
  if (side < 1) throw Error("clip side must be positive");
  const auto idx = clip_frame_indices(source.frames(), start, n_frames, skip);
  auto frames = source.frames_tensor(idx);
  if (source.height() != side || source.width() != side) {
    namespace F = torch::nn::functional;
    frames = F::interpolate(frames, F::InterpolateFuncOptions()
                                        .size(std::vector<std::int64_t>{side, side})
                                        .mode(torch::kBilinear)
                                        .align_corners(false))
                 .clamp_(0.0, 1.0);
  }
  return VideoClip::unchecked(frames.contiguous(), source.fps());
}

VideoClip make_clip(const Video& source, int start, const ClipGeometry& g) {
  return make_clip(source, start, g.n_frames, g.skip, g.side);
}

Video video_from_clip(const VideoClip& clip) {
  auto bytes = clip.frames().detach().clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8).permute({0, 2, 3, 1}).contiguous();
  std::vector<std::uint8_t> pixels(bytes.data_ptr<std::uint8_t>(), bytes.data_ptr<std::uint8_t>() + bytes.numel());
  return Video(static_cast<int>(clip.length()), static_cast<int>(clip.height()), static_cast<int>(clip.width()),
               std::move(pixels), clip.fps());
}

Video read_video(const std::filesystem::path& path) {
  if (std::filesystem::is_directory(path)) return read_image_dir(path);
  if (!std::filesystem::exists(path)) throw Error("video source not found: " + path.string());
  if (path.extension() == ".vraw") return read_vraw(path);
  return read_container(path);
}

void write_vraw(const Video& video, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(kVrawMagic, 8);
  const std::int32_t dims[4] = {video.frames(), video.height(), video.width(), 3};
  const double fps = video.fps();
  out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  out.write(reinterpret_cast<const char*>(&fps), sizeof(fps));
  out.write(reinterpret_cast<const char*>(video.pixels().data()), static_cast<std::streamsize>(video.pixels().size()));
  if (!out) throw Error("short write on " + path.string());
}

}  // namespace vidpriv
