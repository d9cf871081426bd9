#include "plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "vidpriv/common.hpp"

namespace vidpriv::cli {

namespace {

const cv::Scalar kInk(40, 40, 40);
const cv::Scalar kGrid(225, 225, 225);
const std::vector<cv::Scalar> kPalette{{180, 119, 31}, {14, 127, 255}, {44, 160, 44},  {40, 39, 214},
                                       {189, 103, 148}, {75, 86, 140}, {194, 119, 227}, {127, 127, 127}};

struct Frame {
  int left = 70, right = 30, top = 40, bottom = 60;
  int width, height;
  double x0, x1, y0, y1;

  int px(double x) const { return left + static_cast<int>(std::lround((x - x0) / (x1 - x0) * (width - left - right))); }
  int py(double y) const {
    return height - bottom - static_cast<int>(std::lround((y - y0) / (y1 - y0) * (height - top - bottom)));
  }
};

void text(cv::Mat& img, const std::string& s, cv::Point at, double scale = 0.45, cv::Scalar color = kInk) {
  cv::putText(img, s, at, cv::FONT_HERSHEY_SIMPLEX, scale, color, 1, cv::LINE_AA);
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, std::fabs(v - std::round(v)) < 1e-9 ? "%.0f" : "%.2f", v);
  return buf;
}

void axes(cv::Mat& img, const Frame& f, const std::string& xlabel, const std::string& ylabel, int ticks = 5) {
  for (int i = 0; i <= ticks; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / ticks;
    const double yv = f.y0 + (f.y1 - f.y0) * i / ticks;
    cv::line(img, {f.px(xv), f.py(f.y0)}, {f.px(xv), f.py(f.y1)}, kGrid);
    cv::line(img, {f.px(f.x0), f.py(yv)}, {f.px(f.x1), f.py(yv)}, kGrid);
    text(img, tick_label(xv), {f.px(xv) - 10, f.py(f.y0) + 18}, 0.4);
    text(img, tick_label(yv), {8, f.py(yv) + 4}, 0.4);
  }
  cv::rectangle(img, {f.px(f.x0), f.py(f.y1)}, {f.px(f.x1), f.py(f.y0)}, kInk);
  text(img, xlabel, {f.width / 2 - 60, f.height - 15}, 0.5);
  text(img, ylabel, {8, 22}, 0.5);
}

void save(const cv::Mat& img, const std::filesystem::path& path) {
  if (!cv::imwrite(path.string(), img)) throw Error("could not write image " + path.string());
}

}  // namespace

void write_tradeoff_plot(const std::vector<TradeoffReport>& report, const std::filesystem::path& path) {
  cv::Mat img(480, 640, CV_8UC3, cv::Scalar(255, 255, 255));
  Frame f;
  f.width = img.cols;
  f.height = img.rows;
  f.x0 = 0;
  f.x1 = 100;
  f.y0 = 0;
  f.y1 = 100;
  const std::string metric = report.empty() ? "top1" : report.front().metrics.utility_metric;
  axes(img, f, "privacy cMAP (%)", "utility " + metric + " (%)");
  std::vector<cv::Point> placed;
  for (std::size_t i = 0; i < report.size(); ++i) {
    const auto& m = report[i].metrics;
    const cv::Point p{f.px(100 * m.privacy_cmap), f.py(100 * m.utility)};
    const auto& color = kPalette[i % kPalette.size()];
    cv::circle(img, p, 6, color, cv::FILLED, cv::LINE_AA);
    // stack labels of nearby markers
    int crowd = 0;
    for (const auto& q : placed) crowd += std::abs(q.x - p.x) < 90 && std::abs(q.y - p.y) < 16;
    text(img, m.method, {p.x + 9, p.y - 6 - 15 * crowd}, 0.42, color);
    placed.push_back(p);
  }
  save(img, path);
}

void write_curve_plot(const std::vector<Series>& series, const std::string& title, const std::filesystem::path& path) {
  cv::Mat img(480, 640, CV_8UC3, cv::Scalar(255, 255, 255));
  Frame f;
  f.width = img.cols;
  f.height = img.rows;
  f.x0 = 0;
  f.x1 = 1;
  f.y0 = 0;
  f.y1 = 1;
  bool any = false;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!any) {
        f.x0 = f.x1 = s.x[i];
        f.y0 = f.y1 = s.y[i];
        any = true;
      }
      f.x0 = std::min(f.x0, s.x[i]);
      f.x1 = std::max(f.x1, s.x[i]);
      f.y0 = std::min(f.y0, s.y[i]);
      f.y1 = std::max(f.y1, s.y[i]);
    }
  }
  if (f.x1 <= f.x0) f.x1 = f.x0 + 1;
  if (f.y1 <= f.y0) f.y1 = f.y0 + 1;
  f.y0 = std::min(f.y0, 0.0);
  axes(img, f, "epoch", title);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const auto& color = kPalette[k % kPalette.size()];
    for (std::size_t i = 1; i < s.x.size(); ++i) {
      cv::line(img, {f.px(s.x[i - 1]), f.py(s.y[i - 1])}, {f.px(s.x[i]), f.py(s.y[i])}, color, 2, cv::LINE_AA);
    }
    text(img, s.name, {f.width - f.right - 140, f.top + 18 + 18 * static_cast<int>(k)}, 0.45, color);
  }
  save(img, path);
}

void write_frame_grid(const std::vector<std::pair<std::string, torch::Tensor>>& rows, const std::filesystem::path& path,
                      int cell) {
  if (rows.empty()) throw Error("frame grid needs at least one row");
  const int label_w = 110, pad = 4;
  int cols = 0;
  for (const auto& r : rows) cols = std::max(cols, static_cast<int>(r.second.size(0)));
  cv::Mat img(static_cast<int>(rows.size()) * (cell + pad) + pad, label_w + cols * (cell + pad) + pad, CV_8UC3,
              cv::Scalar(255, 255, 255));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int y = pad + static_cast<int>(r) * (cell + pad);
    text(img, rows[r].first, {6, y + cell / 2 + 5}, 0.45);
    auto frames = rows[r].second.detach().clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8);
    for (std::int64_t t = 0; t < frames.size(0); ++t) {
      auto hwc = frames[t].permute({1, 2, 0}).contiguous();
      cv::Mat rgb(static_cast<int>(hwc.size(0)), static_cast<int>(hwc.size(1)), CV_8UC3, hwc.data_ptr<std::uint8_t>());
      cv::Mat bgr, big;
      cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
      cv::resize(bgr, big, {cell, cell}, 0, 0, cv::INTER_NEAREST);
      big.copyTo(img(cv::Rect(label_w + static_cast<int>(t) * (cell + pad), y, cell, cell)));
    }
  }
  save(img, path);
}

}  // namespace vidpriv::cli
