#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "vidpriv/metrics.hpp"

namespace vidpriv::cli {

/// Utility (y) against privacy cMAP (x), both in percent, one labelled marker
/// per method.
void write_tradeoff_plot(const std::vector<TradeoffReport>& report, const std::filesystem::path& path);

/// Validation curves of a training log (one series per loss).
struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};
void write_curve_plot(const std::vector<Series>& series, const std::string& title, const std::filesystem::path& path);

/// Rows of frames [T, 3, H, W] in [0, 1], tiled into one image with a label
/// per row. Frames are upscaled with nearest neighbour to `cell` pixels.
void write_frame_grid(const std::vector<std::pair<std::string, torch::Tensor>>& rows, const std::filesystem::path& path,
                      int cell = 96);

}  // namespace vidpriv::cli
