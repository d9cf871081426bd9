#pragma once

// Evaluation metrics and trade-off report assembly. Metrics are fractions in
// [0, 1]; reports print them as percentages.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace vidpriv {

/// Samples x classes, row-major.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::vector<double> column(std::size_t c) const;
};

/// Non-interpolated AP: ranks by descending score (ties keep the original
/// order) and sums precision@k over the positive ranks, divided by the number
/// of positives. nullopt when there is no positive (class excluded).
std::optional<double> average_precision(const std::vector<double>& scores, const std::vector<int>& labels);

/// Mean AP over classes with at least one positive. Throws when no class has
/// a positive or the shapes differ.
double cmap(const Matrix& scores, const Matrix& labels);

/// Per-class F1 with predictions score >= 0.5 (0/0 counts as 0), averaged
/// over all classes.
double f1_mean(const Matrix& scores, const Matrix& labels);

/// Fraction of rows whose argmax (first on ties) is the label.
double top1(const Matrix& scores, const std::vector<int>& labels);

/// (raw - method) / raw. Negative when the method beats raw.
double relative_drop(double raw, double method);
/// relative_drop as a whole percent, rounded half away from zero.
int relative_drop_percent(double raw, double method);
/// "65%" style label used in report tables.
std::string format_drop(double raw, double method);

struct MethodMetrics {
  std::string method;
  std::string utility_metric = "top1";  ///< "top1" or "cmap"
  double utility = 0.0;
  double privacy_cmap = 0.0;
  double privacy_f1 = 0.0;
  std::optional<double> privacy_top1;
  nlohmann::json extra = nlohmann::json::object();
};

struct TradeoffReport {
  MethodMetrics metrics;
  std::string raw_method;
  double utility_drop = 0.0;
  double privacy_cmap_drop = 0.0;
  double privacy_f1_drop = 0.0;
};

/// Relative drops of every row against the row named raw_method; output is
/// sorted by method name. Throws when the raw row is missing.
std::vector<TradeoffReport> build_report(const std::vector<MethodMetrics>& rows, const std::string& raw_method);

std::string report_csv(const std::vector<TradeoffReport>& report);
nlohmann::json report_json(const std::vector<TradeoffReport>& report);
std::vector<TradeoffReport> report_from_json(const nlohmann::json& j);

}  // namespace vidpriv
