#include "vidpriv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "vidpriv/common.hpp"

namespace vidpriv {

std::vector<double> Matrix::column(std::size_t c) const {
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = (*this)(r, c);
  return out;
}

std::optional<double> average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("average_precision: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t positives = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]] != 0) {
      ++positives;
      sum += static_cast<double>(positives) / static_cast<double>(k + 1);
    }
  }
  if (positives == 0) return std::nullopt;
  return sum / static_cast<double>(positives);
}

namespace {

void check_shapes(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw ShapeError("score matrix " + std::to_string(a.rows) + "x" + std::to_string(a.cols) +
                     " does not match label matrix " + std::to_string(b.rows) + "x" + std::to_string(b.cols));
  }
}

std::vector<int> label_column(const Matrix& labels, std::size_t c) {
  std::vector<int> out(labels.rows);
  for (std::size_t r = 0; r < labels.rows; ++r) out[r] = labels(r, c) != 0.0 ? 1 : 0;
  return out;
}

}  // namespace

double cmap(const Matrix& scores, const Matrix& labels) {
  check_shapes(scores, labels);
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < scores.cols; ++c) {
    if (auto ap = average_precision(scores.column(c), label_column(labels, c))) {
      sum += *ap;
      ++counted;
    }
  }
  if (counted == 0) throw Error("cmap: no class has a positive sample");
  return sum / static_cast<double>(counted);
}

double f1_mean(const Matrix& scores, const Matrix& labels) {
  check_shapes(scores, labels);
  if (scores.cols == 0) return 0.0;
  double sum = 0.0;
  for (std::size_t c = 0; c < scores.cols; ++c) {
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t r = 0; r < scores.rows; ++r) {
      const bool pred = scores(r, c) >= 0.5;
      const bool pos = labels(r, c) != 0.0;
      tp += pred && pos;
      fp += pred && !pos;
      fn += !pred && pos;
    }
    const auto denom = 2 * tp + fp + fn;
    sum += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  return sum / static_cast<double>(scores.cols);
}

double top1(const Matrix& scores, const std::vector<int>& labels) {
  if (scores.rows != labels.size()) throw ShapeError("top1: one label per row required");
  if (scores.rows == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < scores.rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < scores.cols; ++c) {
      if (scores(r, c) > scores(r, best)) best = c;
    }
    hits += static_cast<int>(best) == labels[r];
  }
  return static_cast<double>(hits) / static_cast<double>(scores.rows);
}

double relative_drop(double raw, double method) {
  if (raw == 0.0) throw Error("relative drop against a zero raw value is undefined");
  return (raw - method) / raw;
}

int relative_drop_percent(double raw, double method) {
  return static_cast<int>(std::lround(relative_drop(raw, method) * 100.0));
}

std::string format_drop(double raw, double method) {
  return std::to_string(relative_drop_percent(raw, method)) + "%";
}

std::vector<TradeoffReport> build_report(const std::vector<MethodMetrics>& rows, const std::string& raw_method) {
  auto raw = std::find_if(rows.begin(), rows.end(), [&](const MethodMetrics& m) { return m.method == raw_method; });
  if (raw == rows.end()) throw Error("report has no raw row named '" + raw_method + "'");
  auto drop = [](double r, double m) { return r == 0.0 ? 0.0 : relative_drop(r, m); };
  std::vector<TradeoffReport> out;
  for (const auto& m : rows) {
    TradeoffReport t;
    t.metrics = m;
    t.raw_method = raw_method;
    t.utility_drop = drop(raw->utility, m.utility);
    t.privacy_cmap_drop = drop(raw->privacy_cmap, m.privacy_cmap);
    t.privacy_f1_drop = drop(raw->privacy_f1, m.privacy_f1);
    out.push_back(std::move(t));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const TradeoffReport& a, const TradeoffReport& b) { return a.metrics.method < b.metrics.method; });
  return out;
}

std::string report_csv(const std::vector<TradeoffReport>& report) {
  std::ostringstream os;
  os << "method,utility_metric,utility,utility_drop_pct,privacy_cmap,privacy_cmap_drop_pct,privacy_f1,"
        "privacy_f1_drop_pct,privacy_top1\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& r : report) {
    const auto& m = r.metrics;
    os << m.method << ',' << m.utility_metric << ',' << m.utility * 100 << ',' << std::lround(r.utility_drop * 100) << ','
       << m.privacy_cmap * 100 << ',' << std::lround(r.privacy_cmap_drop * 100) << ',' << m.privacy_f1 * 100 << ','
       << std::lround(r.privacy_f1_drop * 100) << ',';
    if (m.privacy_top1) os << *m.privacy_top1 * 100;
    os << '\n';
  }
  return os.str();
}

nlohmann::json report_json(const std::vector<TradeoffReport>& report) {
  auto rows = nlohmann::json::array();
  for (const auto& r : report) {
    const auto& m = r.metrics;
    nlohmann::json j{{"method", m.method},
                     {"utility_metric", m.utility_metric},
                     {"utility", m.utility},
                     {"privacy_cmap", m.privacy_cmap},
                     {"privacy_f1", m.privacy_f1},
                     {"raw_method", r.raw_method},
                     {"utility_drop", r.utility_drop},
                     {"privacy_cmap_drop", r.privacy_cmap_drop},
                     {"privacy_f1_drop", r.privacy_f1_drop},
                     {"extra", m.extra}};
    j["privacy_top1"] = m.privacy_top1 ? nlohmann::json(*m.privacy_top1) : nlohmann::json(nullptr);
    rows.push_back(std::move(j));
  }
  return rows;
}

std::vector<TradeoffReport> report_from_json(const nlohmann::json& j) {
  std::vector<TradeoffReport> out;
  for (const auto& row : j) {
    TradeoffReport r;
    r.metrics.method = row.at("method").get<std::string>();
    r.metrics.utility_metric = row.value("utility_metric", std::string("top1"));
    r.metrics.utility = row.at("utility").get<double>();
    r.metrics.privacy_cmap = row.at("privacy_cmap").get<double>();
    r.metrics.privacy_f1 = row.at("privacy_f1").get<double>();
    if (row.contains("privacy_top1") && !row["privacy_top1"].is_null()) {
      r.metrics.privacy_top1 = row["privacy_top1"].get<double>();
    }
    r.metrics.extra = row.value("extra", nlohmann::json::object());
    r.raw_method = row.value("raw_method", std::string("raw"));
    r.utility_drop = row.value("utility_drop", 0.0);
    r.privacy_cmap_drop = row.value("privacy_cmap_drop", 0.0);
    r.privacy_f1_drop = row.value("privacy_f1_drop", 0.0);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace vidpriv
