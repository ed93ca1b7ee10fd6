// SPDX-License-Identifier: Apache-2.0
//
// Point metrics and the three evaluation protocols over stochastic forecasts:
// Mean (closed-form mean trajectory), Best-of-K (oracle best sample, chosen
// per metric) and Probabilistic (sample with the highest model likelihood).
#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nmjd/forecast.hpp"

namespace nmjd {

inline constexpr double kAdjustedR2K = 70.0;

struct PointMetrics {
  double mae = 0.0;
  double mse = 0.0;
  double r2 = 0.0;          // NaN when undefined
  bool r2_defined = true;   // false for a constant truth
};

PointMetrics point_metrics(std::span<const double> pred, std::span<const double> truth);

/// 1 - (1 - r2)(n - 1)/(n - p - 1) with p = (k - 1)(n - 1)/k.
double adjusted_r2(double r2, double n, double k = kAdjustedR2K);

/// Window-averaged metrics of one protocol.
struct ProtocolScore {
  double mae = 0.0;
  double mse = 0.0;
  double r2 = 0.0;            // mean over windows with a defined R2
  double adjusted_r2 = 0.0;
  std::size_t r2_windows = 0;
};

struct ProtocolReport {
  std::size_t windows = 0;
  int k = 0;                  // 0 for deterministic forecasts
  std::size_t horizon = 0;
  ProtocolScore mean;         // closed-form mean trajectory
  std::optional<ProtocolScore> sample_average;
  std::optional<ProtocolScore> best_of_k;
  std::optional<ProtocolScore> probabilistic;
};

/// Per-window protocol metrics, for property checks and breakdowns.
struct WindowScores {
  PointMetrics mean;
  std::vector<PointMetrics> samples;
  double min_mae = 0.0;
  double min_mse = 0.0;
  double max_r2 = 0.0;
  std::size_t most_probable = 0;
};

/// Every bundle must hold exactly k samples (k = 0: mean only). Values are in
/// raw units.
WindowScores score_window(const ForecastBundle& bundle, std::span<const double> truth);
ProtocolReport protocol_metrics(std::span<const ForecastBundle> bundles,
                                std::span<const std::vector<double>> truths, int k);

nlohmann::json to_json(const ProtocolReport& r);

/// Aligned table with Mean | Best-of-K | Probabilistic column groups and N/A
/// for protocols a method cannot provide.
std::string format_protocol_table(const std::vector<std::pair<std::string, ProtocolReport>>& rows);

}  // namespace nmjd
