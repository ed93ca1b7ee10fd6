// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nmjd/params.hpp"
#include "nmjd/solvers.hpp"

namespace nmjd {

/// K sampled trajectories at integer times 1..T with their model
/// log-likelihoods, plus the closed-form conditional-mean trajectory.
struct ForecastBundle {
  std::vector<std::vector<double>> samples;
  std::vector<double> log_likelihoods;
  std::vector<double> mean;

  std::size_t k() const { return samples.size(); }
  std::size_t horizon() const { return mean.size(); }

  /// Rescales every value by `factor`; log-likelihoods of ln S are unchanged
  /// by a multiplicative rescaling of S.
  ForecastBundle scaled(double factor) const;
};

/// Samples K paths (streams first_stream..first_stream+K-1 of config.seed),
/// scoring each with the teacher-forced horizon log-likelihood of its own
/// integer-time values.
ForecastBundle make_forecast_bundle(const ParamSchedule& schedule, double s0, int k,
                                    const SolverConfig& config, int kappa,
                                    std::uint64_t first_stream = 0);

/// A forecast for one window, with its realized future when known.
struct WindowForecast {
  std::string series_id;
  int segment = 0;
  std::size_t offset = 0;
  std::string anchor_date;
  std::vector<double> truth;  // empty when unknown
  ForecastBundle bundle;
};

/// Long CSV: window,series_id,segment,offset,anchor_date,kind,sample,
/// log_likelihood,tau,value with kind in {truth, mean, sample}.
void write_forecast_csv(std::ostream& out, std::span<const WindowForecast> forecasts);
std::vector<WindowForecast> read_forecast_csv(std::istream& in);

}  // namespace nmjd
