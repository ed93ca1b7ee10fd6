// SPDX-License-Identifier: Apache-2.0
#include "nmjd/forecast.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "nmjd/error.hpp"
#include "nmjd/io.hpp"
#include "nmjd/likelihood.hpp"

namespace nmjd {

ForecastBundle ForecastBundle::scaled(double factor) const {
  ForecastBundle out = *this;
  for (auto& row : out.samples) {
    for (double& v : row) v *= factor;
  }
  for (double& v : out.mean) v *= factor;
  return out;
}

ForecastBundle make_forecast_bundle(const ParamSchedule& schedule, double s0, int k,
                                    const SolverConfig& config, int kappa,
                                    std::uint64_t first_stream) {
  if (k < 1) throw std::invalid_argument("make_forecast_bundle: K must be >= 1");
  const auto horizon = static_cast<std::size_t>(schedule.horizon());
  const auto logs =
      simulate_integer_log_values(schedule, s0, config, static_cast<std::size_t>(k), first_stream);

  ForecastBundle b;
  b.mean.resize(horizon);
  for (std::size_t tau = 1; tau <= horizon; ++tau) {
    b.mean[tau - 1] = conditional_mean(schedule, s0, static_cast<double>(tau));
  }
  b.samples.resize(static_cast<std::size_t>(k));
  b.log_likelihoods.resize(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < b.samples.size(); ++i) {
    auto& row = b.samples[i];
    row.resize(horizon);
    double ll = 0.0;
    double ln_prev = std::log(s0);
    for (std::size_t tau = 0; tau < horizon; ++tau) {
      const double ln_v = logs[i * horizon + tau];
      row[tau] = std::exp(ln_v);
      // Teacher-forced on the sample itself, evaluated in log space so that
      // extreme paths never round to zero before scoring.
      ll += one_step_log_density(schedule.at(static_cast<int>(tau) + 1), ln_prev, ln_v, 1.0, kappa);
      ln_prev = ln_v;
    }
    b.log_likelihoods[i] = ll;
  }
  return b;
}

void write_forecast_csv(std::ostream& out, std::span<const WindowForecast> forecasts) {
  out << "window,series_id,segment,offset,anchor_date,kind,sample,log_likelihood,tau,value\n";
  for (std::size_t w = 0; w < forecasts.size(); ++w) {
    const auto& f = forecasts[w];
    const std::string prefix = std::to_string(w) + ',' + f.series_id + ',' +
                               std::to_string(f.segment) + ',' + std::to_string(f.offset) + ',' +
                               f.anchor_date + ',';
    for (std::size_t t = 0; t < f.truth.size(); ++t) {
      out << prefix << "truth,,," << t + 1 << ',' << io::format_double(f.truth[t]) << '\n';
    }
    for (std::size_t t = 0; t < f.bundle.mean.size(); ++t) {
      out << prefix << "mean,,," << t + 1 << ',' << io::format_double(f.bundle.mean[t]) << '\n';
    }
    for (std::size_t k = 0; k < f.bundle.k(); ++k) {
      const std::string ll = io::format_double(f.bundle.log_likelihoods[k]);
      for (std::size_t t = 0; t < f.bundle.samples[k].size(); ++t) {
        out << prefix << "sample," << k << ',' << ll << ',' << t + 1 << ','
            << io::format_double(f.bundle.samples[k][t]) << '\n';
      }
    }
  }
}

std::vector<WindowForecast> read_forecast_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) ||
      io::trim(line) != "window,series_id,segment,offset,anchor_date,kind,sample,log_likelihood,tau,value") {
    throw DataError("forecast CSV: unexpected header");
  }
  std::vector<WindowForecast> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (io::trim(line).empty()) continue;
    const std::string ctx = "forecast CSV line " + std::to_string(line_no);
    const auto c = io::split_csv_line(line);
    if (c.size() != 10) throw DataError(ctx + ": expected 10 fields");
    const auto w = static_cast<std::size_t>(io::parse_double(c[0], ctx));
    if (w == out.size()) {
      WindowForecast f;
      f.series_id = c[1];
      f.segment = static_cast<int>(io::parse_double(c[2], ctx));
      f.offset = static_cast<std::size_t>(io::parse_double(c[3], ctx));
      f.anchor_date = c[4];
      out.push_back(std::move(f));
    } else if (w + 1 != out.size()) {
      throw DataError(ctx + ": windows must appear in order");
    }
    auto& f = out.back();
    const auto tau = static_cast<std::size_t>(io::parse_double(c[8], ctx));
    const double v = io::parse_double(c[9], ctx);
    std::vector<double>* row = nullptr;
    if (c[5] == "truth") {
      row = &f.truth;
    } else if (c[5] == "mean") {
      row = &f.bundle.mean;
    } else if (c[5] == "sample") {
      const auto k = static_cast<std::size_t>(io::parse_double(c[6], ctx));
      if (k == f.bundle.samples.size()) {
        f.bundle.samples.emplace_back();
        f.bundle.log_likelihoods.push_back(io::parse_double(c[7], ctx));
      } else if (k + 1 != f.bundle.samples.size()) {
        throw DataError(ctx + ": samples must appear in order");
      }
      row = &f.bundle.samples.back();
    } else {
      throw DataError(ctx + ": unknown kind '" + c[5] + "'");
    }
    if (tau != row->size() + 1) throw DataError(ctx + ": tau out of order");
    row->push_back(v);
  }
  return out;
}

}  // namespace nmjd
