// SPDX-License-Identifier: Apache-2.0
//
// Shared oracles and fixtures for the test binaries. The oracles are written
// independently of the library code they check.
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nmjd/data.hpp"
#include "nmjd/params.hpp"
#include "nmjd/rng.hpp"

namespace nmjd::test {

/// Mixture density of ln S_next by direct summation in long double,
/// terms n = first..last (no log-sum-exp, no truncation shortcut).
inline long double mixture_terms(const MjdParams& p, double ln_prev, double ln_next, double delta,
                                 int first, int last) {
  const long double lam = p.lambda(), dt = delta;
  const long double k = std::exp(static_cast<long double>(p.nu()) +
                                 0.5L * p.gamma() * static_cast<long double>(p.gamma())) -
                        1.0L;
  const long double drift =
      (p.mu() - lam * k - 0.5L * p.sigma() * static_cast<long double>(p.sigma())) * dt;
  const long double pi = 3.14159265358979323846264338327950288L;
  long double sum = 0.0L;
  for (int n = first; n <= last; ++n) {
    long double weight;
    if (lam == 0.0L) {
      weight = n == 0 ? 1.0L : 0.0L;
    } else {
      weight = std::exp(-lam * dt + n * std::log(lam * dt) - std::lgamma(n + 1.0L));
    }
    const long double var =
        p.sigma() * static_cast<long double>(p.sigma()) * dt + p.gamma() * static_cast<long double>(p.gamma()) * n;
    const long double a = ln_prev + drift + n * static_cast<long double>(p.nu());
    const long double z = ln_next - a;
    sum += weight * std::exp(-z * z / (2.0L * var)) / std::sqrt(2.0L * pi * var);
  }
  return sum;
}

/// Draw from the synthetic parameter ranges.
inline MjdParams synthetic_draw(RandomStream& r) {
  const double mu = 0.1 + 0.4 * r.uniform();
  const double sigma = 0.1 + 0.4 * r.uniform();
  const double lambda = 3.0 + 7.0 * r.uniform();
  const double nu = -0.1 + 0.2 * r.uniform();
  const double gamma = 0.5 + 0.5 * r.uniform();
  return MjdParams(mu, sigma, lambda, nu, gamma);
}

/// A raw-unit window of positive values following a random walk in logs.
inline SeriesWindow random_window(std::uint64_t seed, int t_past, int t_future, double scale = 1.0) {
  RandomStream r(seed);
  SeriesWindow w;
  double v = 0.5 + r.uniform();
  for (int i = 0; i < t_past + t_future; ++i) {
    v *= std::exp(0.15 * r.normal());
    (i < t_past ? w.past : w.future).push_back(v * scale);
  }
  w.series_id = "w" + std::to_string(seed);
  w.norm_scale = scale;
  return w;
}

inline Series make_series(const std::string& id, std::vector<double> values) {
  Series s;
  s.id = id;
  s.group = "all";
  s.values = std::move(values);
  for (std::size_t i = 0; i < s.values.size(); ++i) s.dates.push_back(std::to_string(i));
  s.features.resize(s.values.size());
  return s;
}

}  // namespace nmjd::test
