// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <span>
#include <vector>

namespace nmjd {

struct NelderMeadConfig {
  int max_evaluations = 5000;
  /// Stop when the simplex value spread is below f_tolerance * (1 + |f_best|)
  /// and every vertex lies within x_tolerance of the best one.
  double f_tolerance = 1e-12;
  double x_tolerance = 1e-7;
  double initial_step = 0.25;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  /// Best objective value after every iteration (non-increasing).
  std::vector<double> best_history;
};

/// Minimizes f from x0 with the standard reflection / expansion / contraction
/// / shrink moves. Non-finite objective values are treated as +infinity.
NelderMeadResult nelder_mead_minimize(const std::function<double(std::span<const double>)>& f,
                                      std::vector<double> x0, const NelderMeadConfig& config = {});

}  // namespace nmjd
