// SPDX-License-Identifier: Apache-2.0
//
// Stationary Black-Scholes and Merton baselines fitted by maximum likelihood
// on a history sampled at unit spacing.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nmjd/forecast.hpp"
#include "nmjd/likelihood.hpp"
#include "nmjd/nelder_mead.hpp"
#include "nmjd/params.hpp"

namespace nmjd {

/// Volatility used in place of a zero estimate.
inline constexpr double kSigmaFloor = 1e-6;

struct BsFit {
  double mu = 0.0;
  double sigma = 0.0;        // floored at kSigmaFloor
  bool degenerate = false;   // raw volatility estimate was below the floor
  double log_likelihood = 0.0;
};

/// Closed-form Gaussian MLE on log-returns: sigma^2 = variance (1/n) of the
/// log-returns, mu = mean log-return + sigma^2 / 2. Needs >= 3 positive values.
BsFit fit_bs(std::span<const double> history);
/// Same fit from ln S values, for series whose raw values leave double range.
BsFit fit_bs_log(std::span<const double> log_history);

/// Sum of Gaussian log-densities of the log-returns, N(mu - sigma^2/2, sigma^2).
double bs_log_likelihood(std::span<const double> history, double mu, double sigma);

/// Sum of one-step truncated log-densities over consecutive unit steps.
double mjd_log_likelihood(std::span<const double> history, const MjdParams& params, int kappa);
double mjd_log_likelihood_log(std::span<const double> log_history, const MjdParams& params,
                              int kappa);

struct MjdFitConfig {
  NelderMeadConfig optimizer{};
  int restarts = 8;
  std::uint64_t seed = 0;
};

struct MjdFit {
  MjdParams params{0.0, 1.0, 1.0, 0.0, 1.0};
  double log_likelihood = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  bool at_lambda_cap = false;
  int kappa = kDefaultKappa;
  std::string warning;
  /// Best-so-far log-likelihood after every iteration across all starts.
  std::vector<double> best_history;
};

/// Multi-start Nelder-Mead on (mu, ln sigma, ln lambda, nu, ln gamma). Starts
/// are the moment-matched guess (BS mu and sigma, lambda 1, nu 0, gamma 0.5),
/// the nested BS point (lambda near 0) and random perturbations of the guess.
/// Needs >= 8 positive values.
MjdFit fit_mjd(std::span<const double> history, int kappa, const MjdFitConfig& config = {});
MjdFit fit_mjd_log(std::span<const double> log_history, int kappa,
                   const MjdFitConfig& config = {});

/// Restart-solver sample paths under constant coefficients, with the
/// s0 exp(mu t) mean trajectory.
ForecastBundle forecast_stationary(const MjdParams& params, double s0, int horizon, int k,
                                   std::uint64_t seed, int steps_per_unit = 100,
                                   int kappa = kDefaultKappa);

nlohmann::json to_json(const BsFit& fit);
nlohmann::json to_json(const MjdFit& fit);

}  // namespace nmjd
