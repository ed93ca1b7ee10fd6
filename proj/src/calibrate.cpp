// SPDX-License-Identifier: Apache-2.0
#include "nmjd/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "nmjd/error.hpp"
#include "nmjd/rng.hpp"

namespace nmjd {
namespace {

std::vector<double> log_returns(std::span<const double> history, std::size_t min_len,
                                const char* who) {
  if (history.size() < min_len) {
    throw DataError(std::string(who) + ": need at least " + std::to_string(min_len) +
                    " observations, got " + std::to_string(history.size()));
  }
  std::vector<double> r;
  r.reserve(history.size() - 1);
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (!(history[i] > 0.0) || !std::isfinite(history[i])) {
      throw DataError(std::string(who) + ": non-positive or non-finite value at index " +
                      std::to_string(i));
    }
    if (i > 0) r.push_back(std::log(history[i]) - std::log(history[i - 1]));
  }
  return r;
}

std::vector<double> diffs(std::span<const double> log_history, std::size_t min_len,
                          const char* who) {
  if (log_history.size() < min_len) {
    throw DataError(std::string(who) + ": need at least " + std::to_string(min_len) +
                    " observations, got " + std::to_string(log_history.size()));
  }
  std::vector<double> r;
  r.reserve(log_history.size() - 1);
  for (std::size_t i = 0; i < log_history.size(); ++i) {
    if (!std::isfinite(log_history[i])) {
      throw DataError(std::string(who) + ": non-finite log value at index " + std::to_string(i));
    }
    if (i > 0) r.push_back(log_history[i] - log_history[i - 1]);
  }
  return r;
}

double gaussian_sum(std::span<const double> r, double mean, double var) {
  const double c = -0.5 * std::log(2.0 * std::numbers::pi * var);
  double s = 0.0;
  for (double x : r) s += c - (x - mean) * (x - mean) / (2.0 * var);
  return s;
}

// Mixture log-likelihood with the per-component constants hoisted out of the
// loop over returns. Matches one_step_log_density at delta = 1.
double mixture_sum(std::span<const double> r, const MjdParams& p, int kappa) {
  const int terms = p.lambda() > 0.0 ? kappa + 1 : 1;
  std::vector<double> c(static_cast<std::size_t>(terms));
  std::vector<double> m(c.size()), inv2v(c.size());
  const double d = p.log_drift();
  const double log_lambda = p.lambda() > 0.0 ? std::log(p.lambda()) : 0.0;
  for (int n = 0; n < terms; ++n) {
    const double v = p.sigma() * p.sigma() + n * p.gamma() * p.gamma();
    const auto i = static_cast<std::size_t>(n);
    c[i] = -p.lambda() + n * log_lambda - std::lgamma(n + 1.0) -
           0.5 * std::log(2.0 * std::numbers::pi * v);
    m[i] = d + n * p.nu();
    inv2v[i] = 0.5 / v;
  }
  std::vector<double> lw(c.size());
  double total = 0.0;
  for (double x : r) {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double e = x - m[i];
      lw[i] = c[i] - e * e * inv2v[i];
      top = std::max(top, lw[i]);
    }
    double acc = 0.0;
    for (double w : lw) acc += std::exp(w - top);
    total += top + std::log(acc);
  }
  return total;
}

std::vector<double> to_coords(const MjdParams& p) {
  return {p.mu(), std::log(p.sigma()), std::log(p.lambda()), p.nu(), std::log(p.gamma())};
}

MjdParams from_coords(std::span<const double> x) {
  return MjdParams(x[0], std::exp(x[1]), std::exp(x[2]), x[3], std::exp(x[4]));
}

}  // namespace

namespace {

BsFit fit_bs_returns(std::span<const double> r) {
  const double n = static_cast<double>(r.size());
  double mean = 0.0;
  for (double x : r) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : r) var += (x - mean) * (x - mean);
  var /= n;

  BsFit fit;
  fit.mu = mean + 0.5 * var;
  const double raw_sigma = std::sqrt(var);
  fit.degenerate = raw_sigma < kSigmaFloor;
  fit.sigma = std::max(raw_sigma, kSigmaFloor);
  fit.log_likelihood = gaussian_sum(r, fit.mu - 0.5 * fit.sigma * fit.sigma, fit.sigma * fit.sigma);
  return fit;
}

MjdFit fit_mjd_returns(std::span<const double> r, int kappa, const MjdFitConfig& config) {
  if (kappa < 0) throw std::invalid_argument("fit_mjd: kappa must be >= 0");
  if (config.restarts < 1) throw std::invalid_argument("fit_mjd: restarts must be >= 1");
  const BsFit bs = fit_bs_returns(r);

  auto objective = [&](std::span<const double> x) {
    for (double v : x) {
      if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    }
    if (!(std::exp(x[2]) <= kLambdaCap)) return std::numeric_limits<double>::infinity();
    const double sigma = std::exp(x[1]), lambda = std::exp(x[2]), gamma = std::exp(x[4]);
    if (!(sigma > 0.0 && lambda > 0.0 && gamma > 0.0 && std::isfinite(sigma) &&
          std::isfinite(gamma))) {
      return std::numeric_limits<double>::infinity();
    }
    return -mixture_sum(r, MjdParams(x[0], sigma, lambda, x[3], gamma), kappa);
  };

  const MjdParams guess(bs.mu, bs.sigma, 1.0, 0.0, 0.5);
  std::vector<std::vector<double>> starts;
  starts.push_back(to_coords(guess));
  // Nested start: effectively the BS fit, so the MJD optimum never falls below it.
  starts.push_back(to_coords(MjdParams(bs.mu, bs.sigma, 1e-9, 0.0, 0.5)));
  RandomStream rng(derive_seed(config.seed, 0x66697473ull));
  while (static_cast<int>(starts.size()) < config.restarts) {
    auto x = to_coords(guess);
    x[0] += 0.1 * rng.normal();
    x[1] += 0.5 * rng.normal();
    x[2] = std::min(x[2] + rng.normal(), std::log(kLambdaCap) - 0.5);
    x[3] += 0.1 * rng.normal();
    x[4] += 0.5 * rng.normal();
    starts.push_back(std::move(x));
  }

  MjdFit fit;
  fit.kappa = kappa;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_x;
  auto absorb = [&](const NelderMeadResult& res) {
    fit.iterations += res.iterations;
    fit.evaluations += res.evaluations;
    for (double v : res.best_history) {
      const double cur = std::min(best, v);
      fit.best_history.push_back(std::isfinite(cur) ? -cur : -std::numeric_limits<double>::max());
    }
    if (res.value < best) {
      best = res.value;
      best_x = res.x;
      fit.converged = res.converged;
    }
  };
  for (const auto& s : starts) absorb(nelder_mead_minimize(objective, s, config.optimizer));

  if (!std::isfinite(best)) {
    throw NumericalError("fit_mjd: no start produced a finite likelihood");
  }
  // A fresh simplex around the winner escapes premature collapse.
  NelderMeadConfig polish = config.optimizer;
  polish.initial_step = 0.05;
  absorb(nelder_mead_minimize(objective, best_x, polish));

  fit.params = from_coords(best_x);
  fit.log_likelihood = -best;
  fit.at_lambda_cap = fit.params.lambda() > 0.99 * kLambdaCap;
  if (fit.at_lambda_cap) {
    fit.warning = "jump intensity reached the cap of 20 per unit time; refit with a larger kappa";
  } else if (!fit.converged) {
    fit.warning = "optimizer budget exhausted before convergence; best iterate returned";
  }
  return fit;
}

}  // namespace

BsFit fit_bs(std::span<const double> history) {
  return fit_bs_returns(log_returns(history, 3, "fit_bs"));
}

BsFit fit_bs_log(std::span<const double> log_history) {
  return fit_bs_returns(diffs(log_history, 3, "fit_bs"));
}

double bs_log_likelihood(std::span<const double> history, double mu, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("bs_log_likelihood: sigma must be > 0");
  const auto r = log_returns(history, 2, "bs_log_likelihood");
  return gaussian_sum(r, mu - 0.5 * sigma * sigma, sigma * sigma);
}

double mjd_log_likelihood(std::span<const double> history, const MjdParams& params, int kappa) {
  if (kappa < 0) throw std::invalid_argument("mjd_log_likelihood: kappa must be >= 0");
  return mixture_sum(log_returns(history, 2, "mjd_log_likelihood"), params, kappa);
}

double mjd_log_likelihood_log(std::span<const double> log_history, const MjdParams& params,
                              int kappa) {
  if (kappa < 0) throw std::invalid_argument("mjd_log_likelihood: kappa must be >= 0");
  return mixture_sum(diffs(log_history, 2, "mjd_log_likelihood"), params, kappa);
}

MjdFit fit_mjd(std::span<const double> history, int kappa, const MjdFitConfig& config) {
  return fit_mjd_returns(log_returns(history, 8, "fit_mjd"), kappa, config);
}

MjdFit fit_mjd_log(std::span<const double> log_history, int kappa, const MjdFitConfig& config) {
  return fit_mjd_returns(diffs(log_history, 8, "fit_mjd"), kappa, config);
}

ForecastBundle forecast_stationary(const MjdParams& params, double s0, int horizon, int k,
                                   std::uint64_t seed, int steps_per_unit, int kappa) {
  if (!(s0 > 0.0)) throw std::invalid_argument("forecast_stationary: s0 must be > 0");
  if (horizon < 1) throw std::invalid_argument("forecast_stationary: horizon must be >= 1");
  SolverConfig cfg;
  cfg.steps_per_unit = steps_per_unit;
  cfg.mode = SolverMode::restart;
  cfg.seed = seed;
  return make_forecast_bundle(ParamSchedule::constant(params, horizon), s0, k, cfg, kappa);
}

nlohmann::json to_json(const BsFit& fit) {
  return {{"model", "bs"},
          {"mu", fit.mu},
          {"sigma", fit.sigma},
          {"degenerate", fit.degenerate},
          {"log_likelihood", fit.log_likelihood}};
}

nlohmann::json to_json(const MjdFit& fit) {
  nlohmann::json j = fit.params;
  j["model"] = "mjd";
  j["log_likelihood"] = fit.log_likelihood;
  j["iterations"] = fit.iterations;
  j["evaluations"] = fit.evaluations;
  j["converged"] = fit.converged;
  j["at_lambda_cap"] = fit.at_lambda_cap;
  j["kappa"] = fit.kappa;
  if (!fit.warning.empty()) j["warning"] = fit.warning;
  return j;
}

}  // namespace nmjd
