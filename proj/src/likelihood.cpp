// SPDX-License-Identifier: Apache-2.0
#include "nmjd/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <boost/math/special_functions/gamma.hpp>

#include "nmjd/error.hpp"

namespace nmjd {
namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void check_inputs(double ln_prev, double ln_next, double delta, int kappa) {
  if (!(delta > 0.0) || !(delta <= 1.0)) {
    throw std::invalid_argument("one_step_log_density: delta must lie in (0, 1]");
  }
  if (kappa < 0) throw std::invalid_argument("one_step_log_density: kappa must be >= 0");
  if (!std::isfinite(ln_prev) || !std::isfinite(ln_next)) {
    throw NumericalError("one_step_log_density: non-finite log-value");
  }
}

// Log-weight of mixture component n (Poisson mass times Gaussian density).
struct Component {
  double log_weight;
  double resid;  // (y - a_n) / b_n^2
  double var;    // b_n^2
};

Component component(const MjdParams& p, double ln_prev, double ln_next, double delta,
                    double log_rate, int n) {
  const double mean = ln_prev + p.log_drift() * delta + n * p.nu();
  const double var = p.sigma() * p.sigma() * delta + n * p.gamma() * p.gamma();
  const double diff = ln_next - mean;
  double lw = -0.5 * (kLog2Pi + std::log(var)) - 0.5 * diff * diff / var;
  lw += -p.lambda() * delta;
  if (n > 0) lw += n * log_rate - std::lgamma(n + 1.0);
  return {lw, diff / var, var};
}

}  // namespace

double one_step_log_density(const MjdParams& params, double ln_prev, double ln_next, double delta,
                            int kappa) {
  check_inputs(ln_prev, ln_next, delta, kappa);
  const double rate = params.lambda() * delta;
  const int terms = rate > 0.0 ? kappa : 0;
  const double log_rate = rate > 0.0 ? std::log(rate) : 0.0;

  // Fixed summation order keeps results bitwise reproducible.
  double lw[256];
  std::vector<double> big;
  double* buf = lw;
  if (terms + 1 > 256) {
    big.resize(static_cast<std::size_t>(terms) + 1);
    buf = big.data();
  }
  double mx = -INFINITY;
  for (int n = 0; n <= terms; ++n) {
    buf[n] = component(params, ln_prev, ln_next, delta, log_rate, n).log_weight;
    mx = std::max(mx, buf[n]);
  }
  double acc = 0.0;
  for (int n = 0; n <= terms; ++n) acc += std::exp(buf[n] - mx);
  return mx + std::log(acc);
}

LogDensityGradient one_step_log_density_gradient(const MjdParams& params, double ln_prev,
                                                 double ln_next, double delta, int kappa) {
  check_inputs(ln_prev, ln_next, delta, kappa);
  const double rate = params.lambda() * delta;
  const int terms = rate > 0.0 ? kappa : 0;
  const double log_rate = rate > 0.0 ? std::log(rate) : 0.0;
  const double sigma = params.sigma();
  const double gamma = params.gamma();
  const double lambda = params.lambda();
  const double k1 = params.k() + 1.0;  // E[Y]

  std::vector<Component> comps;
  comps.reserve(static_cast<std::size_t>(terms) + 1);
  double mx = -INFINITY;
  for (int n = 0; n <= terms; ++n) {
    comps.push_back(component(params, ln_prev, ln_next, delta, log_rate, n));
    mx = std::max(mx, comps.back().log_weight);
  }
  double acc = 0.0;
  for (const auto& c : comps) acc += std::exp(c.log_weight - mx);
  const double lse = mx + std::log(acc);

  LogDensityGradient g;
  g.value = lse;
  for (int n = 0; n <= terms; ++n) {
    const auto& c = comps[static_cast<std::size_t>(n)];
    const double r = std::exp(c.log_weight - lse);
    // d log w_n / d a_n and d log w_n / d b_n^2
    const double d_mean = c.resid;
    const double d_var = -0.5 / c.var + 0.5 * c.resid * c.resid;
    g.d_ln_prev += r * d_mean;
    g.d_mu += r * d_mean * delta;
    g.d_sigma += r * (d_mean * (-sigma * delta) + d_var * (2.0 * sigma * delta));
    double d_lam = -delta + d_mean * (-(k1 - 1.0) * delta);
    if (n > 0) d_lam += n / lambda;
    g.d_lambda += r * d_lam;
    g.d_nu += r * d_mean * (n - lambda * delta * k1);
    g.d_gamma += r * (d_mean * (-lambda * delta * k1 * gamma) + d_var * (2.0 * n * gamma));
  }
  if (terms == 0 && kappa > 0) {
    // lambda == 0: the n = 1 term contributes delta * phi_1 / phi_0 to the
    // derivative in lambda even though its weight vanishes.
    const Component c0 = component(params, ln_prev, ln_next, delta, 0.0, 0);
    const Component c1 = component(params, ln_prev, ln_next, delta, 0.0, 1);
    g.d_lambda += delta * std::exp(c1.log_weight - c0.log_weight);
  }
  return g;
}

HorizonLikelihood horizon_log_likelihood(const ParamSchedule& schedule, double s0,
                                         std::span<const double> targets, int kappa,
                                         Anchor anchor) {
  if (!(s0 > 0.0)) throw std::invalid_argument("horizon_log_likelihood: s0 must be > 0");
  if (static_cast<int>(targets.size()) != schedule.horizon()) {
    throw std::invalid_argument("horizon_log_likelihood: expected " +
                                std::to_string(schedule.horizon()) + " targets, got " +
                                std::to_string(targets.size()));
  }
  for (double v : targets) {
    if (!(v > 0.0)) throw std::invalid_argument("horizon_log_likelihood: targets must be > 0");
  }
  HorizonLikelihood out;
  out.per_step.reserve(targets.size());
  const double ln_s0 = std::log(s0);
  double drift_sum = 0.0;  // sum of mu_j for j < tau
  for (int tau = 1; tau <= schedule.horizon(); ++tau) {
    const auto& p = schedule.at(tau);
    double ln_prev = ln_s0;
    if (tau > 1) {
      ln_prev = anchor == Anchor::teacher_forced
                    ? std::log(targets[static_cast<std::size_t>(tau - 2)])
                    : ln_s0 + drift_sum;
    }
    const double psi =
        one_step_log_density(p, ln_prev, std::log(targets[static_cast<std::size_t>(tau - 1)]),
                             1.0, kappa);
    out.per_step.push_back(psi);
    out.total += psi;
    drift_sum += p.mu();
  }
  return out;
}

TruncationBound truncation_error_bound(const MjdParams& params, double delta, int kappa) {
  if (!(delta > 0.0)) throw std::invalid_argument("truncation_error_bound: delta must be > 0");
  if (kappa < 0) throw std::invalid_argument("truncation_error_bound: kappa must be >= 0");
  const double rate = params.lambda() * delta;
  if (rate == 0.0) return {0.0, false};

  const double kap = static_cast<double>(kappa);
  const double var_next = params.sigma() * params.sigma() * delta +
                          params.gamma() * params.gamma() * (kap + 1.0);
  if (kap > rate && params.gamma() > 0.0) {
    // KL(Pois(rate) || Pois(kappa)) = rate - kappa + kappa ln(kappa / rate)
    const double kl = rate - kap - kap * std::log(rate / kap);
    const double log_num = -kl;
    return {std::exp(log_num) / (2.0 * std::numbers::pi * std::sqrt(2.0 * var_next * kl)),
            false};
  }
  const double tail = boost::math::gamma_p(kap + 1.0, rate);  // P(N > kappa)
  return {tail / std::sqrt(2.0 * std::numbers::pi * var_next), true};
}

}  // namespace nmjd
