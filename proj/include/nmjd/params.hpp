// SPDX-License-Identifier: Apache-2.0
//
// Merton jump-diffusion coefficients and the closed-form quantities of the
// stationary and piecewise-constant (non-stationary) models.
//
// Time is measured in unit intervals. A ParamSchedule of horizon T holds one
// MjdParams per interval [tau-1, tau), tau = 1..T.
#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <json.hpp>

namespace nmjd {

/// Largest jump intensity per unit time that the truncated likelihood is
/// trusted with at the default truncation order.
inline constexpr double kLambdaCap = 20.0;

/// E[Y - 1] for a log-normal jump ratio with ln Y ~ N(nu, gamma^2).
double expected_jump_ratio(double nu, double gamma);

/// Coefficients of one unit interval: drift, diffusion volatility, jump
/// intensity and the log-normal jump-size law.
class MjdParams {
 public:
  /// Throws std::invalid_argument unless all fields are finite, sigma > 0,
  /// gamma > 0 and lambda >= 0.
  MjdParams(double mu, double sigma, double lambda, double nu, double gamma);

  double mu() const { return mu_; }
  double sigma() const { return sigma_; }
  double lambda() const { return lambda_; }
  double nu() const { return nu_; }
  double gamma() const { return gamma_; }

  /// Jump compensation k = exp(nu + gamma^2/2) - 1.
  double k() const { return expected_jump_ratio(nu_, gamma_); }

  /// Drift of ln S per unit time: mu - lambda k - sigma^2/2.
  double log_drift() const { return mu_ - lambda_ * k() - 0.5 * sigma_ * sigma_; }

  friend bool operator==(const MjdParams&, const MjdParams&) = default;

 private:
  double mu_;
  double sigma_;
  double lambda_;
  double nu_;
  double gamma_;
};

/// Interval index rho_t = floor(t) + 1 for t in [0, horizon). Integer times
/// belong to the interval that starts there.
int step_index(double t, int horizon);

/// Piecewise-constant coefficient sequence over a future horizon.
class ParamSchedule {
 public:
  /// Throws std::invalid_argument on an empty step list.
  explicit ParamSchedule(std::vector<MjdParams> steps);

  /// A schedule repeating the same coefficients for `horizon` intervals.
  static ParamSchedule constant(const MjdParams& params, int horizon);

  int horizon() const { return static_cast<int>(steps_.size()); }

  /// 1-based access: at(1) is the first interval.
  const MjdParams& at(int tau) const;

  /// Coefficients in force at time t (t in [0, horizon)).
  const MjdParams& at_time(double t) const { return at(step_index(t, horizon())); }

  const std::vector<MjdParams>& steps() const { return steps_; }

  friend bool operator==(const ParamSchedule&, const ParamSchedule&) = default;

 private:
  std::vector<MjdParams> steps_;
};

struct MomentPair {
  double mean = 0.0;
  double variance = 0.0;
};

/// E[S_t | S_0] = s0 exp(integral of mu up to t). Requires s0 > 0 and
/// 0 <= t <= horizon.
double conditional_mean(const ParamSchedule& schedule, double s0, double t);

/// Mean and variance of ln(S_t / S_0) for 0 <= t <= horizon.
MomentPair log_return_moments(const ParamSchedule& schedule, double t);

/// First four cumulants of ln(S_t / S_0) under stationary coefficients.
std::array<double, 4> stationary_cumulants(const MjdParams& params, double t);

void to_json(nlohmann::json& j, const MjdParams& p);

nlohmann::json schedule_to_json(const ParamSchedule& schedule);
/// Accepts a JSON array of {mu, sigma, lambda, nu, gamma} records.
ParamSchedule schedule_from_json(const nlohmann::json& j);

}  // namespace nmjd

namespace nlohmann {
template <>
struct adl_serializer<nmjd::MjdParams> {
  static nmjd::MjdParams from_json(const json& j);
  static void to_json(json& j, const nmjd::MjdParams& p) { nmjd::to_json(j, p); }
};
}  // namespace nlohmann
