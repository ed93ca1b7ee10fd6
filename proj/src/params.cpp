// SPDX-License-Identifier: Apache-2.0
#include "nmjd/params.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace nmjd {

double expected_jump_ratio(double nu, double gamma) {
  if (!std::isfinite(nu) || !std::isfinite(gamma)) {
    throw std::invalid_argument("expected_jump_ratio: non-finite input");
  }
  if (gamma < 0.0) throw std::invalid_argument("expected_jump_ratio: gamma < 0");
  return std::expm1(nu + 0.5 * gamma * gamma);
}

MjdParams::MjdParams(double mu, double sigma, double lambda, double nu, double gamma)
    : mu_(mu), sigma_(sigma), lambda_(lambda), nu_(nu), gamma_(gamma) {
  if (!std::isfinite(mu) || !std::isfinite(sigma) || !std::isfinite(lambda) ||
      !std::isfinite(nu) || !std::isfinite(gamma)) {
    throw std::invalid_argument("MjdParams: non-finite field");
  }
  if (!(sigma > 0.0)) throw std::invalid_argument("MjdParams: sigma must be > 0");
  if (!(gamma > 0.0)) throw std::invalid_argument("MjdParams: gamma must be > 0");
  if (lambda < 0.0) throw std::invalid_argument("MjdParams: lambda must be >= 0");
}

int step_index(double t, int horizon) {
  if (!(t >= 0.0) || !(t < static_cast<double>(horizon))) {
    throw std::out_of_range("step_index: t=" + std::to_string(t) + " outside [0, " +
                            std::to_string(horizon) + ")");
  }
  return static_cast<int>(std::floor(t)) + 1;
}

ParamSchedule::ParamSchedule(std::vector<MjdParams> steps) : steps_(std::move(steps)) {
  if (steps_.empty()) throw std::invalid_argument("ParamSchedule: horizon must be >= 1");
}

ParamSchedule ParamSchedule::constant(const MjdParams& params, int horizon) {
  if (horizon < 1) throw std::invalid_argument("ParamSchedule: horizon must be >= 1");
  return ParamSchedule(std::vector<MjdParams>(static_cast<std::size_t>(horizon), params));
}

const MjdParams& ParamSchedule::at(int tau) const {
  if (tau < 1 || tau > horizon()) {
    throw std::out_of_range("ParamSchedule::at: tau=" + std::to_string(tau));
  }
  return steps_[static_cast<std::size_t>(tau - 1)];
}

namespace {

void check_time(const ParamSchedule& schedule, double t, const char* who) {
  if (!(t >= 0.0) || !(t <= static_cast<double>(schedule.horizon()))) {
    throw std::out_of_range(std::string(who) + ": t outside [0, horizon]");
  }
}

// Integrates a per-interval rate over [0, t] for a piecewise-constant schedule.
template <class Rate>
double integrate_rate(const ParamSchedule& schedule, double t, Rate rate) {
  const int full = std::min(static_cast<int>(std::floor(t)), schedule.horizon());
  double acc = 0.0;
  for (int tau = 1; tau <= full; ++tau) acc += rate(schedule.at(tau));
  const double partial = t - static_cast<double>(full);
  if (partial > 0.0) acc += partial * rate(schedule.at(full + 1));
  return acc;
}

}  // namespace

double conditional_mean(const ParamSchedule& schedule, double s0, double t) {
  if (!(s0 > 0.0) || !std::isfinite(s0)) {
    throw std::invalid_argument("conditional_mean: s0 must be > 0");
  }
  check_time(schedule, t, "conditional_mean");
  return s0 * std::exp(integrate_rate(schedule, t, [](const MjdParams& p) { return p.mu(); }));
}

MomentPair log_return_moments(const ParamSchedule& schedule, double t) {
  check_time(schedule, t, "log_return_moments");
  MomentPair m;
  m.mean = integrate_rate(schedule, t, [](const MjdParams& p) {
    return p.log_drift() + p.lambda() * p.nu();
  });
  m.variance = integrate_rate(schedule, t, [](const MjdParams& p) {
    return p.sigma() * p.sigma() + p.lambda() * (p.gamma() * p.gamma() + p.nu() * p.nu());
  });
  return m;
}

std::array<double, 4> stationary_cumulants(const MjdParams& p, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("stationary_cumulants: t must be >= 0");
  const double g2 = p.gamma() * p.gamma();
  const double v2 = p.nu() * p.nu();
  const double lam = p.lambda();
  return {
      (p.log_drift() + lam * p.nu()) * t,
      (p.sigma() * p.sigma() + lam * (g2 + v2)) * t,
      lam * (3.0 * g2 * p.nu() + v2 * p.nu()) * t,
      lam * (3.0 * g2 * g2 + 6.0 * v2 * g2 + v2 * v2) * t,
  };
}

void to_json(nlohmann::json& j, const MjdParams& p) {
  j = nlohmann::json{{"mu", p.mu()},
                     {"sigma", p.sigma()},
                     {"lambda", p.lambda()},
                     {"nu", p.nu()},
                     {"gamma", p.gamma()}};
}

nlohmann::json schedule_to_json(const ParamSchedule& schedule) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : schedule.steps()) arr.push_back(p);
  return arr;
}

ParamSchedule schedule_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("schedule JSON must be an array");
  std::vector<MjdParams> steps;
  steps.reserve(j.size());
  for (const auto& rec : j) steps.push_back(rec.get<MjdParams>());
  return ParamSchedule(std::move(steps));
}

}  // namespace nmjd

nmjd::MjdParams nlohmann::adl_serializer<nmjd::MjdParams>::from_json(const json& j) {
  for (const char* key : {"mu", "sigma", "lambda", "nu", "gamma"}) {
    if (!j.contains(key)) {
      throw std::invalid_argument(std::string("MjdParams JSON: missing field '") + key + "'");
    }
  }
  return nmjd::MjdParams(j.at("mu").get<double>(), j.at("sigma").get<double>(),
                         j.at("lambda").get<double>(), j.at("nu").get<double>(),
                         j.at("gamma").get<double>());
}
