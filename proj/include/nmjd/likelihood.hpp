// SPDX-License-Identifier: Apache-2.0
//
// Truncated mixture likelihood of the piecewise-constant jump diffusion.
//
// Over an interval of length delta inside one unit step the log-price increment
// is a Poisson(lambda delta) mixture of Gaussians:
//
//   p(y | x) = sum_n e^{-lambda delta} (lambda delta)^n / n! * N(y; a_n, b_n^2)
//   a_n = x + (mu - lambda k - sigma^2/2) delta + n nu
//   b_n^2 = sigma^2 delta + n gamma^2
//
// The series is truncated at n = kappa and summed in log space.
#pragma once

#include <span>
#include <vector>

#include "nmjd/params.hpp"

namespace nmjd {

inline constexpr int kDefaultKappa = 5;

struct TruncationConfig {
  int kappa = kDefaultKappa;
};

/// Log of the kappa-truncated one-step density of ln_next given ln_prev.
/// delta must lie in (0, 1]; when lambda == 0 only the n = 0 term is used.
double one_step_log_density(const MjdParams& params, double ln_prev, double ln_next, double delta,
                            int kappa);

/// Value and partial derivatives of one_step_log_density. The derivative with
/// respect to ln_next is -d_ln_prev.
struct LogDensityGradient {
  double value = 0.0;
  double d_ln_prev = 0.0;
  double d_mu = 0.0;
  double d_sigma = 0.0;
  double d_lambda = 0.0;
  double d_nu = 0.0;
  double d_gamma = 0.0;
};

LogDensityGradient one_step_log_density_gradient(const MjdParams& params, double ln_prev,
                                                 double ln_next, double delta, int kappa);

enum class Anchor {
  teacher_forced,     // condition step tau on the observed S_{tau-1}
  mean_bootstrapped,  // condition step tau on E[S_{tau-1} | C]
};

struct HorizonLikelihood {
  double total = 0.0;
  std::vector<double> per_step;
};

/// Sum over tau = 1..T of the one-step log-densities (delta = 1). `targets`
/// holds S_1..S_T and must match the schedule horizon.
HorizonLikelihood horizon_log_likelihood(const ParamSchedule& schedule, double s0,
                                         std::span<const double> targets, int kappa,
                                         Anchor anchor);

struct TruncationBound {
  double value = 0.0;
  /// True when kappa <= lambda delta and the Gaussian-cap bound was returned.
  bool pre_asymptotic = false;
};

/// Upper bound on the density mass dropped by truncating at kappa, uniform in
/// the observed value. For kappa > lambda delta this is the closed form built
/// from the Poisson KL tail bound and Mills' ratio; otherwise the exact Poisson
/// tail probability times the Gaussian density cap 1/sqrt(2 pi b_{kappa+1}^2).
TruncationBound truncation_error_bound(const MjdParams& params, double delta, int kappa);

}  // namespace nmjd
