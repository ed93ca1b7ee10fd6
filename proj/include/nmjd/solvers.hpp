// SPDX-License-Identifier: Apache-2.0
//
// Euler-Maruyama simulation of the piecewise-constant jump diffusion in log
// space, with and without restarts at integer times.
//
// The fine grid is t_i = i / M, i = 0..M*T. The step ending at t_i uses the
// coefficients of the interval containing t_{i-1} and consumes its random
// draws in the order (z1, jump count, z2):
//
//   ln S(t_i) = base + (mu - lambda k - sigma^2/2)/M + sigma z1 / sqrt(M)
//               + n nu + sqrt(n) gamma z2,          n ~ Poisson(lambda / M)
//
// For the vanilla solver base = ln S(t_{i-1}). The restart solver replaces base
// by an analytic anchor at the first fine step of every unit interval.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "nmjd/params.hpp"
#include "nmjd/rng.hpp"

namespace nmjd {

enum class SolverMode { vanilla, restart };

/// Value the restart solver resets to at the start of interval tau.
enum class RestartAnchor {
  log_of_mean,  // ln E[S_{tau-1} | C]; keeps E[S_tau] exact at integer times
  mean_of_log,  // E[ln S_{tau-1} | C]
};

struct SolverConfig {
  int steps_per_unit = 100;
  SolverMode mode = SolverMode::restart;
  std::uint64_t seed = 0;
  RestartAnchor anchor = RestartAnchor::log_of_mean;
};

SolverMode parse_solver_mode(std::string_view name);
std::string_view to_string(SolverMode mode);

struct SeedRecord {
  std::uint64_t master = 0;
  std::uint64_t stream = 0;
};

struct SimPath {
  std::vector<double> times;       // M*T + 1 grid points starting at 0
  std::vector<double> log_values;  // ln S at each grid point
  std::vector<int> jump_counts;    // jumps drawn in the step ending at t_i (0 at t_0)
  SeedRecord seed;

  /// ln S at integer time tau (0..T).
  double log_value_at(int tau, int steps_per_unit) const {
    return log_values[static_cast<std::size_t>(tau) * static_cast<std::size_t>(steps_per_unit)];
  }
};

/// Compound-Poisson increment over dt: draws n ~ Poisson(lambda dt) then
/// z ~ N(0, 1) and returns n nu + sqrt(n) gamma z.
double sample_jump_increment(const MjdParams& params, double dt, RandomStream& rng);

/// Path `stream` of the master seed in `config`; the config's mode is ignored.
SimPath simulate_vanilla(const ParamSchedule& schedule, double s0, const SolverConfig& config,
                         std::uint64_t stream = 0);
SimPath simulate_restart(const ParamSchedule& schedule, double s0, const SolverConfig& config,
                         std::uint64_t stream = 0);
/// Dispatches on config.mode.
SimPath simulate(const ParamSchedule& schedule, double s0, const SolverConfig& config,
                 std::uint64_t stream = 0);

/// ln S at integer times 1..T for paths first_stream..first_stream+n_paths-1,
/// row-major (n_paths x T). Paths run in parallel; output is scheduling-free.
std::vector<double> simulate_integer_log_values(const ParamSchedule& schedule, double s0,
                                                const SolverConfig& config, std::size_t n_paths,
                                                std::uint64_t first_stream = 0);

enum class TestFunction { identity, log };
TestFunction parse_test_function(std::string_view name);

struct WeakErrorRow {
  int tau = 0;
  double mc_mean = 0.0;     // Monte Carlo mean of g(S_bar_tau)
  double exact = 0.0;       // closed-form E[g(S_tau)]
  double error = 0.0;       // |mc_mean - exact|
  double std_error = 0.0;   // Monte Carlo standard error of mc_mean
};

/// Per-integer-time weak error of the solver in `config` against the closed
/// forms: conditional_mean for g = identity, ln s0 + E[ln(S/S0)] for g = log.
std::vector<WeakErrorRow> empirical_weak_error(const ParamSchedule& schedule, double s0,
                                               const SolverConfig& config, std::size_t n_paths,
                                               TestFunction g);

/// Long-format CSV: path_id,time,value,jump_count.
void write_paths_csv(std::ostream& out, std::span<const SimPath> paths);

}  // namespace nmjd
