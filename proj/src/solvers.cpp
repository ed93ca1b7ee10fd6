// SPDX-License-Identifier: Apache-2.0
#include "nmjd/solvers.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

#include "nmjd/io.hpp"
#include "nmjd/parallel.hpp"

namespace nmjd {

SolverMode parse_solver_mode(std::string_view name) {
  if (name == "vanilla") return SolverMode::vanilla;
  if (name == "restart") return SolverMode::restart;
  throw std::invalid_argument("unknown solver '" + std::string(name) + "'");
}

std::string_view to_string(SolverMode mode) {
  return mode == SolverMode::vanilla ? "vanilla" : "restart";
}

TestFunction parse_test_function(std::string_view name) {
  if (name == "identity") return TestFunction::identity;
  if (name == "log") return TestFunction::log;
  throw std::invalid_argument("unsupported test function '" + std::string(name) + "'");
}

namespace {

struct JumpDraw {
  int count;
  double increment;
};

// Always consumes the Poisson draw and one normal, jump or not.
JumpDraw draw_jump(const MjdParams& params, double dt, RandomStream& rng) {
  const int n = rng.poisson(params.lambda() * dt);
  const double z = rng.normal();
  if (n == 0) return {0, 0.0};
  return {n, n * params.nu() + std::sqrt(static_cast<double>(n)) * params.gamma() * z};
}

}  // namespace

double sample_jump_increment(const MjdParams& params, double dt, RandomStream& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("sample_jump_increment: dt must be > 0");
  return draw_jump(params, dt, rng).increment;
}

namespace {

void check_run(double s0, const SolverConfig& config) {
  if (!(s0 > 0.0) || !std::isfinite(s0)) throw std::invalid_argument("solver: s0 must be > 0");
  if (config.steps_per_unit < 1) throw std::invalid_argument("solver: steps_per_unit must be >= 1");
}

// Restart anchors for intervals 1..T (anchor of interval tau is the analytic
// log-state at time tau - 1).
std::vector<double> restart_anchors(const ParamSchedule& schedule, double s0,
                                    RestartAnchor kind) {
  std::vector<double> anchors(static_cast<std::size_t>(schedule.horizon()));
  const double ln_s0 = std::log(s0);
  for (int tau = 1; tau <= schedule.horizon(); ++tau) {
    const double t = tau - 1.0;
    anchors[static_cast<std::size_t>(tau - 1)] =
        kind == RestartAnchor::log_of_mean ? std::log(conditional_mean(schedule, s0, t))
                                           : ln_s0 + log_return_moments(schedule, t).mean;
  }
  return anchors;
}

// Steps one path over the whole grid, calling visit(i, ln_value, jumps) after
// every fine step i = 1..M*T.
template <class Visit>
void run_path(const ParamSchedule& schedule, double s0, const SolverConfig& config,
              SolverMode mode, const std::vector<double>& anchors, RandomStream& rng,
              Visit&& visit) {
  const int m = config.steps_per_unit;
  const double dt = 1.0 / m;
  const double sqrt_dt = std::sqrt(dt);
  double state = std::log(s0);
  const int total = m * schedule.horizon();
  for (int i = 1; i <= total; ++i) {
    const int tau = (i - 1) / m + 1;
    const MjdParams& p = schedule.at(tau);
    const double drift = p.log_drift() * dt;
    const double diffusion = p.sigma() * sqrt_dt * rng.normal();
    const JumpDraw jump = draw_jump(p, dt, rng);
    const bool restart = mode == SolverMode::restart && (i - 1) % m == 0;
    const double base = restart ? anchors[static_cast<std::size_t>(tau - 1)] : state;
    state = base + drift + diffusion + jump.increment;
    visit(i, state, jump.count);
  }
}

SimPath simulate_mode(const ParamSchedule& schedule, double s0, const SolverConfig& config,
                      SolverMode mode, std::uint64_t stream) {
  check_run(s0, config);
  const int m = config.steps_per_unit;
  const std::size_t n = static_cast<std::size_t>(m) * schedule.horizon() + 1;
  SimPath path;
  path.seed = {config.seed, stream};
  path.times.resize(n);
  path.log_values.resize(n);
  path.jump_counts.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) path.times[i] = static_cast<double>(i) / m;
  path.log_values[0] = std::log(s0);
  const auto anchors = mode == SolverMode::restart ? restart_anchors(schedule, s0, config.anchor)
                                                   : std::vector<double>{};
  RandomStream rng(config.seed, stream);
  run_path(schedule, s0, config, mode, anchors, rng, [&](int i, double v, int jumps) {
    path.log_values[static_cast<std::size_t>(i)] = v;
    path.jump_counts[static_cast<std::size_t>(i)] = jumps;
  });
  return path;
}

}  // namespace

SimPath simulate_vanilla(const ParamSchedule& schedule, double s0, const SolverConfig& config,
                         std::uint64_t stream) {
  return simulate_mode(schedule, s0, config, SolverMode::vanilla, stream);
}

SimPath simulate_restart(const ParamSchedule& schedule, double s0, const SolverConfig& config,
                         std::uint64_t stream) {
  return simulate_mode(schedule, s0, config, SolverMode::restart, stream);
}

SimPath simulate(const ParamSchedule& schedule, double s0, const SolverConfig& config,
                 std::uint64_t stream) {
  return simulate_mode(schedule, s0, config, config.mode, stream);
}

std::vector<double> simulate_integer_log_values(const ParamSchedule& schedule, double s0,
                                                const SolverConfig& config, std::size_t n_paths,
                                                std::uint64_t first_stream) {
  check_run(s0, config);
  const auto horizon = static_cast<std::size_t>(schedule.horizon());
  const int m = config.steps_per_unit;
  std::vector<double> out(n_paths * horizon);
  const auto anchors = config.mode == SolverMode::restart
                           ? restart_anchors(schedule, s0, config.anchor)
                           : std::vector<double>{};
  parallel_for(n_paths, [&](std::size_t p) {
    RandomStream rng(config.seed, first_stream + p);
    double* row = out.data() + p * horizon;
    run_path(schedule, s0, config, config.mode, anchors, rng, [&](int i, double v, int) {
      if (i % m == 0) row[static_cast<std::size_t>(i / m - 1)] = v;
    });
  });
  return out;
}

std::vector<WeakErrorRow> empirical_weak_error(const ParamSchedule& schedule, double s0,
                                               const SolverConfig& config, std::size_t n_paths,
                                               TestFunction g) {
  if (n_paths < 2) throw std::invalid_argument("empirical_weak_error: need at least 2 paths");
  const auto horizon = static_cast<std::size_t>(schedule.horizon());
  const auto values = simulate_integer_log_values(schedule, s0, config, n_paths);
  std::vector<WeakErrorRow> rows;
  for (std::size_t tau = 1; tau <= horizon; ++tau) {
    std::vector<double> xs(n_paths);
    double sum = 0.0;
    for (std::size_t p = 0; p < n_paths; ++p) {
      const double lv = values[p * horizon + tau - 1];
      xs[p] = g == TestFunction::identity ? std::exp(lv) : lv;
      sum += xs[p];
    }
    const double n = static_cast<double>(n_paths);
    const double mean = sum / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double var = ss / (n - 1.0);
    WeakErrorRow row;
    row.tau = static_cast<int>(tau);
    row.mc_mean = mean;
    row.exact = g == TestFunction::identity
                    ? conditional_mean(schedule, s0, static_cast<double>(tau))
                    : std::log(s0) + log_return_moments(schedule, static_cast<double>(tau)).mean;
    row.error = std::abs(mean - row.exact);
    row.std_error = std::sqrt(var / n);
    rows.push_back(row);
  }
  return rows;
}

void write_paths_csv(std::ostream& out, std::span<const SimPath> paths) {
  out << "path_id,time,value,jump_count\n";
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const auto& path = paths[p];
    for (std::size_t i = 0; i < path.times.size(); ++i) {
      out << p << ',' << io::format_double(path.times[i]) << ','
          << io::format_double(std::exp(path.log_values[i])) << ',' << path.jump_counts[i]
          << '\n';
    }
  }
}

}  // namespace nmjd
