// SPDX-License-Identifier: Apache-2.0
//
// Learned parameter predictor: an MLP maps a normalized log-history (plus
// optional context) to a full piecewise schedule of jump-diffusion parameters
// in one forward pass, trained on the truncated likelihood with
// conditional-mean anchoring and a mean-regression penalty.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nmjd/data.hpp"
#include "nmjd/likelihood.hpp"
#include "nmjd/mlp.hpp"
#include "nmjd/params.hpp"

namespace nmjd {

inline constexpr double kMuBound = 3.0;
inline constexpr double kNuBound = 2.0;
inline constexpr double kScaleOffset = 1e-4;  // added to softplus for sigma and gamma

struct NetworkConfig {
  int past_length = 10;  // T_p + 1 history values
  int context_width = 0;
  std::vector<int> hidden_sizes{64, 64};
  int horizon = 10;
  std::string activation = "tanh";
  double omega = 1.0;
  int kappa = kDefaultKappa;
  double learning_rate = 1e-3;
  int batch_size = 64;
  int max_epochs = 30;
  int patience = 5;
  double clip_norm = 10.0;
  double output_init_scale = 0.1;
  std::uint64_t seed = 0;
  /// When false the lambda head is ignored and lambda = 0 (BS ablation).
  bool jumps_enabled = true;

  int input_width() const { return past_length + context_width; }
  int output_width() const { return 5 * horizon; }
  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const NetworkConfig& c);
/// Every field is required; a missing one raises DataError naming it.
NetworkConfig network_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
};

struct TrainMeta {
  int epoch = 0;
  double best_validation_loss = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
  bool diverged = false;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long long step = 0;
};

struct ModelCheckpoint {
  NetworkConfig config;
  std::vector<double> weights;
  NormalizationTable normalization;
  TrainMeta meta;
  AdamState optimizer;
  /// Free-form record of the data pipeline the model was trained with.
  nlohmann::json pipeline = nlohmann::json::object();

  Mlp network() const;
  /// Fresh weights from config.seed.
  static ModelCheckpoint initialize(const NetworkConfig& config, NormalizationTable normalization);
};

/// Writes `<path>` (JSON manifest) and `<path>.bin` (versioned little-endian
/// float64 blob of weights, then optimizer moments).
void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

/// A window in the model's normalized units.
struct NormalizedWindow {
  std::vector<double> input;    // ln(normalized past) then context
  double s0 = 1.0;              // normalized S_0
  std::vector<double> targets;  // normalized S_1..S_T (may be empty)
};

NormalizedWindow normalize_window(const SeriesWindow& w, const NetworkConfig& config);

/// Maps 5 T raw outputs (per step: mu, sigma, lambda, nu, gamma) to a schedule.
ParamSchedule schedule_from_outputs(std::span<const double> raw, bool jumps_enabled);

ParamSchedule predict_schedule(const ModelCheckpoint& ckpt, const SeriesWindow& window);
ParamSchedule predict_schedule(const Mlp& net, std::span<const double> weights,
                               const NetworkConfig& config, const NormalizedWindow& window);

struct LossOptions {
  double omega = 1.0;
  int kappa = kDefaultKappa;
  Anchor anchor = Anchor::mean_bootstrapped;
  bool jumps_enabled = true;
  /// Evaluate the per-step terms on worker threads (same result bitwise).
  bool parallel_steps = false;
};

LossOptions loss_options(const NetworkConfig& config);

struct LossBreakdown {
  double total = 0.0;
  std::vector<double> per_step;        // -psi_tau + omega (S_tau - S_hat_tau)^2
  std::vector<double> log_likelihood;  // psi_tau
  std::vector<double> regression;      // (S_tau - S_hat_tau)^2
};

LossBreakdown window_loss(const Mlp& net, std::span<const double> weights,
                          const NormalizedWindow& window, const LossOptions& options);
LossBreakdown window_loss(const ModelCheckpoint& ckpt, const SeriesWindow& window, double omega,
                          int kappa);

/// Adds d(loss)/d(weights) into `grad` and returns the loss.
double window_loss_gradient(const Mlp& net, std::span<const double> weights,
                            const NormalizedWindow& window, const LossOptions& options,
                            std::span<double> grad);
std::vector<double> gradient(const ModelCheckpoint& ckpt, const SeriesWindow& window,
                             double omega, int kappa);

struct TrainResult {
  ModelCheckpoint best;
  std::vector<EpochRecord> curve;  // epoch 0 is the untrained model
  bool diverged = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam with global-norm clipping; early stopping on validation loss. With
/// `resume`, training continues from its weights, optimizer state and best
/// validation loss. Deterministic for a fixed seed at any thread count.
TrainResult train(const std::vector<SeriesWindow>& train_windows,
                  const std::vector<SeriesWindow>& valid_windows, const NetworkConfig& config,
                  const NormalizationTable& normalization, const ModelCheckpoint* resume = nullptr,
                  const EpochCallback& on_epoch = {});

/// Mean loss over windows (parallel, fixed reduction order).
double mean_loss(const Mlp& net, std::span<const double> weights,
                 const std::vector<NormalizedWindow>& windows, const LossOptions& options);

void write_training_curve_csv(std::ostream& out, const std::vector<EpochRecord>& curve);

}  // namespace nmjd
