// SPDX-License-Identifier: Apache-2.0
#include "nmjd/neural.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "nmjd/error.hpp"
#include "nmjd/io.hpp"
#include "nmjd/parallel.hpp"
#include "nmjd/rng.hpp"

namespace nmjd {
namespace {

constexpr char kBlobMagic[8] = {'N', 'M', 'J', 'D', 'W', 'T', '0', '1'};
constexpr int kCheckpointVersion = 1;

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// Derivatives of the five output maps with respect to their raw inputs.
struct MapSlopes {
  double mu, sigma, lambda, nu, gamma;
};

MapSlopes map_slopes(const double* raw, bool jumps_enabled) {
  MapSlopes s;
  s.mu = std::abs(raw[0]) <= kMuBound ? 1.0 : 0.0;
  s.sigma = sigmoid(raw[1]);
  s.lambda = jumps_enabled && softplus(raw[2]) < kLambdaCap ? sigmoid(raw[2]) : 0.0;
  s.nu = std::abs(raw[3]) <= kNuBound ? 1.0 : 0.0;
  s.gamma = sigmoid(raw[4]);
  return s;
}

// A flat map blocks the upstream derivative even where it is unbounded
// (the lambda derivative at lambda = 0 can overflow).
double chain(double upstream, double slope) { return slope == 0.0 ? 0.0 : upstream * slope; }

MjdParams map_step(const double* raw, bool jumps_enabled) {
  for (int j = 0; j < 5; ++j) {
    if (!std::isfinite(raw[j])) throw NumericalError("network produced a non-finite output");
  }
  const double lambda = jumps_enabled ? std::min(softplus(raw[2]), kLambdaCap) : 0.0;
  return MjdParams(std::clamp(raw[0], -kMuBound, kMuBound), softplus(raw[1]) + kScaleOffset,
                   lambda, std::clamp(raw[3], -kNuBound, kNuBound),
                   softplus(raw[4]) + kScaleOffset);
}

template <class T>
T required(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw DataError(std::string("network config: missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(std::string("network config: field '") + key + "' has the wrong type");
  }
}

// Per-step terms and anchors shared by the loss and its gradient.
struct Forward {
  std::vector<MjdParams> steps;
  std::vector<double> ln_prev;  // anchor of each step's likelihood
  std::vector<double> s_hat;    // conditional means S_hat_1..S_hat_T
};

Forward run_forward(std::span<const double> raw, const NormalizedWindow& w,
                    const LossOptions& o) {
  const std::size_t horizon = raw.size() / 5;
  if (w.targets.size() != horizon) {
    throw std::invalid_argument("window has " + std::to_string(w.targets.size()) +
                                " targets, model horizon is " + std::to_string(horizon));
  }
  Forward f;
  f.steps.reserve(horizon);
  f.ln_prev.resize(horizon);
  f.s_hat.resize(horizon);
  double cum_mu = 0.0;
  const double ln_s0 = std::log(w.s0);
  for (std::size_t t = 0; t < horizon; ++t) {
    f.steps.push_back(map_step(raw.data() + 5 * t, o.jumps_enabled));
    if (o.anchor == Anchor::mean_bootstrapped) {
      f.ln_prev[t] = ln_s0 + cum_mu;
    } else {
      f.ln_prev[t] = t == 0 ? ln_s0 : std::log(w.targets[t - 1]);
    }
    cum_mu += f.steps.back().mu();
    f.s_hat[t] = w.s0 * std::exp(cum_mu);
  }
  return f;
}

void check_finite(double v, std::size_t step) {
  if (!std::isfinite(v)) {
    throw NumericalError("non-finite loss at step " + std::to_string(step + 1));
  }
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint blob truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_doubles(std::ostream& out, const std::vector<double>& xs) {
  for (double x : xs) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    write_u64(out, bits);
  }
}

std::vector<double> read_doubles(std::istream& in, std::size_t n) {
  std::vector<double> xs(n);
  for (auto& x : xs) {
    const std::uint64_t bits = read_u64(in);
    std::memcpy(&x, &bits, sizeof x);
  }
  return xs;
}

std::filesystem::path blob_path(const std::filesystem::path& manifest) {
  auto p = manifest;
  p += ".bin";
  return p;
}

}  // namespace

// ---- config ---------------------------------------------------------------

void NetworkConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& what) {
    throw std::invalid_argument("network config: " + field + " " + what);
  };
  if (past_length < 1) fail("past_length", "must be >= 1");
  if (context_width < 0) fail("context_width", "must be >= 0");
  if (hidden_sizes.empty()) fail("hidden_sizes", "must be non-empty");
  for (int h : hidden_sizes) {
    if (h < 1) fail("hidden_sizes", "entries must be >= 1");
  }
  if (horizon < 1) fail("horizon", "must be >= 1");
  if (activation != "tanh") fail("activation", "must be tanh");
  if (!(omega >= 0.0)) fail("omega", "must be >= 0");
  if (kappa < 0) fail("kappa", "must be >= 0");
  if (!(learning_rate > 0.0)) fail("learning_rate", "must be > 0");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (max_epochs < 0) fail("max_epochs", "must be >= 0");
  if (patience < 1) fail("patience", "must be >= 1");
  if (!(clip_norm > 0.0)) fail("clip_norm", "must be > 0");
  if (!(output_init_scale >= 0.0)) fail("output_init_scale", "must be >= 0");
}

nlohmann::json to_json(const NetworkConfig& c) {
  return {{"past_length", c.past_length},
          {"context_width", c.context_width},
          {"hidden_sizes", c.hidden_sizes},
          {"horizon", c.horizon},
          {"activation", c.activation},
          {"omega", c.omega},
          {"kappa", c.kappa},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"clip_norm", c.clip_norm},
          {"output_init_scale", c.output_init_scale},
          {"seed", c.seed},
          {"jumps_enabled", c.jumps_enabled}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw DataError("network config: expected a JSON object");
  NetworkConfig c;
  c.past_length = required<int>(j, "past_length");
  c.context_width = required<int>(j, "context_width");
  c.hidden_sizes = required<std::vector<int>>(j, "hidden_sizes");
  c.horizon = required<int>(j, "horizon");
  c.activation = required<std::string>(j, "activation");
  c.omega = required<double>(j, "omega");
  c.kappa = required<int>(j, "kappa");
  c.learning_rate = required<double>(j, "learning_rate");
  c.batch_size = required<int>(j, "batch_size");
  c.max_epochs = required<int>(j, "max_epochs");
  c.patience = required<int>(j, "patience");
  c.clip_norm = required<double>(j, "clip_norm");
  c.output_init_scale = required<double>(j, "output_init_scale");
  c.seed = required<std::uint64_t>(j, "seed");
  c.jumps_enabled = required<bool>(j, "jumps_enabled");
  c.validate();
  return c;
}

// ---- checkpoint -----------------------------------------------------------

Mlp ModelCheckpoint::network() const {
  return Mlp(config.input_width(), config.hidden_sizes, config.output_width());
}

ModelCheckpoint ModelCheckpoint::initialize(const NetworkConfig& config,
                                            NormalizationTable normalization) {
  config.validate();
  ModelCheckpoint c;
  c.config = config;
  c.normalization = std::move(normalization);
  c.weights = c.network().initialize(derive_seed(config.seed, 0x696e6974ull),
                                     config.output_init_scale);
  c.meta.seed = config.seed;
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& ckpt) {
  const Mlp net = ckpt.network();
  if (ckpt.weights.size() != net.parameter_count()) {
    throw std::invalid_argument("save_checkpoint: weight count does not match the layout");
  }
  const bool moments = ckpt.optimizer.m.size() == ckpt.weights.size() &&
                       ckpt.optimizer.v.size() == ckpt.weights.size();
  const auto blob = blob_path(path);
  {
    std::ofstream out(blob, std::ios::binary);
    if (!out) throw DataError("cannot write " + blob.string());
    out.write(kBlobMagic, sizeof kBlobMagic);
    write_u64(out, ckpt.weights.size());
    write_u64(out, moments ? 1 : 0);
    write_doubles(out, ckpt.weights);
    if (moments) {
      write_doubles(out, ckpt.optimizer.m);
      write_doubles(out, ckpt.optimizer.v);
    }
  }

  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : net.layers()) {
    layers.push_back({{"in", l.in},
                      {"out", l.out},
                      {"weight_offset", l.weight_offset},
                      {"bias_offset", l.bias_offset},
                      {"activation", &l == &net.layers().back() ? "linear" : "tanh"}});
  }
  nlohmann::json meta = {{"epoch", ckpt.meta.epoch},
                         {"seed", ckpt.meta.seed},
                         {"diverged", ckpt.meta.diverged}};
  meta["best_validation_loss"] = std::isfinite(ckpt.meta.best_validation_loss)
                                     ? nlohmann::json(ckpt.meta.best_validation_loss)
                                     : nlohmann::json(nullptr);
  const nlohmann::json manifest = {
      {"format", "nmjd-checkpoint"},
      {"version", kCheckpointVersion},
      {"config", to_json(ckpt.config)},
      {"parameter_count", ckpt.weights.size()},
      {"layers", layers},
      {"normalization", to_json(ckpt.normalization)},
      {"pipeline", ckpt.pipeline},
      {"train_meta", meta},
      {"optimizer", {{"step", ckpt.optimizer.step}, {"moments", moments}}},
      {"blob", blob.filename().string()},
      {"blob_hash", io::file_hash(blob)}};
  io::write_json(path, manifest);
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("checkpoint not found: " + path.string());
  const auto j = io::read_json(path);
  if (j.value("format", "") != "nmjd-checkpoint") throw DataError("not a checkpoint: " + path.string());
  if (j.value("version", 0) != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version in " + path.string());
  }
  ModelCheckpoint c;
  c.config = network_config_from_json(j.at("config"));
  c.normalization = normalization_from_json(j.at("normalization"));
  c.pipeline = j.value("pipeline", nlohmann::json::object());
  const auto& meta = j.at("train_meta");
  c.meta.epoch = meta.at("epoch").get<int>();
  c.meta.seed = meta.at("seed").get<std::uint64_t>();
  c.meta.diverged = meta.at("diverged").get<bool>();
  c.meta.best_validation_loss = meta.at("best_validation_loss").is_null()
                                    ? std::numeric_limits<double>::infinity()
                                    : meta.at("best_validation_loss").get<double>();
  c.optimizer.step = j.at("optimizer").at("step").get<long long>();

  const auto blob = path.parent_path() / j.at("blob").get<std::string>();
  if (io::file_hash(blob) != j.at("blob_hash").get<std::string>()) {
    throw DataError("checkpoint blob hash mismatch: " + blob.string());
  }
  std::ifstream in(blob, std::ios::binary);
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kBlobMagic, sizeof magic) != 0) {
    throw DataError("bad checkpoint blob header: " + blob.string());
  }
  const std::uint64_t n = read_u64(in);
  const bool moments = read_u64(in) != 0;
  const std::size_t expected = c.network().parameter_count();
  if (n != expected || j.at("parameter_count").get<std::size_t>() != expected) {
    throw DataError("checkpoint weight count " + std::to_string(n) + " does not match layout (" +
                    std::to_string(expected) + ")");
  }
  c.weights = read_doubles(in, n);
  if (moments) {
    c.optimizer.m = read_doubles(in, n);
    c.optimizer.v = read_doubles(in, n);
  }
  return c;
}

// ---- forward map ----------------------------------------------------------

NormalizedWindow normalize_window(const SeriesWindow& w, const NetworkConfig& config) {
  if (w.past.size() != static_cast<std::size_t>(config.past_length)) {
    throw std::invalid_argument("window past length " + std::to_string(w.past.size()) +
                                " does not match model input " +
                                std::to_string(config.past_length));
  }
  if (w.context.size() != static_cast<std::size_t>(config.context_width)) {
    throw std::invalid_argument("window context width " + std::to_string(w.context.size()) +
                                " does not match model " + std::to_string(config.context_width));
  }
  if (!w.future.empty() && w.future.size() != static_cast<std::size_t>(config.horizon)) {
    throw std::invalid_argument("window future length does not match model horizon");
  }
  NormalizedWindow n;
  n.input.reserve(static_cast<std::size_t>(config.input_width()));
  auto norm = [&](double v) { return normalize_value(v, w.norm_scale, w.norm_floor); };
  for (double v : w.past) n.input.push_back(std::log(norm(v)));
  n.input.insert(n.input.end(), w.context.begin(), w.context.end());
  n.s0 = norm(w.past.back());
  for (double v : w.future) n.targets.push_back(norm(v));
  return n;
}

ParamSchedule schedule_from_outputs(std::span<const double> raw, bool jumps_enabled) {
  if (raw.empty() || raw.size() % 5 != 0) {
    throw std::invalid_argument("schedule_from_outputs: output size must be a positive multiple of 5");
  }
  std::vector<MjdParams> steps;
  for (std::size_t t = 0; t < raw.size() / 5; ++t) steps.push_back(map_step(raw.data() + 5 * t, jumps_enabled));
  return ParamSchedule(std::move(steps));
}

ParamSchedule predict_schedule(const Mlp& net, std::span<const double> weights,
                               const NetworkConfig& config, const NormalizedWindow& window) {
  MlpTape tape;
  net.forward(weights, window.input, tape);
  return schedule_from_outputs(tape.values.back(), config.jumps_enabled);
}

ParamSchedule predict_schedule(const ModelCheckpoint& ckpt, const SeriesWindow& window) {
  return predict_schedule(ckpt.network(), ckpt.weights, ckpt.config,
                          normalize_window(window, ckpt.config));
}

// ---- loss and gradient ----------------------------------------------------

LossOptions loss_options(const NetworkConfig& config) {
  LossOptions o;
  o.omega = config.omega;
  o.kappa = config.kappa;
  o.jumps_enabled = config.jumps_enabled;
  return o;
}

LossBreakdown window_loss(const Mlp& net, std::span<const double> weights,
                          const NormalizedWindow& window, const LossOptions& options) {
  MlpTape tape;
  net.forward(weights, window.input, tape);
  const Forward f = run_forward(tape.values.back(), window, options);
  const std::size_t horizon = f.steps.size();

  LossBreakdown out;
  out.per_step.resize(horizon);
  out.log_likelihood.resize(horizon);
  out.regression.resize(horizon);
  auto step = [&](std::size_t t) {
    const double psi = one_step_log_density(f.steps[t], f.ln_prev[t], std::log(window.targets[t]),
                                            1.0, options.kappa);
    const double diff = window.targets[t] - f.s_hat[t];
    out.log_likelihood[t] = psi;
    out.regression[t] = diff * diff;
    out.per_step[t] = -psi + options.omega * diff * diff;
  };
  if (options.parallel_steps) {
    parallel_for(horizon, step);
  } else {
    for (std::size_t t = 0; t < horizon; ++t) step(t);
  }
  for (std::size_t t = 0; t < horizon; ++t) {
    check_finite(out.per_step[t], t);
    out.total += out.per_step[t];
  }
  return out;
}

LossBreakdown window_loss(const ModelCheckpoint& ckpt, const SeriesWindow& window, double omega,
                          int kappa) {
  LossOptions o = loss_options(ckpt.config);
  o.omega = omega;
  o.kappa = kappa;
  return window_loss(ckpt.network(), ckpt.weights, normalize_window(window, ckpt.config), o);
}

double window_loss_gradient(const Mlp& net, std::span<const double> weights,
                            const NormalizedWindow& window, const LossOptions& options,
                            std::span<double> grad) {
  MlpTape tape;
  net.forward(weights, window.input, tape);
  const auto& raw = tape.values.back();
  const Forward f = run_forward(raw, window, options);
  const std::size_t horizon = f.steps.size();
  const bool boot = options.anchor == Anchor::mean_bootstrapped;

  // d(loss)/d(mu_j) collects its own step plus every later anchor and mean,
  // since ln S_hat_t = ln s0 + sum_{j <= t} mu_j.
  std::vector<double> d_raw(raw.size(), 0.0);
  std::vector<double> d_mu_own(horizon), d_anchor(horizon), d_mean(horizon);
  double total = 0.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    const auto g = one_step_log_density_gradient(f.steps[t], f.ln_prev[t],
                                                 std::log(window.targets[t]), 1.0, options.kappa);
    const double diff = window.targets[t] - f.s_hat[t];
    const double term = -g.value + options.omega * diff * diff;
    check_finite(term, t);
    total += term;

    const MapSlopes s = map_slopes(raw.data() + 5 * t, options.jumps_enabled);
    double* d = d_raw.data() + 5 * t;
    d[1] = chain(-g.d_sigma, s.sigma);
    d[2] = chain(-g.d_lambda, s.lambda);
    d[3] = chain(-g.d_nu, s.nu);
    d[4] = chain(-g.d_gamma, s.gamma);
    d_mu_own[t] = -g.d_mu;
    d_anchor[t] = boot ? -g.d_ln_prev : 0.0;
    d_mean[t] = -2.0 * options.omega * diff * f.s_hat[t];
  }
  // Suffix sums: anchors of steps t > j and means of steps t >= j.
  double later_anchor = 0.0, later_mean = 0.0;
  for (std::size_t j = horizon; j-- > 0;) {
    later_mean += d_mean[j];
    const double d_mu = d_mu_own[j] + later_anchor + later_mean;
    later_anchor += d_anchor[j];
    d_raw[5 * j] = chain(d_mu, map_slopes(raw.data() + 5 * j, options.jumps_enabled).mu);
  }
  net.backward(weights, tape, d_raw, grad);
  return total;
}

std::vector<double> gradient(const ModelCheckpoint& ckpt, const SeriesWindow& window,
                             double omega, int kappa) {
  LossOptions o = loss_options(ckpt.config);
  o.omega = omega;
  o.kappa = kappa;
  const Mlp net = ckpt.network();
  std::vector<double> grad(net.parameter_count(), 0.0);
  window_loss_gradient(net, ckpt.weights, normalize_window(window, ckpt.config), o, grad);
  return grad;
}

double mean_loss(const Mlp& net, std::span<const double> weights,
                 const std::vector<NormalizedWindow>& windows, const LossOptions& options) {
  if (windows.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::vector<double> losses(windows.size());
  parallel_for(windows.size(), [&](std::size_t i) {
    losses[i] = window_loss(net, weights, windows[i], options).total;
  });
  double s = 0.0;
  for (double l : losses) s += l;
  return s / static_cast<double>(windows.size());
}

// ---- training -------------------------------------------------------------

TrainResult train(const std::vector<SeriesWindow>& train_windows,
                  const std::vector<SeriesWindow>& valid_windows, const NetworkConfig& config,
                  const NormalizationTable& normalization, const ModelCheckpoint* resume,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_windows.empty()) throw DataError("train: training split is empty");
  if (resume) {
    // Only the epoch budget may change on resume.
    auto a = to_json(resume->config), b = to_json(config);
    a.erase("max_epochs");
    b.erase("max_epochs");
    if (a != b) throw std::invalid_argument("train: resume checkpoint config differs from config");
  }

  std::vector<NormalizedWindow> tr, va;
  for (const auto& w : train_windows) tr.push_back(normalize_window(w, config));
  for (const auto& w : valid_windows) va.push_back(normalize_window(w, config));
  const auto& early = va.empty() ? tr : va;

  ModelCheckpoint cur = resume ? *resume : ModelCheckpoint::initialize(config, normalization);
  cur.config = config;
  const Mlp net = cur.network();
  const std::size_t n_params = net.parameter_count();
  if (cur.optimizer.m.size() != n_params || cur.optimizer.v.size() != n_params) {
    cur.optimizer.m.assign(n_params, 0.0);
    cur.optimizer.v.assign(n_params, 0.0);
    cur.optimizer.step = 0;
  }
  const LossOptions opts = loss_options(config);

  TrainResult result;
  EpochRecord start{cur.meta.epoch, mean_loss(net, cur.weights, tr, opts),
                    mean_loss(net, cur.weights, early, opts)};
  result.curve.push_back(start);
  if (on_epoch) on_epoch(start);
  if (!resume || !std::isfinite(cur.meta.best_validation_loss)) {
    cur.meta.best_validation_loss = start.valid_loss;
  }
  result.best = cur;

  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::vector<std::vector<double>> grads(std::min(batch, tr.size()), std::vector<double>(n_params));
  std::vector<double> losses(grads.size());
  std::vector<double> g(n_params);
  std::vector<std::size_t> order(tr.size());
  int since_best = 0;

  for (int e = 1; e <= config.max_epochs; ++e) {
    const int epoch = cur.meta.epoch + 1;
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RandomStream rng(derive_seed(config.seed, 0x65706f6368000000ull + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform() * static_cast<double>(i));
      std::swap(order[i - 1], order[std::min(j, i - 1)]);
    }

    double epoch_loss = 0.0;
    bool diverged = false;
    for (std::size_t b0 = 0; b0 < order.size() && !diverged; b0 += batch) {
      const std::size_t nb = std::min(batch, order.size() - b0);
      try {
        parallel_for(nb, [&](std::size_t k) {
          std::fill(grads[k].begin(), grads[k].end(), 0.0);
          losses[k] = window_loss_gradient(net, cur.weights, tr[order[b0 + k]], opts, grads[k]);
        });
      } catch (const NumericalError&) {
        diverged = true;
        break;
      }
      std::fill(g.begin(), g.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < nb; ++k) {
        batch_loss += losses[k];
        for (std::size_t p = 0; p < n_params; ++p) g[p] += grads[k][p];
      }
      double norm2 = 0.0;
      for (double& x : g) {
        x /= static_cast<double>(nb);
        norm2 += x * x;
      }
      if (!std::isfinite(batch_loss) || !std::isfinite(norm2)) {
        diverged = true;
        break;
      }
      epoch_loss += batch_loss;
      const double norm = std::sqrt(norm2);
      const double clip = norm > config.clip_norm ? config.clip_norm / norm : 1.0;
      auto& st = cur.optimizer;
      ++st.step;
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(st.step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(st.step));
      for (std::size_t p = 0; p < n_params; ++p) {
        const double gp = g[p] * clip;
        st.m[p] = beta1 * st.m[p] + (1.0 - beta1) * gp;
        st.v[p] = beta2 * st.v[p] + (1.0 - beta2) * gp * gp;
        cur.weights[p] -= config.learning_rate * (st.m[p] / c1) / (std::sqrt(st.v[p] / c2) + eps);
      }
    }

    double valid = std::numeric_limits<double>::quiet_NaN();
    if (!diverged) {
      try {
        valid = mean_loss(net, cur.weights, early, opts);
      } catch (const NumericalError&) {
        diverged = true;
      }
    }
    if (diverged || !std::isfinite(valid)) {
      result.diverged = true;
      result.best.meta.diverged = true;
      break;
    }
    cur.meta.epoch = epoch;
    const EpochRecord rec{epoch, epoch_loss / static_cast<double>(tr.size()), valid};
    result.curve.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (valid < cur.meta.best_validation_loss) {
      cur.meta.best_validation_loss = valid;
      result.best = cur;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  // The returned checkpoint records how far training went.
  result.best.meta.epoch = cur.meta.epoch;
  result.best.meta.best_validation_loss = cur.meta.best_validation_loss;
  return result;
}

void write_training_curve_csv(std::ostream& out, const std::vector<EpochRecord>& curve) {
  out << "epoch,train_loss,valid_loss\n";
  for (const auto& r : curve) {
    out << r.epoch << ',' << io::format_double(r.train_loss) << ','
        << io::format_double(r.valid_loss) << '\n';
  }
}

}  // namespace nmjd
