// SPDX-License-Identifier: Apache-2.0
//
// nmjd: command-line entry points (generate, train, forecast, calibrate,
// evaluate). Data goes to files, logs to stderr. Exit codes: 0 success,
// 2 usage, 3 data error, 4 numerical failure.
#include <climits>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nmjd/calibrate.hpp"
#include "nmjd/data.hpp"
#include "nmjd/error.hpp"
#include "nmjd/forecast.hpp"
#include "nmjd/io.hpp"
#include "nmjd/metrics.hpp"
#include "nmjd/neural.hpp"
#include "nmjd/parallel.hpp"
#include "nmjd/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

void log(const std::string& msg) { std::cerr << "[nmjd] " << msg << '\n'; }

/// Prints the resolved configuration and returns the manifest skeleton.
json begin_command(const std::string& name, const json& config) {
  log(name + " config: " + config.dump());
  return {{"command", name}, {"config", config}, {"inputs", json::object()}, {"outputs", json::object()}};
}

void record_input(json& manifest, const fs::path& p) {
  manifest["inputs"][p.string()] = nmjd::io::file_hash(p);
}

void finish_command(json& manifest, const fs::path& dir, const std::vector<std::string>& files) {
  for (const auto& f : files) manifest["outputs"][f] = nmjd::io::file_hash(dir / f);
  nmjd::io::write_json(dir / "manifest.json", manifest);
  log("wrote " + (dir / "manifest.json").string());
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw nmjd::DataError("cannot write " + p.string());
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw nmjd::DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::vector<nmjd::SeriesWindow> pick_split(nmjd::PreparedDataset& d, const std::string& which) {
  if (which == "train") return d.split.train;
  if (which == "valid") return d.split.valid;
  if (which == "test") return d.split.test;
  throw std::invalid_argument("unknown split '" + which + "'");
}

nmjd::WindowForecast forecast_header(const nmjd::SeriesWindow& w) {
  nmjd::WindowForecast f;
  f.series_id = w.series_id;
  f.segment = w.segment;
  f.offset = w.offset;
  f.anchor_date = w.anchor_date;
  f.truth = w.future;
  return f;
}

// ---- generate -------------------------------------------------------------

struct GenerateArgs {
  int paths = 10000;
  int steps = 100;
  std::uint64_t seed = 0;
  std::string out;
};

int run_generate(const GenerateArgs& a) {
  json manifest = begin_command("generate", {{"paths", a.paths}, {"steps", a.steps}, {"seed", a.seed}});
  const fs::path dir(a.out);
  ensure_dir(dir);
  const auto set = nmjd::generate_synthetic(a.paths, a.steps, a.seed);
  {
    auto out = open_out(dir / "data.csv");
    nmjd::write_series_csv(out, set.series);
  }
  nmjd::io::write_json(dir / "params.json", nmjd::synthetic_sidecar(set));
  manifest["summary"] = {{"series", set.series.size()},
                         {"rows_per_series", a.steps + 1},
                         {"total_jumps", set.total_jumps}};
  finish_command(manifest, dir, {"data.csv", "params.json"});
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string resume;
};

int run_train(const TrainArgs& a) {
  const json file = nmjd::io::read_json(a.config);
  if (!file.contains("pipeline")) throw nmjd::DataError("train config: missing field 'pipeline'");
  if (!file.contains("network")) throw nmjd::DataError("train config: missing field 'network'");
  const auto pipeline = nmjd::pipeline_config_from_json(file.at("pipeline"));
  auto network = nmjd::network_config_from_json(file.at("network"));
  if (a.seed) network.seed = *a.seed;
  if (network.past_length != pipeline.t_past || network.horizon != pipeline.t_future) {
    throw nmjd::DataError("train config: network past_length/horizon must equal pipeline t_past/t_future");
  }
  json config = {{"data", a.data},
                 {"pipeline", nmjd::to_json(pipeline)},
                 {"network", nmjd::to_json(network)},
                 {"resume", a.resume},
                 {"threads", nmjd::max_threads()},
                 {"regression_units", "normalized"},
                 {"loss_anchor", "mean_bootstrapped"}};
  json manifest = begin_command("train", config);
  record_input(manifest, a.data);
  record_input(manifest, a.config);
  const fs::path dir(a.out);
  ensure_dir(dir);

  const auto series = nmjd::read_series_csv(fs::path(a.data), pipeline.grouping);
  std::optional<nmjd::ModelCheckpoint> resume;
  if (!a.resume.empty()) {
    resume = nmjd::load_checkpoint(a.resume);
    record_input(manifest, a.resume);
  }
  auto d = nmjd::prepare_dataset(series, pipeline, resume ? &resume->normalization : nullptr);
  log("windows train/valid/test = " + std::to_string(d.split.train.size()) + "/" +
      std::to_string(d.split.valid.size()) + "/" + std::to_string(d.split.test.size()) +
      ", skipped segments " + std::to_string(d.skipped_segments));
  if (d.fallback_windows > 0) {
    log("warning: " + std::to_string(d.fallback_windows) +
        " windows belong to groups absent from training; global scale used");
  }

  auto result = nmjd::train(d.split.train, d.split.valid, network, d.normalization,
                            resume ? &*resume : nullptr, [](const nmjd::EpochRecord& r) {
                              char buf[128];
                              std::snprintf(buf, sizeof buf, "epoch %d train %.6f valid %.6f",
                                            r.epoch, r.train_loss, r.valid_loss);
                              log(buf);
                            });
  result.best.pipeline = nmjd::to_json(pipeline);
  nmjd::save_checkpoint(dir / "model.json", result.best);
  {
    auto out = open_out(dir / "curve.csv");
    nmjd::write_training_curve_csv(out, result.curve);
  }
  manifest["dataset"] = nmjd::dataset_summary(d);
  manifest["summary"] = {{"epochs_run", result.curve.back().epoch},
                         {"best_validation_loss", result.best.meta.best_validation_loss},
                         {"diverged", result.diverged}};
  finish_command(manifest, dir, {"model.json", "model.json.bin", "curve.csv"});
  if (result.diverged) {
    log("training diverged; the last good checkpoint was written");
    return kExitNumerical;
  }
  return 0;
}

// ---- forecast -------------------------------------------------------------

struct ForecastArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  int k = 10;
  int m = 100;
  std::string solver = "restart";
  std::uint64_t seed = 0;
  std::string out;
};

int run_forecast(const ForecastArgs& a) {
  const auto mode = nmjd::parse_solver_mode(a.solver);
  json manifest = begin_command("forecast", {{"checkpoint", a.checkpoint},
                                             {"data", a.data},
                                             {"split", a.split},
                                             {"k", a.k},
                                             {"m", a.m},
                                             {"solver", a.solver},
                                             {"seed", a.seed},
                                             {"threads", nmjd::max_threads()}});
  const auto ckpt = nmjd::load_checkpoint(a.checkpoint);
  record_input(manifest, a.checkpoint);
  record_input(manifest, a.data);
  const auto pipeline = nmjd::pipeline_config_from_json(ckpt.pipeline);
  const auto series = nmjd::read_series_csv(fs::path(a.data), pipeline.grouping);

  std::vector<nmjd::SeriesWindow> windows;
  if (a.split == "latest") {
    windows = nmjd::latest_windows(series, pipeline.t_past);
    nmjd::apply_normalization(windows, ckpt.normalization);
  } else {
    auto d = nmjd::prepare_dataset(series, pipeline, &ckpt.normalization);
    windows = pick_split(d, a.split);
  }
  const fs::path dir(a.out);
  ensure_dir(dir);

  const nmjd::Mlp net = ckpt.network();
  nmjd::SolverConfig solver;
  solver.steps_per_unit = a.m;
  solver.mode = mode;
  solver.seed = a.seed;
  std::vector<nmjd::WindowForecast> out(windows.size());
  nmjd::parallel_for(windows.size(), [&](std::size_t i) {
    const auto& w = windows[i];
    const auto nw = nmjd::normalize_window(w, ckpt.config);
    const auto schedule = nmjd::predict_schedule(net, ckpt.weights, ckpt.config, nw);
    auto& f = out[i] = forecast_header(w);
    if (a.k > 0) {
      f.bundle = nmjd::make_forecast_bundle(schedule, nw.s0, a.k, solver, ckpt.config.kappa,
                                            static_cast<std::uint64_t>(i) * a.k)
                     .scaled(w.norm_scale);
    } else {
      for (int t = 1; t <= schedule.horizon(); ++t) {
        f.bundle.mean.push_back(nmjd::conditional_mean(schedule, nw.s0, t) * w.norm_scale);
      }
    }
  });
  {
    auto os = open_out(dir / "forecast.csv");
    nmjd::write_forecast_csv(os, out);
  }
  manifest["summary"] = {{"windows", out.size()}};
  finish_command(manifest, dir, {"forecast.csv"});
  return 0;
}

// ---- calibrate ------------------------------------------------------------

struct CalibrateArgs {
  std::string data;
  std::string model = "mjd";
  std::string scope = "window";
  std::string config;
  std::string split = "test";
  int kappa = nmjd::kDefaultKappa;
  int restarts = 8;
  int k = 10;
  int m = 100;
  std::uint64_t seed = 0;
  std::string out;
};

struct FitRecord {
  json record;
  nmjd::MjdParams params{0.0, 1.0, 0.0, 0.0, 1.0};
  bool degenerate = false;
};

FitRecord fit_one(const CalibrateArgs& a, const std::vector<double>& history, std::uint64_t seed) {
  FitRecord r;
  if (a.model == "bs") {
    const auto fit = nmjd::fit_bs(history);
    r.record = nmjd::to_json(fit);
    r.params = nmjd::MjdParams(fit.mu, fit.sigma, 0.0, 0.0, 1.0);
    r.degenerate = fit.degenerate;
  } else {
    nmjd::MjdFitConfig cfg;
    cfg.restarts = a.restarts;
    cfg.seed = seed;
    const auto fit = nmjd::fit_mjd(history, a.kappa, cfg);
    r.record = nmjd::to_json(fit);
    r.params = fit.params;
  }
  return r;
}

int run_calibrate(const CalibrateArgs& a) {
  if (a.model != "bs" && a.model != "mjd") throw std::invalid_argument("--model must be bs or mjd");
  if (a.scope != "window" && a.scope != "series") {
    throw std::invalid_argument("--scope must be window or series");
  }
  json config = {{"data", a.data},   {"model", a.model}, {"scope", a.scope},
                 {"kappa", a.kappa}, {"restarts", a.restarts}, {"seed", a.seed},
                 {"threads", nmjd::max_threads()}};
  std::optional<nmjd::PipelineConfig> pipeline;
  if (a.scope == "window") {
    if (a.config.empty()) throw std::invalid_argument("--config is required with --scope window");
    const json file = nmjd::io::read_json(a.config);
    if (!file.contains("pipeline")) throw nmjd::DataError("calibrate config: missing field 'pipeline'");
    pipeline = nmjd::pipeline_config_from_json(file.at("pipeline"));
    config["pipeline"] = nmjd::to_json(*pipeline);
    config["split"] = a.split;
    config["k"] = a.k;
    config["m"] = a.m;
  }
  json manifest = begin_command("calibrate", config);
  record_input(manifest, a.data);
  const fs::path dir(a.out);
  ensure_dir(dir);

  const auto grouping = pipeline ? pipeline->grouping : nmjd::GroupMode::series;
  const auto series = nmjd::read_series_csv(fs::path(a.data), grouping);
  std::vector<std::string> outputs{"fits.json"};
  std::vector<FitRecord> fits;
  json fit_list = json::array();

  if (a.scope == "series") {
    fits.resize(series.size());
    nmjd::parallel_for(series.size(), [&](std::size_t i) {
      fits[i] = fit_one(a, series[i].values, nmjd::derive_seed(a.seed, i));
      fits[i].record["series_id"] = series[i].id;
      fits[i].record["segment"] = series[i].segment;
    });
  } else {
    auto d = nmjd::prepare_dataset(series, *pipeline);
    const auto windows = pick_split(d, a.split);
    fits.resize(windows.size());
    std::vector<nmjd::WindowForecast> forecasts(windows.size());
    nmjd::parallel_for(windows.size(), [&](std::size_t i) {
      const auto& w = windows[i];
      fits[i] = fit_one(a, w.past, nmjd::derive_seed(a.seed, i));
      fits[i].record["series_id"] = w.series_id;
      fits[i].record["offset"] = w.offset;
      auto& f = forecasts[i] = forecast_header(w);
      if (a.k > 0) {
        f.bundle = nmjd::forecast_stationary(fits[i].params, w.s0(), pipeline->t_future, a.k,
                                             nmjd::derive_seed(a.seed, i), a.m, a.kappa);
      } else {
        const auto sched = nmjd::ParamSchedule::constant(fits[i].params, pipeline->t_future);
        for (int t = 1; t <= pipeline->t_future; ++t) {
          f.bundle.mean.push_back(nmjd::conditional_mean(sched, w.s0(), t));
        }
      }
    });
    auto os = open_out(dir / "forecast.csv");
    nmjd::write_forecast_csv(os, forecasts);
    outputs.push_back("forecast.csv");
  }

  std::size_t degenerate = 0, capped = 0, unconverged = 0;
  for (auto& f : fits) {
    degenerate += f.degenerate ? 1 : 0;
    capped += f.record.value("at_lambda_cap", false) ? 1 : 0;
    unconverged += (a.model == "mjd" && !f.record.value("converged", true)) ? 1 : 0;
    fit_list.push_back(std::move(f.record));
  }
  if (degenerate > 0) {
    log("warning: " + std::to_string(degenerate) +
        " degenerate fits (zero volatility; sigma floored at 1e-6)");
  }
  if (capped > 0) {
    log("warning: " + std::to_string(capped) + " fits reached the jump-intensity cap; refit with a larger --kappa");
  }
  nmjd::io::write_json(dir / "fits.json", {{"model", a.model},
                                          {"kappa", a.kappa},
                                          {"restarts", a.restarts},
                                          {"optimizer", "nelder-mead"},
                                          {"degenerate", degenerate},
                                          {"at_lambda_cap", capped},
                                          {"unconverged", unconverged},
                                          {"fits", fit_list}});
  manifest["summary"] = {{"fits", fits.size()}, {"degenerate", degenerate}};
  finish_command(manifest, dir, outputs);
  return 0;
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::vector<std::string> forecasts;  // name=path
  std::string out;
};

int run_evaluate(const EvaluateArgs& a) {
  json manifest = begin_command("evaluate", {{"forecasts", a.forecasts}, {"threads", nmjd::max_threads()}});
  const fs::path dir(a.out);
  ensure_dir(dir);
  std::vector<std::pair<std::string, nmjd::ProtocolReport>> rows;
  json methods = json::object();
  for (const auto& spec : a.forecasts) {
    const auto eq = spec.find('=');
    const std::string name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
    const fs::path path = eq == std::string::npos ? fs::path(spec) : fs::path(spec.substr(eq + 1));
    std::ifstream in(path);
    if (!in) throw nmjd::DataError("cannot open forecast " + path.string());
    record_input(manifest, path);
    const auto forecasts = nmjd::read_forecast_csv(in);
    if (forecasts.empty()) throw nmjd::DataError("forecast " + path.string() + " has no windows");
    std::vector<nmjd::ForecastBundle> bundles;
    std::vector<std::vector<double>> truths;
    for (const auto& f : forecasts) {
      if (f.truth.empty()) throw nmjd::DataError("forecast " + path.string() + " lacks truth rows");
      bundles.push_back(f.bundle);
      truths.push_back(f.truth);
    }
    const int k = static_cast<int>(bundles.front().k());
    for (const auto& b : bundles) {
      if (static_cast<int>(b.k()) != k) {
        throw nmjd::DataError("forecast " + path.string() + " has differing sample counts (K mismatch)");
      }
    }
    const auto report = nmjd::protocol_metrics(bundles, truths, k);
    methods[name] = nmjd::to_json(report);
    rows.emplace_back(name, report);
  }
  nmjd::io::write_json(dir / "report.json",
                       {{"units", "raw (denormalized)"},
                        {"most_probable",
                         "argmax over the K samples of the model's teacher-forced horizon log-likelihood"},
                        {"methods", methods}});
  {
    auto os = open_out(dir / "table.txt");
    os << nmjd::format_protocol_table(rows);
  }
  finish_command(manifest, dir, {"report.json", "table.txt"});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural jump-diffusion forecasting toolkit"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker thread cap (0 = all cores)");

  std::function<int()> action;

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Simulate the synthetic jump-diffusion dataset");
  g->add_option("--paths", gen.paths, "Number of paths")->check(CLI::Range(1, INT_MAX));
  g->add_option("--steps", gen.steps, "Euler steps over [0, 1]")->check(CLI::Range(1, INT_MAX));
  g->add_option("--seed", gen.seed, "Master seed");
  g->add_option("--out", gen.out, "Output directory")->required();
  g->callback([&] { action = [&] { return run_generate(gen); }; });

  TrainArgs tr;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", "Train the parameter network");
  t->add_option("--data", tr.data, "Series CSV")->required()->check(CLI::ExistingFile);
  t->add_option("--config", tr.config, "Config JSON with pipeline and network sections")
      ->required()
      ->check(CLI::ExistingFile);
  auto* seed_opt = t->add_option("--seed", train_seed, "Override the network seed");
  t->add_option("--out", tr.out, "Output directory")->required();
  t->add_option("--resume", tr.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  t->callback([&] {
    if (seed_opt->count() > 0) tr.seed = train_seed;
    action = [&] { return run_train(tr); };
  });

  ForecastArgs fc;
  auto* f = app.add_subcommand("forecast", "Sample forecasts from a trained network");
  f->add_option("--checkpoint", fc.checkpoint, "Checkpoint manifest")->required();
  f->add_option("--data", fc.data, "Series CSV")->required()->check(CLI::ExistingFile);
  f->add_option("--split", fc.split, "train, valid, test or latest")
      ->check(CLI::IsMember({"train", "valid", "test", "latest"}));
  f->add_option("--k", fc.k, "Sample trajectories per window (0 = mean only)")->check(CLI::Range(0, INT_MAX));
  f->add_option("--m", fc.m, "Solver steps per unit time")->check(CLI::Range(1, INT_MAX));
  f->add_option("--solver", fc.solver, "vanilla or restart")->check(CLI::IsMember({"vanilla", "restart"}));
  f->add_option("--seed", fc.seed, "Sampling seed");
  f->add_option("--out", fc.out, "Output directory")->required();
  f->callback([&] { action = [&] { return run_forecast(fc); }; });

  CalibrateArgs ca;
  auto* c = app.add_subcommand("calibrate", "Fit stationary BS or MJD baselines");
  c->add_option("--data", ca.data, "Series CSV")->required()->check(CLI::ExistingFile);
  c->add_option("--model", ca.model, "bs or mjd")->check(CLI::IsMember({"bs", "mjd"}));
  c->add_option("--scope", ca.scope, "window (fit each window's past) or series")
      ->check(CLI::IsMember({"window", "series"}));
  c->add_option("--config", ca.config, "Config JSON with a pipeline section")->check(CLI::ExistingFile);
  c->add_option("--split", ca.split, "train, valid or test")->check(CLI::IsMember({"train", "valid", "test"}));
  c->add_option("--kappa", ca.kappa, "Truncation order")->check(CLI::Range(0, 200));
  c->add_option("--restarts", ca.restarts, "Optimizer starts")->check(CLI::Range(1, 1000));
  c->add_option("--k", ca.k, "Sample trajectories per window (0 = mean only)")->check(CLI::Range(0, INT_MAX));
  c->add_option("--m", ca.m, "Solver steps per unit time")->check(CLI::Range(1, INT_MAX));
  c->add_option("--seed", ca.seed, "Seed for restarts and sampling");
  c->add_option("--out", ca.out, "Output directory")->required();
  c->callback([&] { action = [&] { return run_calibrate(ca); }; });

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score forecasts under the Mean, Best-of-K and Probabilistic protocols");
  e->add_option("--forecast", ev.forecasts, "name=forecast.csv (repeatable)")->required();
  e->add_option("--out", ev.out, "Output directory")->required();
  e->callback([&] { action = [&] { return run_evaluate(ev); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kExitUsage;
  }

  try {
    nmjd::set_max_threads(threads);
    return action();
  } catch (const nmjd::NumericalError& ex) {
    log(std::string("numerical failure: ") + ex.what());
    return kExitNumerical;
  } catch (const nmjd::DataError& ex) {
    log(std::string("data error: ") + ex.what());
    return kExitData;
  } catch (const fs::filesystem_error& ex) {
    log(std::string("data error: ") + ex.what());
    return kExitData;
  } catch (const nlohmann::json::exception& ex) {
    log(std::string("data error: ") + ex.what());
    return kExitData;
  } catch (const std::invalid_argument& ex) {
    log(std::string("usage error: ") + ex.what());
    return kExitUsage;
  } catch (const std::exception& ex) {
    log(std::string("numerical failure: ") + ex.what());
    return kExitNumerical;
  }
}
