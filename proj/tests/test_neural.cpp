// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "nmjd/error.hpp"
#include "nmjd/io.hpp"
#include "nmjd/neural.hpp"
#include "nmjd/parallel.hpp"
#include "support.hpp"

using namespace nmjd;

namespace {

NetworkConfig small_config(int past = 6, int horizon = 4) {
  NetworkConfig c;
  c.past_length = past;
  c.horizon = horizon;
  c.hidden_sizes = {8, 8};
  c.output_init_scale = 1.0;
  return c;
}

double softplus(double x) { return std::log1p(std::exp(x)); }

struct SyntheticSplit {
  DatasetSplit split;
  NormalizationTable table;
};

SyntheticSplit synthetic_split(int paths, std::uint64_t seed) {
  const auto set = generate_synthetic(paths, 40, seed);
  auto ws = windowize(set.series, 6, 4, 3);
  SyntheticSplit s{split_by_fraction(ws.windows, {}), {}};
  s.table = fit_normalization(s.split.train, 1e-8);
  apply_normalization(s.split.train, s.table);
  apply_normalization(s.split.valid, s.table);
  apply_normalization(s.split.test, s.table);
  return s;
}

}  // namespace

TEST_SUITE("neural") {

TEST_CASE("zero-initialized output layer fixes the schedule") {
  auto c = small_config();
  c.output_init_scale = 0.0;
  const auto ck = ModelCheckpoint::initialize(c, {});
  const auto s = predict_schedule(ck, test::random_window(1, 6, 4));
  REQUIRE(s.horizon() == 4);
  for (const auto& p : s.steps()) {
    CHECK(p.mu() == 0.0);
    CHECK(p.nu() == 0.0);
    CHECK(p.sigma() == doctest::Approx(std::log(2.0) + 1e-4).epsilon(1e-14));
    CHECK(p.lambda() == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    CHECK(p.gamma() == doctest::Approx(0.6933).epsilon(1e-4));
  }
  c.jumps_enabled = false;
  const auto bs = predict_schedule(ModelCheckpoint::initialize(c, {}), test::random_window(1, 6, 4));
  for (const auto& p : bs.steps()) CHECK(p.lambda() == 0.0);
}

TEST_CASE("output map ranges") {
  std::vector<double> raw;
  for (double v : {50.0, -50.0, 100.0, 9.0, -40.0}) raw.push_back(v);
  for (double v : {-50.0, 40.0, -100.0, -9.0, 40.0}) raw.push_back(v);
  const auto s = schedule_from_outputs(raw, true);
  CHECK(s.at(1).mu() == kMuBound);
  CHECK(s.at(2).mu() == -kMuBound);
  CHECK(s.at(1).nu() == kNuBound);
  CHECK(s.at(2).nu() == -kNuBound);
  CHECK(s.at(1).lambda() == kLambdaCap);
  CHECK(s.at(2).lambda() >= 0.0);
  CHECK(s.at(1).sigma() > 0.0);
  CHECK(s.at(2).gamma() == doctest::Approx(softplus(40.0) + 1e-4));
  CHECK(s.at(1).gamma() >= 1e-4);
  CHECK_THROWS_AS(schedule_from_outputs(std::vector<double>(7, 0.0), true), std::invalid_argument);
}

TEST_CASE("prediction is pure and sensitive to the history") {
  const auto c = small_config();
  const auto ck = ModelCheckpoint::initialize(c, {});
  auto w = test::random_window(2, 6, 4);
  const auto a = predict_schedule(ck, w);
  CHECK(a == predict_schedule(ck, w));
  w.past[2] *= 1.3;
  CHECK_FALSE(a == predict_schedule(ck, w));
  // gradient of the loss with respect to the weights is non-trivial at init
  const auto g = gradient(ck, test::random_window(2, 6, 4), 1.0, 5);
  double norm = 0.0;
  for (double x : g) norm += x * x;
  CHECK(norm > 0.0);
}

TEST_CASE("loss structure") {
  const auto c = small_config();
  const auto ck = ModelCheckpoint::initialize(c, {});
  const auto w = test::random_window(3, 6, 4);
  const auto l0 = window_loss(ck, w, 0.0, 5);
  const auto nw = normalize_window(w, c);
  const auto sched = predict_schedule(ck.network(), ck.weights, c, nw);
  const auto ll = horizon_log_likelihood(sched, nw.s0, nw.targets, 5, Anchor::mean_bootstrapped);
  CHECK(l0.total == doctest::Approx(-ll.total).epsilon(1e-14));
  for (int t = 0; t < 4; ++t) CHECK(l0.log_likelihood[t] == ll.per_step[t]);

  SUBCASE("targets on the predicted mean cancel the regression term") {
    auto on_mean = w;
    for (int t = 1; t <= 4; ++t) on_mean.future[t - 1] = conditional_mean(sched, nw.s0, t) * w.norm_scale;
    const auto l = window_loss(ck, on_mean, 1.0, 5);
    for (double r : l.regression) CHECK(std::abs(r) < 1e-24);
  }
  SUBCASE("omega enters linearly") {
    const auto l1 = window_loss(ck, w, 1.0, 5);
    const auto l2 = window_loss(ck, w, 2.0, 5);
    CHECK(l2.total - l0.total == doctest::Approx(2.0 * (l1.total - l0.total)).epsilon(1e-12));
    const auto g0 = gradient(ck, w, 0.0, 5), g1 = gradient(ck, w, 1.0, 5), g2 = gradient(ck, w, 2.0, 5);
    for (std::size_t i = 0; i < g0.size(); ++i) {
      CHECK(g2[i] - g0[i] == doctest::Approx(2.0 * (g1[i] - g0[i])).epsilon(1e-10).scale(1e-12));
    }
  }
  SUBCASE("parallel and sequential step evaluation agree bitwise") {
    auto opts = loss_options(c);
    const auto net = ck.network();
    const auto seq = window_loss(net, ck.weights, nw, opts);
    opts.parallel_steps = true;
    set_max_threads(4);
    const auto par = window_loss(net, ck.weights, nw, opts);
    set_max_threads(0);
    CHECK(seq.total == par.total);
    CHECK(seq.per_step == par.per_step);
  }
}

TEST_CASE("random windows give finite loss and gradient") {
  const auto c = small_config();
  int finite = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    auto ci = c;
    ci.seed = i;
    const auto ck = ModelCheckpoint::initialize(ci, {});
    const auto w = test::random_window(100 + i, 6, 4);
    const double l = window_loss(ck, w, 1.0, 5).total;
    bool ok = std::isfinite(l);
    for (double g : gradient(ck, w, 1.0, 5)) ok = ok && std::isfinite(g);
    finite += ok ? 1 : 0;
  }
  CHECK(finite == 100);
}

TEST_CASE("gradient matches central differences") {
  double worst = 0.0;
  for (int pair = 0; pair < 8; ++pair) {
    auto c = small_config(6, 3);
    c.seed = 500 + pair;
    c.omega = pair % 2;
    c.kappa = pair < 4 ? 1 : 5;
    const auto ck = ModelCheckpoint::initialize(c, {});
    const auto w = test::random_window(900 + pair, 6, 3);
    const auto net = ck.network();
    const auto nw = normalize_window(w, c);
    const auto opts = loss_options(c);
    const auto g = gradient(ck, w, c.omega, c.kappa);
    const double h = 1e-5;
    for (std::size_t p = 0; p < g.size(); ++p) {
      auto wp = ck.weights;
      wp[p] += h;
      const double fp = window_loss(net, wp, nw, opts).total;
      wp[p] -= 2 * h;
      const double fm = window_loss(net, wp, nw, opts).total;
      const double fd = (fp - fm) / (2 * h);
      worst = std::max(worst, std::abs(g[p] - fd) / std::max({std::abs(g[p]), std::abs(fd), 1e-6}));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("stationary point of a one-step toy network") {
  // Output weights zero, jumps off, omega 0: the loss depends on the mu bias b
  // only through a Gaussian centred at ln S0 + b - sigma^2/2, minimized at
  // b* = ln(S1/S0) + sigma^2/2.
  auto c = small_config(3, 1);
  c.jumps_enabled = false;
  c.omega = 0.0;
  c.output_init_scale = 0.0;
  auto ck = ModelCheckpoint::initialize(c, {});
  const auto& out = ck.network().layers().back();
  SeriesWindow w;
  w.past = {0.8, 0.9, 1.0};
  w.future = {1.25};
  const double sigma = std::log(2.0) + 1e-4;
  ck.weights[out.bias_offset] = std::log(1.25) + sigma * sigma / 2;
  const auto g = gradient(ck, w, 0.0, 5);
  CHECK(std::abs(g[out.bias_offset]) < 1e-12);
  ck.weights[out.bias_offset] += 0.1;
  CHECK(gradient(ck, w, 0.0, 5)[out.bias_offset] > 0.0);
}

TEST_CASE("training lowers validation loss and is deterministic") {
  const auto d = synthetic_split(60, 3);
  auto c = small_config();
  c.max_epochs = 6;
  c.batch_size = 16;
  c.seed = 4;
  set_max_threads(1);
  const auto a = train(d.split.train, d.split.valid, c, d.table);
  set_max_threads(4);
  const auto b = train(d.split.train, d.split.valid, c, d.table);
  set_max_threads(0);
  REQUIRE(a.curve.size() >= 2);
  CHECK(a.best.meta.best_validation_loss < a.curve.front().valid_loss);
  CHECK(a.best.weights == b.best.weights);
  CHECK(a.best.meta.best_validation_loss == b.best.meta.best_validation_loss);
  CHECK_FALSE(a.diverged);
  for (std::size_t i = 0; i < a.curve.size(); ++i) CHECK(a.curve[i].epoch == static_cast<int>(i));
}

TEST_CASE("a single window is overfitted") {
  SeriesWindow w = test::random_window(77, 6, 4);
  std::vector<SeriesWindow> one{w};
  const auto table = fit_normalization(one, 1e-8);
  apply_normalization(one, table);
  auto c = small_config();
  c.batch_size = 1;
  c.max_epochs = 1500;
  c.patience = 1500;
  c.learning_rate = 3e-3;
  const auto r = train(one, one, c, table);
  const auto start = window_loss(ModelCheckpoint::initialize(c, table), one[0], 1.0, 5);
  const auto end = window_loss(r.best, one[0], 1.0, 5);
  CHECK(end.total < start.total - 5.0);
  double reg = 0.0;
  for (double x : end.regression) reg += x;
  CHECK(reg < 1e-3);
}

TEST_CASE("checkpoint round trip and resume") {
  const auto dir = std::filesystem::path(NMJD_TEST_DIR) / "neural_ckpt";
  std::filesystem::create_directories(dir);
  const auto d = synthetic_split(40, 8);
  auto c = small_config();
  c.max_epochs = 3;
  c.seed = 2;
  const auto r = train(d.split.train, d.split.valid, c, d.table);
  save_checkpoint(dir / "m.json", r.best);
  const auto back = load_checkpoint(dir / "m.json");
  CHECK(back.weights == r.best.weights);
  CHECK(back.optimizer.m == r.best.optimizer.m);
  CHECK(back.optimizer.step == r.best.optimizer.step);
  CHECK(back.normalization.checksum() == d.table.checksum());
  CHECK(back.meta.best_validation_loss == r.best.meta.best_validation_loss);
  CHECK(to_json(back.config) == to_json(c));

  auto more = c;
  more.max_epochs = 2;
  const auto resumed = train(d.split.train, d.split.valid, more, d.table, &back);
  CHECK(resumed.curve.front().valid_loss == r.best.meta.best_validation_loss);
  CHECK(resumed.curve.front().epoch == back.meta.epoch);
  CHECK(resumed.best.meta.best_validation_loss <= r.best.meta.best_validation_loss);

  auto other = c;
  other.learning_rate = 0.5;
  CHECK_THROWS_AS(train(d.split.train, d.split.valid, other, d.table, &back), std::invalid_argument);

  // corrupting the blob is detected
  {
    std::fstream f(dir / "m.json.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put('\x7f');
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "m.json"), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), DataError);
}

TEST_CASE("config parsing names the missing field") {
  auto j = to_json(small_config());
  CHECK(to_json(network_config_from_json(j)) == j);
  j.erase("patience");
  try {
    network_config_from_json(j);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("patience") != std::string::npos);
  }
  auto bad = small_config();
  bad.hidden_sizes.clear();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = small_config();
  bad.omega = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

}  // TEST_SUITE
