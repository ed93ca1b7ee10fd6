// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <sstream>
#include <vector>

#include "nmjd/error.hpp"
#include "nmjd/forecast.hpp"
#include "nmjd/likelihood.hpp"
#include "support.hpp"

using namespace nmjd;

TEST_SUITE("forecast") {

TEST_CASE("bundle contents") {
  RandomStream r(6);
  std::vector<MjdParams> steps;
  for (int i = 0; i < 5; ++i) steps.push_back(test::synthetic_draw(r));
  const ParamSchedule s(steps);
  SolverConfig cfg;
  cfg.steps_per_unit = 10;
  cfg.seed = 3;
  const auto b = make_forecast_bundle(s, 1.7, 6, cfg, 5, 12);
  REQUIRE(b.k() == 6);
  REQUIRE(b.horizon() == 5);
  for (int t = 1; t <= 5; ++t) CHECK(b.mean[t - 1] == conditional_mean(s, 1.7, t));
  for (std::size_t i = 0; i < b.k(); ++i) {
    const auto oracle = horizon_log_likelihood(s, 1.7, b.samples[i], 5, Anchor::teacher_forced);
    CHECK(b.log_likelihoods[i] == doctest::Approx(oracle.total).epsilon(1e-12));
    // sample i is the integer-time trace of stream first_stream + i
    const auto path = simulate(s, 1.7, cfg, 12 + i);
    CHECK(std::log(b.samples[i][4]) == doctest::Approx(path.log_value_at(5, 10)).epsilon(1e-15));
  }
  const auto again = make_forecast_bundle(s, 1.7, 6, cfg, 5, 12);
  CHECK(again.samples == b.samples);

  const auto scaled = b.scaled(40.0);
  CHECK(scaled.log_likelihoods == b.log_likelihoods);
  CHECK(scaled.mean[2] == doctest::Approx(40.0 * b.mean[2]).epsilon(1e-15));
  CHECK_THROWS_AS(make_forecast_bundle(s, 1.7, 0, cfg, 5), std::invalid_argument);
}

TEST_CASE("forecast CSV round trip") {
  const ParamSchedule s = ParamSchedule::constant(MjdParams(0.1, 0.3, 2.0, 0.0, 0.5), 3);
  SolverConfig cfg;
  cfg.steps_per_unit = 4;
  std::vector<WindowForecast> fs(2);
  fs[0].series_id = "a";
  fs[0].anchor_date = "2020-01-05";
  fs[0].truth = {1.0, 1.1, 0.9};
  fs[0].bundle = make_forecast_bundle(s, 1.0, 2, cfg, 5);
  fs[1].series_id = "b";
  fs[1].segment = 2;
  fs[1].offset = 7;
  fs[1].anchor_date = "9";
  fs[1].bundle.mean = {3.0, 3.3, 1.0 / 3.0};
  std::ostringstream out;
  write_forecast_csv(out, fs);
  std::istringstream in(out.str());
  const auto back = read_forecast_csv(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0].truth == fs[0].truth);
  CHECK(back[0].bundle.samples == fs[0].bundle.samples);
  CHECK(back[0].bundle.log_likelihoods == fs[0].bundle.log_likelihoods);
  CHECK(back[0].anchor_date == "2020-01-05");
  CHECK(back[1].bundle.mean == fs[1].bundle.mean);
  CHECK(back[1].truth.empty());
  CHECK(back[1].bundle.k() == 0);
  CHECK(back[1].offset == 7);
  CHECK(back[1].segment == 2);

  std::istringstream bad("window,series_id,segment,offset,anchor_date,kind,sample,log_likelihood,tau,value\n"
                         "0,a,0,0,1,mean,,,2,1.0\n");
  CHECK_THROWS_AS(read_forecast_csv(bad), DataError);
}

}  // TEST_SUITE
