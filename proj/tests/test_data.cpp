// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include "nmjd/data.hpp"
#include "nmjd/error.hpp"
#include "support.hpp"

using namespace nmjd;

namespace {

std::vector<double> ramp(int n) {
  std::vector<double> v;
  for (int i = 1; i <= n; ++i) v.push_back(static_cast<double>(i));
  return v;
}

std::vector<SeriesWindow> windows_of(int n_series, int length) {
  std::vector<Series> s;
  for (int i = 0; i < n_series; ++i) s.push_back(test::make_series("s" + std::to_string(i), ramp(length)));
  return windowize(s, 3, 2, 1).windows;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("window counts") {
  const std::vector<Series> one{test::make_series("a", ramp(100))};
  CHECK(windowize(one, 10, 10, 1).windows.size() == 81);
  CHECK(windowize(one, 10, 10, 5).windows.size() == 17);
  CHECK(windowize({test::make_series("b", ramp(21))}, 14, 7, 1).windows.size() == 1);
  const auto short_one = windowize({test::make_series("c", ramp(19))}, 10, 10, 1);
  CHECK(short_one.windows.empty());
  CHECK(short_one.skipped_segments == 1);

  SUBCASE("count formula over random lengths and strides") {
    RandomStream r(5);
    for (int trial = 0; trial < 300; ++trial) {
      const int len = 1 + static_cast<int>(r.uniform() * 60);
      const int tp = 1 + static_cast<int>(r.uniform() * 12);
      const int tf = 1 + static_cast<int>(r.uniform() * 12);
      const int stride = 1 + static_cast<int>(r.uniform() * 6);
      const auto ws = windowize({test::make_series("x", ramp(len))}, tp, tf, stride);
      const int expected = len >= tp + tf ? (len - tp - tf) / stride + 1 : 0;
      CHECK(static_cast<int>(ws.windows.size()) == expected);
      for (const auto& w : ws.windows) {
        CHECK(static_cast<int>(w.past.size()) == tp);
        CHECK(static_cast<int>(w.future.size()) == tf);
        CHECK(w.past.front() == static_cast<double>(w.offset + 1));
        CHECK(w.future.front() == w.past.back() + 1.0);
      }
    }
  }
}

TEST_CASE("window tagging and latest windows") {
  const auto ws = windowize({test::make_series("a", ramp(8))}, 3, 2, 2).windows;
  REQUIRE(ws.size() == 2);
  CHECK(ws[1].offset == 2);
  CHECK(ws[1].anchor_date == "4");
  CHECK(ws[1].series_id == "a");
  const auto latest = latest_windows({test::make_series("a", ramp(8))}, 3);
  REQUIRE(latest.size() == 1);
  CHECK(latest[0].past == std::vector<double>{6.0, 7.0, 8.0});
  CHECK(latest[0].future.empty());
}

TEST_CASE("fraction split at the series level") {
  const auto ws = windows_of(10, 9);
  const auto sp = split_by_fraction(ws, {});
  auto ids = [](const std::vector<SeriesWindow>& v) {
    std::set<std::string> s;
    for (const auto& w : v) s.insert(w.series_id);
    return s;
  };
  CHECK(ids(sp.train).size() == 6);
  CHECK(ids(sp.valid).size() == 2);
  CHECK(ids(sp.test).size() == 2);
  for (const auto& id : ids(sp.test)) {
    CHECK(ids(sp.train).count(id) == 0);
    CHECK(ids(sp.valid).count(id) == 0);
  }
  CHECK(sp.train.size() + sp.valid.size() + sp.test.size() == ws.size());
  CHECK_THROWS_AS(split_by_fraction(ws, {0.5, 0.2, 0.2}), std::invalid_argument);
}

TEST_CASE("date split by anchor date") {
  // windows of 3 past + 2 future rows on dates 0..19; anchors at 2..17
  const auto ws = windowize({test::make_series("a", ramp(20))}, 3, 2, 1).windows;
  const SplitRanges r{{"0", "9"}, {"10", "12"}, {"13", "19"}};
  const auto sp = split_by_dates(ws, r);
  // anchor 9 forecasts dates 10..11 but stays in train
  bool saw_boundary = false;
  for (const auto& w : sp.train) {
    CHECK(compare_dates(w.anchor_date, "9") <= 0);
    saw_boundary = saw_boundary || w.anchor_date == "9";
  }
  CHECK(saw_boundary);
  CHECK(sp.train.size() == 8);
  CHECK(sp.valid.size() == 3);
  CHECK(sp.test.size() == 5);

  CHECK_THROWS_AS(split_by_dates(ws, {{"0", "9"}, {"9", "12"}, {"13", "19"}}), DataError);
  CHECK_THROWS_AS(split_by_dates(ws, {{"0", "9"}, {"10", "12"}, {"15", "13"}}), DataError);
  CHECK_THROWS_AS(split_by_dates(ws, {{"0", "9"}, {"10", "12"}, {"40", "50"}}), DataError);
  CHECK(compare_dates("9", "10") < 0);
  CHECK(compare_dates("2017-01-31", "2017-02-01") < 0);
}

TEST_CASE("normalization") {
  CHECK(normalize_value(50.0, 200.0) == 0.25);
  CHECK(normalize_value(0.0, 200.0) == 0.01);
  for (double v : {2.0, 17.5, 199.0, 200.0}) {
    CHECK(denormalize_value(normalize_value(v, 200.0), 200.0) == doctest::Approx(v).epsilon(1e-15));
  }

  std::vector<Series> s{test::make_series("a", ramp(10)), test::make_series("b", ramp(30))};
  s[1].group = "other";
  auto ws = windowize(s, 3, 2, 1).windows;
  std::vector<SeriesWindow> train, rest;
  for (const auto& w : ws) (w.series_id == "a" ? train : rest).push_back(w);
  const auto t = fit_normalization(train);
  CHECK(t.scales.at("all") == 10.0);
  bool fell = false;
  CHECK(t.scale_for("other", &fell) == t.global_scale);
  CHECK(fell);
  CHECK(apply_normalization(rest, t) == rest.size());
  CHECK(apply_normalization(train, t) == 0);
  CHECK(train[0].norm_scale == 10.0);

  const auto back = normalization_from_json(to_json(t));
  CHECK(back.checksum() == t.checksum());
  auto j = to_json(t);
  j.erase("floor");
  CHECK_THROWS_AS(normalization_from_json(j), DataError);
}

TEST_CASE("CSV ingestion") {
  std::istringstream in(
      "series_id,date,value,f1\n"
      "a,1,1.5,0.1\n"
      "a,2,2.5,0.2\n"
      "a,3,NA,0.3\n"
      "a,4,3.0,0.4\n"
      "a,5,3.5,0.5\n"
      "a,8,4.0,0.6\n"
      "b,2020-01-02,1.0,1\n"
      "b,2020-01-03,,1\n"
      "b,2020-01-06,2.0,1\n");
  CsvReadReport rep;
  const auto s = read_series_csv(in, GroupMode::series, &rep);
  REQUIRE(s.size() == 5);
  CHECK(rep.rows == 9);
  CHECK(rep.missing == 2);
  CHECK(s[0].values == std::vector<double>{1.5, 2.5});
  CHECK(s[1].values == std::vector<double>{3.0, 3.5});
  CHECK(s[1].segment == 1);
  CHECK(s[2].values == std::vector<double>{4.0});  // integer date gap
  CHECK(s[3].id == "b");
  CHECK(s[3].group == "b");
  CHECK(s[1].features[0] == std::vector<double>{0.4});

  std::istringstream backwards("series_id,date,value\na,2,1\na,1,1\n");
  CHECK_THROWS_AS(read_series_csv(backwards, GroupMode::global), DataError);
  std::istringstream negative("series_id,date,value\na,1,-1\n");
  CHECK_THROWS_AS(read_series_csv(negative, GroupMode::global), DataError);
  std::istringstream header("id,date,value\n");
  CHECK_THROWS_AS(read_series_csv(header, GroupMode::global), DataError);

  std::ostringstream out;
  write_series_csv(out, {test::make_series("z", {1.25, 2.5})});
  std::istringstream again(out.str());
  const auto z = read_series_csv(again, GroupMode::global);
  REQUIRE(z.size() == 1);
  CHECK(z[0].values == std::vector<double>{1.25, 2.5});
}

TEST_CASE("synthetic generation") {
  const auto a = generate_synthetic(2000, 100, 11);
  const auto b = generate_synthetic(2000, 100, 11);
  REQUIRE(a.series.size() == 2000);
  CHECK(a.series[0].values.size() == 101);
  CHECK(a.series[7].values == b.series[7].values);
  CHECK(a.series[0].values[0] == 1.0);
  double lam = 0.0;
  for (const auto& p : a.params) {
    CHECK(p.mu() >= 0.1);
    CHECK(p.mu() <= 0.5);
    CHECK(p.lambda() >= 3.0);
    CHECK(p.lambda() <= 10.0);
    CHECK(p.gamma() >= 0.5);
    lam += p.lambda();
  }
  // jumps per path per unit time: Poisson with a uniform rate, variance E[l] + Var[l]
  const double per_path = static_cast<double>(a.total_jumps) / 2000.0;
  CHECK(std::abs(per_path - 6.5) < 4.0 * std::sqrt((6.5 + 49.0 / 12.0) / 2000.0));
  CHECK(std::abs(per_path - lam / 2000.0) < 4.0 * std::sqrt(6.5 / 2000.0));

  std::ostringstream o1, o2;
  write_series_csv(o1, a.series);
  write_series_csv(o2, b.series);
  CHECK(o1.str() == o2.str());
  std::ostringstream o3;
  write_series_csv(o3, generate_synthetic(2000, 100, 12).series);
  CHECK(o1.str() != o3.str());

  const auto side = synthetic_sidecar(a);
  const auto round = read_synthetic_sidecar(nlohmann::json::parse(side.dump()));
  CHECK(round == a.params);
}

TEST_CASE("pipeline configuration") {
  PipelineConfig c;
  c.floor = 1e-8;
  CHECK(to_json(pipeline_config_from_json(to_json(c))) == to_json(c));
  auto j = to_json(c);
  j.erase("stride");
  try {
    pipeline_config_from_json(j);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("stride") != std::string::npos);
  }
  c.date_split = true;
  c.ranges = {{"0", "40"}, {"41", "60"}, {"61", "100"}};
  CHECK(to_json(pipeline_config_from_json(to_json(c))) == to_json(c));

  const auto set = generate_synthetic(10, 50, 2);
  PipelineConfig f;
  const auto d = prepare_dataset(set.series, f);
  CHECK(d.split.train.size() == 6 * 32);
  CHECK(d.split.test.size() == 2 * 32);
  CHECK(d.normalization.floor == f.floor);
  CHECK(dataset_summary(d).contains("normalization_checksum"));

  // no leakage: inflating the test paths leaves the table unchanged
  auto inflated = set.series;
  for (std::size_t i = 8; i < 10; ++i) {
    for (double& v : inflated[i].values) v *= 1000.0;
  }
  const auto d2 = prepare_dataset(inflated, f);
  CHECK(d2.normalization.checksum() == d.normalization.checksum());
  CHECK(d2.split.test.front().future != d.split.test.front().future);
}

}  // TEST_SUITE
