// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the command-line tool.
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "nmjd/forecast.hpp"
#include "nmjd/io.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::path(NMJD_TEST_DIR) / "cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

/// Runs the tool in the work directory; stderr goes to `log`.
int run(const std::string& args, const std::string& log = "last.log") {
  const std::string cmd = "cd '" + work_dir().string() + "' && '" NMJD_CLI "' " + args + " > /dev/null 2> " + log;
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

nlohmann::json config_json() {
  auto j = nmjd::io::read_json(fs::path(NMJD_SOURCE_DIR) / "configs" / "synthetic.json");
  j["network"]["max_epochs"] = 2;
  j["network"]["hidden_sizes"] = {16};
  return j;
}

/// Generates data and trains a model once for the suite.
void ensure_model() {
  static bool done = [] {
    REQUIRE(run("generate --paths 60 --steps 40 --seed 7 --out gen") == 0);
    nmjd::io::write_json(work_dir() / "cfg.json", config_json());
    REQUIRE(run("train --data gen/data.csv --config cfg.json --out model") == 0);
    return true;
  }();
  (void)done;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("generate") {
  REQUIRE(run("generate --paths 100 --steps 100 --seed 7 --out g1") == 0);
  REQUIRE(run("generate --paths 100 --steps 100 --seed 7 --out g2") == 0);
  const auto a = slurp(work_dir() / "g1" / "data.csv");
  CHECK(a == slurp(work_dir() / "g2" / "data.csv"));
  CHECK(std::count(a.begin(), a.end(), '\n') == 1 + 100 * 101);
  const auto m = nmjd::io::read_json(work_dir() / "g1" / "manifest.json");
  CHECK(m["config"]["seed"] == 7);
  CHECK(m["outputs"]["data.csv"] == nmjd::io::file_hash(work_dir() / "g1" / "data.csv"));
  CHECK(run("generate --paths 0 --out g3") == 2);
  CHECK(run("generate --out g4 --bogus") == 2);
}

TEST_CASE("generate defaults match the synthetic protocol") {
  // default flags: 10,000 paths of 100 steps
  REQUIRE(run("generate --seed 1 --out gdef") == 0);
  const auto m = nmjd::io::read_json(work_dir() / "gdef" / "manifest.json");
  CHECK(m["config"]["paths"] == 10000);
  CHECK(m["config"]["steps"] == 100);
  CHECK(m["summary"]["series"] == 10000);
  fs::remove_all(work_dir() / "gdef");
}

TEST_CASE("train determinism, missing fields and resume") {
  ensure_model();
  REQUIRE(run("train --data gen/data.csv --config cfg.json --out model2") == 0);
  const auto a = nmjd::io::read_json(work_dir() / "model" / "manifest.json");
  const auto b = nmjd::io::read_json(work_dir() / "model2" / "manifest.json");
  CHECK(a["summary"]["best_validation_loss"] == b["summary"]["best_validation_loss"]);
  CHECK(a["outputs"] == b["outputs"]);

  auto j = config_json();
  j["network"].erase("learning_rate");
  nmjd::io::write_json(work_dir() / "broken.json", j);
  CHECK(run("train --data gen/data.csv --config broken.json --out bad", "broken.log") == 3);
  CHECK(slurp(work_dir() / "broken.log").find("learning_rate") != std::string::npos);

  auto more = config_json();
  more["network"]["max_epochs"] = 1;
  nmjd::io::write_json(work_dir() / "more.json", more);
  REQUIRE(run("train --data gen/data.csv --config more.json --resume model/model.json --out resumed") == 0);
  const auto before = nmjd::io::read_json(work_dir() / "model" / "manifest.json");
  const auto after = nmjd::io::read_json(work_dir() / "resumed" / "manifest.json");
  CHECK(after["summary"]["best_validation_loss"].get<double>() <=
        before["summary"]["best_validation_loss"].get<double>());
}

TEST_CASE("forecast") {
  ensure_model();
  REQUIRE(run("forecast --checkpoint model/model.json --data gen/data.csv --k 10 --m 20 --seed 4 "
              "--solver restart --out fr") == 0);
  REQUIRE(run("forecast --checkpoint model/model.json --data gen/data.csv --k 10 --m 20 --seed 4 "
              "--solver vanilla --out fv") == 0);
  std::ifstream r(work_dir() / "fr" / "forecast.csv"), v(work_dir() / "fv" / "forecast.csv");
  const auto fr = nmjd::read_forecast_csv(r);
  const auto fv = nmjd::read_forecast_csv(v);
  REQUIRE(fr.size() == fv.size());
  REQUIRE_FALSE(fr.empty());
  for (std::size_t w = 0; w < fr.size(); ++w) {
    CHECK(fr[w].bundle.k() == 10);
    CHECK(fr[w].bundle.horizon() == 10);
    CHECK(fr[w].bundle.mean == fv[w].bundle.mean);
    CHECK(fr[w].truth == fv[w].truth);
    for (std::size_t k = 0; k < 10; ++k) {
      // the first interval is never re-anchored, so only later steps differ
      CHECK(fr[w].bundle.samples[k][0] == fv[w].bundle.samples[k][0]);
    }
  }
  bool later_differs = false;
  for (std::size_t k = 0; k < 10; ++k) later_differs |= fr[0].bundle.samples[k][5] != fv[0].bundle.samples[k][5];
  CHECK(later_differs);

  CHECK(run("forecast --checkpoint nowhere.json --data gen/data.csv --out fx") == 3);
  CHECK(run("forecast --checkpoint model/model.json --data gen/data.csv --solver milstein --out fx") == 2);
  REQUIRE(run("forecast --checkpoint model/model.json --data gen/data.csv --split latest --k 2 --out fl") == 0);
}

TEST_CASE("calibrate and evaluate") {
  ensure_model();
  std::string flat = "series_id,date,value\n";
  for (int t = 0; t < 30; ++t) flat += "c," + std::to_string(t) + ",5\n";
  write_text(work_dir() / "flat.csv", flat);
  REQUIRE(run("calibrate --data flat.csv --model bs --scope series --out cflat") == 0);
  const auto fits = nmjd::io::read_json(work_dir() / "cflat" / "fits.json");
  CHECK(fits["degenerate"] == 1);
  CHECK(fits["fits"][0]["degenerate"] == true);

  // a forecast of itself scores zero error
  std::ifstream in(work_dir() / "fr" / "forecast.csv");
  auto self = nmjd::read_forecast_csv(in);
  REQUIRE_FALSE(self.empty());
  for (auto& f : self) {
    f.bundle.mean = f.truth;
    for (auto& s : f.bundle.samples) s = f.truth;
  }
  {
    std::ofstream out(work_dir() / "self.csv");
    nmjd::write_forecast_csv(out, self);
  }
  REQUIRE(run("forecast --checkpoint model/model.json --data gen/data.csv --k 0 --out fdet") == 0);
  REQUIRE(run("evaluate --forecast self=self.csv --forecast det=fdet/forecast.csv --out ev") == 0);
  const auto report = nmjd::io::read_json(work_dir() / "ev" / "report.json");
  CHECK(report["methods"]["self"]["mean"]["mae"] == 0.0);
  CHECK(report["methods"]["self"]["best_of_k"]["mae"] == 0.0);
  CHECK(report["methods"]["det"]["best_of_k"].is_null());
  const auto table = slurp(work_dir() / "ev" / "table.txt");
  CHECK(table.find("N/A") != std::string::npos);
  CHECK(table.find("minMAE") != std::string::npos);

  REQUIRE(run("calibrate --data gen/data.csv --model mjd --config cfg.json --restarts 2 --k 3 --m 10 --out cm") == 0);
  CHECK(fs::exists(work_dir() / "cm" / "forecast.csv"));
  CHECK(run("calibrate --data gen/data.csv --model mjd --scope window --out cx") == 2);
}

}  // TEST_SUITE
