// SPDX-License-Identifier: Apache-2.0
#include "nmjd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

#include "nmjd/error.hpp"
#include "nmjd/io.hpp"
#include "nmjd/parallel.hpp"
#include "nmjd/rng.hpp"
#include "nmjd/solvers.hpp"

namespace nmjd {
namespace {

std::optional<long long> as_integer(const std::string& s) {
  long long v = 0;
  const auto* b = s.data();
  const auto* e = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e || s.empty()) return std::nullopt;
  return v;
}

bool is_missing(const std::string& v) {
  if (v.empty()) return true;
  std::string lower(v);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return lower == "na" || lower == "nan" || lower == "null";
}

std::string group_of(const std::string& id, GroupMode mode) {
  return mode == GroupMode::global ? std::string("all") : id;
}

SeriesWindow make_window(const Series& s, std::size_t offset, int t_past, int t_future) {
  SeriesWindow w;
  const auto p = static_cast<std::size_t>(t_past);
  const auto f = static_cast<std::size_t>(t_future);
  w.past.assign(s.values.begin() + static_cast<std::ptrdiff_t>(offset),
                s.values.begin() + static_cast<std::ptrdiff_t>(offset + p));
  w.future.assign(s.values.begin() + static_cast<std::ptrdiff_t>(offset + p),
                  s.values.begin() + static_cast<std::ptrdiff_t>(offset + p + f));
  const std::size_t anchor = offset + p - 1;
  if (anchor < s.features.size()) w.context = s.features[anchor];
  w.series_id = s.id;
  w.segment = s.segment;
  w.offset = offset;
  w.anchor_date = anchor < s.dates.size() ? s.dates[anchor] : std::to_string(anchor);
  w.group_key = s.group;
  return w;
}

}  // namespace

GroupMode parse_group_mode(const std::string& name) {
  if (name == "global") return GroupMode::global;
  if (name == "series") return GroupMode::series;
  throw std::invalid_argument("unknown normalization grouping '" + name +
                              "' (expected global or series)");
}

std::string to_string(GroupMode mode) { return mode == GroupMode::global ? "global" : "series"; }

// ---- synthetic ------------------------------------------------------------

SyntheticSet generate_synthetic(int n_paths, int n_steps, std::uint64_t seed) {
  if (n_paths < 1) throw std::invalid_argument("generate_synthetic: n_paths must be >= 1");
  if (n_steps < 1) throw std::invalid_argument("generate_synthetic: n_steps must be >= 1");
  SyntheticSet set;
  set.seed = seed;
  set.n_steps = n_steps;
  const auto n = static_cast<std::size_t>(n_paths);
  set.series.resize(n);
  std::vector<std::optional<MjdParams>> drawn(n);
  std::vector<long long> jumps(n, 0);

  const std::uint64_t param_seed = derive_seed(seed, 0x706172616d73ull);
  SolverConfig cfg;
  cfg.steps_per_unit = n_steps;
  cfg.mode = SolverMode::vanilla;
  cfg.seed = seed;
  parallel_for(n, [&](std::size_t i) {
    RandomStream rng(param_seed, i);
    const double mu = 0.1 + 0.4 * rng.uniform();
    const double sigma = 0.1 + 0.4 * rng.uniform();
    const double lambda = 3.0 + 7.0 * rng.uniform();
    const double nu = -0.1 + 0.2 * rng.uniform();
    const double gamma = 0.5 + 0.5 * rng.uniform();
    const MjdParams p(mu, sigma, lambda, nu, gamma);
    drawn[i] = p;
    const SimPath path = simulate_vanilla(ParamSchedule::constant(p, 1), 1.0, cfg, i);
    Series& s = set.series[i];
    s.id = "path" + std::to_string(i);
    s.group = "all";
    s.values.resize(path.log_values.size());
    s.dates.resize(path.log_values.size());
    for (std::size_t j = 0; j < path.log_values.size(); ++j) {
      s.values[j] = std::exp(path.log_values[j]);
      s.dates[j] = std::to_string(j);
    }
    for (int c : path.jump_counts) jumps[i] += c;
  });
  set.params.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    set.params.push_back(*drawn[i]);
    set.total_jumps += jumps[i];
  }
  return set;
}

nlohmann::json synthetic_sidecar(const SyntheticSet& set) {
  nlohmann::json paths = nlohmann::json::array();
  for (std::size_t i = 0; i < set.params.size(); ++i) {
    nlohmann::json rec = set.params[i];
    rec["id"] = set.series[i].id;
    paths.push_back(std::move(rec));
  }
  return {{"seed", set.seed},
          {"n_steps", set.n_steps},
          {"total_jumps", set.total_jumps},
          {"paths", std::move(paths)}};
}

std::vector<MjdParams> read_synthetic_sidecar(const nlohmann::json& j) {
  if (!j.contains("paths") || !j["paths"].is_array()) {
    throw DataError("synthetic sidecar: missing 'paths' array");
  }
  std::vector<MjdParams> out;
  for (const auto& rec : j["paths"]) out.push_back(rec.get<MjdParams>());
  return out;
}

// ---- CSV ------------------------------------------------------------------

void write_series_csv(std::ostream& out, const std::vector<Series>& series) {
  std::size_t n_features = 0;
  for (const auto& s : series) {
    for (const auto& f : s.features) n_features = std::max(n_features, f.size());
  }
  out << "series_id,date,value";
  for (std::size_t k = 0; k < n_features; ++k) out << ",feature" << k;
  out << '\n';
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      out << s.id << ',' << s.dates[i] << ',' << io::format_double(s.values[i]);
      for (std::size_t k = 0; k < n_features; ++k) {
        const bool has = i < s.features.size() && k < s.features[i].size();
        out << ',' << (has ? io::format_double(s.features[i][k]) : std::string("0"));
      }
      out << '\n';
    }
  }
}

std::vector<Series> read_series_csv(std::istream& in, GroupMode grouping, CsvReadReport* report) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("series CSV: empty input");
  const auto header = io::split_csv_line(line);
  if (header.size() < 3 || header[0] != "series_id" || header[1] != "date" || header[2] != "value") {
    throw DataError("series CSV: header must start with series_id,date,value");
  }
  const std::size_t n_features = header.size() - 3;

  struct Row {
    std::string date;
    std::optional<double> value;
    std::vector<double> features;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Row>> rows;
  CsvReadReport rep;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (io::trim(line).empty()) continue;
    const auto cells = io::split_csv_line(line);
    const std::string ctx = "series CSV line " + std::to_string(line_no);
    if (cells.size() != header.size()) {
      throw DataError(ctx + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(cells.size()));
    }
    if (cells[0].empty()) throw DataError(ctx + ": empty series_id");
    Row r;
    r.date = cells[1];
    if (!is_missing(cells[2])) {
      const double v = io::parse_double(cells[2], ctx);
      if (!std::isfinite(v) || v < 0.0) throw DataError(ctx + ": value must be finite and >= 0");
      r.value = v;
    } else {
      ++rep.missing;
    }
    for (std::size_t k = 0; k < n_features; ++k) {
      r.features.push_back(io::parse_double(cells[3 + k], ctx));
    }
    auto [it, inserted] = rows.try_emplace(cells[0]);
    if (inserted) order.push_back(cells[0]);
    if (!it->second.empty() && compare_dates(it->second.back().date, r.date) >= 0) {
      throw DataError(ctx + ": dates of series '" + cells[0] + "' are not increasing");
    }
    it->second.push_back(std::move(r));
    ++rep.rows;
  }

  std::vector<Series> out;
  for (const auto& id : order) {
    int segment = 0;
    Series cur;
    auto flush = [&] {
      if (!cur.values.empty()) {
        cur.id = id;
        cur.segment = segment++;
        cur.group = group_of(id, grouping);
        out.push_back(std::move(cur));
      }
      cur = Series{};
    };
    std::optional<long long> prev_date;
    for (const auto& r : rows[id]) {
      const auto d = as_integer(r.date);
      if (d && prev_date && *d != *prev_date + 1) flush();
      prev_date = d;
      if (!r.value) {
        flush();
        continue;
      }
      cur.dates.push_back(r.date);
      cur.values.push_back(*r.value);
      if (n_features > 0) cur.features.push_back(r.features);
    }
    flush();
  }
  rep.segments = out.size();
  if (report) *report = rep;
  return out;
}

std::vector<Series> read_series_csv(const std::filesystem::path& path, GroupMode grouping,
                                    CsvReadReport* report) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open series CSV " + path.string());
  return read_series_csv(in, grouping, report);
}

// ---- windows --------------------------------------------------------------

WindowSet windowize(const std::vector<Series>& series, int t_past, int t_future, int stride) {
  if (t_past < 1 || t_future < 1 || stride < 1) {
    throw std::invalid_argument("windowize: t_past, t_future and stride must be >= 1");
  }
  WindowSet out;
  const auto span = static_cast<std::size_t>(t_past + t_future);
  for (const auto& s : series) {
    if (s.values.size() < span) {
      ++out.skipped_segments;
      continue;
    }
    for (std::size_t o = 0; o + span <= s.values.size(); o += static_cast<std::size_t>(stride)) {
      out.windows.push_back(make_window(s, o, t_past, t_future));
    }
  }
  return out;
}

std::vector<SeriesWindow> latest_windows(const std::vector<Series>& series, int t_past) {
  if (t_past < 1) throw std::invalid_argument("latest_windows: t_past must be >= 1");
  std::vector<SeriesWindow> out;
  for (const auto& s : series) {
    if (s.values.size() < static_cast<std::size_t>(t_past)) continue;
    out.push_back(make_window(s, s.values.size() - static_cast<std::size_t>(t_past), t_past, 0));
  }
  return out;
}

// ---- splits ---------------------------------------------------------------

DatasetSplit split_by_fraction(const std::vector<SeriesWindow>& windows,
                               const SplitFractions& fractions) {
  const double sum = fractions.train + fractions.valid + fractions.test;
  if (fractions.train < 0 || fractions.valid < 0 || fractions.test < 0 ||
      std::abs(sum - 1.0) > 1e-9) {
    throw std::invalid_argument("split_by_fraction: fractions must be >= 0 and sum to 1");
  }
  std::vector<std::string> ids;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& w : windows) {
    if (index.try_emplace(w.series_id, ids.size()).second) ids.push_back(w.series_id);
  }
  const double n = static_cast<double>(ids.size());
  const auto n_train = static_cast<std::size_t>(std::floor(fractions.train * n + 1e-9));
  const auto n_valid = static_cast<std::size_t>(std::floor(fractions.valid * n + 1e-9));
  DatasetSplit out;
  for (const auto& w : windows) {
    const std::size_t i = index.at(w.series_id);
    if (i < n_train) {
      out.train.push_back(w);
    } else if (i < n_train + n_valid) {
      out.valid.push_back(w);
    } else {
      out.test.push_back(w);
    }
  }
  return out;
}

int compare_dates(const std::string& a, const std::string& b) {
  const auto ia = as_integer(a);
  const auto ib = as_integer(b);
  if (ia && ib) return *ia < *ib ? -1 : (*ia > *ib ? 1 : 0);
  const int c = a.compare(b);
  return c < 0 ? -1 : (c > 0 ? 1 : 0);
}

DatasetSplit split_by_dates(const std::vector<SeriesWindow>& windows, const SplitRanges& ranges) {
  const std::pair<const char*, const DateRange*> named[] = {
      {"train", &ranges.train}, {"valid", &ranges.valid}, {"test", &ranges.test}};
  for (const auto& [name, r] : named) {
    if (r->first.empty() || r->last.empty() || compare_dates(r->first, r->last) > 0) {
      throw DataError(std::string("split_by_dates: ") + name + " range is empty");
    }
  }
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i + 1; j < 3; ++j) {
      const auto& a = *named[i].second;
      const auto& b = *named[j].second;
      if (compare_dates(a.first, b.last) <= 0 && compare_dates(b.first, a.last) <= 0) {
        throw DataError(std::string("split_by_dates: ") + named[i].first + " and " +
                        named[j].first + " ranges overlap");
      }
    }
  }
  auto inside = [](const std::string& d, const DateRange& r) {
    return compare_dates(r.first, d) <= 0 && compare_dates(d, r.last) <= 0;
  };
  DatasetSplit out;
  for (const auto& w : windows) {
    if (inside(w.anchor_date, ranges.train)) {
      out.train.push_back(w);
    } else if (inside(w.anchor_date, ranges.valid)) {
      out.valid.push_back(w);
    } else if (inside(w.anchor_date, ranges.test)) {
      out.test.push_back(w);
    }
  }
  if (out.test.empty()) throw DataError("split_by_dates: no windows fall in the test range");
  return out;
}

// ---- normalization --------------------------------------------------------

double NormalizationTable::scale_for(const std::string& group, bool* fell_back) const {
  const auto it = scales.find(group);
  if (fell_back) *fell_back = it == scales.end();
  return it == scales.end() ? global_scale : it->second;
}

std::string NormalizationTable::checksum() const { return io::bytes_hash(to_json(*this).dump()); }

NormalizationTable fit_normalization(const std::vector<SeriesWindow>& train, double floor) {
  if (train.empty()) throw DataError("fit_normalization: training split is empty");
  if (!(floor > 0.0 && floor < 1.0)) {
    throw std::invalid_argument("fit_normalization: floor must lie in (0, 1)");
  }
  NormalizationTable t;
  t.floor = floor;
  double global = 0.0;
  for (const auto& w : train) {
    double& s = t.scales[w.group_key];
    for (double v : w.past) s = std::max(s, v);
    for (double v : w.future) s = std::max(s, v);
    global = std::max(global, s);
  }
  for (const auto& [group, s] : t.scales) {
    if (!(s > 0.0)) throw DataError("fit_normalization: group '" + group + "' has no positive value");
  }
  t.global_scale = global;
  return t;
}

std::size_t apply_normalization(std::vector<SeriesWindow>& windows, const NormalizationTable& t) {
  std::size_t fallbacks = 0;
  for (auto& w : windows) {
    bool fell_back = false;
    w.norm_scale = t.scale_for(w.group_key, &fell_back);
    w.norm_floor = t.floor;
    fallbacks += fell_back ? 1 : 0;
  }
  return fallbacks;
}

double normalize_value(double v, double scale, double floor) {
  return std::max(v, floor * scale) / scale;
}

double denormalize_value(double v, double scale) { return v * scale; }

nlohmann::json to_json(const NormalizationTable& t) {
  nlohmann::json groups = nlohmann::json::object();
  for (const auto& [g, s] : t.scales) groups[g] = s;
  return {{"floor", t.floor}, {"global_scale", t.global_scale}, {"groups", groups}};
}

NormalizationTable normalization_from_json(const nlohmann::json& j) {
  NormalizationTable t;
  for (const char* key : {"floor", "global_scale", "groups"}) {
    if (!j.contains(key)) throw DataError(std::string("normalization table: missing '") + key + "'");
  }
  t.floor = j.at("floor").get<double>();
  t.global_scale = j.at("global_scale").get<double>();
  for (const auto& [g, s] : j.at("groups").items()) t.scales[g] = s.get<double>();
  if (!(t.global_scale > 0.0)) throw DataError("normalization table: scales must be > 0");
  if (!(t.floor > 0.0 && t.floor < 1.0)) throw DataError("normalization table: floor must lie in (0, 1)");
  for (const auto& [g, s] : t.scales) {
    if (!(s > 0.0)) throw DataError("normalization table: scale of '" + g + "' must be > 0");
  }
  return t;
}

// ---- pipeline -------------------------------------------------------------

namespace {

template <class T>
T field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    throw DataError(where + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DataError(where + ": field '" + key + "' has the wrong type");
  }
}

DateRange range_field(const nlohmann::json& j, const char* key) {
  const auto v = field<std::vector<std::string>>(j, key, "pipeline split");
  if (v.size() != 2) throw DataError(std::string("pipeline split: '") + key + "' needs [first, last]");
  return {v[0], v[1]};
}

}  // namespace

nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json split;
  if (c.date_split) {
    split = {{"mode", "dates"},
             {"train", {c.ranges.train.first, c.ranges.train.last}},
             {"valid", {c.ranges.valid.first, c.ranges.valid.last}},
             {"test", {c.ranges.test.first, c.ranges.test.last}}};
  } else {
    split = {{"mode", "fractions"},
             {"train", c.fractions.train},
             {"valid", c.fractions.valid},
             {"test", c.fractions.test}};
  }
  return {{"t_past", c.t_past},   {"t_future", c.t_future}, {"stride", c.stride},
          {"grouping", to_string(c.grouping)}, {"floor", c.floor},      {"split", split}};
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  const std::string where = "pipeline config";
  PipelineConfig c;
  c.t_past = field<int>(j, "t_past", where);
  c.t_future = field<int>(j, "t_future", where);
  c.stride = field<int>(j, "stride", where);
  c.grouping = parse_group_mode(field<std::string>(j, "grouping", where));
  c.floor = field<double>(j, "floor", where);
  const auto split = field<nlohmann::json>(j, "split", where);
  const auto mode = field<std::string>(split, "mode", "pipeline split");
  if (mode == "dates") {
    c.date_split = true;
    c.ranges = {range_field(split, "train"), range_field(split, "valid"), range_field(split, "test")};
  } else if (mode == "fractions") {
    c.fractions = {field<double>(split, "train", "pipeline split"),
                   field<double>(split, "valid", "pipeline split"),
                   field<double>(split, "test", "pipeline split")};
  } else {
    throw DataError("pipeline split: mode must be 'fractions' or 'dates'");
  }
  if (c.t_past < 1 || c.t_future < 1 || c.stride < 1) {
    throw DataError("pipeline config: t_past, t_future and stride must be >= 1");
  }
  return c;
}

PreparedDataset prepare_dataset(const std::vector<Series>& series, const PipelineConfig& config,
                                const NormalizationTable* table) {
  WindowSet ws = windowize(series, config.t_past, config.t_future, config.stride);
  if (ws.windows.empty()) throw DataError("no series is long enough for a single window");
  PreparedDataset d;
  d.skipped_segments = ws.skipped_segments;
  d.split = config.date_split ? split_by_dates(ws.windows, config.ranges)
                              : split_by_fraction(ws.windows, config.fractions);
  d.normalization = table ? *table : fit_normalization(d.split.train, config.floor);
  d.fallback_windows = apply_normalization(d.split.train, d.normalization) +
                       apply_normalization(d.split.valid, d.normalization) +
                       apply_normalization(d.split.test, d.normalization);
  return d;
}

nlohmann::json dataset_summary(const PreparedDataset& d) {
  return {{"windows",
           {{"train", d.split.train.size()},
            {"valid", d.split.valid.size()},
            {"test", d.split.test.size()}}},
          {"skipped_segments", d.skipped_segments},
          {"fallback_windows", d.fallback_windows},
          {"normalization", to_json(d.normalization)},
          {"normalization_checksum", d.normalization.checksum()}};
}

}  // namespace nmjd
