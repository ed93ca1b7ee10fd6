// SPDX-License-Identifier: Apache-2.0
//
// Series ingestion, synthetic generation, sliding windows, splits and
// max-scaling normalization.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nmjd/params.hpp"

namespace nmjd {

/// Default lower clip for normalized values, as a fraction of the group scale.
inline constexpr double kPositivityFloor = 0.01;

/// One gap-free run of observations. A series with missing rows is split
/// into several segments sharing the same id.
struct Series {
  std::string id;
  int segment = 0;
  std::string group;
  std::vector<std::string> dates;
  std::vector<double> values;
  std::vector<std::vector<double>> features;  // per row, possibly empty
};

struct SeriesWindow {
  std::vector<double> past;    // S_{-T_p}..S_0, raw units
  std::vector<double> context; // features of the anchor row
  std::vector<double> future;  // S_1..S_{T_f}, raw units; empty at inference
  std::string series_id;
  int segment = 0;
  std::size_t offset = 0;      // row index of past.front() within the segment
  std::string anchor_date;     // date of past.back()
  std::string group_key;
  double norm_scale = 1.0;
  double norm_floor = kPositivityFloor;

  double s0() const { return past.back(); }
};

enum class GroupMode { global, series };
GroupMode parse_group_mode(const std::string& name);
std::string to_string(GroupMode mode);

// ---- synthetic data -------------------------------------------------------

struct SyntheticSet {
  std::vector<Series> series;
  std::vector<MjdParams> params;  // generating parameters per path
  std::uint64_t seed = 0;
  int n_steps = 0;
  long long total_jumps = 0;      // jumps drawn across all paths
};

/// Per path: draws mu ~ U(0.1, 0.5), sigma ~ U(0.1, 0.5), lambda ~ U(3, 10),
/// nu ~ U(-0.1, 0.1), gamma ~ U(0.5, 1.0), then runs the vanilla solver with
/// n_steps steps over [0, 1] from S_0 = 1. Rows are the n_steps + 1 grid
/// values, dated by grid index.
SyntheticSet generate_synthetic(int n_paths, int n_steps, std::uint64_t seed);

/// Sidecar of generating parameters: {"seed", "n_steps", "paths": [{id, params}]}.
nlohmann::json synthetic_sidecar(const SyntheticSet& set);
std::vector<MjdParams> read_synthetic_sidecar(const nlohmann::json& j);

// ---- CSV ------------------------------------------------------------------

/// Long format with header series_id,date,value[,feature...].
void write_series_csv(std::ostream& out, const std::vector<Series>& series);

struct CsvReadReport {
  std::size_t rows = 0;
  std::size_t missing = 0;  // rows with empty or NA values
  std::size_t segments = 0;
};

/// Rows of a series must appear in increasing date order. An empty or NA
/// value, or a jump in integer dates, starts a new segment. ISO dates are
/// consecutive by row. Values must be finite and >= 0.
std::vector<Series> read_series_csv(std::istream& in, GroupMode grouping,
                                    CsvReadReport* report = nullptr);
std::vector<Series> read_series_csv(const std::filesystem::path& path, GroupMode grouping,
                                    CsvReadReport* report = nullptr);

// ---- windows --------------------------------------------------------------

struct WindowSet {
  std::vector<SeriesWindow> windows;
  std::size_t skipped_segments = 0;  // segments too short for one window
};

/// All windows of t_past + t_future consecutive rows at the given stride,
/// per segment: floor((L - t_past - t_future) / stride) + 1 of them.
WindowSet windowize(const std::vector<Series>& series, int t_past, int t_future, int stride);

/// The last t_past rows of every segment, with no future (inference).
std::vector<SeriesWindow> latest_windows(const std::vector<Series>& series, int t_past);

// ---- splits ---------------------------------------------------------------

struct DatasetSplit {
  std::vector<SeriesWindow> train;
  std::vector<SeriesWindow> valid;
  std::vector<SeriesWindow> test;
};

struct SplitFractions {
  double train = 0.6;
  double valid = 0.2;
  double test = 0.2;
};

/// Assigns whole series (in first-appearance order) to splits: the first
/// floor(train n) ids train, the next floor(valid n) validate, the rest test.
DatasetSplit split_by_fraction(const std::vector<SeriesWindow>& windows,
                               const SplitFractions& fractions);

/// Inclusive date range; integer dates compare numerically, others as text.
struct DateRange {
  std::string first;
  std::string last;
};

struct SplitRanges {
  DateRange train;
  DateRange valid;
  DateRange test;
};

/// Assigns each window by its anchor date; windows outside every range are
/// dropped. Ranges must be non-empty and pairwise disjoint.
DatasetSplit split_by_dates(const std::vector<SeriesWindow>& windows, const SplitRanges& ranges);

int compare_dates(const std::string& a, const std::string& b);

// ---- normalization --------------------------------------------------------

struct NormalizationTable {
  std::map<std::string, double> scales;  // group -> training max
  double global_scale = 1.0;
  double floor = kPositivityFloor;

  /// Scale for a group, falling back to the global scale when absent.
  double scale_for(const std::string& group, bool* fell_back = nullptr) const;
  std::string checksum() const;
};

/// Per-group maximum over the past and future values of the training windows.
NormalizationTable fit_normalization(const std::vector<SeriesWindow>& train,
                                     double floor = kPositivityFloor);

/// Sets group scales and the floor on every window; returns how many windows
/// used the global fallback scale.
std::size_t apply_normalization(std::vector<SeriesWindow>& windows, const NormalizationTable& t);

/// max(v, floor scale) / scale.
double normalize_value(double v, double scale, double floor = kPositivityFloor);
double denormalize_value(double v, double scale);

nlohmann::json to_json(const NormalizationTable& t);
NormalizationTable normalization_from_json(const nlohmann::json& j);

// ---- pipeline -------------------------------------------------------------

/// Windowing, split and normalization settings shared by the commands.
struct PipelineConfig {
  int t_past = 10;
  int t_future = 10;
  int stride = 1;
  GroupMode grouping = GroupMode::global;
  double floor = kPositivityFloor;
  bool date_split = false;
  SplitFractions fractions{};
  SplitRanges ranges{};
};

nlohmann::json to_json(const PipelineConfig& c);
/// Every field is required; a missing one raises DataError naming it.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

struct PreparedDataset {
  DatasetSplit split;
  NormalizationTable normalization;
  std::size_t skipped_segments = 0;
  std::size_t fallback_windows = 0;  // windows scaled by the global fallback
};

/// Windows, splits and normalizes `series`. The table is fitted on the
/// training split unless `table` is given.
PreparedDataset prepare_dataset(const std::vector<Series>& series, const PipelineConfig& config,
                                const NormalizationTable* table = nullptr);

/// Split sizes, scales and checksum for a dataset manifest.
nlohmann::json dataset_summary(const PreparedDataset& d);

}  // namespace nmjd
