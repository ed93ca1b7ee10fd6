// SPDX-License-Identifier: Apache-2.0
#include "nmjd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "nmjd/parallel.hpp"

namespace nmjd {
namespace {

struct Accumulator {
  double mae = 0.0, mse = 0.0, r2 = 0.0;
  std::size_t n = 0, r2_n = 0;

  void add(double a, double s, double r, bool r_ok) {
    mae += a;
    mse += s;
    ++n;
    if (r_ok) {
      r2 += r;
      ++r2_n;
    }
  }
  ProtocolScore finish() const {
    ProtocolScore p;
    p.mae = mae / static_cast<double>(n);
    p.mse = mse / static_cast<double>(n);
    p.r2_windows = r2_n;
    p.r2 = r2_n ? r2 / static_cast<double>(r2_n) : std::numeric_limits<double>::quiet_NaN();
    p.adjusted_r2 = std::numeric_limits<double>::quiet_NaN();
    return p;
  }
};

nlohmann::json score_json(const std::optional<ProtocolScore>& s) {
  if (!s) return nullptr;
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  return {{"mae", num(s->mae)},
          {"mse", num(s->mse)},
          {"r2", num(s->r2)},
          {"adjusted_r2", num(s->adjusted_r2)},
          {"r2_windows", s->r2_windows}};
}

}  // namespace

PointMetrics point_metrics(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size() || truth.empty()) {
    throw std::invalid_argument("point_metrics: prediction and truth need equal lengths >= 1");
  }
  const double n = static_cast<double>(truth.size());
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= n;
  double abs_sum = 0.0, sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = pred[i] - truth[i];
    abs_sum += std::abs(d);
    sse += d * d;
    sst += (truth[i] - mean) * (truth[i] - mean);
  }
  PointMetrics m;
  m.mae = abs_sum / n;
  m.mse = sse / n;
  m.r2_defined = sst > 0.0;
  m.r2 = m.r2_defined ? 1.0 - sse / sst : std::numeric_limits<double>::quiet_NaN();
  return m;
}

double adjusted_r2(double r2, double n, double k) {
  if (!(n > 1.0)) throw std::invalid_argument("adjusted_r2: n must be > 1");
  const double p = (k - 1.0) * (n - 1.0) / k;
  const double denom = n - p - 1.0;
  if (denom == 0.0 || !std::isfinite(denom)) {
    throw std::invalid_argument("adjusted_r2: degenerate denominator n - p - 1");
  }
  return 1.0 - (1.0 - r2) * (n - 1.0) / denom;
}

WindowScores score_window(const ForecastBundle& bundle, std::span<const double> truth) {
  if (bundle.horizon() != truth.size()) {
    throw std::invalid_argument("score_window: forecast horizon does not match truth length");
  }
  WindowScores w;
  w.mean = point_metrics(bundle.mean, truth);
  if (bundle.k() == 0) return w;
  if (bundle.log_likelihoods.size() != bundle.k()) {
    throw std::invalid_argument("score_window: one log-likelihood per sample is required");
  }
  w.samples.reserve(bundle.k());
  for (const auto& s : bundle.samples) w.samples.push_back(point_metrics(s, truth));
  w.min_mae = w.samples[0].mae;
  w.min_mse = w.samples[0].mse;
  w.max_r2 = w.samples[0].r2;
  for (const auto& m : w.samples) {
    w.min_mae = std::min(w.min_mae, m.mae);
    w.min_mse = std::min(w.min_mse, m.mse);
    if (m.r2_defined) w.max_r2 = std::isnan(w.max_r2) ? m.r2 : std::max(w.max_r2, m.r2);
  }
  // First maximum wins ties, so the choice is order-stable.
  w.most_probable = static_cast<std::size_t>(
      std::max_element(bundle.log_likelihoods.begin(), bundle.log_likelihoods.end()) -
      bundle.log_likelihoods.begin());
  return w;
}

ProtocolReport protocol_metrics(std::span<const ForecastBundle> bundles,
                                std::span<const std::vector<double>> truths, int k) {
  if (bundles.size() != truths.size()) {
    throw std::invalid_argument("protocol_metrics: one truth per forecast bundle is required");
  }
  if (bundles.empty()) throw std::invalid_argument("protocol_metrics: no windows");
  if (k < 0) throw std::invalid_argument("protocol_metrics: K must be >= 0");
  for (const auto& b : bundles) {
    if (b.k() != static_cast<std::size_t>(k)) {
      throw std::invalid_argument("protocol_metrics: bundle holds " + std::to_string(b.k()) +
                                  " samples, expected K = " + std::to_string(k));
    }
  }
  std::vector<WindowScores> scores(bundles.size());
  parallel_for(bundles.size(), [&](std::size_t i) { scores[i] = score_window(bundles[i], truths[i]); });

  ProtocolReport r;
  r.windows = bundles.size();
  r.k = k;
  r.horizon = bundles.front().horizon();
  Accumulator mean, avg, best, prob;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& s = scores[i];
    mean.add(s.mean.mae, s.mean.mse, s.mean.r2, s.mean.r2_defined);
    if (k == 0) continue;
    std::vector<double> average(r.horizon, 0.0);
    for (const auto& row : bundles[i].samples) {
      for (std::size_t t = 0; t < r.horizon; ++t) average[t] += row[t];
    }
    for (double& v : average) v /= static_cast<double>(k);
    const auto am = point_metrics(average, truths[i]);
    avg.add(am.mae, am.mse, am.r2, am.r2_defined);
    best.add(s.min_mae, s.min_mse, s.max_r2, !std::isnan(s.max_r2));
    const auto& pm = s.samples[s.most_probable];
    prob.add(pm.mae, pm.mse, pm.r2, pm.r2_defined);
  }
  auto finish = [&](const Accumulator& a) {
    ProtocolScore p = a.finish();
    if (p.r2_windows > 0 && r.horizon > 1) {
      p.adjusted_r2 = adjusted_r2(p.r2, static_cast<double>(r.horizon));
    }
    return p;
  };
  r.mean = finish(mean);
  if (k > 0) {
    r.sample_average = finish(avg);
    r.best_of_k = finish(best);
    r.probabilistic = finish(prob);
  }
  return r;
}

nlohmann::json to_json(const ProtocolReport& r) {
  return {{"windows", r.windows},
          {"k", r.k},
          {"horizon", r.horizon},
          {"selection",
           "best-of-K picks min MAE, min MSE and max R2 independently; probabilistic picks the "
           "sample with the highest teacher-forced horizon log-likelihood"},
          {"aggregation", "unweighted mean over windows"},
          {"mean", score_json(r.mean)},
          {"sample_average", score_json(r.sample_average)},
          {"best_of_k", score_json(r.best_of_k)},
          {"probabilistic", score_json(r.probabilistic)}};
}

std::string format_protocol_table(
    const std::vector<std::pair<std::string, ProtocolReport>>& rows) {
  std::size_t name_w = 6;
  for (const auto& [name, _] : rows) name_w = std::max(name_w, name.size());
  auto cell = [](const std::optional<ProtocolScore>& s, int which) {
    char buf[32];
    if (!s) return std::string("N/A");
    const double v = which == 0 ? s->mae : which == 1 ? s->mse : s->r2;
    if (!std::isfinite(v)) return std::string("N/A");
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::string(buf);
  };
  auto pad = [](std::string s, std::size_t w) {
    s.insert(0, s.size() < w ? w - s.size() : 1, ' ');
    return s;
  };
  constexpr std::size_t w = 9;
  std::string out = pad("method", name_w) + " |" + pad("MAE", w) + pad("MSE", w) + pad("R2", w) +
                    " |" + pad("minMAE", w) + pad("minMSE", w) + pad("maxR2", w) + " |" +
                    pad("p-MAE", w) + pad("p-MSE", w) + pad("p-R2", w) + "\n";
  for (const auto& [name, r] : rows) {
    const std::optional<ProtocolScore> mean = r.mean;
    out += pad(name, name_w) + " |";
    for (int c = 0; c < 3; ++c) out += pad(cell(mean, c), w);
    out += " |";
    for (int c = 0; c < 3; ++c) out += pad(cell(r.best_of_k, c), w);
    out += " |";
    for (int c = 0; c < 3; ++c) out += pad(cell(r.probabilistic, c), w);
    out += "\n";
  }
  return out;
}

}  // namespace nmjd
