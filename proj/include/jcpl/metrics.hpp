#pragma once

// Evaluation statistics: reference-anchored score normalization, the
// interquartile mean, stratified bootstrap confidence intervals, performance
// profiles, and training-curve area.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "jcpl/rng.hpp"

namespace jcpl {

// Rectangular score table: one row per eval context, N = seeds x episodes
// columns; col_seed labels each column's training seed for stratification.
struct ScoreTable {
  std::vector<double> contexts;
  std::vector<std::vector<double>> scores;  // scores[row][col]
  std::vector<std::uint64_t> col_seed;

  int rows() const { return static_cast<int>(contexts.size()); }
  int cols() const { return scores.empty() ? 0 : static_cast<int>(scores.front().size()); }

  void validate() const {
    if (scores.size() != contexts.size())
      throw std::invalid_argument("score table: row count mismatch");
    for (const auto& row : scores)
      if (row.size() != col_seed.size())
        throw std::invalid_argument("score table: ragged rows");
  }
};

struct NormalizedScores {
  ScoreTable table;                 // only the usable rows
  std::vector<double> row_context;  // context per kept row (same as table.contexts)
  std::vector<int> rejected_rows;   // indices into the input table
};

// Per-row affine rescaling anchored at the random and default references.
// Rows whose reference gap is below `denom_tol` are excluded and reported.
inline NormalizedScores normalize(const ScoreTable& raw,
                                  const std::vector<double>& s_random,
                                  const std::vector<double>& s_default,
                                  double denom_tol = 1e-9) {
  raw.validate();
  if (static_cast<int>(s_random.size()) != raw.rows() ||
      static_cast<int>(s_default.size()) != raw.rows())
    throw std::invalid_argument("normalize: reference length mismatch");
  NormalizedScores out;
  out.table.col_seed = raw.col_seed;
  for (int r = 0; r < raw.rows(); ++r) {
    const double denom = s_default[r] - s_random[r];
    if (std::abs(denom) < denom_tol) {
      out.rejected_rows.push_back(r);
      continue;
    }
    std::vector<double> row(raw.scores[r].size());
    for (std::size_t c = 0; c < row.size(); ++c)
      row[c] = (raw.scores[r][c] - s_random[r]) / denom;
    out.table.contexts.push_back(raw.contexts[r]);
    out.table.scores.push_back(std::move(row));
  }
  out.row_context = out.table.contexts;
  return out;
}

// Interquartile mean: sort, drop floor(n/4) from each end, average the rest.
inline double iqm(std::vector<double> values) {
  const std::size_t n = values.size();
  if (n < 4) throw std::invalid_argument("iqm needs at least 4 values");
  std::sort(values.begin(), values.end());
  const std::size_t trim = n / 4;
  double sum = 0.0;
  for (std::size_t i = trim; i < n - trim; ++i) sum += values[i];
  return sum / static_cast<double>(n - 2 * trim);
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool single_seed = false;
};

namespace metricsdetail {

// linear-interpolation quantile of a sorted vector
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty vector");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace metricsdetail

// Confidence interval for the IQM of `values` by resampling whole seeds with
// replacement (strata = training seeds), recomputing the IQM over the pooled
// resampled scores, and taking the percentile interval. A single distinct
// seed cannot be resampled; the point estimate is returned flagged.
inline Interval stratified_bootstrap_ci(const std::vector<double>& values,
                                        const std::vector<std::uint64_t>& seeds,
                                        int iterations, double confidence,
                                        std::mt19937_64& rng) {
  if (values.size() != seeds.size())
    throw std::invalid_argument("bootstrap: seed labels must match values");
  if (values.empty()) throw std::invalid_argument("bootstrap: empty input");
  std::vector<std::uint64_t> distinct = seeds;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2) {
    const double point = iqm(values);
    return {point, point, true};
  }
  std::vector<std::vector<double>> by_seed(distinct.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto it = std::lower_bound(distinct.begin(), distinct.end(), seeds[i]);
    by_seed[static_cast<std::size_t>(it - distinct.begin())].push_back(values[i]);
  }
  std::vector<double> stats;
  stats.reserve(iterations);
  std::vector<double> pooled;
  for (int it = 0; it < iterations; ++it) {
    pooled.clear();
    for (std::size_t k = 0; k < distinct.size(); ++k) {
      const auto& chunk =
          by_seed[uniform_index(rng, 0, static_cast<long>(distinct.size()) - 1)];
      pooled.insert(pooled.end(), chunk.begin(), chunk.end());
    }
    stats.push_back(iqm(pooled));
  }
  std::sort(stats.begin(), stats.end());
  const double tail = (1.0 - confidence) / 2.0;
  return {metricsdetail::quantile_sorted(stats, tail),
          metricsdetail::quantile_sorted(stats, 1.0 - tail), false};
}

// Fraction of scores strictly above each threshold; non-increasing in the
// threshold grid.
inline std::vector<double> performance_profile(const std::vector<double>& values,
                                               const std::vector<double>& thresholds) {
  if (values.empty()) throw std::invalid_argument("performance_profile: empty scores");
  std::vector<double> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    long count = 0;
    for (double v : values)
      if (v > t) ++count;
    out.push_back(static_cast<double>(count) / static_cast<double>(values.size()));
  }
  return out;
}

// Step-weighted trapezoid over (cumulative env step, episode return) points,
// extended flat to step 0 and to total_steps so the integral spans the whole
// training budget.
inline double training_auc_one_seed(
    const std::vector<std::pair<long, double>>& episode_returns, long total_steps) {
  if (episode_returns.size() < 2)
    throw std::invalid_argument("training_auc needs at least 2 episodes");
  std::vector<std::pair<double, double>> pts;
  pts.reserve(episode_returns.size() + 2);
  if (episode_returns.front().first > 0)
    pts.emplace_back(0.0, episode_returns.front().second);
  for (const auto& [step, ret] : episode_returns)
    pts.emplace_back(static_cast<double>(step), ret);
  if (episode_returns.back().first < total_steps)
    pts.emplace_back(static_cast<double>(total_steps), episode_returns.back().second);
  double auc = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    auc += 0.5 * (pts[i].second + pts[i - 1].second) * (pts[i].first - pts[i - 1].first);
  return auc;
}

inline double training_auc(
    const std::vector<std::vector<std::pair<long, double>>>& per_seed,
    long total_steps) {
  if (per_seed.empty()) throw std::invalid_argument("training_auc: no seeds");
  double sum = 0.0;
  for (const auto& run : per_seed) sum += training_auc_one_seed(run, total_steps);
  return sum / static_cast<double>(per_seed.size());
}

struct Aggregate {
  double iqm_value = 0.0;
  Interval ci;
  long n = 0;
};

// Pools every normalized score of the selected rows, returns IQM with a
// stratified bootstrap interval.
inline Aggregate aggregate_rows(const ScoreTable& normalized,
                                const std::vector<int>& row_indices, int iterations,
                                double confidence, std::mt19937_64& rng) {
  if (row_indices.empty()) throw std::invalid_argument("aggregate: empty subset");
  std::vector<double> pooled;
  std::vector<std::uint64_t> labels;
  for (int r : row_indices) {
    if (r < 0 || r >= normalized.rows())
      throw std::out_of_range("aggregate: row index out of range");
    for (std::size_t c = 0; c < normalized.scores[r].size(); ++c) {
      pooled.push_back(normalized.scores[r][c]);
      labels.push_back(normalized.col_seed[c]);
    }
  }
  Aggregate out;
  out.n = static_cast<long>(pooled.size());
  out.iqm_value = iqm(pooled);
  out.ci = stratified_bootstrap_ci(pooled, labels, iterations, confidence, rng);
  return out;
}

}  // namespace jcpl
