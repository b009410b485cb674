#pragma once

// Latent-quality probe: does a regression forest recover the ground-truth
// context from encoder latents? Builds latent datasets from fresh evaluation
// episodes and reports cross-validated MSE.

#include <algorithm>
#include <cstdint>
#include <map>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "jcpl/forest.hpp"
#include "jcpl/trainer.hpp"

namespace jcpl {

struct LatentRow {
  std::vector<double> latent;
  double context = 0.0;
  std::uint64_t seed = 0;
};

// Fresh evaluation episodes per eval context; `windows_per_context` windows of
// up to `window` transitions are drawn from the pooled episode transitions and
// encoded.
inline std::vector<LatentRow> build_latent_dataset(
    const Checkpoint& ckpt, const std::vector<Context>& eval_contexts,
    int windows_per_context, std::uint64_t seed_base, bool deterministic = true) {
  if (!ckpt.encoder) throw std::invalid_argument("latent dataset needs an encoder");
  const EnvSpec spec = env_spec(ckpt.env);
  const int tdim = triple_dim(spec.obs_dim, spec.act_dim);
  std::vector<LatentRow> rows;
  rows.reserve(eval_contexts.size() * windows_per_context);
  for (std::size_t ci = 0; ci < eval_contexts.size(); ++ci) {
    // pool transitions from a few episodes; short episodes just mean more
    Matrix pool(tdim, 4 * spec.horizon);
    int pooled = 0;
    for (int ep = 0; ep < 4 && pooled < 3 * ckpt.enc.window; ++ep) {
      const auto result = run_eval_episode(
          ckpt, eval_contexts[ci],
          derive_seed(derive_seed(seed_base ^ ckpt.seed, 9000 + ci), ep),
          deterministic, /*keep_transitions=*/true);
      pool.middleCols(pooled, result.steps) = result.transitions;
      pooled += result.steps;
    }
    auto rng = make_rng(derive_seed(seed_base ^ ckpt.seed, 7000 + ci));
    Matrix window(tdim, ckpt.enc.window);
    std::vector<int> picks;
    for (int w = 0; w < windows_per_context; ++w) {
      const int take = std::min(ckpt.enc.window, pooled);
      ReplayBuffer::pick_distinct(pooled, take, rng, picks);
      for (int j = 0; j < take; ++j) window.col(j) = pool.col(picks[j]);
      const Vector latent = encode(*ckpt.encoder, window.leftCols(take));
      LatentRow row;
      row.latent.assign(latent.data(), latent.data() + latent.size());
      row.context = eval_contexts[ci].value;
      row.seed = ckpt.seed;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

struct ProbeResult {
  double mse_mean = 0.0;
  std::vector<std::pair<std::uint64_t, double>> mse_per_seed;
};

// Half-open [lo, hi) index ranges that partition [0, n) into `folds` pieces
// whose sizes differ by at most one.
inline std::pair<int, int> fold_bounds(int n, int folds, int fold) {
  return {static_cast<int>(static_cast<long>(fold) * n / folds),
          static_cast<int>(static_cast<long>(fold + 1) * n / folds)};
}

// Shuffled k-fold cross-validated forest MSE within each training seed's
// dataset, averaged across seeds.
inline ProbeResult cv_mse(const std::vector<LatentRow>& rows, int folds,
                          const ForestHyper& hp, std::mt19937_64& rng) {
  if (rows.empty()) throw std::invalid_argument("cv_mse: empty dataset");
  std::map<std::uint64_t, std::vector<const LatentRow*>> by_seed;
  for (const auto& r : rows) by_seed[r.seed].push_back(&r);

  ProbeResult out;
  for (auto& [seed, subset] : by_seed) {
    const int n = static_cast<int>(subset.size());
    if (n < folds)
      throw std::invalid_argument("cv_mse: fewer rows than folds for a seed");
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);

    double fold_sum = 0.0;
    for (int f = 0; f < folds; ++f) {
      const auto [lo, hi] = fold_bounds(n, folds, f);
      std::vector<std::vector<double>> train_x, test_x;
      std::vector<double> train_y, test_y;
      for (int i = 0; i < n; ++i) {
        const LatentRow& r = *subset[order[i]];
        if (i >= lo && i < hi) {
          test_x.push_back(r.latent);
          test_y.push_back(r.context);
        } else {
          train_x.push_back(r.latent);
          train_y.push_back(r.context);
        }
      }
      const RegressionForest forest = fit_forest(train_x, train_y, hp, rng);
      fold_sum += forest_mse(forest, test_x, test_y);
    }
    out.mse_per_seed.emplace_back(seed, fold_sum / folds);
  }
  for (const auto& [seed, mse] : out.mse_per_seed) out.mse_mean += mse;
  out.mse_mean /= static_cast<double>(out.mse_per_seed.size());
  return out;
}

// CSV of (x, y, context value) scatter points; always writes the header.
inline void export_latent_scatter(const std::vector<LatentRow>& rows,
                                  std::ostream& os) {
  os << "x,y,context\n";
  for (const auto& r : rows) {
    if (r.latent.size() != 2)
      throw std::invalid_argument("latent scatter expects 2-dimensional latents");
    os << r.latent[0] << ',' << r.latent[1] << ',' << r.context << '\n';
  }
}

}  // namespace jcpl
