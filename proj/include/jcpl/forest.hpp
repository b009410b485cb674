#pragma once

// Random-forest regression: binary trees with greedy variance-reduction axis
// splits and mean leaves, grown on bootstrap samples.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "jcpl/rng.hpp"

namespace jcpl {

struct ForestHyper {
  int trees = 100;
  int max_depth = 8;
  int min_leaf = 2;
  bool bootstrap = true;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1, right = -1;
  double value = 0.0;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(const std::vector<double>& x) const {
    int at = 0;
    while (nodes[at].feature >= 0)
      at = x[nodes[at].feature] <= nodes[at].threshold ? nodes[at].left
                                                       : nodes[at].right;
    return nodes[at].value;
  }
};

struct RegressionForest {
  std::vector<RegressionTree> trees;
  ForestHyper hp;

  double predict(const std::vector<double>& x) const {
    double sum = 0.0;
    for (const auto& t : trees) sum += t.predict(x);
    return sum / static_cast<double>(trees.size());
  }
};

namespace forestdetail {

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double sse_reduction = 0.0;
};

// Best variance-reducing split over all features; thresholds are midpoints
// between consecutive distinct values; both children must hold >= min_leaf.
inline Split best_split(const std::vector<std::vector<double>>& x,
                        const std::vector<double>& y, const std::vector<int>& idx,
                        int min_leaf) {
  const int n = static_cast<int>(idx.size());
  const int dims = static_cast<int>(x.front().size());
  double total = 0.0, total_sq = 0.0;
  for (int i : idx) {
    total += y[i];
    total_sq += y[i] * y[i];
  }
  const double parent_sse = total_sq - total * total / n;

  Split best;
  std::vector<int> order(idx);
  for (int f = 0; f < dims; ++f) {
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return x[a][f] < x[b][f]; });
    double left_sum = 0.0, left_sq = 0.0;
    for (int k = 0; k + 1 < n; ++k) {
      const double v = y[order[k]];
      left_sum += v;
      left_sq += v * v;
      const int nl = k + 1, nr = n - nl;
      if (nl < min_leaf || nr < min_leaf) continue;
      if (x[order[k]][f] == x[order[k + 1]][f]) continue;  // no boundary here
      const double right_sum = total - left_sum;
      const double right_sq = total_sq - left_sq;
      const double sse = (left_sq - left_sum * left_sum / nl) +
                         (right_sq - right_sum * right_sum / nr);
      const double reduction = parent_sse - sse;
      if (reduction > best.sse_reduction) {
        best.feature = f;
        // midpoints between adjacent doubles can round up onto the right
        // value; fall back to the left value so the partition stays nonempty
        double thr = 0.5 * (x[order[k]][f] + x[order[k + 1]][f]);
        if (thr >= x[order[k + 1]][f]) thr = x[order[k]][f];
        best.threshold = thr;
        best.sse_reduction = reduction;
      }
    }
  }
  return best;
}

inline int grow(RegressionTree& tree, const std::vector<std::vector<double>>& x,
                const std::vector<double>& y, std::vector<int>& idx, int depth,
                const ForestHyper& hp) {
  const int node_id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  double mean = 0.0;
  for (int i : idx) mean += y[i];
  mean /= static_cast<double>(idx.size());
  tree.nodes[node_id].value = mean;

  if (depth >= hp.max_depth || static_cast<int>(idx.size()) < 2 * hp.min_leaf)
    return node_id;
  const Split split = best_split(x, y, idx, hp.min_leaf);
  if (split.feature < 0 || split.sse_reduction <= 1e-12) return node_id;

  std::vector<int> left, right;
  for (int i : idx) {
    if (x[i][split.feature] <= split.threshold)
      left.push_back(i);
    else
      right.push_back(i);
  }
  if (left.empty() || right.empty()) return node_id;  // keep it a leaf
  tree.nodes[node_id].feature = split.feature;
  tree.nodes[node_id].threshold = split.threshold;
  const int l = grow(tree, x, y, left, depth + 1, hp);
  tree.nodes[node_id].left = l;
  const int r = grow(tree, x, y, right, depth + 1, hp);
  tree.nodes[node_id].right = r;
  return node_id;
}

}  // namespace forestdetail

inline RegressionForest fit_forest(const std::vector<std::vector<double>>& x,
                                   const std::vector<double>& y,
                                   const ForestHyper& hp, std::mt19937_64& rng) {
  const int n = static_cast<int>(y.size());
  if (n < hp.min_leaf) throw std::invalid_argument("fit_forest: too few rows");
  if (x.size() != y.size()) throw std::invalid_argument("fit_forest: x/y mismatch");
  RegressionForest forest;
  forest.hp = hp;
  forest.trees.reserve(hp.trees);
  std::vector<int> idx(n);
  for (int t = 0; t < hp.trees; ++t) {
    if (hp.bootstrap) {
      for (int i = 0; i < n; ++i) idx[i] = static_cast<int>(uniform_index(rng, 0, n - 1));
    } else {
      std::iota(idx.begin(), idx.end(), 0);
    }
    RegressionTree tree;
    std::vector<int> root_idx = idx;
    forestdetail::grow(tree, x, y, root_idx, 0, hp);
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

inline double forest_mse(const RegressionForest& forest,
                         const std::vector<std::vector<double>>& x,
                         const std::vector<double>& y) {
  if (y.empty()) throw std::invalid_argument("forest_mse: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = forest.predict(x[i]) - y[i];
    sum += d * d;
  }
  return sum / static_cast<double>(y.size());
}

}  // namespace jcpl
