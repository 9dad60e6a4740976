#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "deglif/gcn.hpp"
#include "deglif/graph.hpp"

namespace th {

using deglif::Graph;
using deglif::Mat;
using deglif::Vec;

/// Random Erdos-Renyi fixture with shuffled role masks. Clean nodes are the
/// first half of the validation mask.
inline Graph random_fixture(int n, int K, int d, std::uint64_t seed,
                            double p_edge = 0.3) {
  Graph g;
  g.n_nodes = n;
  g.n_classes = K;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> lab(0, K - 1);

  g.labels.resize(n);
  for (int i = 0; i < n; ++i) g.labels[i] = lab(rng);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (unif(rng) < p_edge) g.edges.emplace_back(i, j);
    }
  }
  g.features.resize(n, d);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d; ++c) g.features(i, c) = gauss(rng);
  }

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const int n_train = std::max(1, n / 2);
  const int n_val = std::max(2, (3 * n) / 10);
  for (int i = 0; i < n; ++i) {
    if (i < n_train) {
      g.masks.train.push_back(order[i]);
    } else if (i < n_train + n_val && i < n) {
      g.masks.validation.push_back(order[i]);
    } else {
      g.masks.test.push_back(order[i]);
    }
  }
  std::sort(g.masks.train.begin(), g.masks.train.end());
  std::sort(g.masks.validation.begin(), g.masks.validation.end());
  std::sort(g.masks.test.begin(), g.masks.test.end());
  const int n_clean = std::max<int>(1, g.masks.validation.size() / 2);
  g.masks.clean.assign(g.masks.validation.begin(),
                       g.masks.validation.begin() + n_clean);
  g.original_ids.resize(n);
  for (int i = 0; i < n; ++i) g.original_ids[i] = i;
  g.validate();
  return g;
}

/// Graph from an explicit edge list with every node in a given role.
inline Graph path_graph(int n, int K, int d, std::vector<int> train,
                        std::vector<int> validation, std::vector<int> clean,
                        std::uint64_t seed = 0) {
  Graph g;
  g.n_nodes = n;
  g.n_classes = K;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> lab(0, K - 1);
  g.labels.resize(n);
  for (int i = 0; i < n; ++i) g.labels[i] = lab(rng);
  for (int i = 0; i + 1 < n; ++i) g.edges.emplace_back(i, i + 1);
  g.features.resize(n, d);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < d; ++c) g.features(i, c) = gauss(rng);
  }
  g.masks.train = std::move(train);
  g.masks.validation = std::move(validation);
  g.masks.clean = std::move(clean);
  g.original_ids.resize(n);
  for (int i = 0; i < n; ++i) g.original_ids[i] = i;
  g.validate();
  return g;
}

/// Mean cross-entropy risk over `nodes`, recomputed from scratch.
inline double risk_value(const deglif::SpMat& a, const Mat& x,
                         const Eigen::VectorXi& labels,
                         const std::vector<int>& nodes, const Vec& theta,
                         const deglif::ParamShape& shape, double l2_reg,
                         bool include_reg) {
  const auto cache = deglif::forward(a, x, theta, shape);
  const auto r =
      deglif::risk(cache, labels, nodes, theta, l2_reg, include_reg);
  return r.risk;
}

/// Central-difference gradient with per-coordinate step 1e-5 * (1 + |t_i|).
inline Vec numeric_gradient(const deglif::SpMat& a, const Mat& x,
                            const Eigen::VectorXi& labels,
                            const std::vector<int>& nodes, const Vec& theta,
                            const deglif::ParamShape& shape, double l2_reg,
                            bool include_reg) {
  Vec g(theta.size());
  for (int i = 0; i < theta.size(); ++i) {
    const double h = 1e-5 * (1.0 + std::abs(theta[i]));
    Vec tp = theta, tm = theta;
    tp[i] += h;
    tm[i] -= h;
    g[i] = (risk_value(a, x, labels, nodes, tp, shape, l2_reg, include_reg) -
            risk_value(a, x, labels, nodes, tm, shape, l2_reg, include_reg)) /
           (2.0 * h);
  }
  return g;
}

inline double rel_err(const Vec& got, const Vec& want) {
  const double denom = std::max(want.norm(), 1e-12);
  return (got - want).norm() / denom;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("deglif_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace th
