#include "deglif/graph.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <unordered_set>

namespace deglif {

namespace {

std::pair<int, int> canonical(int u, int v) {
  return u < v ? std::make_pair(u, v) : std::make_pair(v, u);
}

void check_disjoint(const std::vector<int>& a, const std::vector<int>& b,
                    const std::string& what) {
  std::unordered_set<int> sa(a.begin(), a.end());
  for (int x : b) {
    if (sa.count(x)) {
      throw DeglifError("masks not disjoint: node " + std::to_string(x) +
                        " in " + what);
    }
  }
}

}  // namespace

bool Graph::has_edge(int u, int v) const {
  auto e = canonical(u, v);
  return std::binary_search(edges.begin(), edges.end(), e);
}

void Graph::validate() const {
  if (n_nodes < 0 || n_classes < 1) {
    throw DeglifError("graph: bad node or class count");
  }
  if (features.rows() != n_nodes) {
    throw DeglifError("graph: feature row count != n_nodes");
  }
  if (labels.size() != n_nodes) {
    throw DeglifError("graph: label count != n_nodes");
  }
  for (int i = 0; i < n_nodes; ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) {
      throw DeglifError("graph: label out of range at node " +
                        std::to_string(i));
    }
  }
  for (auto [u, v] : edges) {
    if (u == v) throw DeglifError("graph: self-loop in edge list");
    if (u < 0 || v < 0 || u >= n_nodes || v >= n_nodes) {
      throw DeglifError("graph: edge endpoint out of range");
    }
    if (u > v) throw DeglifError("graph: edge not canonical (u < v)");
  }
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i - 1] < edges[i])) {
      throw DeglifError("graph: edges not sorted/deduplicated");
    }
  }
  auto in_range = [&](const std::vector<int>& m, const char* name) {
    for (int x : m) {
      if (x < 0 || x >= n_nodes) {
        throw DeglifError(std::string("graph: mask '") + name +
                          "' index out of range");
      }
    }
  };
  in_range(masks.train, "train");
  in_range(masks.validation, "validation");
  in_range(masks.test, "test");
  in_range(masks.clean, "clean");
  check_disjoint(masks.train, masks.validation, "train/validation");
  check_disjoint(masks.train, masks.test, "train/test");
  check_disjoint(masks.validation, masks.test, "validation/test");
  std::unordered_set<int> val(masks.validation.begin(), masks.validation.end());
  for (int c : masks.clean) {
    if (!val.count(c)) throw DeglifError("clean \xE2\x8A\x84 validation");
  }
}

NormalizedAdjacency normalize(const Graph& g) {
  const int n = g.n_nodes;
  Vec deg = Vec::Ones(n);  // self-loop contributes 1 to every degree
  for (auto [u, v] : g.edges) {
    deg[u] += 1.0;
    deg[v] += 1.0;
  }
  Vec dinv = deg.array().rsqrt();

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(2 * g.edges.size() + n);
  for (int i = 0; i < n; ++i) {
    trips.emplace_back(i, i, dinv[i] * dinv[i]);
  }
  for (auto [u, v] : g.edges) {
    double w = dinv[u] * dinv[v];
    trips.emplace_back(u, v, w);
    trips.emplace_back(v, u, w);
  }
  NormalizedAdjacency a;
  a.mat.resize(n, n);
  a.mat.setFromTriplets(trips.begin(), trips.end());
  a.mat.makeCompressed();
  return a;
}

Graph perturb(const Graph& g, const Perturbation& p) {
  Graph out = g;
  if (p.kind == Perturbation::Kind::RemoveNodeEdges) {
    if (p.u < 0 || p.u >= g.n_nodes) {
      throw DeglifError("perturb: node out of range");
    }
    std::erase_if(out.edges, [&](const std::pair<int, int>& e) {
      return e.first == p.u || e.second == p.u;
    });
  } else {
    auto e = p.u < p.v ? std::make_pair(p.u, p.v) : std::make_pair(p.v, p.u);
    auto it = std::lower_bound(out.edges.begin(), out.edges.end(), e);
    if (it == out.edges.end() || *it != e) {
      throw DeglifError("perturb: edge not present");
    }
    out.edges.erase(it);
  }
  return out;
}

Graph generate_sbm(const SbmSpec& spec, std::uint64_t seed) {
  if (spec.n_per_class < 1 || spec.n_classes < 2 || spec.p_in <= 0.0 ||
      spec.p_in > 1.0 || spec.p_out < 0.0 || spec.p_out >= 1.0 ||
      spec.p_in <= spec.p_out || spec.feature_dim < spec.n_classes ||
      spec.feature_noise_sigma < 0.0) {
    throw DeglifError("generate_sbm: invalid spec");
  }
  if (spec.train_frac <= 0.0 || spec.val_frac < 0.0 ||
      spec.train_frac + spec.val_frac > 1.0 || spec.clean_frac < 0.0 ||
      spec.clean_frac > 1.0) {
    throw DeglifError("generate_sbm: invalid split fractions");
  }

  const int K = spec.n_classes;
  const int n = spec.n_per_class * K;
  Graph g;
  g.n_nodes = n;
  g.n_classes = K;
  g.labels.resize(n);
  for (int i = 0; i < n; ++i) g.labels[i] = i / spec.n_per_class;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double p = g.labels[i] == g.labels[j] ? spec.p_in : spec.p_out;
      if (unif(rng) < p) g.edges.emplace_back(i, j);
    }
  }
  std::sort(g.edges.begin(), g.edges.end());

  std::normal_distribution<double> gauss(0.0, 1.0);
  g.features = Mat::Zero(n, spec.feature_dim);
  for (int i = 0; i < n; ++i) {
    g.features(i, g.labels[i]) = 1.0;
    for (int d = 0; d < spec.feature_dim; ++d) {
      g.features(i, d) += spec.feature_noise_sigma * gauss(rng);
    }
  }

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const int n_train = std::max(1, static_cast<int>(spec.train_frac * n));
  const int n_val = static_cast<int>(spec.val_frac * n);
  for (int i = 0; i < n; ++i) {
    if (i < n_train) {
      g.masks.train.push_back(order[i]);
    } else if (i < n_train + n_val) {
      g.masks.validation.push_back(order[i]);
    } else {
      g.masks.test.push_back(order[i]);
    }
  }
  std::sort(g.masks.train.begin(), g.masks.train.end());
  std::sort(g.masks.validation.begin(), g.masks.validation.end());
  std::sort(g.masks.test.begin(), g.masks.test.end());
  const int n_clean =
      static_cast<int>(spec.clean_frac * g.masks.validation.size());
  g.masks.clean.assign(g.masks.validation.begin(),
                       g.masks.validation.begin() + n_clean);

  g.original_ids.resize(n);
  for (int i = 0; i < n; ++i) g.original_ids[i] = i;
  g.validate();
  return g;
}

}  // namespace deglif
