#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace deglif {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Errors raised on invalid inputs (bad files, broken invariants, bad specs).
struct DeglifError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Disjoint node roles. `clean` is a subset of `validation`.
struct RoleMasks {
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;
  std::vector<int> clean;
};

/// Immutable sparse undirected graph with node features and labels.
/// Edges are stored as (u, v) with u < v, sorted and deduplicated; no
/// self-loops (those appear only during normalization).
struct Graph {
  int n_nodes = 0;
  int n_classes = 0;
  std::vector<std::pair<int, int>> edges;
  Mat features;                 // n_nodes x d
  Eigen::VectorXi labels;       // values in [0, n_classes)
  RoleMasks masks;
  std::vector<long long> original_ids;  // file-order ids, dense index -> id

  bool has_edge(int u, int v) const;
  /// Throws DeglifError if any structural invariant is violated.
  void validate() const;
};

/// Symmetric-normalized adjacency D~^{-1/2} (A + I) D~^{-1/2} in CSR.
struct NormalizedAdjacency {
  SpMat mat;
};

struct Perturbation {
  enum class Kind { RemoveNodeEdges, RemoveEdge };
  Kind kind;
  int u = 0;
  int v = 0;  // unused for RemoveNodeEdges

  static Perturbation remove_node_edges(int node) {
    return {Kind::RemoveNodeEdges, node, -1};
  }
  static Perturbation remove_edge(int a, int b) {
    return {Kind::RemoveEdge, a, b};
  }
};

NormalizedAdjacency normalize(const Graph& g);

/// Returns a new graph with the edge set modified; features, labels and
/// masks are unchanged. Callers re-run normalize() to get fresh degrees.
Graph perturb(const Graph& g, const Perturbation& p);

struct SbmSpec {
  int n_per_class = 0;
  int n_classes = 0;
  double p_in = 0.0;
  double p_out = 0.0;
  int feature_dim = 0;
  double feature_noise_sigma = 0.0;
  double train_frac = 0.6;
  double val_frac = 0.2;
  double clean_frac = 0.5;  // fraction of the validation set marked clean
};

/// Seeded stochastic block model generator for desk-scale fixtures.
/// Features are the class one-hot (first K coordinates) plus Gaussian noise.
Graph generate_sbm(const SbmSpec& spec, std::uint64_t seed);

/// Reads nodes.csv, edges.csv and splits.json from `dir`.
Graph load_graph(const std::filesystem::path& dir);

/// Writes the same three files load_graph reads.
void save_graph(const Graph& g, const std::filesystem::path& dir);

}  // namespace deglif
