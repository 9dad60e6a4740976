#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "deglif/gcn.hpp"
#include "deglif/graph.hpp"

namespace deglif {

/// Evaluates v -> (H + damping I) v where H is the Hessian of the
/// regularized mean training risk at the bound parameters. The analytic
/// backend is forward-over-reverse with the ReLU mask frozen at theta;
/// the finite-difference backend is a central difference of the gradient.
class HvpOperator {
 public:
  HvpOperator(const NormalizedAdjacency& a_hat, const Mat& x,
              const Eigen::VectorXi& labels, std::vector<int> train_nodes,
              Vec theta, ParamShape shape, double l2_reg, double damping);

  Vec apply(const Vec& v) const;
  Vec apply_fd(const Vec& v) const;

  int dim() const { return shape_.size(); }
  double damping() const { return damping_; }
  double l2_reg() const { return l2_reg_; }
  const Vec& theta() const { return theta_; }
  const ParamShape& shape() const { return shape_; }

 private:
  SpMat a_;
  Mat x_;
  Eigen::VectorXi labels_;
  std::vector<int> train_;
  Vec theta_;
  ParamShape shape_;
  double l2_reg_;
  double damping_;
  // cached at theta
  ForwardCache cache_;
  Mat ax_, ah1_, seed_, a_seed_;
};

struct SolveReport {
  Vec solution;
  double rel_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_trace;  // relative residual per iteration
};

/// Conjugate gradient on the damped operator. Requires l2_reg + damping > 0.
SolveReport inverse_hvp(const HvpOperator& op, const Vec& rhs,
                        double tol = 1e-6, int max_iters = 1000);

/// Per-(training node, clean node) influence values I_up(-z, v) with the
/// DeGLIF aggregates per row.
struct InfluenceTable {
  std::vector<int> train_nodes;
  std::vector<int> clean_nodes;
  Mat iup;           // |train| x |clean|
  Vec icv;           // -row sums
  Vec neg_fraction;  // fraction of strictly negative entries per row
  bool valid = false;

  int row_of(int z) const;  // -1 if z not present
  void save(const std::filesystem::path& iup_csv,
            const std::filesystem::path& aggregate_csv) const;
};

struct SolverOptions {
  double damping = 1e-3;
  double cg_tol = 1e-6;
  int cg_max_iters = 1000;
};

/// Binds a trained model to its graph and owns the Hessian solves behind
/// every influence quantity. Read-only after construction; the per-node
/// computations are safe to run in parallel.
class InfluenceSolver {
 public:
  InfluenceSolver(const Graph& g, Vec theta, ParamShape shape, double l2_reg,
                  SolverOptions opts = {});

  const HvpOperator& op() const { return op_; }
  int n_train() const { return static_cast<int>(g_.masks.train.size()); }

  /// The bracketed vector of the node-removal update: the node's own loss
  /// gradient minus the structural summed-gradient change after isolating z
  /// and renormalizing. z's own term is excluded from both structural sums.
  Vec removal_gradient(int z) const;

  /// I(-z) = (1/n) H^{-1} removal_gradient(z).
  Vec node_influence(int z) const;

  /// I(-e) = -(1/n) H^{-1} [grad sum_train L(G_-e) - grad sum_train L(G)].
  Vec edge_influence(int u, int v) const;

  /// (1/n) H^{-1} grad L(z): the i.i.d.-style influence without structural
  /// terms, used by the theorem identities.
  Vec loss_part_influence(int z) const;

  /// I_up values of the loss-part influence against each clean node.
  Vec loss_part_iup(int z) const;

  /// Influence of relabelling z to `new_label`. Hard mode uses the plain
  /// cross-entropy gradient of the new label; phi mode uses the
  /// phi-weighted soft label, whose loss reduces to -log(1 - f_m).
  /// Returns the parameter-space vector and the per-clean-node
  /// I_up(z -> z_delta, v) values.
  std::pair<Vec, Vec> relabel_influence(int z, int new_label,
                                        bool phi_weighted = false) const;

  /// Transposed-order table: one CG solve per clean node, then dot products
  /// against the per-z removal gradients. OpenMP-parallel over both loops.
  InfluenceTable iup_table() const;

  /// Direct-order serial reference: one CG solve per training node.
  InfluenceTable iup_table_serial() const;

  /// Clean-node solve vectors s_v = H^{-1} grad L(v); computed once.
  const std::vector<Vec>& clean_solves() const;
  bool all_solves_converged() const;

 private:
  Vec solve(const Vec& rhs) const;
  Vec structural_difference(const Graph& perturbed,
                            const std::vector<int>& nodes) const;

  Graph g_;
  NormalizedAdjacency a_;
  Vec theta_;
  ParamShape shape_;
  double l2_reg_;
  SolverOptions opts_;
  HvpOperator op_;
  Vec train_sum_grad_;  // grad of summed training loss on the intact graph
  mutable std::vector<Vec> clean_solves_;
  mutable std::vector<SolveReport> clean_reports_;
  mutable bool clean_done_ = false;
};

/// Bounded worker count for the parallel maps (respects DEGLIF_THREADS).
int worker_count();

}  // namespace deglif
