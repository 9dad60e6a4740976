#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "deglif/graph.hpp"

namespace deglif {

struct GcnConfig {
  int input_dim = 0;
  int hidden_dim = 16;
  int n_classes = 0;
  double l2_reg = 5e-4;
  double learning_rate = 0.5;
  int epochs = 400;
  std::uint64_t init_seed = 0;
};

/// Layout of the flat parameter vector: W1 (d*h), b1 (h), W2 (h*K), b2 (K),
/// each matrix stored column-major.
struct ParamShape {
  int d = 0;
  int h = 0;
  int K = 0;

  static ParamShape from_config(const GcnConfig& c) {
    return {c.input_dim, c.hidden_dim, c.n_classes};
  }
  int size() const { return d * h + h + h * K + K; }
  int w1_off() const { return 0; }
  int b1_off() const { return d * h; }
  int w2_off() const { return d * h + h; }
  int b2_off() const { return d * h + h + h * K; }

  Eigen::Map<const Mat> w1(const Vec& t) const {
    return {t.data() + w1_off(), d, h};
  }
  Eigen::Map<const Vec> b1(const Vec& t) const { return {t.data() + b1_off(), h}; }
  Eigen::Map<const Mat> w2(const Vec& t) const {
    return {t.data() + w2_off(), h, K};
  }
  Eigen::Map<const Vec> b2(const Vec& t) const { return {t.data() + b2_off(), K}; }
  Eigen::Map<Mat> w1(Vec& t) const { return {t.data() + w1_off(), d, h}; }
  Eigen::Map<Vec> b1(Vec& t) const { return {t.data() + b1_off(), h}; }
  Eigen::Map<Mat> w2(Vec& t) const { return {t.data() + w2_off(), h, K}; }
  Eigen::Map<Vec> b2(Vec& t) const { return {t.data() + b2_off(), K}; }
};

/// Intermediates of one forward pass. `logits` is the last-layer
/// representation matrix; `probs` its row-softmax.
struct ForwardCache {
  Mat z1;         // A X W1 + b1
  Mat h1;         // relu(z1)
  Mat relu_mask;  // 1 where z1 > 0
  Mat logits;     // A h1 W2 + b2
  Mat probs;      // row softmax of logits
};

struct RiskBreakdown {
  Vec per_node_loss;
  double mean_loss = 0.0;
  double reg_term = 0.0;
  double risk = 0.0;  // mean_loss + reg_term
};

Vec init_params(const GcnConfig& cfg);

ForwardCache forward(const SpMat& a_hat, const Mat& x, const Vec& theta,
                     const ParamShape& shape);

/// Cross-entropy risk over `nodes`. The regularization term is added only
/// when include_reg is set. Optional `weights` (full-size, indexed by node)
/// scale individual losses.
RiskBreakdown risk(const ForwardCache& cache, const Eigen::VectorXi& labels,
                   const std::vector<int>& nodes, const Vec& theta,
                   double l2_reg, bool include_reg,
                   const Vec* weights = nullptr);

/// Reverse pass from a logits-space seed dL/dM. Core of every gradient here.
Vec backprop(const SpMat& a_hat, const Mat& x, const ForwardCache& cache,
             const Mat& d_logits, const Vec& theta, const ParamShape& shape);

/// Gradient of the mean cross-entropy loss over `nodes` (+ l2_reg * theta
/// when include_reg).
Vec gradient(const SpMat& a_hat, const Mat& x, const Eigen::VectorXi& labels,
             const std::vector<int>& nodes, const Vec& theta,
             const ParamShape& shape, double l2_reg, bool include_reg);

/// Gradient of the summed (unnormalized) loss over `nodes`, no reg term.
Vec sum_loss_gradient(const SpMat& a_hat, const Mat& x,
                      const Eigen::VectorXi& labels,
                      const std::vector<int>& nodes, const Vec& theta,
                      const ParamShape& shape);

/// Gradient of -weight * log f(node)_target at a single node.
Vec node_loss_gradient(const SpMat& a_hat, const Mat& x, const Vec& theta,
                       const ParamShape& shape, int node, int target_class,
                       double weight = 1.0);

struct TrainResult {
  Vec theta;
  std::vector<double> history;  // regularized training risk per epoch
};

/// Full-batch gradient descent on the regularized training risk.
/// Deterministic given the config. Aborts on non-finite risk.
TrainResult train(const Graph& g, const GcnConfig& cfg,
                  const Vec* loss_weights = nullptr,
                  const NormalizedAdjacency* prenormalized = nullptr);

/// Row argmax of the probability matrix; ties break toward the lowest class.
std::pair<Eigen::VectorXi, Mat> predict(const SpMat& a_hat, const Mat& x,
                                        const Vec& theta,
                                        const ParamShape& shape);

void save_params(const Vec& theta, const ParamShape& shape,
                 const std::filesystem::path& path);
std::pair<Vec, ParamShape> load_params(const std::filesystem::path& path);

void save_history(const std::vector<double>& history,
                  const std::filesystem::path& path);

}  // namespace deglif
