#include "deglif/gcn.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace deglif {

Vec init_params(const GcnConfig& cfg) {
  const ParamShape s = ParamShape::from_config(cfg);
  if (s.d < 1 || s.h < 1 || s.K < 1 || cfg.l2_reg <= 0.0) {
    throw DeglifError("init_params: invalid config");
  }
  Vec theta = Vec::Zero(s.size());
  std::mt19937_64 rng(cfg.init_seed);
  auto glorot = [&](Eigen::Map<Mat> w, int fan_in, int fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> unif(-bound, bound);
    for (int c = 0; c < w.cols(); ++c) {
      for (int r = 0; r < w.rows(); ++r) w(r, c) = unif(rng);
    }
  };
  glorot(s.w1(theta), s.d, s.h);
  glorot(s.w2(theta), s.h, s.K);
  return theta;
}

ForwardCache forward(const SpMat& a_hat, const Mat& x, const Vec& theta,
                     const ParamShape& shape) {
  if (!theta.allFinite() || !x.allFinite()) {
    throw DeglifError("forward: non-finite input");
  }
  if (x.cols() != shape.d || theta.size() != shape.size() ||
      a_hat.rows() != x.rows()) {
    throw DeglifError("forward: shape mismatch");
  }
  ForwardCache c;
  c.z1 = (a_hat * (x * shape.w1(theta))).rowwise() +
         shape.b1(theta).transpose();
  c.relu_mask = (c.z1.array() > 0.0).cast<double>();
  c.h1 = c.z1.cwiseProduct(c.relu_mask);
  c.logits = (a_hat * (c.h1 * shape.w2(theta))).rowwise() +
             shape.b2(theta).transpose();
  // stable row softmax
  c.probs.resize(c.logits.rows(), c.logits.cols());
  for (int i = 0; i < c.logits.rows(); ++i) {
    const double m = c.logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (c.logits.row(i).array() - m).exp();
    c.probs.row(i) = e / e.sum();
  }
  return c;
}

RiskBreakdown risk(const ForwardCache& cache, const Eigen::VectorXi& labels,
                   const std::vector<int>& nodes, const Vec& theta,
                   double l2_reg, bool include_reg, const Vec* weights) {
  if (nodes.empty()) throw DeglifError("risk: empty node set");
  RiskBreakdown r;
  r.per_node_loss.resize(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const int v = nodes[i];
    double l = -std::log(std::max(cache.probs(v, labels[v]), 1e-300));
    if (weights) l *= (*weights)[v];
    r.per_node_loss[i] = l;
  }
  r.mean_loss = r.per_node_loss.mean();
  r.reg_term = include_reg ? 0.5 * l2_reg * theta.squaredNorm() : 0.0;
  r.risk = r.mean_loss + r.reg_term;
  return r;
}

namespace {

/// Shared reverse pass; w2 is taken from theta explicitly.
Vec backprop_impl(const SpMat& a_hat, const Mat& x, const ForwardCache& cache,
                  const Mat& d_logits, const Vec& theta,
                  const ParamShape& shape) {
  Vec g = Vec::Zero(shape.size());
  shape.w2(g) = (a_hat * cache.h1).transpose() * d_logits;
  shape.b2(g) = d_logits.colwise().sum();
  Mat dz1 = ((a_hat * d_logits) * shape.w2(theta).transpose())
                .cwiseProduct(cache.relu_mask);
  shape.w1(g) = (a_hat * x).transpose() * dz1;
  shape.b1(g) = dz1.colwise().sum();
  return g;
}

Mat hard_label_seed(const ForwardCache& cache, const Eigen::VectorXi& labels,
                    const std::vector<int>& nodes, double scale) {
  Mat dm = Mat::Zero(cache.probs.rows(), cache.probs.cols());
  for (int v : nodes) {
    dm.row(v) += scale * cache.probs.row(v);
    dm(v, labels[v]) -= scale;
  }
  return dm;
}

}  // namespace

Vec backprop(const SpMat& a_hat, const Mat& x, const ForwardCache& cache,
             const Mat& d_logits, const Vec& theta, const ParamShape& shape) {
  return backprop_impl(a_hat, x, cache, d_logits, theta, shape);
}

Vec gradient(const SpMat& a_hat, const Mat& x, const Eigen::VectorXi& labels,
             const std::vector<int>& nodes, const Vec& theta,
             const ParamShape& shape, double l2_reg, bool include_reg) {
  if (nodes.empty()) throw DeglifError("gradient: empty node set");
  const ForwardCache cache = forward(a_hat, x, theta, shape);
  const Mat dm = hard_label_seed(cache, labels, nodes, 1.0 / nodes.size());
  Vec g = backprop_impl(a_hat, x, cache, dm, theta, shape);
  if (include_reg) g += l2_reg * theta;
  return g;
}

Vec sum_loss_gradient(const SpMat& a_hat, const Mat& x,
                      const Eigen::VectorXi& labels,
                      const std::vector<int>& nodes, const Vec& theta,
                      const ParamShape& shape) {
  const ForwardCache cache = forward(a_hat, x, theta, shape);
  if (nodes.empty()) return Vec::Zero(shape.size());
  const Mat dm = hard_label_seed(cache, labels, nodes, 1.0);
  return backprop_impl(a_hat, x, cache, dm, theta, shape);
}

Vec node_loss_gradient(const SpMat& a_hat, const Mat& x, const Vec& theta,
                       const ParamShape& shape, int node, int target_class,
                       double weight) {
  const ForwardCache cache = forward(a_hat, x, theta, shape);
  Mat dm = Mat::Zero(cache.probs.rows(), cache.probs.cols());
  dm.row(node) = weight * cache.probs.row(node);
  dm(node, target_class) -= weight;
  return backprop_impl(a_hat, x, cache, dm, theta, shape);
}

TrainResult train(const Graph& g, const GcnConfig& cfg,
                  const Vec* loss_weights, const NormalizedAdjacency* pre) {
  if (g.masks.train.empty()) throw DeglifError("train: empty training mask");
  if (g.features.cols() != cfg.input_dim || g.n_classes != cfg.n_classes) {
    throw DeglifError("train: config does not match graph");
  }
  const ParamShape shape = ParamShape::from_config(cfg);
  NormalizedAdjacency local;
  if (!pre) local = normalize(g);
  const SpMat& a_hat = pre ? pre->mat : local.mat;

  TrainResult out;
  out.theta = init_params(cfg);
  out.history.reserve(cfg.epochs);
  const double inv_n = 1.0 / g.masks.train.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const ForwardCache cache = forward(a_hat, g.features, out.theta, shape);
    Mat dm = Mat::Zero(g.n_nodes, g.n_classes);
    double loss = 0.0;
    for (int v : g.masks.train) {
      const double w = loss_weights ? (*loss_weights)[v] : 1.0;
      loss += -w * std::log(std::max(cache.probs(v, g.labels[v]), 1e-300));
      dm.row(v) += w * inv_n * cache.probs.row(v);
      dm(v, g.labels[v]) -= w * inv_n;
    }
    const double r =
        loss * inv_n + 0.5 * cfg.l2_reg * out.theta.squaredNorm();
    if (!std::isfinite(r)) {
      throw DeglifError("train: diverged at epoch " + std::to_string(epoch) +
                        " (non-finite risk)");
    }
    out.history.push_back(r);
    Vec grad = backprop_impl(a_hat, g.features, cache, dm, out.theta, shape);
    grad += cfg.l2_reg * out.theta;
    out.theta -= cfg.learning_rate * grad;
  }
  return out;
}

std::pair<Eigen::VectorXi, Mat> predict(const SpMat& a_hat, const Mat& x,
                                        const Vec& theta,
                                        const ParamShape& shape) {
  const ForwardCache cache = forward(a_hat, x, theta, shape);
  Eigen::VectorXi cls(cache.probs.rows());
  for (int i = 0; i < cache.probs.rows(); ++i) {
    int best = 0;
    for (int k = 1; k < cache.probs.cols(); ++k) {
      if (cache.probs(i, k) > cache.probs(i, best)) best = k;
    }
    cls[i] = best;
  }
  return {cls, cache.probs};
}

void save_params(const Vec& theta, const ParamShape& shape,
                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DeglifError("cannot write " + path.string());
  out.precision(17);
  out << "d,h,K\n" << shape.d << "," << shape.h << "," << shape.K << "\n";
  for (int i = 0; i < theta.size(); ++i) out << theta[i] << "\n";
}

std::pair<Vec, ParamShape> load_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DeglifError("missing file: " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::getline(in, line);
  std::stringstream ss(line);
  std::string f;
  ParamShape shape;
  std::getline(ss, f, ',');
  shape.d = std::stoi(f);
  std::getline(ss, f, ',');
  shape.h = std::stoi(f);
  std::getline(ss, f, ',');
  shape.K = std::stoi(f);
  Vec theta(shape.size());
  for (int i = 0; i < theta.size(); ++i) {
    if (!std::getline(in, line)) {
      throw DeglifError(path.string() + ": truncated parameter vector");
    }
    theta[i] = std::stod(line);
  }
  return {std::move(theta), shape};
}

void save_history(const std::vector<double>& history,
                  const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DeglifError("cannot write " + path.string());
  out.precision(17);
  out << "epoch,train_risk\n";
  for (std::size_t i = 0; i < history.size(); ++i) {
    out << i << "," << history[i] << "\n";
  }
}

}  // namespace deglif
