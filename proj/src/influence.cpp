#include "deglif/influence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace deglif {

int worker_count() {
#ifdef _OPENMP
  int n = omp_get_max_threads();
#else
  int n = 1;
#endif
  if (const char* env = std::getenv("DEGLIF_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) n = std::min(n, cap);
  }
  return n;
}

HvpOperator::HvpOperator(const NormalizedAdjacency& a_hat, const Mat& x,
                         const Eigen::VectorXi& labels,
                         std::vector<int> train_nodes, Vec theta,
                         ParamShape shape, double l2_reg, double damping)
    : a_(a_hat.mat),
      x_(x),
      labels_(labels),
      train_(std::move(train_nodes)),
      theta_(std::move(theta)),
      shape_(shape),
      l2_reg_(l2_reg),
      damping_(damping) {
  if (damping_ < 0.0) throw DeglifError("HvpOperator: negative damping");
  if (!train_.empty()) {
    cache_ = forward(a_, x_, theta_, shape_);
    ax_ = a_ * x_;
    ah1_ = a_ * cache_.h1;
    const double inv_n = 1.0 / train_.size();
    seed_ = Mat::Zero(x_.rows(), shape_.K);
    for (int z : train_) {
      seed_.row(z) += inv_n * cache_.probs.row(z);
      seed_(z, labels_[z]) -= inv_n;
    }
    a_seed_ = a_ * seed_;
  }
}

Vec HvpOperator::apply(const Vec& v) const {
  if (!v.allFinite()) throw DeglifError("hvp: non-finite direction");
  if (train_.empty()) return (l2_reg_ + damping_) * v;

  const auto vw1 = shape_.w1(v);
  const auto vb1 = shape_.b1(v);
  const auto vw2 = shape_.w2(v);
  const auto vb2 = shape_.b2(v);
  const auto w2 = shape_.w2(theta_);

  Mat z1t = ax_ * vw1;
  z1t.rowwise() += vb1.transpose();
  const Mat h1t = z1t.cwiseProduct(cache_.relu_mask);
  Mat mt = a_ * (h1t * w2 + cache_.h1 * vw2);
  mt.rowwise() += vb2.transpose();

  // tangent of the softmax seed, nonzero only on training rows
  const double inv_n = 1.0 / train_.size();
  Mat seed_t = Mat::Zero(x_.rows(), shape_.K);
  for (int z : train_) {
    const auto f = cache_.probs.row(z);
    const auto m = mt.row(z);
    seed_t.row(z) = inv_n * (f.cwiseProduct(m) - f * f.dot(m));
  }

  Vec out = Vec::Zero(shape_.size());
  shape_.w2(out) = (a_ * h1t).transpose() * seed_ + ah1_.transpose() * seed_t;
  shape_.b2(out) = seed_t.colwise().sum();
  Mat dz1t = ((a_ * seed_t) * w2.transpose() + a_seed_ * vw2.transpose())
                 .cwiseProduct(cache_.relu_mask);
  shape_.w1(out) = ax_.transpose() * dz1t;
  shape_.b1(out) = dz1t.colwise().sum();
  out += (l2_reg_ + damping_) * v;
  return out;
}

Vec HvpOperator::apply_fd(const Vec& v) const {
  if (train_.empty()) return (l2_reg_ + damping_) * v;
  const double eps =
      1e-4 * (1.0 + theta_.norm()) / std::max(v.norm(), 1e-12);
  const Vec gp = gradient(a_, x_, labels_, train_, theta_ + eps * v, shape_,
                          l2_reg_, true);
  const Vec gm = gradient(a_, x_, labels_, train_, theta_ - eps * v, shape_,
                          l2_reg_, true);
  return (gp - gm) / (2.0 * eps) + damping_ * v;
}

SolveReport inverse_hvp(const HvpOperator& op, const Vec& rhs, double tol,
                        int max_iters) {
  if (op.l2_reg() + op.damping() <= 0.0) {
    throw DeglifError("inverse_hvp: operator is not guaranteed definite");
  }
  SolveReport rep;
  const double rhs_norm = rhs.norm();
  rep.solution = Vec::Zero(op.dim());
  if (rhs_norm == 0.0) {
    rep.converged = true;
    return rep;
  }
  Vec r = rhs;
  Vec p = r;
  double rr = r.squaredNorm();
  for (int it = 0; it < max_iters; ++it) {
    const Vec q = op.apply(p);
    const double pq = p.dot(q);
    if (!(pq > 0.0) || !std::isfinite(pq)) {
      throw DeglifError(
          "inverse_hvp: non-positive curvature encountered; "
          "increase damping");
    }
    const double alpha = rr / pq;
    rep.solution += alpha * p;
    r -= alpha * q;
    if (!r.allFinite()) {
      throw DeglifError("inverse_hvp: non-finite iterate; increase damping");
    }
    const double rr_new = r.squaredNorm();
    rep.iterations = it + 1;
    rep.rel_residual = std::sqrt(rr_new) / rhs_norm;
    rep.residual_trace.push_back(rep.rel_residual);
    if (rep.rel_residual <= tol) {
      rep.converged = true;
      return rep;
    }
    p = r + (rr_new / rr) * p;
    rr = rr_new;
  }
  rep.converged = rep.rel_residual <= tol;
  return rep;
}

int InfluenceTable::row_of(int z) const {
  auto it = std::find(train_nodes.begin(), train_nodes.end(), z);
  return it == train_nodes.end()
             ? -1
             : static_cast<int>(it - train_nodes.begin());
}

void InfluenceTable::save(const std::filesystem::path& iup_csv,
                          const std::filesystem::path& aggregate_csv) const {
  {
    std::ofstream out(iup_csv);
    if (!out) throw DeglifError("cannot write " + iup_csv.string());
    out.precision(17);
    out << "z,v,iup\n";
    for (std::size_t i = 0; i < train_nodes.size(); ++i) {
      for (std::size_t j = 0; j < clean_nodes.size(); ++j) {
        out << train_nodes[i] << "," << clean_nodes[j] << "," << iup(i, j)
            << "\n";
      }
    }
  }
  {
    std::ofstream out(aggregate_csv);
    if (!out) throw DeglifError("cannot write " + aggregate_csv.string());
    out.precision(17);
    out << "z,icv,neg_fraction\n";
    for (std::size_t i = 0; i < train_nodes.size(); ++i) {
      out << train_nodes[i] << "," << icv[i] << "," << neg_fraction[i] << "\n";
    }
  }
}

InfluenceSolver::InfluenceSolver(const Graph& g, Vec theta, ParamShape shape,
                                 double l2_reg, SolverOptions opts)
    : g_(g),
      a_(normalize(g)),
      theta_(std::move(theta)),
      shape_(shape),
      l2_reg_(l2_reg),
      opts_(opts),
      op_(a_, g_.features, g_.labels, g_.masks.train, theta_, shape_, l2_reg,
          opts.damping) {
  train_sum_grad_ = sum_loss_gradient(a_.mat, g_.features, g_.labels,
                                      g_.masks.train, theta_, shape_);
}

Vec InfluenceSolver::solve(const Vec& rhs) const {
  SolveReport rep = inverse_hvp(op_, rhs, opts_.cg_tol, opts_.cg_max_iters);
  if (!rep.converged) {
    throw DeglifError("influence: CG did not converge (residual " +
                      std::to_string(rep.rel_residual) + ")");
  }
  return std::move(rep.solution);
}

Vec InfluenceSolver::structural_difference(
    const Graph& perturbed, const std::vector<int>& nodes) const {
  const NormalizedAdjacency ap = normalize(perturbed);
  const Vec after = sum_loss_gradient(ap.mat, perturbed.features,
                                      perturbed.labels, nodes, theta_, shape_);
  const Vec before = sum_loss_gradient(a_.mat, g_.features, g_.labels, nodes,
                                       theta_, shape_);
  return after - before;
}

Vec InfluenceSolver::removal_gradient(int z) const {
  const auto& train = g_.masks.train;
  if (!std::binary_search(train.begin(), train.end(), z)) {
    throw DeglifError("removal_gradient: node not in training mask");
  }
  const Vec own = node_loss_gradient(a_.mat, g_.features, theta_, shape_, z,
                                     g_.labels[z]);
  // summed difference over train \ {z}: one backward per graph, using
  // sum_k grad L_k = grad sum_k L_k
  std::vector<int> others;
  others.reserve(train.size() - 1);
  for (int k : train) {
    if (k != z) others.push_back(k);
  }
  const Graph gz = perturb(g_, Perturbation::remove_node_edges(z));
  const Vec delta = structural_difference(gz, others);
  return own - delta;
}

Vec InfluenceSolver::node_influence(int z) const {
  return solve(removal_gradient(z)) / n_train();
}

Vec InfluenceSolver::edge_influence(int u, int v) const {
  if (!g_.has_edge(u, v)) throw DeglifError("edge_influence: edge not present");
  const Graph ge = perturb(g_, Perturbation::remove_edge(u, v));
  const Vec delta = structural_difference(ge, g_.masks.train);
  return -solve(delta) / n_train();
}

Vec InfluenceSolver::loss_part_influence(int z) const {
  const Vec grad = node_loss_gradient(a_.mat, g_.features, theta_, shape_, z,
                                      g_.labels[z]);
  return solve(grad) / n_train();
}

const std::vector<Vec>& InfluenceSolver::clean_solves() const {
  if (!clean_done_) {
    const auto& clean = g_.masks.clean;
    clean_solves_.assign(clean.size(), Vec());
    clean_reports_.assign(clean.size(), SolveReport{});
    const int nw = worker_count();
    std::string error;
#pragma omp parallel for schedule(dynamic) num_threads(nw)
    for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(clean.size());
         ++j) {
      try {
        const Vec rhs = node_loss_gradient(a_.mat, g_.features, theta_,
                                           shape_, clean[j],
                                           g_.labels[clean[j]]);
        clean_reports_[j] =
            inverse_hvp(op_, rhs, opts_.cg_tol, opts_.cg_max_iters);
        clean_solves_[j] = clean_reports_[j].solution;
      } catch (const std::exception& e) {
#pragma omp critical
        error = e.what();
      }
    }
    if (!error.empty()) throw DeglifError(error);
    clean_done_ = true;
  }
  return clean_solves_;
}

bool InfluenceSolver::all_solves_converged() const {
  clean_solves();
  return std::all_of(clean_reports_.begin(), clean_reports_.end(),
                     [](const SolveReport& r) { return r.converged; });
}

Vec InfluenceSolver::loss_part_iup(int z) const {
  const auto& sv = clean_solves();
  const Vec grad = node_loss_gradient(a_.mat, g_.features, theta_, shape_, z,
                                      g_.labels[z]);
  Vec out(sv.size());
  for (std::size_t j = 0; j < sv.size(); ++j) {
    out[j] = sv[j].dot(grad) / n_train();
  }
  return out;
}

std::pair<Vec, Vec> InfluenceSolver::relabel_influence(
    int z, int new_label, bool phi_weighted) const {
  const auto& train = g_.masks.train;
  if (!std::binary_search(train.begin(), train.end(), z)) {
    throw DeglifError("relabel_influence: node not in training mask");
  }
  if (new_label < 0 || new_label >= g_.n_classes) {
    throw DeglifError("relabel_influence: label out of range");
  }
  // graph is unchanged, so the structural terms cancel; only the two
  // per-node loss gradients remain
  const Vec g_old = node_loss_gradient(a_.mat, g_.features, theta_, shape_, z,
                                       g_.labels[z]);
  Vec g_new;
  if (phi_weighted) {
    // loss of the phi-weighted soft label is -log(1 - f_m)
    const ForwardCache cache = forward(a_.mat, g_.features, theta_, shape_);
    const int m = g_.labels[z];
    const auto f = cache.probs.row(z);
    Mat dm = Mat::Zero(g_.n_nodes, g_.n_classes);
    const double fm = f[m];
    dm.row(z) = -(fm / (1.0 - fm)) * f;
    dm(z, m) += fm / (1.0 - fm);
    g_new = backprop(a_.mat, g_.features, cache, dm, theta_, shape_);
  } else {
    g_new = node_loss_gradient(a_.mat, g_.features, theta_, shape_, z,
                               new_label);
  }
  const Vec diff = (g_old - g_new) / n_train();
  const Vec param = solve(g_old - g_new) / n_train();
  const auto& sv = clean_solves();
  Vec per_v(sv.size());
  for (std::size_t j = 0; j < sv.size(); ++j) per_v[j] = sv[j].dot(diff);
  return {param, per_v};
}

namespace {

void fill_aggregates(InfluenceTable& t) {
  const int n_clean = static_cast<int>(t.clean_nodes.size());
  t.icv = -t.iup.rowwise().sum();
  t.neg_fraction.resize(t.train_nodes.size());
  for (int i = 0; i < t.iup.rows(); ++i) {
    int neg = 0;
    for (int j = 0; j < n_clean; ++j) {
      if (t.iup(i, j) < 0.0) ++neg;
    }
    t.neg_fraction[i] = static_cast<double>(neg) / n_clean;
  }
}

}  // namespace

InfluenceTable InfluenceSolver::iup_table() const {
  if (g_.masks.clean.empty()) throw DeglifError("iup_table: empty clean set");
  InfluenceTable t;
  t.train_nodes = g_.masks.train;
  t.clean_nodes = g_.masks.clean;
  const int n_tr = static_cast<int>(t.train_nodes.size());
  const int n_cl = static_cast<int>(t.clean_nodes.size());
  t.iup.resize(n_tr, n_cl);

  const auto& sv = clean_solves();
  if (!all_solves_converged()) {
    t.valid = false;
    return t;
  }
  const int nw = worker_count();
  std::string error;
#pragma omp parallel for schedule(dynamic) num_threads(nw)
  for (int i = 0; i < n_tr; ++i) {
    try {
      const Vec gz = removal_gradient(t.train_nodes[i]);
      for (int j = 0; j < n_cl; ++j) {
        t.iup(i, j) = sv[j].dot(gz) / n_tr;
      }
    } catch (const std::exception& e) {
#pragma omp critical
      error = e.what();
    }
  }
  if (!error.empty()) throw DeglifError("iup_table: " + error);
  fill_aggregates(t);
  t.valid = true;
  return t;
}

InfluenceTable InfluenceSolver::iup_table_serial() const {
  if (g_.masks.clean.empty()) throw DeglifError("iup_table: empty clean set");
  InfluenceTable t;
  t.train_nodes = g_.masks.train;
  t.clean_nodes = g_.masks.clean;
  const int n_tr = static_cast<int>(t.train_nodes.size());
  const int n_cl = static_cast<int>(t.clean_nodes.size());
  t.iup.resize(n_tr, n_cl);
  for (int i = 0; i < n_tr; ++i) {
    const Vec inf = node_influence(t.train_nodes[i]);
    for (int j = 0; j < n_cl; ++j) {
      const int v = t.clean_nodes[j];
      const Vec gv = node_loss_gradient(a_.mat, g_.features, theta_, shape_, v,
                                        g_.labels[v]);
      t.iup(i, j) = gv.dot(inf);
    }
  }
  fill_aggregates(t);
  t.valid = true;
  return t;
}

}  // namespace deglif
