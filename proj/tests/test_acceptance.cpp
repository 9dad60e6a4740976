// Acceptance suite: one pass/fail line per criterion. Exits nonzero if any
// non-optional criterion fails. Criterion 10 needs an external dataset and
// is skipped unless DEGLIF_CORA_DIR points at a CSV export.

#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "deglif/denoise.hpp"
#include "deglif/gcn.hpp"
#include "deglif/graph.hpp"
#include "deglif/influence.hpp"
#include "deglif/noise.hpp"
#include "deglif/oracle.hpp"
#include "helpers.hpp"

#ifndef DEGLIF_SOURCE_DIR
#define DEGLIF_SOURCE_DIR "."
#endif

using namespace deglif;

namespace {

int failures = 0;

void report(int id, bool ok, const std::string& what,
            const std::string& detail = "") {
  std::cout << "criterion " << id << ": " << (ok ? "PASS" : "FAIL") << " — "
            << what;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << std::endl;
  if (!ok) ++failures;
}

struct Fixture {
  Graph g;
  GcnConfig cfg;
  Vec theta;
  ParamShape shape;
};

Fixture trained(int n, int K, int d, int h, std::uint64_t seed,
                int epochs = 120) {
  Fixture f;
  f.g = th::random_fixture(n, K, d, seed);
  f.cfg = GcnConfig{d, h, K, 5e-4, 0.3, epochs, seed + 1};
  f.theta = train(f.g, f.cfg).theta;
  f.shape = ParamShape::from_config(f.cfg);
  return f;
}

// 1: analytic gradient vs central finite differences
void criterion_gradient() {
  double worst = 0.0;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const Graph g = th::random_fixture(12, 3, 4, seed);
    GcnConfig cfg{4, 5, 3, 5e-4, 0.5, 0, seed + 50};
    const Vec theta = init_params(cfg);
    const ParamShape s = ParamShape::from_config(cfg);
    const SpMat a = normalize(g).mat;
    const Vec ga = gradient(a, g.features, g.labels, g.masks.train, theta, s,
                            5e-4, true);
    const Vec gn = th::numeric_gradient(a, g.features, g.labels, g.masks.train,
                                        theta, s, 5e-4, true);
    worst = std::max(worst, th::rel_err(ga, gn));
  }
  report(1, worst <= 1e-5, "gradient matches finite differences",
         "max rel err " + std::to_string(worst));
}

// 2: HVP backend agreement and symmetry
void criterion_hvp() {
  double worst_agree = 0.0, worst_sym = 0.0;
  for (std::uint64_t seed : {1, 4, 5}) {
    const Fixture f = trained(12, 3, 4, 5, seed);
    HvpOperator op(normalize(f.g), f.g.features, f.g.labels, f.g.masks.train,
                   f.theta, f.shape, f.cfg.l2_reg, 1e-3);
    std::mt19937_64 rng(seed + 9);
    std::normal_distribution<double> gauss;
    for (int t = 0; t < 5; ++t) {
      Vec u(op.dim()), v(op.dim());
      for (int i = 0; i < u.size(); ++i) {
        u[i] = gauss(rng);
        v[i] = gauss(rng);
      }
      worst_agree =
          std::max(worst_agree, th::rel_err(op.apply(v), op.apply_fd(v)));
      const double uhv = u.dot(op.apply(v)), vhu = v.dot(op.apply(u));
      worst_sym = std::max(
          worst_sym, std::abs(uhv - vhu) / std::max(std::abs(uhv), 1e-12));
    }
  }
  report(2, worst_agree <= 1e-4 && worst_sym <= 1e-8,
         "analytic and finite-difference HVP agree, operator symmetric",
         "agree " + std::to_string(worst_agree) + ", sym " +
             std::to_string(worst_sym));
}

// 3: CG inverse solve vs dense explicit-Hessian factorization
void criterion_inverse_hvp() {
  const Fixture f = trained(12, 3, 6, 8, 7);  // p = 83 <= 300
  // these tiny non-converged fixtures have Hessian eigenvalues down to about
  // -0.06; damp past that so CG sees a positive-definite operator
  HvpOperator op(normalize(f.g), f.g.features, f.g.labels, f.g.masks.train,
                 f.theta, f.shape, f.cfg.l2_reg, 0.1);
  const int p = op.dim();
  Mat h(p, p);
  for (int i = 0; i < p; ++i) {
    Vec e = Vec::Zero(p);
    e[i] = 1.0;
    h.col(i) = op.apply(e);
  }
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss;
  Vec rhs(p);
  for (int i = 0; i < p; ++i) rhs[i] = gauss(rng);
  const Vec dense = h.ldlt().solve(rhs);
  const auto rep = inverse_hvp(op, rhs, 1e-10, 5000);
  const double err = th::rel_err(rep.solution, dense);
  report(3, rep.converged && err <= 1e-4,
         "CG matches dense Hessian factorization",
         "rel err " + std::to_string(err) + ", p = " + std::to_string(p));
}

// 4: node-removal update assembly
void criterion_removal_assembly() {
  const Fixture f = trained(10, 3, 4, 5, 13);
  InfluenceSolver solver(f.g, f.theta, f.shape, f.cfg.l2_reg);
  const SpMat a = normalize(f.g).mat;
  double worst = 0.0;
  for (int z : f.g.masks.train) {
    const Vec own = node_loss_gradient(a, f.g.features, f.theta, f.shape, z,
                                       f.g.labels[z]);
    const Graph gz = perturb(f.g, Perturbation::remove_node_edges(z));
    const SpMat az = normalize(gz).mat;
    Vec delta = Vec::Zero(f.shape.size());
    for (int k : f.g.masks.train) {
      if (k == z) continue;
      delta += node_loss_gradient(az, f.g.features, f.theta, f.shape, k,
                                  f.g.labels[k]) -
               node_loss_gradient(a, f.g.features, f.theta, f.shape, k,
                                  f.g.labels[k]);
    }
    worst = std::max(worst, (solver.removal_gradient(z) - (own - delta))
                                .norm());
  }

  // 3-node path: z's own structural change separates the k-sum conventions
  Fixture p3;
  p3.g = th::path_graph(3, 2, 3, {0, 1}, {2}, {2}, 21);
  p3.cfg = GcnConfig{3, 4, 2, 5e-4, 0.3, 80, 5};
  p3.theta = train(p3.g, p3.cfg).theta;
  p3.shape = ParamShape::from_config(p3.cfg);
  InfluenceSolver s3(p3.g, p3.theta, p3.shape, p3.cfg.l2_reg);
  const SpMat a3 = normalize(p3.g).mat;
  const Graph g0 = perturb(p3.g, Perturbation::remove_node_edges(0));
  const Vec z_change =
      node_loss_gradient(normalize(g0).mat, p3.g.features, p3.theta, p3.shape,
                         0, p3.g.labels[0]) -
      node_loss_gradient(a3, p3.g.features, p3.theta, p3.shape, 0,
                         p3.g.labels[0]);
  const bool conventions_differ = z_change.norm() > 1e-8;

  report(4, worst <= 1e-10 && conventions_differ,
         "removal update equals explicit per-node assembly, z excluded",
         "max diff " + std::to_string(worst));
}

// 5: influence vs brute-force retraining on the frozen 24-node fixture
void criterion_retraining_oracle() {
  const auto dir =
      std::filesystem::path(DEGLIF_SOURCE_DIR) / "tests/fixtures/sbm24";
  const Graph g = load_graph(dir);
  GcnConfig cfg{static_cast<int>(g.features.cols()), 8, g.n_classes, 5e-4,
                0.5, 300, 7};
  const auto model = train(g, cfg);
  InfluenceSolver solver(g, model.theta, ParamShape::from_config(cfg),
                         cfg.l2_reg, {0.1, 1e-8, 2000});
  const auto table = solver.iup_table();
  auto [pred, delta] = per_node_agreement_data(g, cfg, table);
  const auto rep = compare(pred, delta);
  report(5, rep.sign_agreement >= 0.7 && rep.spearman >= 0.6,
         "influence predictions agree with retraining oracle",
         "sign " + std::to_string(rep.sign_agreement) + ", spearman " +
             std::to_string(rep.spearman));
}

// 6: relabel ratio identities and the aggregate-score surrogate
void criterion_theorem_identities() {
  double worst = 0.0;
  for (int K : {2, 3}) {
    const Fixture f = trained(14, K, 4, 5, 23 + K, 150);
    InfluenceSolver solver(f.g, f.theta, f.shape, f.cfg.l2_reg,
                           {0.1, 1e-10, 5000});
    const auto cache =
        forward(normalize(f.g).mat, f.g.features, f.theta, f.shape);
    for (int z : f.g.masks.train) {
      const double fm = cache.probs(z, f.g.labels[z]);
      const int other = (f.g.labels[z] + 1) % K;
      auto [param, per_v] = solver.relabel_influence(z, other, true);
      const Vec lp = solver.loss_part_iup(z);
      worst = std::max(worst, th::rel_err(per_v, lp / (1.0 - fm)));
    }
  }

  bool surrogate_ok = true;
  {
    SbmSpec spec{40, 3, 0.2, 0.02, 6, 0.5};
    const Graph clean = generate_sbm(spec, 3);
    auto [noisy, ledger] =
        inject(clean, build_transition({NoiseModel::Sln, 0.3, 3}), 3);
    GcnConfig c1{6, 16, 3, 5e-4, 0.5, 400, 3};
    DenoiseConfig dcfg;
    dcfg.method = DenoiseConfig::Method::SUM;
    dcfg.solver.damping = 0.1;
    for (double mu : {0.0, 0.1, 1.0}) {
      dcfg.mu = mu;
      const auto r = run_pipeline(noisy, c1, c1, dcfg, &ledger);
      const double floor =
          r.report.metrics.n_detected * mu / noisy.masks.train.size();
      surrogate_ok = surrogate_ok &&
                     r.report.metrics.predicted_risk_drop >= floor - 1e-12;
    }
  }
  report(6, worst <= 1e-6 && surrogate_ok,
         "relabel ratio identities and nonnegative aggregate surrogate",
         "max ratio err " + std::to_string(worst));
}

// 7 + 8: denoising trend and relabel quality over 5 seeds
void criterion_denoising_trend() {
  int drop_ok_count = 0, monotone = 0;
  double before_sum = 0.0, after_sum = 0.0;
  int relabel_correct = 0, relabel_total = 0;
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    // a well-separated SBM with an all-clean validation block and strong L2:
    // the regularized model does not overfit, so influence-based detection
    // keeps its precision across successive passes
    SbmSpec spec{40, 3, 0.4, 0.01, 6, 0.2};
    spec.train_frac = 0.6;
    spec.val_frac = 0.3;
    spec.clean_frac = 1.0;
    const Graph clean = generate_sbm(spec, seed);
    auto [noisy, ledger] =
        inject(clean, build_transition({NoiseModel::Sln, 0.3, 3}), seed);
    GcnConfig c1{6, 16, 3, 5e-2, 0.5, 400, seed};
    GcnConfig c2{6, 16, 3, 5e-2, 0.5, 400, seed + 1000};
    DenoiseConfig dcfg;
    dcfg.method = DenoiseConfig::Method::SUM;
    dcfg.solver.damping = 0.1;
    dcfg.mu = 0.0;
    const auto first = run_pipeline(noisy, c1, c2, dcfg, &ledger);
    before_sum += first.report.metrics.noise_frac_before;
    after_sum += first.report.metrics.noise_frac_after;

    // pooled relabel accuracy among correctly detected noisy nodes
    for (const auto& d : first.report.relabels) {
      const int orig = ledger.original_of(d.node);
      if (orig >= 0 && orig != noisy.labels[d.node]) {
        ++relabel_total;
        relabel_correct += d.new_label == orig ? 1 : 0;
      }
    }

    const auto series = successive(noisy, c1, c2, dcfg, 3, ledger);
    bool non_increasing = true;
    double prev = first.report.metrics.noise_frac_before;
    for (double frac : series.noise_fraction) {
      non_increasing = non_increasing && frac <= prev + 1e-12;
      prev = frac;
    }
    monotone += non_increasing ? 1 : 0;
    ++drop_ok_count;
  }
  const double mean_drop = (before_sum - after_sum) / 5.0;
  report(7, mean_drop >= 0.05 && monotone >= 4,
         "one DeGLIF pass removes noise, successive passes never add it",
         "mean drop " + std::to_string(mean_drop) + ", monotone seeds " +
             std::to_string(monotone) + "/5");
  const double relabel_acc =
      relabel_total > 0
          ? static_cast<double>(relabel_correct) / relabel_total
          : 0.0;
  report(8, relabel_acc >= 0.65,
         "relabels recover the original class well above the 50% baseline",
         "accuracy " + std::to_string(relabel_acc) + " over " +
             std::to_string(relabel_total) + " nodes");
}

// 9: injected flip rates match the configured level
void criterion_noise_statistics() {
  bool ok = true;
  std::string detail;
  const int n = 4000;
  for (auto model : {NoiseModel::Sln, NoiseModel::Pairwise}) {
    for (double eta : {0.1, 0.3, 0.5}) {
      for (int K : {2, 3, 7}) {
        Graph g;
        g.n_nodes = n;
        g.n_classes = K;
        g.features = Mat::Zero(n, K);
        g.labels.resize(n);
        std::mt19937_64 rng(K * 7919 + static_cast<int>(eta * 10));
        std::uniform_int_distribution<int> lab(0, K - 1);
        for (int i = 0; i < n; ++i) {
          g.labels[i] = lab(rng);
          g.masks.train.push_back(i);
          g.original_ids.push_back(i);
        }
        const auto [noisy, ledger] =
            inject(g, build_transition({model, eta, K}), 31);
        const double bound = 3.0 * std::sqrt(eta * (1 - eta) / n);
        if (std::abs(ledger.flip_fraction() - eta) > bound) {
          ok = false;
          detail = "model/K/eta = " +
                   std::string(model == NoiseModel::Sln ? "sln" : "pw") + "/" +
                   std::to_string(K) + "/" + std::to_string(eta);
        }
      }
    }
  }
  report(9, ok, "flip rates within 3-sigma binomial bounds", detail);
}

// 10 (optional): Cora reproduction from a user-supplied export
void criterion_cora() {
  const char* dir = std::getenv("DEGLIF_CORA_DIR");
  if (!dir) {
    std::cout << "criterion 10: SKIP — Cora reproduction (set DEGLIF_CORA_DIR "
                 "to a CSV export to enable)"
              << std::endl;
    return;
  }
  const Graph g = load_graph(dir);
  auto [noisy, ledger] =
      inject(g, build_transition({NoiseModel::Sln, 0.3, g.n_classes}), 1);
  GcnConfig c1{static_cast<int>(g.features.cols()), 16, g.n_classes, 5e-4,
               0.5, 400, 1};
  GcnConfig c2 = c1;
  c2.init_seed = 1001;
  DenoiseConfig dcfg;
  dcfg.method = DenoiseConfig::Method::SUM;
  const auto sr = sweep(noisy, c1, c2, dcfg, {0.0, 0.1, 1.0, 10.0, 20.0},
                        &ledger);
  double best_test = 0.0;
  for (const auto& e : sr.entries) {
    if (e.threshold == sr.best_threshold) best_test = e.test_acc;
  }
  report(10, std::abs(best_test - 0.843) <= 0.05,
         "Cora test accuracy within 5 points of the published 84.3",
         "test acc " + std::to_string(best_test));
}

}  // namespace

int main() {
  try {
    criterion_gradient();
    criterion_hvp();
    criterion_inverse_hvp();
    criterion_removal_assembly();
    criterion_retraining_oracle();
    criterion_theorem_identities();
    criterion_denoising_trend();
    criterion_noise_statistics();
    criterion_cora();
  } catch (const std::exception& e) {
    std::cout << "acceptance suite aborted: " << e.what() << std::endl;
    return 2;
  }
  std::cout << (failures == 0 ? "all criteria passed"
                              : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
