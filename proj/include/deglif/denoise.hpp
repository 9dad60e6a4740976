#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "deglif/gcn.hpp"
#include "deglif/graph.hpp"
#include "deglif/influence.hpp"
#include "deglif/noise.hpp"

namespace deglif {

struct DenoiseConfig {
  enum class Method { MV, SUM };
  Method method = Method::SUM;
  double lambda = 0.5;  // MV threshold, in [0.5, 1)
  double mu = 0.0;      // SUM threshold
  int counts = 1;       // successive-application repetitions
  SolverOptions solver;
};

/// Training nodes flagged noisy, with the per-node decision evidence
/// (neg_fraction for MV, I_cv for SUM).
struct NoisySet {
  std::vector<int> nodes;
  std::vector<double> evidence;
};

struct RelabelDecision {
  int node = 0;
  int old_label = 0;
  int new_label = 0;
  double phi = 0.0;  // NaN when degenerate (f in {0,1})
  Eigen::RowVectorXd probs;
};

struct DenoiseMetrics {
  bool has_ledger = false;
  double precision = 0.0;
  double recall = 0.0;
  double relabel_accuracy = 0.0;
  double noise_frac_before = 0.0;
  double noise_frac_after = 0.0;
  double model2_test_acc = 0.0;
  double model2_val_acc = 0.0;
  double predicted_risk_drop = 0.0;  // (1/n) sum_{z in D_n} I_cv(-z)
  int n_detected = 0;
  int n_true_noisy = 0;
};

struct DenoiseReport {
  std::string method;
  double threshold = 0.0;
  NoisySet detected;
  std::vector<RelabelDecision> relabels;
  DenoiseMetrics metrics;

  std::string to_json() const;
  void save(const std::filesystem::path& path) const;
};

/// z is noisy iff the number of strictly negative I_up(-z, v) entries is
/// >= lambda * |D_c|.
NoisySet identify_mv(const InfluenceTable& table, double lambda);

/// z is noisy iff I_cv(-z) > mu (strict).
NoisySet identify_sum(const InfluenceTable& table, double mu);

/// New label is the argmax over classes != observed; phi records the
/// theoretical down-weighting factor log(1 - f_m) / log(f_{y*}).
RelabelDecision relabel(int z, int observed_label,
                        const Eigen::RowVectorXd& probs);

struct PipelineResult {
  Graph denoised;
  Vec model2_theta;
  DenoiseReport report;
};

/// Full DeGLIF pass: train Model-1, influence table, identify, relabel,
/// retrain Model-2 on the denoised graph. Ledger (optional) supplies
/// ground truth for the quality metrics.
PipelineResult run_pipeline(const Graph& g_noisy, const GcnConfig& model1_cfg,
                            const GcnConfig& model2_cfg,
                            const DenoiseConfig& dcfg,
                            const CorruptionLedger* ledger = nullptr);

struct SuccessiveResult {
  std::vector<double> noise_fraction;  // per count, needs a ledger
  std::vector<double> test_accuracy;
};

SuccessiveResult successive(const Graph& g_noisy, const GcnConfig& model1_cfg,
                            const GcnConfig& model2_cfg,
                            const DenoiseConfig& dcfg, int counts,
                            const CorruptionLedger& ledger);

struct SweepEntry {
  double threshold = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
};

struct SweepResult {
  std::vector<SweepEntry> entries;
  double best_threshold = 0.0;  // selected by clean-validation accuracy
};

SweepResult sweep(const Graph& g_noisy, const GcnConfig& model1_cfg,
                  const GcnConfig& model2_cfg, const DenoiseConfig& base,
                  const std::vector<double>& grid,
                  const CorruptionLedger* ledger = nullptr);

/// Classification accuracy of theta on a node mask.
double accuracy(const Graph& g, const Vec& theta, const ParamShape& shape,
                const std::vector<int>& mask);

}  // namespace deglif
