#include "deglif/denoise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace deglif {

using nlohmann::json;

NoisySet identify_mv(const InfluenceTable& table, double lambda) {
  if (!table.valid) throw DeglifError("identify_mv: invalid influence table");
  if (lambda < 0.5 || lambda >= 1.0) {
    throw DeglifError("identify_mv: lambda must be in [0.5, 1)");
  }
  NoisySet out;
  const int n_clean = static_cast<int>(table.clean_nodes.size());
  for (std::size_t i = 0; i < table.train_nodes.size(); ++i) {
    int negatives = 0;
    for (int j = 0; j < n_clean; ++j) {
      if (table.iup(i, j) < 0.0) ++negatives;  // zeros do not count
    }
    if (negatives >= lambda * n_clean) {
      out.nodes.push_back(table.train_nodes[i]);
      out.evidence.push_back(table.neg_fraction[i]);
    }
  }
  return out;
}

NoisySet identify_sum(const InfluenceTable& table, double mu) {
  if (!table.valid) throw DeglifError("identify_sum: invalid influence table");
  NoisySet out;
  for (std::size_t i = 0; i < table.train_nodes.size(); ++i) {
    if (table.icv[i] > mu) {
      out.nodes.push_back(table.train_nodes[i]);
      out.evidence.push_back(table.icv[i]);
    }
  }
  return out;
}

RelabelDecision relabel(int z, int observed_label,
                        const Eigen::RowVectorXd& probs) {
  if (probs.size() < 2) throw DeglifError("relabel: need at least 2 classes");
  RelabelDecision d;
  d.node = z;
  d.old_label = observed_label;
  d.probs = probs;
  int best = -1;
  for (int k = 0; k < probs.size(); ++k) {
    if (k == observed_label) continue;
    if (best < 0 || probs[k] > probs[best]) best = k;
  }
  d.new_label = best;
  const double fm = probs[observed_label];
  const double fk = probs[best];
  if (fk <= 0.0 || fk >= 1.0 || fm >= 1.0) {
    d.phi = std::numeric_limits<double>::quiet_NaN();
  } else {
    d.phi = std::log(1.0 - fm) / std::log(fk);
  }
  return d;
}

double accuracy(const Graph& g, const Vec& theta, const ParamShape& shape,
                const std::vector<int>& mask) {
  if (mask.empty()) return 0.0;
  const NormalizedAdjacency a = normalize(g);
  auto [cls, probs] = predict(a.mat, g.features, theta, shape);
  int correct = 0;
  for (int v : mask) correct += cls[v] == g.labels[v] ? 1 : 0;
  return static_cast<double>(correct) / mask.size();
}

namespace {

double noise_fraction(const Graph& g, const CorruptionLedger& ledger) {
  if (ledger.records.empty()) return 0.0;
  int noisy = 0;
  for (const auto& r : ledger.records) {
    noisy += g.labels[r.node] != r.original_label ? 1 : 0;
  }
  return static_cast<double>(noisy) / ledger.records.size();
}

}  // namespace

PipelineResult run_pipeline(const Graph& g_noisy, const GcnConfig& model1_cfg,
                            const GcnConfig& model2_cfg,
                            const DenoiseConfig& dcfg,
                            const CorruptionLedger* ledger) {
  g_noisy.validate();
  if (g_noisy.masks.clean.empty()) {
    throw DeglifError("run_pipeline: empty clean set");
  }

  const TrainResult model1 = train(g_noisy, model1_cfg);
  const ParamShape shape1 = ParamShape::from_config(model1_cfg);

  InfluenceSolver solver(g_noisy, model1.theta, shape1, model1_cfg.l2_reg,
                         dcfg.solver);
  const InfluenceTable table = solver.iup_table();

  NoisySet dn = dcfg.method == DenoiseConfig::Method::MV
                    ? identify_mv(table, dcfg.lambda)
                    : identify_sum(table, dcfg.mu);

  PipelineResult out;
  out.report.method = dcfg.method == DenoiseConfig::Method::MV ? "mv" : "sum";
  out.report.threshold =
      dcfg.method == DenoiseConfig::Method::MV ? dcfg.lambda : dcfg.mu;
  out.report.detected = dn;

  const NormalizedAdjacency a = normalize(g_noisy);
  auto [cls, probs] = predict(a.mat, g_noisy.features, model1.theta, shape1);

  out.denoised = g_noisy;
  for (int z : dn.nodes) {
    RelabelDecision d = relabel(z, g_noisy.labels[z], probs.row(z));
    out.denoised.labels[z] = d.new_label;
    out.report.relabels.push_back(std::move(d));
  }

  const TrainResult model2 = train(out.denoised, model2_cfg);
  out.model2_theta = model2.theta;
  const ParamShape shape2 = ParamShape::from_config(model2_cfg);

  DenoiseMetrics& m = out.report.metrics;
  m.n_detected = static_cast<int>(dn.nodes.size());
  m.model2_test_acc =
      accuracy(out.denoised, model2.theta, shape2, out.denoised.masks.test);
  m.model2_val_acc = accuracy(out.denoised, model2.theta, shape2,
                              out.denoised.masks.validation);
  {
    double s = 0.0;
    for (std::size_t i = 0; i < dn.nodes.size(); ++i) {
      const int row = table.row_of(dn.nodes[i]);
      s += table.icv[row];
    }
    m.predicted_risk_drop = s / solver.n_train();
  }

  if (ledger) {
    m.has_ledger = true;
    m.noise_frac_before = noise_fraction(g_noisy, *ledger);
    m.noise_frac_after = noise_fraction(out.denoised, *ledger);
    std::unordered_map<int, int> original;
    for (const auto& r : ledger->records) original[r.node] = r.original_label;
    int true_noisy = 0;
    for (const auto& r : ledger->records) {
      true_noisy += g_noisy.labels[r.node] != r.original_label ? 1 : 0;
    }
    m.n_true_noisy = true_noisy;
    int detected_noisy = 0, relabel_correct = 0;
    for (const auto& d : out.report.relabels) {
      auto it = original.find(d.node);
      if (it == original.end()) continue;
      if (g_noisy.labels[d.node] != it->second) {
        ++detected_noisy;
        relabel_correct += d.new_label == it->second ? 1 : 0;
      }
    }
    m.precision = dn.nodes.empty()
                      ? 0.0
                      : static_cast<double>(detected_noisy) / dn.nodes.size();
    m.recall = true_noisy == 0
                   ? 0.0
                   : static_cast<double>(detected_noisy) / true_noisy;
    m.relabel_accuracy =
        detected_noisy == 0
            ? 0.0
            : static_cast<double>(relabel_correct) / detected_noisy;
  }
  return out;
}

SuccessiveResult successive(const Graph& g_noisy, const GcnConfig& model1_cfg,
                            const GcnConfig& model2_cfg,
                            const DenoiseConfig& dcfg, int counts,
                            const CorruptionLedger& ledger) {
  if (counts < 1) throw DeglifError("successive: counts must be >= 1");
  SuccessiveResult out;
  Graph current = g_noisy;
  for (int t = 0; t < counts; ++t) {
    PipelineResult r =
        run_pipeline(current, model1_cfg, model2_cfg, dcfg, &ledger);
    out.noise_fraction.push_back(r.report.metrics.noise_frac_after);
    out.test_accuracy.push_back(r.report.metrics.model2_test_acc);
    current = std::move(r.denoised);
  }
  return out;
}

SweepResult sweep(const Graph& g_noisy, const GcnConfig& model1_cfg,
                  const GcnConfig& model2_cfg, const DenoiseConfig& base,
                  const std::vector<double>& grid,
                  const CorruptionLedger* ledger) {
  if (grid.empty()) throw DeglifError("sweep: empty grid");
  SweepResult out;
  double best_val = -1.0;
  for (double value : grid) {
    DenoiseConfig dcfg = base;
    if (dcfg.method == DenoiseConfig::Method::MV) {
      dcfg.lambda = value;
    } else {
      dcfg.mu = value;
    }
    PipelineResult r =
        run_pipeline(g_noisy, model1_cfg, model2_cfg, dcfg, ledger);
    SweepEntry e{value, r.report.metrics.model2_val_acc,
                 r.report.metrics.model2_test_acc};
    out.entries.push_back(e);
    if (e.val_acc > best_val) {
      best_val = e.val_acc;
      out.best_threshold = value;
    }
  }
  return out;
}

std::string DenoiseReport::to_json() const {
  json j;
  j["method"] = method;
  j["threshold"] = threshold;
  j["d_n"] = detected.nodes;
  json rel = json::array();
  for (const auto& d : relabels) {
    json r;
    r["node"] = d.node;
    r["old"] = d.old_label;
    r["new"] = d.new_label;
    if (std::isfinite(d.phi)) {
      r["phi"] = d.phi;
    } else {
      r["phi"] = nullptr;
    }
    rel.push_back(r);
  }
  j["relabels"] = rel;
  json jm;
  jm["model2_test_acc"] = metrics.model2_test_acc;
  jm["model2_val_acc"] = metrics.model2_val_acc;
  jm["predicted_risk_drop"] = metrics.predicted_risk_drop;
  jm["n_detected"] = metrics.n_detected;
  if (metrics.has_ledger) {
    jm["precision"] = metrics.precision;
    jm["recall"] = metrics.recall;
    jm["relabel_accuracy"] = metrics.relabel_accuracy;
    jm["noise_frac_before"] = metrics.noise_frac_before;
    jm["noise_frac_after"] = metrics.noise_frac_after;
    jm["n_true_noisy"] = metrics.n_true_noisy;
  }
  j["metrics"] = jm;
  return j.dump(2);
}

void DenoiseReport::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DeglifError("cannot write " + path.string());
  out << to_json() << "\n";
}

}  // namespace deglif
