#pragma once

#include <filesystem>
#include <vector>

#include "deglif/denoise.hpp"
#include "deglif/gcn.hpp"
#include "deglif/graph.hpp"

namespace deglif {

/// Exact-retraining ground truth for one modification of the training data.
struct RetrainDelta {
  std::vector<int> removed_or_relabelled;
  Vec theta_modified;
  Vec per_clean_delta;  // L(v, theta_mod) - L(v, theta_base) per clean node
  double aggregate = 0.0;  // mean of per_clean_delta
};

struct AgreementReport {
  double sign_agreement = 0.0;
  double spearman = 0.0;
  int node_count = 0;
};

/// Retrains from the baseline's init seed and schedule with the given nodes
/// removed from the loss and structurally isolated (edges removed,
/// adjacency renormalized). Baseline is trained with the same config.
RetrainDelta retrain_without(const Graph& g, const GcnConfig& cfg,
                             const std::vector<int>& removed);

/// Retrains with the decisions' labels applied. In phi mode the relabelled
/// node's loss is additionally scaled by the decision's phi.
RetrainDelta retrain_relabel(const Graph& g, const GcnConfig& cfg,
                             const std::vector<RelabelDecision>& decisions,
                             bool phi_weighted = false);

/// Sign agreement and Spearman correlation between influence-predicted and
/// oracle clean-risk deltas. Zero-delta entries count as agreeing when the
/// prediction is below 1e-9 in magnitude; Spearman runs over the rest.
AgreementReport compare(const Vec& predictions, const Vec& deltas);

/// Per-node oracle deltas for every training node, retrained in parallel.
/// Returns (predictions from the table, oracle aggregates) aligned with the
/// table's training rows.
std::pair<Vec, Vec> per_node_agreement_data(const Graph& g,
                                            const GcnConfig& cfg,
                                            const InfluenceTable& table);

void save_agreement(const AgreementReport& rep, const Vec& predictions,
                    const Vec& deltas, const std::vector<int>& nodes,
                    const std::filesystem::path& json_path,
                    const std::filesystem::path& pairs_csv);

}  // namespace deglif
