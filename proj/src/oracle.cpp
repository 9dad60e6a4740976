#include "deglif/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace deglif {

namespace {

Vec clean_losses(const Graph& g, const Vec& theta, const ParamShape& shape) {
  const NormalizedAdjacency a = normalize(g);
  const ForwardCache cache = forward(a.mat, g.features, theta, shape);
  const RiskBreakdown r =
      risk(cache, g.labels, g.masks.clean, theta, 0.0, false);
  return r.per_node_loss;
}

}  // namespace

RetrainDelta retrain_without(const Graph& g, const GcnConfig& cfg,
                             const std::vector<int>& removed) {
  const ParamShape shape = ParamShape::from_config(cfg);
  const TrainResult base = train(g, cfg);
  const Vec base_losses = clean_losses(g, base.theta, shape);

  RetrainDelta out;
  out.removed_or_relabelled = removed;
  if (removed.empty()) {
    out.theta_modified = base.theta;
    out.per_clean_delta = Vec::Zero(base_losses.size());
    out.aggregate = 0.0;
    return out;
  }

  Graph modified = g;
  for (int z : removed) {
    if (!std::binary_search(g.masks.train.begin(), g.masks.train.end(), z)) {
      throw DeglifError("retrain_without: node not in training mask");
    }
    modified = perturb(modified, Perturbation::remove_node_edges(z));
  }
  std::erase_if(modified.masks.train, [&](int k) {
    return std::find(removed.begin(), removed.end(), k) != removed.end();
  });

  const TrainResult mod = train(modified, cfg);
  out.theta_modified = mod.theta;
  out.per_clean_delta =
      clean_losses(modified, mod.theta, shape) - base_losses;
  out.aggregate = out.per_clean_delta.mean();
  return out;
}

RetrainDelta retrain_relabel(const Graph& g, const GcnConfig& cfg,
                             const std::vector<RelabelDecision>& decisions,
                             bool phi_weighted) {
  const ParamShape shape = ParamShape::from_config(cfg);
  const TrainResult base = train(g, cfg);
  const Vec base_losses = clean_losses(g, base.theta, shape);

  Graph modified = g;
  Vec weights = Vec::Ones(g.n_nodes);
  RetrainDelta out;
  for (const auto& d : decisions) {
    out.removed_or_relabelled.push_back(d.node);
    modified.labels[d.node] = d.new_label;
    if (phi_weighted) {
      if (!std::isfinite(d.phi)) {
        throw DeglifError("retrain_relabel: phi undefined for node " +
                          std::to_string(d.node));
      }
      weights[d.node] = d.phi;
    }
  }

  const TrainResult mod =
      train(modified, cfg, phi_weighted ? &weights : nullptr);
  out.theta_modified = mod.theta;
  out.per_clean_delta =
      clean_losses(modified, mod.theta, shape) - base_losses;
  out.aggregate = out.per_clean_delta.mean();
  return out;
}

AgreementReport compare(const Vec& predictions, const Vec& deltas) {
  if (predictions.size() != deltas.size()) {
    throw DeglifError("compare: size mismatch");
  }
  AgreementReport rep;
  rep.node_count = static_cast<int>(predictions.size());
  if (rep.node_count == 0) return rep;

  int agree = 0;
  std::vector<int> nonzero;
  for (int i = 0; i < predictions.size(); ++i) {
    if (deltas[i] == 0.0) {
      agree += std::abs(predictions[i]) < 1e-9 ? 1 : 0;
    } else {
      agree += (predictions[i] > 0) == (deltas[i] > 0) ? 1 : 0;
      nonzero.push_back(i);
    }
  }
  rep.sign_agreement = static_cast<double>(agree) / rep.node_count;

  // Spearman over the nonzero-delta entries (average ranks for ties)
  auto ranks = [](const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    int i = 0;
    while (i < n) {
      int j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * (i + j) + 1.0;
      for (int k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  if (nonzero.size() >= 2) {
    std::vector<double> p, d;
    for (int i : nonzero) {
      p.push_back(predictions[i]);
      d.push_back(deltas[i]);
    }
    const auto rp = ranks(p);
    const auto rd = ranks(d);
    const int n = static_cast<int>(p.size());
    double mp = 0, md = 0;
    for (int i = 0; i < n; ++i) {
      mp += rp[i];
      md += rd[i];
    }
    mp /= n;
    md /= n;
    double num = 0, vp = 0, vd = 0;
    for (int i = 0; i < n; ++i) {
      num += (rp[i] - mp) * (rd[i] - md);
      vp += (rp[i] - mp) * (rp[i] - mp);
      vd += (rd[i] - md) * (rd[i] - md);
    }
    rep.spearman = vp > 0 && vd > 0 ? num / std::sqrt(vp * vd) : 0.0;
  }
  return rep;
}

std::pair<Vec, Vec> per_node_agreement_data(const Graph& g,
                                            const GcnConfig& cfg,
                                            const InfluenceTable& table) {
  const int n_tr = static_cast<int>(table.train_nodes.size());
  Vec predictions(n_tr), deltas(n_tr);
  // predicted mean clean-loss change for removing z is the row mean of I_up
  for (int i = 0; i < n_tr; ++i) {
    predictions[i] = table.iup.row(i).mean();
  }
  const int nw = worker_count();
  bool failed = false;
#pragma omp parallel for schedule(dynamic) num_threads(nw)
  for (int i = 0; i < n_tr; ++i) {
    try {
      deltas[i] = retrain_without(g, cfg, {table.train_nodes[i]}).aggregate;
    } catch (const std::exception&) {
#pragma omp critical
      failed = true;
    }
  }
  if (failed) throw DeglifError("per_node_agreement_data: a retrain failed");
  return {predictions, deltas};
}

void save_agreement(const AgreementReport& rep, const Vec& predictions,
                    const Vec& deltas, const std::vector<int>& nodes,
                    const std::filesystem::path& json_path,
                    const std::filesystem::path& pairs_csv) {
  {
    nlohmann::json j;
    j["sign_agreement"] = rep.sign_agreement;
    j["spearman"] = rep.spearman;
    j["node_count"] = rep.node_count;
    std::ofstream out(json_path);
    if (!out) throw DeglifError("cannot write " + json_path.string());
    out << j.dump(2) << "\n";
  }
  {
    std::ofstream out(pairs_csv);
    if (!out) throw DeglifError("cannot write " + pairs_csv.string());
    out.precision(17);
    out << "z,prediction,delta\n";
    for (int i = 0; i < predictions.size(); ++i) {
      out << nodes[i] << "," << predictions[i] << "," << deltas[i] << "\n";
    }
  }
}

}  // namespace deglif
