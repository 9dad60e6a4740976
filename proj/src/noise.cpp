#include "deglif/noise.hpp"

#include <fstream>
#include <random>
#include <sstream>

namespace deglif {

int CorruptionLedger::flip_count() const {
  int c = 0;
  for (const auto& r : records) c += r.flipped ? 1 : 0;
  return c;
}

double CorruptionLedger::flip_fraction() const {
  return records.empty() ? 0.0
                         : static_cast<double>(flip_count()) / records.size();
}

int CorruptionLedger::original_of(int node) const {
  for (const auto& r : records) {
    if (r.node == node) return r.original_label;
  }
  return -1;
}

TransitionMatrix build_transition(const NoiseSpec& spec) {
  const int K = spec.n_classes;
  if (K < 2 || spec.level < 0.0 || spec.level >= 1.0) {
    throw DeglifError("build_transition: invalid noise spec");
  }
  TransitionMatrix t;
  t.q = Mat::Zero(K, K);
  if (spec.model == NoiseModel::Sln) {
    const double c = spec.level / (K - 1);
    if (c > 1.0) throw DeglifError("build_transition: SLN level too high");
    t.q.setConstant(c);
    t.q.diagonal().setConstant(1.0 - spec.level);
  } else {
    for (int k = 0; k < K; ++k) {
      t.q(k, k) = 1.0 - spec.level;
      t.q(k, (k + 1) % K) = spec.level;
    }
  }
  return t;
}

std::pair<Graph, CorruptionLedger> inject(const Graph& g,
                                          const TransitionMatrix& q,
                                          std::uint64_t seed) {
  if (q.q.rows() != g.n_classes || q.q.cols() != g.n_classes) {
    throw DeglifError("inject: transition matrix dimension mismatch");
  }
  Graph out = g;
  CorruptionLedger ledger;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int z : g.masks.train) {
    const int orig = g.labels[z];
    double u = unif(rng);
    int observed = g.n_classes - 1;
    double cum = 0.0;
    for (int k = 0; k < g.n_classes; ++k) {
      cum += q.q(orig, k);
      if (u < cum) {
        observed = k;
        break;
      }
    }
    out.labels[z] = observed;
    ledger.records.push_back({z, orig, observed, observed != orig});
  }
  return {std::move(out), std::move(ledger)};
}

void save_ledger(const CorruptionLedger& ledger,
                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DeglifError("cannot write " + path.string());
  out << "node,original,observed,flipped\n";
  for (const auto& r : ledger.records) {
    out << r.node << "," << r.original_label << "," << r.observed_label << ","
        << (r.flipped ? 1 : 0) << "\n";
  }
}

CorruptionLedger load_ledger(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DeglifError("missing file: " + path.string());
  CorruptionLedger ledger;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f;
    CorruptionRecord r;
    std::getline(ss, f, ',');
    r.node = std::stoi(f);
    std::getline(ss, f, ',');
    r.original_label = std::stoi(f);
    std::getline(ss, f, ',');
    r.observed_label = std::stoi(f);
    std::getline(ss, f, ',');
    r.flipped = f == "1";
    ledger.records.push_back(r);
  }
  return ledger;
}

}  // namespace deglif
