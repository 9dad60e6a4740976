#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "deglif/graph.hpp"

namespace deglif {

enum class NoiseModel { Sln, Pairwise };

/// `level` is the total flip probability per node: SLN spreads it uniformly
/// over the other K-1 classes, pairwise flips to the next class cyclically.
struct NoiseSpec {
  NoiseModel model = NoiseModel::Sln;
  double level = 0.0;
  int n_classes = 0;
};

/// K x K row-stochastic transition matrix.
struct TransitionMatrix {
  Mat q;
};

struct CorruptionRecord {
  int node = 0;
  int original_label = 0;
  int observed_label = 0;
  bool flipped = false;
};

/// Ground-truth corruption record covering exactly the training mask.
struct CorruptionLedger {
  std::vector<CorruptionRecord> records;

  int flip_count() const;
  double flip_fraction() const;
  /// Original label of `node`, or -1 if the node is not in the ledger.
  int original_of(int node) const;
};

TransitionMatrix build_transition(const NoiseSpec& spec);

/// Resamples each training node's label from its row of Q; all other labels
/// are untouched. Deterministic given seed.
std::pair<Graph, CorruptionLedger> inject(const Graph& g,
                                          const TransitionMatrix& q,
                                          std::uint64_t seed);

void save_ledger(const CorruptionLedger& ledger,
                 const std::filesystem::path& path);
CorruptionLedger load_ledger(const std::filesystem::path& path);

}  // namespace deglif
