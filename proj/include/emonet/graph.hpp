#pragma once

#include <string>
#include <vector>

#include "emonet/common.hpp"

namespace emonet {

// Weighted adjacency over a fixed user roster. Directed at construction;
// symmetrize() before anything that assumes undirected structure.
struct SocialGraph {
  std::vector<std::string> node_ids;
  Matrix adjacency;  // N x N, non-negative, zero diagonal
  Interval interval;

  int size() const { return static_cast<int>(node_ids.size()); }
  static SocialGraph empty(std::vector<std::string> ids, Interval iv);
};

SocialGraph symmetrize(const SocialGraph& g);

// Sum of edge weights over unordered pairs (upper triangle).
double total_edge_weight(const Matrix& a);

struct ComponentSet {
  std::vector<std::vector<int>> components;  // node indices, ascending inside
  std::vector<int> sizes;
};

ComponentSet connected_components(const SocialGraph& graph);

struct NormalizedAdjacency {
  Matrix matrix;  // D~^{-1/2} (A + I) D~^{-1/2}
};

NormalizedAdjacency normalize_adjacency(const Matrix& adjacency);

struct SubgraphBatch {
  Matrix adjacency;                   // w x w, symmetric
  std::vector<std::string> node_ids;  // length w, duplicates allowed
  std::vector<int> node_indices;      // indices into the source graph
  std::vector<bool> duplicate_mask;   // true = repetition padding
  std::vector<int> source_components;
};

struct GeddResult {
  std::vector<SubgraphBatch> batches;
  double cut_weight = 0.0;    // edge weight lost to chunk/bin splits
  int split_events = 0;       // components split while packing residue bins
};

// Re-partitions a graph into fixed-size model inputs: whole components of
// size w pass through, larger ones are sliced along a BFS order, smaller
// ones are bin-packed, and a final underfull bin is padded by masked
// repetition of its own nodes.
GeddResult gedd(const SocialGraph& graph, int w);

}  // namespace emonet
