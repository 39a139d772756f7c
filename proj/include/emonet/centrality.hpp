#pragma once

#include <iosfwd>

#include "emonet/graph.hpp"

namespace emonet {

// Number of distinct neighbors (edge indicator, weights not summed).
std::vector<int> degree_centrality(const SocialGraph& graph);

// Sum over reachable u != v of N / d(v,u), hop-count distances.
// Unreachable pairs contribute 0, so isolated nodes score 0.
std::vector<double> closeness_centrality(const SocialGraph& graph);

// Unit-norm dominant eigenvector of the adjacency by normalized power
// iteration. Throws on non-convergence, carrying the last residual.
std::vector<double> eigenvector_centrality(const SocialGraph& graph,
                                           double tol = 1e-10,
                                           int max_iter = 10000);

// Damped random-walk fixed point; sinks redistribute uniformly. Sums to 1.
std::vector<double> pagerank_centrality(const SocialGraph& graph,
                                        double gamma = 0.85,
                                        double tol = 1e-12,
                                        int max_iter = 10000);

struct CentralityTable {
  std::vector<std::string> node_ids;
  std::vector<int> degree;
  std::vector<double> closeness;
  std::vector<double> eigenvector;
  std::vector<double> pagerank;
};

CentralityTable compute_centralities(const SocialGraph& graph,
                                     double gamma = 0.85);

void write_centrality_csv(const CentralityTable& t, std::ostream& out);

}  // namespace emonet
