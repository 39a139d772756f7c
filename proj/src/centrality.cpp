#include "emonet/centrality.hpp"

#include <deque>
#include <ostream>

namespace emonet {

std::vector<int> degree_centrality(const SocialGraph& graph) {
  const int n = graph.size();
  std::vector<int> deg(n, 0);
  for (int v = 0; v < n; ++v) {
    for (int u = 0; u < n; ++u) {
      if (graph.adjacency(u, v) > 0.0) deg[v] += 1;
    }
  }
  return deg;
}

std::vector<double> closeness_centrality(const SocialGraph& graph) {
  const int n = graph.size();
  std::vector<double> close(n, 0.0);
  for (int v = 0; v < n; ++v) {
    std::vector<int> dist(n, -1);
    std::deque<int> queue{v};
    dist[v] = 0;
    while (!queue.empty()) {
      int x = queue.front();
      queue.pop_front();
      for (int u = 0; u < n; ++u) {
        if (dist[u] < 0 && graph.adjacency(x, u) > 0.0) {
          dist[u] = dist[x] + 1;
          queue.push_back(u);
        }
      }
    }
    double sum = 0.0;
    for (int u = 0; u < n; ++u) {
      if (u != v && dist[u] > 0) sum += static_cast<double>(n) / dist[u];
    }
    close[v] = sum;
  }
  return close;
}

std::vector<double> eigenvector_centrality(const SocialGraph& graph,
                                           double tol, int max_iter) {
  const int n = graph.size();
  if (n == 0) throw Error("eigenvector_centrality: empty graph");
  Vector x = Vector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  if (graph.adjacency.cwiseAbs().maxCoeff() == 0.0) {
    // No edges: the iteration is degenerate; the uniform vector is as good
    // a fixed point as any.
    return {x.data(), x.data() + n};
  }
  double residual = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    // Shifted iteration (A + I)x: same eigenvectors, but the dominant
    // eigenvalue becomes strictly largest in modulus, so bipartite graphs
    // cannot oscillate.
    Vector y = graph.adjacency * x + x;
    double norm = y.norm();
    if (norm == 0.0) throw Error("eigenvector_centrality: iterate vanished");
    y /= norm;
    residual = (y - x).cwiseAbs().maxCoeff();
    x = y;
    if (residual < tol) return {x.data(), x.data() + n};
  }
  throw Error("eigenvector_centrality: no convergence, residual " +
              format_double(residual));
}

std::vector<double> pagerank_centrality(const SocialGraph& graph, double gamma,
                                        double tol, int max_iter) {
  const int n = graph.size();
  if (n == 0) throw Error("pagerank_centrality: empty graph");
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw Error("pagerank_centrality: gamma must be in [0,1)");
  }
  Vector out_deg = graph.adjacency.rowwise().sum();
  Vector x = Vector::Constant(n, 1.0 / n);
  double residual = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector y = Vector::Constant(n, (1.0 - gamma) / n);
    double sink_mass = 0.0;
    for (int u = 0; u < n; ++u) {
      if (out_deg[u] > 0.0) {
        y += gamma * (x[u] / out_deg[u]) * graph.adjacency.row(u).transpose();
      } else {
        sink_mass += x[u];
      }
    }
    y.array() += gamma * sink_mass / n;
    residual = (y - x).cwiseAbs().sum();
    x = y;
    if (residual < tol) {
      x /= x.sum();
      return {x.data(), x.data() + n};
    }
  }
  throw Error("pagerank_centrality: no convergence, residual " +
              format_double(residual));
}

CentralityTable compute_centralities(const SocialGraph& graph, double gamma) {
  CentralityTable t;
  t.node_ids = graph.node_ids;
  t.degree = degree_centrality(graph);
  t.closeness = closeness_centrality(graph);
  t.eigenvector = eigenvector_centrality(graph);
  t.pagerank = pagerank_centrality(graph, gamma);
  return t;
}

void write_centrality_csv(const CentralityTable& t, std::ostream& out) {
  out << "user_id,degree,closeness,eigenvector,pagerank\n";
  for (std::size_t i = 0; i < t.node_ids.size(); ++i) {
    out << t.node_ids[i] << ',' << t.degree[i] << ','
        << format_double(t.closeness[i]) << ',' << format_double(t.eigenvector[i])
        << ',' << format_double(t.pagerank[i]) << '\n';
  }
}

}  // namespace emonet
