#include "emonet/graph.hpp"

#include <algorithm>
#include <deque>
#include <numeric>

namespace emonet {

namespace {
constexpr double kSymTol = 1e-12;

bool is_symmetric(const Matrix& a) {
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= kSymTol * std::max(1.0, a.cwiseAbs().maxCoeff());
}

// BFS order over one component, seeded at its highest-degree node
// (weighted degree; ties to the smallest index). Neighbors visited in
// ascending index order so the slicing is deterministic.
std::vector<int> bfs_order(const Matrix& a, const std::vector<int>& comp) {
  int seed = comp.front();
  double best = -1.0;
  for (int v : comp) {
    double deg = a.row(v).sum();
    if (deg > best) {
      best = deg;
      seed = v;
    }
  }
  std::vector<int> order;
  order.reserve(comp.size());
  std::vector<char> seen(a.rows(), 0);
  std::deque<int> queue{seed};
  seen[seed] = 1;
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop_front();
    order.push_back(v);
    for (int u : comp) {
      if (!seen[u] && a(v, u) > 0.0) {
        seen[u] = 1;
        queue.push_back(u);
      }
    }
  }
  // A component is connected, so BFS covers it; keep the guard anyway.
  for (int v : comp) {
    if (!seen[v]) order.push_back(v);
  }
  return order;
}

struct Piece {
  int component_id;
  std::vector<int> nodes;  // BFS order when the piece came from a split
};

}  // namespace

SocialGraph SocialGraph::empty(std::vector<std::string> ids, Interval iv) {
  SocialGraph g;
  g.adjacency = Matrix::Zero(ids.size(), ids.size());
  g.node_ids = std::move(ids);
  g.interval = iv;
  return g;
}

SocialGraph symmetrize(const SocialGraph& g) {
  SocialGraph out = g;
  out.adjacency = g.adjacency + g.adjacency.transpose();
  return out;
}

double total_edge_weight(const Matrix& a) {
  double total = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = i + 1; j < a.cols(); ++j) total += a(i, j);
  return total;
}

ComponentSet connected_components(const SocialGraph& graph) {
  const Matrix& a = graph.adjacency;
  if (!is_symmetric(a)) throw Error("connected_components: adjacency is not symmetric");
  const int n = graph.size();
  ComponentSet cs;
  std::vector<char> seen(n, 0);
  for (int start = 0; start < n; ++start) {
    if (seen[start]) continue;
    std::vector<int> comp;
    std::deque<int> queue{start};
    seen[start] = 1;
    while (!queue.empty()) {
      int v = queue.front();
      queue.pop_front();
      comp.push_back(v);
      for (int u = 0; u < n; ++u) {
        if (!seen[u] && a(v, u) > 0.0) {
          seen[u] = 1;
          queue.push_back(u);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    cs.sizes.push_back(static_cast<int>(comp.size()));
    cs.components.push_back(std::move(comp));
  }
  return cs;
}

NormalizedAdjacency normalize_adjacency(const Matrix& adjacency) {
  if (adjacency.rows() != adjacency.cols()) {
    throw Error("normalize_adjacency: matrix not square");
  }
  if (adjacency.minCoeff() < 0.0) {
    throw Error("normalize_adjacency: negative entries");
  }
  if (!is_symmetric(adjacency)) {
    throw Error("normalize_adjacency: adjacency is not symmetric");
  }
  const int n = static_cast<int>(adjacency.rows());
  Matrix tilde = adjacency + Matrix::Identity(n, n);
  Vector dinv_sqrt = tilde.rowwise().sum().cwiseInverse().cwiseSqrt();
  NormalizedAdjacency out;
  out.matrix = dinv_sqrt.asDiagonal() * tilde * dinv_sqrt.asDiagonal();
  return out;
}

GeddResult gedd(const SocialGraph& graph, int w) {
  if (w <= 0) throw Error("gedd: w must be positive");
  if (graph.size() == 0) throw Error("gedd: empty graph");
  const Matrix& a = graph.adjacency;
  ComponentSet cs = connected_components(graph);

  GeddResult result;
  std::vector<Piece> main_pieces;   // exactly w nodes each
  std::vector<Piece> residue;       // fewer than w nodes each

  for (std::size_t ci = 0; ci < cs.components.size(); ++ci) {
    const auto& comp = cs.components[ci];
    const int q = static_cast<int>(comp.size());
    const int id = static_cast<int>(ci);
    if (q == w) {
      main_pieces.push_back({id, comp});
    } else if (q < w) {
      residue.push_back({id, comp});
    } else {
      std::vector<int> order = bfs_order(a, comp);
      int full = q / w;  // number of size-w slices
      for (int b = 0; b < full; ++b) {
        main_pieces.push_back(
            {id, {order.begin() + b * w, order.begin() + (b + 1) * w}});
      }
      if (q % w != 0) {
        residue.push_back({id, {order.begin() + full * w, order.end()}});
      }
    }
  }

  // Pack residue pieces into exact-size bins, largest first. When nothing
  // whole fits the remaining gap, split the largest remaining piece along
  // its BFS order to fill the bin exactly.
  std::stable_sort(residue.begin(), residue.end(),
                   [](const Piece& x, const Piece& y) {
                     return x.nodes.size() > y.nodes.size();
                   });
  std::vector<std::vector<Piece>> bins;
  while (!residue.empty()) {
    std::vector<Piece> bin;
    int gap = w;
    while (gap > 0 && !residue.empty()) {
      // Largest piece that fits the gap whole.
      auto it = std::find_if(residue.begin(), residue.end(), [&](const Piece& p) {
        return static_cast<int>(p.nodes.size()) <= gap;
      });
      if (it != residue.end()) {
        gap -= static_cast<int>(it->nodes.size());
        bin.push_back(std::move(*it));
        residue.erase(it);
        continue;
      }
      // Split the largest remaining piece (front of the sorted list).
      Piece& big = residue.front();
      std::vector<int> order = bfs_order(a, big.nodes);
      bin.push_back({big.component_id, {order.begin(), order.begin() + gap}});
      big.nodes.assign(order.begin() + gap, order.end());
      result.split_events += 1;
      gap = 0;
      std::stable_sort(residue.begin(), residue.end(),
                       [](const Piece& x, const Piece& y) {
                         return x.nodes.size() > y.nodes.size();
                       });
    }
    bins.push_back(std::move(bin));
  }

  auto emit = [&](const std::vector<Piece>& pieces) {
    SubgraphBatch batch;
    for (const Piece& p : pieces) {
      for (int v : p.nodes) {
        batch.node_indices.push_back(v);
        batch.node_ids.push_back(graph.node_ids[v]);
        batch.duplicate_mask.push_back(false);
        batch.source_components.push_back(p.component_id);
      }
    }
    // Pad an underfull batch by cycling over its own nodes. Copies stay
    // edgeless so no structure is invented.
    const int real = static_cast<int>(batch.node_indices.size());
    for (int i = real; i < w; ++i) {
      int src = i % real;
      batch.node_indices.push_back(batch.node_indices[src]);
      batch.node_ids.push_back(batch.node_ids[src]);
      batch.duplicate_mask.push_back(true);
      batch.source_components.push_back(batch.source_components[src]);
    }
    batch.adjacency = Matrix::Zero(w, w);
    for (int i = 0; i < real; ++i) {
      for (int j = 0; j < real; ++j) {
        batch.adjacency(i, j) = a(batch.node_indices[i], batch.node_indices[j]);
      }
    }
    result.batches.push_back(std::move(batch));
  };

  for (const Piece& p : main_pieces) emit({p});
  for (const auto& bin : bins) emit(bin);

  double retained = 0.0;
  for (const auto& b : result.batches) retained += total_edge_weight(b.adjacency);
  result.cut_weight = total_edge_weight(a) - retained;
  return result;
}

}  // namespace emonet
