#pragma once

#include <Eigen/Dense>
#include <bitset>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "gridil/grid.hpp"

namespace gridil {

enum class Representation { homogeneous, heterogeneous };

inline const char* to_string(Representation r) {
  return r == Representation::homogeneous ? "homogeneous" : "heterogeneous";
}

/// Object graph of a topology. Edges are undirected pairs (a < b), kept in
/// three typed lists. The homogeneous representation leaves other_busbar
/// empty; its edge set is same_busbar plus line.
struct GridGraph {
  int n_nodes = 0;
  Representation representation = Representation::homogeneous;
  std::vector<std::pair<int, int>> same_busbar;
  std::vector<std::pair<int, int>> other_busbar;
  std::vector<std::pair<int, int>> line;
  std::vector<uint8_t> node_connected;

  std::vector<std::pair<int, int>> all_edges() const {
    std::vector<std::pair<int, int>> out = same_busbar;
    out.insert(out.end(), other_busbar.begin(), other_busbar.end());
    out.insert(out.end(), line.begin(), line.end());
    return out;
  }
};

/// Build the hom or het object graph: same-busbar cliques, cross-busbar
/// pairs within a substation (het only), and enabled-line endpoint pairs.
inline GridGraph build_graph(const GridSpec& spec, const TopologyVector& topology,
                             Representation representation) {
  GridGraph g;
  g.n_nodes = spec.n_objects();
  g.representation = representation;
  g.node_connected.assign(g.n_nodes, 0);
  for (int o = 0; o < g.n_nodes; ++o) g.node_connected[o] = topology.connected(o);

  for (int s = 0; s < spec.n_substations; ++s) {
    std::vector<int> objs;
    for (int o : spec.substation_objects(s))
      if (topology.connected(o)) objs.push_back(o);
    for (size_t i = 0; i < objs.size(); ++i) {
      for (size_t j = i + 1; j < objs.size(); ++j) {
        if (topology[objs[i]] == topology[objs[j]])
          g.same_busbar.emplace_back(objs[i], objs[j]);
        else if (representation == Representation::heterogeneous)
          g.other_busbar.emplace_back(objs[i], objs[j]);
      }
    }
  }
  for (const auto& ln : spec.lines) {
    int f = spec.endpoint_object(ln.id, LineEnd::from);
    int t = spec.endpoint_object(ln.id, LineEnd::to);
    if (topology.connected(f) && topology.connected(t)) g.line.emplace_back(f, t);
  }
  return g;
}

/// Diameter via boolean powers of (adjacency + identity) restricted to
/// connected nodes: the least k whose power has no zero entry. nullopt
/// signals a disconnected graph.
inline std::optional<int> diameter(const GridGraph& g) {
  constexpr int kMax = 64;
  if (g.n_nodes > kMax) throw std::invalid_argument("diameter supports up to 64 nodes");
  std::vector<int> nodes;
  for (int i = 0; i < g.n_nodes; ++i)
    if (g.node_connected[i]) nodes.push_back(i);
  if (nodes.size() <= 1) return 0;

  std::vector<std::bitset<kMax>> adj(g.n_nodes);
  for (int i : nodes) adj[i].set(i);
  for (const auto& [a, b] : g.all_edges()) {
    adj[a].set(b);
    adj[b].set(a);
  }
  std::bitset<kMax> want;
  for (int i : nodes) want.set(i);

  auto complete = [&](const std::vector<std::bitset<kMax>>& m) {
    for (int i : nodes)
      if ((m[i] & want) != want) return false;
    return true;
  };

  if (complete(adj)) return 1;
  std::vector<std::bitset<kMax>> power = adj;
  for (int k = 2; k <= static_cast<int>(nodes.size()); ++k) {
    std::vector<std::bitset<kMax>> next(g.n_nodes);
    for (int i : nodes) {
      std::bitset<kMax> row;
      for (int j : nodes)
        if (power[i][j]) row |= adj[j];
      next[i] = row;
    }
    power = std::move(next);
    if (complete(power)) return k;
  }
  return std::nullopt;
}

/// Mean average distance of node embeddings: for each node with neighbors,
/// the mean cosine distance to its neighbors (all edge types), averaged over
/// such nodes. Zero-norm embeddings count as distance 1.
inline double mad(const Eigen::MatrixXd& embeddings, const GridGraph& g) {
  std::vector<std::vector<int>> neigh(g.n_nodes);
  for (const auto& [a, b] : g.all_edges()) {
    neigh[a].push_back(b);
    neigh[b].push_back(a);
  }
  Eigen::VectorXd norms = embeddings.rowwise().norm();
  double total = 0.0;
  int counted = 0;
  for (int u = 0; u < g.n_nodes; ++u) {
    if (neigh[u].empty()) continue;
    double acc = 0.0;
    for (int v : neigh[u]) {
      double denom = norms(u) * norms(v);
      double cos_sim = denom > 0 ? embeddings.row(u).dot(embeddings.row(v)) / denom : 0.0;
      acc += 1.0 - cos_sim;
    }
    total += acc / static_cast<double>(neigh[u].size());
    counted++;
  }
  return counted ? total / counted : 0.0;
}

}  // namespace gridil
