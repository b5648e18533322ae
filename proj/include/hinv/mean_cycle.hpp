#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hinv/error.hpp"
#include "hinv/graph.hpp"

namespace hinv {

struct WeightedArc {
  int src;
  int dst;
  double weight;
  int label = 0;
};

struct MeanCycle {
  double mean = 0.0;
  std::vector<int> nodes;   // nodes[i] -> nodes[i+1 mod len]
  std::vector<int> labels;  // label of the arc leaving nodes[i]
  std::vector<double> weights;
};

// Karp's minimum cycle mean over all cycles of the graph on n nodes. A cycle
// attaining it is read off the length-n walk to the minimizing node.
inline std::optional<MeanCycle> karp_min_mean_cycle(int n, std::span<const WeightedArc> arcs) {
  if (n <= 0 || arcs.empty()) return std::nullopt;
  constexpr double inf = std::numeric_limits<double>::infinity();
  const auto N = static_cast<std::size_t>(n);
  std::vector<double> dist((N + 1) * N, inf);
  std::vector<int> parent((N + 1) * N, -1);
  for (std::size_t v = 0; v < N; ++v) dist[v] = 0.0;
  for (std::size_t k = 1; k <= N; ++k) {
    const double* prev = &dist[(k - 1) * N];
    double* cur = &dist[k * N];
    int* par = &parent[k * N];
    for (std::size_t a = 0; a < arcs.size(); ++a) {
      const auto& arc = arcs[a];
      const double base = prev[arc.src];
      if (base == inf) continue;
      const double cand = base + arc.weight;
      if (cand < cur[arc.dst]) {
        cur[arc.dst] = cand;
        par[arc.dst] = static_cast<int>(a);
      }
    }
  }
  double best = inf;
  int best_v = -1;
  for (std::size_t v = 0; v < N; ++v) {
    const double dn = dist[N * N + v];
    if (dn == inf) continue;
    double worst = -inf;
    for (std::size_t k = 0; k < N; ++k) {
      const double dk = dist[k * N + v];
      if (dk == inf) continue;
      worst = std::max(worst, (dn - dk) / static_cast<double>(N - k));
    }
    if (worst < best) {
      best = worst;
      best_v = static_cast<int>(v);
    }
  }
  if (best_v < 0) return std::nullopt;

  // Walk back from (n, best_v) and split the walk into simple cycles.
  std::vector<int> walk_nodes(N + 1);
  std::vector<int> walk_arcs(N);
  walk_nodes[N] = best_v;
  for (std::size_t k = N; k > 0; --k) {
    const int a = parent[k * N + static_cast<std::size_t>(walk_nodes[k])];
    walk_arcs[k - 1] = a;
    walk_nodes[k - 1] = arcs[static_cast<std::size_t>(a)].src;
  }
  std::optional<MeanCycle> found;
  std::vector<int> stack_nodes;
  std::vector<int> stack_arcs;
  std::vector<int> position(N, -1);
  for (std::size_t k = 0; k <= N; ++k) {
    const int v = walk_nodes[k];
    if (position[static_cast<std::size_t>(v)] >= 0) {
      const auto start = static_cast<std::size_t>(position[static_cast<std::size_t>(v)]);
      MeanCycle c;
      double total = 0.0;
      for (std::size_t i = start; i < stack_nodes.size(); ++i) {
        const auto& arc = arcs[static_cast<std::size_t>(stack_arcs[i])];
        c.nodes.push_back(stack_nodes[i]);
        c.labels.push_back(arc.label);
        c.weights.push_back(arc.weight);
        total += arc.weight;
      }
      c.mean = total / static_cast<double>(c.nodes.size());
      if (!found || c.mean < found->mean) found = std::move(c);
      for (std::size_t i = start; i < stack_nodes.size(); ++i) position[static_cast<std::size_t>(stack_nodes[i])] = -1;
      stack_nodes.resize(start);
      stack_arcs.resize(start);
    }
    position[static_cast<std::size_t>(v)] = static_cast<int>(stack_nodes.size());
    stack_nodes.push_back(v);
    if (k < N) stack_arcs.push_back(walk_arcs[k]);
  }
  return found;
}

struct MeanCycleBound {
  double value = 0.0;  // cycle mean divided by the graph step
  std::vector<CellIndex> cells;
  std::vector<int> controls;
  std::vector<double> weights;
};

// Minimum mean cycle of the graph restricted to q, keeping for every ordered
// cell pair the cheapest admissible edge. Weightless edges are skipped.
inline MeanCycleBound min_mean_cycle_bound(const TransitionGraph& g, const CellSet& q) {
  std::map<CellIndex, int> local;
  for (CellIndex c : q) local.emplace(c, static_cast<int>(local.size()));
  std::map<std::pair<int, int>, WeightedArc> cheapest;
  for (CellIndex c : q) {
    for (const Edge& e : g.out_edges(c)) {
      if (g.is_weightless(e.src, e.control)) continue;
      const auto it = local.find(e.dst);
      if (it == local.end()) continue;
      const int s = local.at(c);
      const int t = it->second;
      const auto key = std::make_pair(s, t);
      auto found = cheapest.find(key);
      if (found == cheapest.end() || e.weight < found->second.weight) cheapest[key] = {s, t, e.weight, e.control};
    }
  }
  std::vector<WeightedArc> arcs;
  for (const auto& kv : cheapest) arcs.push_back(kv.second);
  const auto cycle = karp_min_mean_cycle(static_cast<int>(local.size()), arcs);
  if (!cycle) throw Error(ErrorCode::NoCycle, "no cycle inside the chosen cell set");
  MeanCycleBound out;
  out.value = cycle->mean / g.step;
  for (int v : cycle->nodes) out.cells.push_back(q.cells()[static_cast<std::size_t>(v)]);
  out.controls = cycle->labels;
  out.weights = cycle->weights;
  return out;
}

}  // namespace hinv
