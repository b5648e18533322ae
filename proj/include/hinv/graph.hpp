#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <boost/graph/adjacency_list.hpp>
#include <boost/graph/strong_components.hpp>

#include "hinv/control.hpp"
#include "hinv/grid.hpp"
#include "hinv/parallel.hpp"
#include "hinv/projective.hpp"

namespace hinv {

struct Edge {
  CellIndex src;
  CellIndex dst;
  int control;
  double weight;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct GraphOptions {
  double step = 1.0;
  int samples_per_axis = 3;
  std::optional<int> plus_dimension;  // empty: count exponents above the separation threshold
  ProjectiveOptions splitting{0.5, 0.05, 20.0};
  unsigned threads = 1;
};

// Directed graph of the time-`step` map on grid cells, one edge per
// (cell, control, target cell), weighted by the one-step log unstable
// determinant at the source center.
class TransitionGraph {
 public:
  std::size_t cell_count = 0;
  double step = 1.0;
  std::vector<Vec> controls;
  std::vector<Edge> edges;              // sorted by (src, control, dst)
  std::vector<std::size_t> offsets;     // CSR offsets into edges, size cell_count + 1
  std::vector<std::uint8_t> weightless; // per (cell * controls + control): no separation certificate
  std::vector<int> plus_dimension;      // per (cell * controls + control)

  std::span<const Edge> out_edges(CellIndex c) const {
    const auto i = static_cast<std::size_t>(c);
    return {edges.data() + offsets[i], offsets[i + 1] - offsets[i]};
  }

  bool is_weightless(CellIndex c, int control) const {
    return weightless[static_cast<std::size_t>(c) * controls.size() + static_cast<std::size_t>(control)] != 0;
  }
};

struct CellWeight {
  double log_unstable = 0.0;
  int plus_dimension = 0;
  bool weightless = false;
};

// One-step log J+ at x under a constant control, with the unstable frame
// estimated from the past of the same constant control.
inline CellWeight one_step_weight(const BilinearSystem& sys, const Vec& x, const Vec& value, const GraphOptions& opts) {
  const auto u = PiecewiseConstantControl::constant(value);
  const ProjectiveOptions& po = opts.splitting;
  const double window = po.effective_window();
  const int d = sys.projective_dimension();
  CellWeight w;
  auto past = detail::push_forward_from_past(sys, x, u, window, po.max_step);
  const std::vector<double> exps = past.exponents();
  const int p = opts.plus_dimension ? *opts.plus_dimension : auto_plus_dimension(exps, po.separation_threshold);
  require(p >= 0 && p <= d, "unstable dimension must lie in [0, d]");
  w.plus_dimension = p;
  if (p == 0) return w;
  if (!(separation_rate(exps, p) >= po.separation_threshold)) {
    w.weightless = true;
    return w;
  }
  const TangentFrame frame = p == d ? TangentFrame{x, tangent_basis(x)} : TangentFrame{x, past.frame.leftCols(p)};
  w.log_unstable = unstable_determinant(sys, frame, u, opts.step, po).log_value;
  return w;
}

inline TransitionGraph build_transition_graph(const BilinearSystem& sys, const ProjectiveGrid& grid,
                                              const std::vector<Vec>& controls, const GraphOptions& opts = {}) {
  require(grid.dimension() == sys.projective_dimension(), "grid and system dimensions differ");
  require(!controls.empty(), "at least one control value is needed");
  require(opts.step > 0.0, "graph step must be positive");
  for (const auto& v : controls) require(sys.range().contains(v), "graph control outside the control range");
  const std::size_t n = grid.size();
  const std::size_t m = controls.size();
  std::vector<Mat> maps;
  for (const auto& v : controls) maps.push_back(expm(opts.step * sys.matrix(v)));

  TransitionGraph g;
  g.cell_count = n;
  g.step = opts.step;
  g.controls = controls;
  g.weightless.assign(n * m, 0);
  g.plus_dimension.assign(n * m, 0);
  std::vector<std::vector<Edge>> per_cell(n);
  parallel_for(n, opts.threads, [&](std::size_t c) {
    const auto cell = static_cast<CellIndex>(c);
    const auto samples = grid.sample_points(cell, opts.samples_per_axis);
    auto& out = per_cell[c];
    for (std::size_t k = 0; k < m; ++k) {
      const CellWeight w = one_step_weight(sys, grid.center(cell), controls[k], opts);
      g.weightless[c * m + k] = w.weightless ? 1 : 0;
      g.plus_dimension[c * m + k] = w.plus_dimension;
      std::vector<CellIndex> targets;
      for (const auto& x : samples) targets.push_back(grid.lookup(normalized(maps[k] * x)));
      std::sort(targets.begin(), targets.end());
      targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
      for (CellIndex t : targets) out.push_back({cell, t, static_cast<int>(k), w.weightless ? 0.0 : w.log_unstable});
    }
  });
  g.offsets.assign(n + 1, 0);
  for (std::size_t c = 0; c < n; ++c) {
    g.offsets[c + 1] = g.offsets[c] + per_cell[c].size();
    g.edges.insert(g.edges.end(), per_cell[c].begin(), per_cell[c].end());
  }
  return g;
}

// Strongly connected components of the cell graph with control labels
// forgotten. Returns the component id of every vertex.
inline std::vector<int> strong_components(const TransitionGraph& g, int& count) {
  using Adjacency = boost::adjacency_list<boost::vecS, boost::vecS, boost::directedS>;
  Adjacency adj(g.cell_count);
  for (const Edge& e : g.edges) boost::add_edge(static_cast<std::size_t>(e.src), static_cast<std::size_t>(e.dst), adj);
  std::vector<int> comp(g.cell_count, -1);
  count = g.cell_count == 0
              ? 0
              : static_cast<int>(boost::strong_components(
                    adj, boost::make_iterator_property_map(comp.begin(), boost::get(boost::vertex_index, adj))));
  return comp;
}

// Nontrivial components (more than one cell, or a self-loop), ordered by
// their lowest cell index.
inline std::vector<CellSet> chain_control_sets(const TransitionGraph& g) {
  int count = 0;
  const auto comp = strong_components(g, count);
  std::vector<std::vector<CellIndex>> members(static_cast<std::size_t>(count));
  for (std::size_t v = 0; v < g.cell_count; ++v) members[static_cast<std::size_t>(comp[v])].push_back(static_cast<CellIndex>(v));
  std::vector<CellSet> out;
  for (auto& mem : members) {
    bool keep = mem.size() > 1;
    if (!keep) {
      for (const Edge& e : g.out_edges(mem.front()))
        if (e.dst == mem.front()) keep = true;
    }
    if (keep) out.emplace_back(std::move(mem));
  }
  std::sort(out.begin(), out.end(), [](const CellSet& a, const CellSet& b) { return a.front() < b.front(); });
  return out;
}

// Component containing the cell of x, if any.
inline std::optional<std::size_t> component_containing(const std::vector<CellSet>& sets, CellIndex cell) {
  for (std::size_t i = 0; i < sets.size(); ++i)
    if (sets[i].contains(cell)) return i;
  return std::nullopt;
}

}  // namespace hinv
