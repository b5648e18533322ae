#include "experiment.hpp"

#include <any>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "hinv/hinv.hpp"

namespace hinv::cli {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorCode::ConfigInvalid, msg); }

enum class Kind { Number, Integer, Point, Control, ControlList, IntegerList };

struct KeySpec {
  std::string key;
  Kind kind;
  std::string fallback;  // empty: derived from the system
  bool required = false;
};

// Stage parameters after defaults, parsed and checked against the system.
class Params {
 public:
  Params(const StageConfig& st, const std::vector<KeySpec>& keys, const ExperimentConfig& cfg) : stage_(st.name) {
    const int n = cfg.ambient_dimension();
    const int m = cfg.control_dimension();
    const ControlRange range(cfg.control_lo, cfg.control_hi);
    for (const auto& [key, value] : st.params) {
      bool known = false;
      for (const auto& k : keys) known = known || k.key == key;
      if (!known) invalid(where(key) + "unknown key");
    }
    for (const auto& k : keys) {
      auto it = st.params.find(k.key);
      const bool given = it != st.params.end() && !it->second.empty();
      if (k.required && !given) invalid(where(k.key) + "required");
      const std::string text = given ? it->second : k.fallback;
      switch (k.kind) {
        case Kind::Number: {
          const auto v = parse_numbers(text, where(k.key));
          if (v.size() != 1) invalid(where(k.key) + "expected one number");
          numbers_[k.key] = v[0];
          resolved_[k.key] = format_number(v[0]);
          break;
        }
        case Kind::Integer: {
          const auto v = parse_numbers(text, where(k.key));
          if (v.size() != 1 || v[0] != std::floor(v[0])) invalid(where(k.key) + "expected one integer");
          integers_[k.key] = static_cast<long>(v[0]);
          resolved_[k.key] = std::to_string(static_cast<long>(v[0]));
          break;
        }
        case Kind::IntegerList: {
          std::vector<long> out;
          for (double x : parse_numbers(text, where(k.key))) {
            if (x != std::floor(x) || x < 1) invalid(where(k.key) + "expected positive integers");
            out.push_back(static_cast<long>(x));
          }
          if (out.empty()) invalid(where(k.key) + "expected at least one integer");
          std::string r;
          for (long x : out) r += (r.empty() ? "" : " ") + std::to_string(x);
          int_lists_[k.key] = out;
          resolved_[k.key] = r;
          break;
        }
        case Kind::Point: {
          Vec p(n);
          if (text.empty()) {
            p.setConstant(1.0 / std::sqrt(static_cast<double>(n)));
          } else {
            const auto v = parse_numbers(text, where(k.key));
            if (static_cast<int>(v.size()) != n)
              invalid(where(k.key) + "expected " + std::to_string(n) + " coordinates, got " + std::to_string(v.size()));
            for (int i = 0; i < n; ++i) p[i] = v[static_cast<std::size_t>(i)];
            if (p.norm() == 0.0) invalid(where(k.key) + "the zero vector is not a projective point");
          }
          points_[k.key] = p;
          resolved_[k.key] = join(p);
          break;
        }
        case Kind::Control: {
          const Vec u = text.empty() ? midpoint(cfg) : control_value(text, m, range, k.key);
          points_[k.key] = u;
          resolved_[k.key] = join(u);
          break;
        }
        case Kind::ControlList: {
          std::vector<Vec> list;
          if (text.empty()) {
            list = range.lattice(3);
          } else {
            std::string chunk;
            std::istringstream groups(text);
            while (std::getline(groups, chunk, '|')) list.push_back(control_value(chunk, m, range, k.key));
          }
          std::string r;
          for (const auto& u : list) r += (r.empty() ? "" : " | ") + join(u);
          lists_[k.key] = list;
          resolved_[k.key] = r;
          break;
        }
      }
    }
  }

  double num(const std::string& k) const { return numbers_.at(k); }
  long integer(const std::string& k) const { return integers_.at(k); }
  const std::vector<long>& integers(const std::string& k) const { return int_lists_.at(k); }
  const Vec& vec(const std::string& k) const { return points_.at(k); }
  const std::vector<Vec>& controls(const std::string& k) const { return lists_.at(k); }
  const KeyValues& resolved() const { return resolved_; }

  void require_positive(const std::string& k) const {
    const double v = numbers_.count(k) ? numbers_.at(k) : static_cast<double>(integers_.at(k));
    if (!(v > 0)) invalid(where(k) + "must be positive");
  }

 private:
  std::string where(const std::string& key) const { return "stage '" + stage_ + "', key '" + key + "': "; }

  static std::string join(const Vec& v) {
    std::string s;
    for (int i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_number(v[i]);
    return s;
  }

  static Vec midpoint(const ExperimentConfig& cfg) {
    Vec u(cfg.control_dimension());
    for (int i = 0; i < u.size(); ++i)
      u[i] = 0.5 * (cfg.control_lo[static_cast<std::size_t>(i)] + cfg.control_hi[static_cast<std::size_t>(i)]);
    return u;
  }

  Vec control_value(const std::string& text, int m, const ControlRange& range, const std::string& key) const {
    const auto v = parse_numbers(text, where(key));
    if (static_cast<int>(v.size()) != m)
      invalid(where(key) + "expected " + std::to_string(m) + " control values, got " + std::to_string(v.size()));
    Vec u(m);
    for (int i = 0; i < m; ++i) u[i] = v[static_cast<std::size_t>(i)];
    if (!range.contains(u)) invalid(where(key) + "control value outside the control range");
    return u;
  }

  std::string stage_;
  std::map<std::string, double> numbers_;
  std::map<std::string, long> integers_;
  std::map<std::string, std::vector<long>> int_lists_;
  std::map<std::string, Vec> points_;
  std::map<std::string, std::vector<Vec>> lists_;
  KeyValues resolved_;
};

using Row = std::vector<std::string>;

struct StageContext;

struct Analysis {
  AnalysisInfo info;
  std::vector<KeySpec> keys;
  bool uses_grid = false;
  std::function<void(const Params&)> check;
  std::function<void(StageContext&)> run;
};

struct UpperArtifact {
  UpperEstimate estimate;
  double horizon = 0.0;
};

struct StageContext {
  const Analysis& spec;
  const ExperimentConfig& cfg;
  const BilinearSystem& sys;
  const ProjectiveGrid* grid_ptr;
  const Params& p;
  unsigned threads;
  std::uint64_t seed;
  fs::path dir;
  std::map<std::string, std::any>& store;
  std::vector<fs::path> written;

  const ProjectiveGrid& grid() const { return *grid_ptr; }

  bool declared_input(const std::string& name) const {
    for (const auto& r : spec.info.requires_artifacts)
      if (r == name) return true;
    for (const auto& r : spec.info.optional_artifacts)
      if (r == name) return true;
    return false;
  }

  bool has(const std::string& name) const {
    if (!declared_input(name)) throw std::logic_error("stage reads undeclared artifact " + name);
    return store.count(name) > 0;
  }

  template <class T>
  const T& input(const std::string& name) const {
    if (!declared_input(name)) throw std::logic_error("stage reads undeclared artifact " + name);
    return std::any_cast<const T&>(store.at(name));
  }

  template <class T>
  void output(const std::string& name, T value) {
    bool ok = false;
    for (const auto& r : spec.info.produces) ok = ok || r == name;
    if (!ok) throw std::logic_error("stage writes undeclared artifact " + name);
    store[name] = std::move(value);
  }

  void csv(const std::string& file, const Row& header, const std::vector<Row>& rows) {
    std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir / file).string());
    auto line = [&](const Row& r) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
      out << '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    if (!out) throw std::runtime_error("write failed for " + (dir / file).string());
    written.push_back(file);
  }
};

std::string num(double v) { return format_number(v); }
std::string num(std::size_t v) { return std::to_string(v); }
std::string num(int v) { return std::to_string(v); }

Row coords(const Vec& v) {
  Row r;
  for (int i = 0; i < v.size(); ++i) r.push_back(num(v[i]));
  return r;
}

Row with(Row head, const Row& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

Row names(const std::string& prefix, int count) {
  Row r;
  for (int i = 0; i < count; ++i) r.push_back(prefix + std::to_string(i));
  return r;
}

const CellSet& target_component(const StageContext& ctx, const std::string& key = "target") {
  const auto& sets = ctx.input<std::vector<CellSet>>("components");
  const CellIndex cell = ctx.grid().lookup(normalized(ctx.p.vec(key)));
  const auto idx = component_containing(sets, cell);
  if (!idx) throw Error(ErrorCode::EmptySurvivorSet, "no chain control set contains the target cell " + std::to_string(cell));
  return sets[*idx];
}

int auto_p(const StageContext& ctx, const Vec& x, const PiecewiseConstantControl& u, long requested) {
  if (requested >= 0) {
    if (requested > ctx.sys.projective_dimension()) throw Error(ErrorCode::InvalidArgument, "plus_dimension exceeds d");
    return static_cast<int>(requested);
  }
  const ProjectiveOptions po;
  return auto_plus_dimension(finite_time_exponents(ctx.sys, ProjectivePoint(x), u, po), po.separation_threshold);
}

FiberOptions fiber_options(const Params& p, double step = 1.0) {
  FiberOptions f;
  f.horizon = p.num("fiber_horizon");
  f.step = step;
  return f;
}

void check_positive(const Params& p, std::initializer_list<const char*> keys) {
  for (const char* k : keys) p.require_positive(k);
}

std::vector<Analysis> build_analyses() {
  std::vector<Analysis> a;

  a.push_back({{"simulate", {}, {}, {"trajectory"}, false, "projective trajectory of a point under a constant control"},
               {{"point", Kind::Point, ""}, {"control", Kind::Control, ""}, {"horizon", Kind::Number, "10"},
                {"sample_step", Kind::Number, "0.5"}},
               false,
               [](const Params& p) { check_positive(p, {"horizon", "sample_step"}); },
               [](StageContext& ctx) {
                 const auto u = PiecewiseConstantControl::constant(ctx.p.vec("control"));
                 const ProjectivePoint x(ctx.p.vec("point"));
                 const double dt = ctx.p.num("sample_step");
                 const int count = static_cast<int>(ctx.p.num("horizon") / dt + 1e-9);
                 std::vector<Row> rows;
                 std::vector<Vec> traj;
                 for (int k = 0; k <= count; ++k) {
                   const Vec y = projective_flow(ctx.sys, x, u, k * dt).representative();
                   rows.push_back(with({num(k * dt)}, coords(y)));
                   traj.push_back(y);
                 }
                 ctx.csv("trajectory.csv", with({"t"}, names("x", ctx.sys.ambient_dimension())), rows);
                 ctx.output("trajectory", traj);
               }});

  a.push_back({{"chain-sets", {}, {}, {"graph", "components"}, false,
                "transition graph on the grid and its nontrivial strongly connected components"},
               {{"controls_per_axis", Kind::Integer, "5"}, {"samples_per_axis", Kind::Integer, "3"},
                {"step", Kind::Number, "1"}, {"splitting_window", Kind::Number, "20"},
                {"separation_threshold", Kind::Number, "0.05"}},
               true,
               [](const Params& p) {
                 check_positive(p, {"controls_per_axis", "samples_per_axis", "step", "splitting_window",
                                    "separation_threshold"});
               },
               [](StageContext& ctx) {
                 const auto& grid = ctx.grid();
                 GraphOptions go;
                 go.step = ctx.p.num("step");
                 go.samples_per_axis = static_cast<int>(ctx.p.integer("samples_per_axis"));
                 go.splitting = {0.5, ctx.p.num("separation_threshold"), ctx.p.num("splitting_window")};
                 go.threads = ctx.threads;
                 const auto controls = ctx.sys.range().lattice(static_cast<int>(ctx.p.integer("controls_per_axis")));
                 auto g = build_transition_graph(ctx.sys, grid, controls, go);
                 auto sets = chain_control_sets(g);
                 std::vector<Row> rows;
                 for (std::size_t c = 0; c < grid.size(); ++c) {
                   const auto cell = static_cast<CellIndex>(c);
                   rows.push_back(with(with({num(c)}, coords(grid.center(cell))), {num(grid.volume(cell))}));
                 }
                 ctx.csv("cells.csv", with(with({"cell_id"}, names("c", ctx.sys.ambient_dimension())), {"volume"}), rows);
                 rows.clear();
                 for (std::size_t k = 0; k < controls.size(); ++k) rows.push_back(with({num(k)}, coords(controls[k])));
                 ctx.csv("controls.csv", with({"control_id"}, names("u", ctx.sys.control_dimension())), rows);
                 rows.clear();
                 for (const Edge& e : g.edges) rows.push_back({num(e.src), num(e.dst), num(e.control), num(e.weight)});
                 ctx.csv("edges.csv", {"src", "dst", "control_id", "weight"}, rows);
                 rows.clear();
                 for (std::size_t i = 0; i < sets.size(); ++i)
                   for (CellIndex c : sets[i]) rows.push_back({num(i), num(c)});
                 ctx.csv("components.csv", {"component_id", "cell_id"}, rows);
                 ctx.output("graph", std::move(g));
                 ctx.output("components", std::move(sets));
               }});

  a.push_back({{"splitting", {}, {}, {"splitting"}, false, "finite-time exponents and the unstable splitting at a point"},
               {{"point", Kind::Point, ""}, {"control", Kind::Control, ""}, {"plus_dimension", Kind::Integer, "-1"},
                {"window", Kind::Number, "0"}, {"separation_threshold", Kind::Number, "0.05"}},
               false,
               [](const Params& p) { check_positive(p, {"separation_threshold"}); },
               [](StageContext& ctx) {
                 const auto u = PiecewiseConstantControl::constant(ctx.p.vec("control"));
                 const ProjectivePoint x(ctx.p.vec("point"));
                 const ProjectiveOptions po{0.5, ctx.p.num("separation_threshold"), ctx.p.num("window")};
                 const auto exps = finite_time_exponents(ctx.sys, x, u, po);
                 const long req = ctx.p.integer("plus_dimension");
                 const int p = req >= 0 ? static_cast<int>(req) : auto_plus_dimension(exps, po.separation_threshold);
                 const auto est = estimate_splitting(ctx.sys, x, u, p, po);
                 std::vector<Row> rows;
                 for (std::size_t i = 0; i < est.exponents.size(); ++i) rows.push_back({"exponent", num(i), num(est.exponents[i])});
                 rows.push_back({"plus_dimension", "0", num(p)});
                 rows.push_back({"separation_rate", "0", num(est.separation_rate)});
                 rows.push_back({"window", "0", num(est.window)});
                 for (int k = 0; k < est.plus.dimension(); ++k)
                   for (int i = 0; i < est.plus.basis.rows(); ++i)
                     rows.push_back({"plus_basis_" + std::to_string(k), num(i), num(est.plus.basis(i, k))});
                 ctx.csv("splitting.csv", {"quantity", "index", "value"}, rows);
                 ctx.output("splitting", est);
               }});

  a.push_back({{"escape-rate", {"components"}, {}, {"escape"}, false,
                "volume of points staying near the fibers of a chain control set"},
               {{"target", Kind::Point, "", true}, {"control", Kind::Control, ""}, {"epsilon", Kind::Number, "0.1"},
                {"n_max", Kind::Integer, "40"}, {"step", Kind::Number, "1"}, {"fiber_horizon", Kind::Number, "20"}},
               true,
               [](const Params& p) { check_positive(p, {"epsilon", "n_max", "step"}); },
               [](StageContext& ctx) {
                 const CellSet& q = target_component(ctx);
                 const auto u = PiecewiseConstantControl::constant(ctx.p.vec("control"));
                 const double step = ctx.p.num("step");
                 const CellSet fiber = fiber_estimate(ctx.sys, ctx.grid(), q, u, fiber_options(ctx.p, step));
                 EscapeOptions eo;
                 eo.epsilon = ctx.p.num("epsilon");
                 eo.n_max = static_cast<int>(ctx.p.integer("n_max"));
                 eo.step = step;
                 auto tr = escape_rate_trace(ctx.sys, ctx.grid(), constant_fiber(fiber), u, eo);
                 std::vector<Row> rows;
                 for (std::size_t i = 0; i < tr.rate.size(); ++i)
                   rows.push_back({num(tr.log_volume.horizons[i]), num(tr.log_volume.values[i]), num(tr.rate[i])});
                 ctx.csv("escape_trace.csv", {"n", "v_n", "rate"}, rows);
                 ctx.output("escape", std::move(tr));
               }});

  a.push_back({{"bowen-volume", {}, {}, {"bowen"}, true, "Monte Carlo volumes of Bowen balls against log J+"},
               {{"point", Kind::Point, ""}, {"control", Kind::Control, ""}, {"delta", Kind::Number, "0.1"},
                {"n_max", Kind::Integer, "25"}, {"samples", Kind::Integer, "100000"}, {"step", Kind::Number, "1"},
                {"plus_dimension", Kind::Integer, "-1"}},
               false,
               [](const Params& p) { check_positive(p, {"delta", "n_max", "samples", "step"}); },
               [](StageContext& ctx) {
                 if (ctx.sys.projective_dimension() > 2)
                   throw Error(ErrorCode::UnsupportedDimension, "Bowen volumes need a 2x2 or 3x3 system");
                 const auto u = PiecewiseConstantControl::constant(ctx.p.vec("control"));
                 const ProjectivePoint x(ctx.p.vec("point"));
                 BowenOptions bo;
                 bo.delta = ctx.p.num("delta");
                 bo.n_max = static_cast<int>(ctx.p.integer("n_max"));
                 bo.samples = static_cast<std::size_t>(ctx.p.integer("samples"));
                 bo.step = ctx.p.num("step");
                 bo.seed = ctx.seed;
                 bo.threads = ctx.threads;
                 const auto levels = bowen_ball_volumes(ctx.sys, x, u, bo);
                 const int p = auto_p(ctx, x.representative(), u, ctx.p.integer("plus_dimension"));
                 std::vector<double> lj(levels.size(), 0.0);
                 if (p > 0) lj = log_unstable_series(ctx.sys, plus_frame(ctx.sys, x, u, p), u, bo.n_max, bo.step);
                 std::vector<Row> rows;
                 for (std::size_t i = 0; i < levels.size(); ++i) {
                   const auto& l = levels[i];
                   rows.push_back({num(l.n), num(l.log_volume), num(l.log_ci_low), num(l.log_ci_high),
                                   l.upper_only ? "1" : "0", num(lj[i])});
                 }
                 ctx.csv("bowen.csv", {"n", "log_volume", "log_ci_low", "log_ci_high", "upper_only", "log_unstable"}, rows);
                 // least-squares slope of -log vol against log J+ over the later levels
                 const std::size_t from = std::min<std::size_t>(4, levels.size() - 1);
                 double mx = 0, my = 0, sxy = 0, sxx = 0;
                 const double cnt = static_cast<double>(levels.size() - from);
                 for (std::size_t i = from; i < levels.size(); ++i) {
                   mx += lj[i] / cnt;
                   my += -levels[i].log_volume / cnt;
                 }
                 for (std::size_t i = from; i < levels.size(); ++i) {
                   sxy += (lj[i] - mx) * (-levels[i].log_volume - my);
                   sxx += (lj[i] - mx) * (lj[i] - mx);
                 }
                 ctx.csv("bowen_fit.csv", {"quantity", "value"},
                         {{"n_from", num(static_cast<int>(from) + 1)},
                          {"n_to", num(levels.size())},
                          {"plus_dimension", num(p)},
                          {"slope", num(sxx > 0 ? sxy / sxx : std::numeric_limits<double>::quiet_NaN())}});
                 ctx.output("bowen", levels);
               }});

  a.push_back({{"pressure", {"components"}, {}, {"pressure"}, false,
                "log sum of inverse unstable determinants over separated survivors"},
               {{"target", Kind::Point, "", true}, {"control", Kind::Control, ""}, {"delta", Kind::Number, "0.1"},
                {"epsilon", Kind::Number, "0.1"}, {"horizons", Kind::IntegerList, "10 20 30"},
                {"step", Kind::Number, "1"}, {"plus_dimension", Kind::Integer, "-1"},
                {"fiber_horizon", Kind::Number, "20"}},
               true,
               [](const Params& p) { check_positive(p, {"delta", "epsilon", "step"}); },
               [](StageContext& ctx) {
                 const CellSet& q = target_component(ctx);
                 const auto u = PiecewiseConstantControl::constant(ctx.p.vec("control"));
                 const double step = ctx.p.num("step");
                 const CellSet fiber = fiber_estimate(ctx.sys, ctx.grid(), q, u, fiber_options(ctx.p, step));
                 PressureOptions po;
                 po.delta = ctx.p.num("delta");
                 po.escape.epsilon = ctx.p.num("epsilon");
                 po.escape.step = step;
                 po.plus_dimension = auto_p(ctx, ctx.grid().center(fiber.front()), u, ctx.p.integer("plus_dimension"));
                 std::vector<PressureValue> values;
                 std::vector<Row> rows;
                 for (long n : ctx.p.integers("horizons")) {
                   auto pv = pressure_sum(ctx.sys, ctx.grid(), constant_fiber(fiber), u, static_cast<int>(n), po);
                   rows.push_back({num(pv.n), num(pv.value), num(pv.value / (pv.n * step)), num(pv.cardinality),
                                   num(pv.candidates)});
                   values.push_back(std::move(pv));
                 }
                 ctx.csv("pressure.csv", {"n", "w_n", "rate", "cardinality", "candidates"}, rows);
                 ctx.output("pressure", std::move(values));
               }});

  a.push_back({{"lower-bound", {"graph", "components"}, {}, {"lower"}, false,
                "minimum mean cycle of log J+ minus the fiber entropy surrogate"},
               {{"target", Kind::Point, "", true}, {"probe_controls", Kind::ControlList, ""},
                {"entropy_horizon", Kind::Integer, "60"}, {"entropy_delta", Kind::Number, "0.1"},
                {"fiber_horizon", Kind::Number, "20"}},
               true,
               [](const Params& p) {
                 check_positive(p, {"entropy_delta", "fiber_horizon"});
                 if (p.integer("entropy_horizon") < 2) invalid("stage 'lower-bound', key 'entropy_horizon': must be at least 2");
               },
               [](StageContext& ctx) {
                 const CellSet& q = target_component(ctx);
                 const auto& g = ctx.input<TransitionGraph>("graph");
                 std::vector<ProbedFiber> fibers;
                 for (const Vec& v : ctx.p.controls("probe_controls")) {
                   const auto u = PiecewiseConstantControl::constant(v);
                   fibers.push_back({u, fiber_estimate(ctx.sys, ctx.grid(), q, u, fiber_options(ctx.p, g.step))});
                 }
                 ReportParams rp;
                 rp.entropy_horizon = static_cast<int>(ctx.p.integer("entropy_horizon"));
                 rp.entropy_delta = ctx.p.num("entropy_delta");
                 rp.entropy_step = g.step;
                 auto r = lower_bound_report(ctx.sys, ctx.grid(), g, q, fibers, rp);
                 ctx.csv("lower_bound.csv", {"quantity", "value"},
                         {{"lower_bound", num(r.lower_bound)},
                          {"mean_log_unstable", num(r.mean_log_unstable)},
                          {"fiber_entropy", num(r.fiber_entropy)},
                          {"cycle_length", num(r.certificate.cells.size())},
                          {"component_cells", num(q.size())}});
                 std::vector<Row> rows;
                 for (std::size_t i = 0; i < r.certificate.cells.size(); ++i)
                   rows.push_back({num(i), num(r.certificate.cells[i]), num(r.certificate.controls[i]),
                                   num(r.certificate.weights[i])});
                 ctx.csv("cycle.csv", {"position", "cell_id", "control_id", "weight"}, rows);
                 rows.clear();
                 for (std::size_t i = 0; i < r.entropies.size(); ++i) {
                   const auto& e = r.entropies[i];
                   rows.push_back(with(with({num(i)}, coords(ctx.p.controls("probe_controls")[i])),
                                       {num(fibers[i].fiber.size()), num(e.count_n), num(e.count_m), num(e.rate),
                                        num(e.naive_rate)}));
                 }
                 ctx.csv("fiber_entropy.csv",
                         with(with({"probe"}, names("u", ctx.sys.control_dimension())),
                              {"fiber_cells", "count_n", "count_m", "rate", "naive_rate"}),
                         rows);
                 ctx.output("lower", std::move(r));
               }});

  a.push_back({{"upper-bound", {"components"}, {}, {"upper"}, false,
                "set-cover count of controls keeping the chain control set near itself"},
               {{"target", Kind::Point, "", true}, {"horizon", Kind::Number, "4"},
                {"values_per_axis", Kind::Integer, "5"}, {"switch_step", Kind::Number, "1"},
                {"budget", Kind::Integer, "625"}, {"samples_per_axis", Kind::Integer, "3"},
                {"step", Kind::Number, "1"}, {"neighborhood", Kind::Number, "0"}},
               true,
               [](const Params& p) {
                 check_positive(p, {"horizon", "values_per_axis", "switch_step", "budget", "samples_per_axis", "step"});
               },
               [](StageContext& ctx) {
                 const CellSet& q = target_component(ctx);
                 UpperOptions uo;
                 uo.horizon = ctx.p.num("horizon");
                 uo.step = ctx.p.num("step");
                 uo.neighborhood = ctx.p.num("neighborhood");
                 uo.samples_per_axis = static_cast<int>(ctx.p.integer("samples_per_axis"));
                 uo.threads = ctx.threads;
                 const auto family =
                     control_family(ctx.sys.range(), static_cast<int>(ctx.p.integer("values_per_axis")),
                                    ctx.p.num("switch_step"), uo.horizon, static_cast<std::size_t>(ctx.p.integer("budget")));
                 auto est = try_invariance_entropy_upper(ctx.sys, ctx.grid(), q, q, family, uo);
                 ctx.csv("upper_bound.csv", {"quantity", "value"},
                         {{"coverable", est.coverable ? "1" : "0"},
                          {"value", num(est.value)},
                          {"cover_size", num(est.cover_size)},
                          {"exact", est.exact ? "1" : "0"},
                          {"family_size", num(est.family_size)},
                          {"witness_cell", est.witness ? num(*est.witness) : "-1"}});
                 ctx.output("upper", UpperArtifact{std::move(est), uo.horizon});
               }});

  a.push_back({{"report", {"lower"}, {"upper"}, {"report"}, false, "lower and upper estimates side by side"},
               {},
               false,
               [](const Params&) {},
               [](StageContext& ctx) {
                 BoundReport r = ctx.input<BoundReport>("lower");
                 double slack = 0.0;
                 if (ctx.has("upper")) {
                   const auto& up = ctx.input<UpperArtifact>("upper");
                   r.upper_available = true;
                   r.upper_estimate = up.estimate.value;
                   slack = std::log(2.0) / up.horizon;
                   r.sandwich_ok = r.lower_bound <= r.upper_estimate + slack;
                 }
                 ctx.csv("report.csv", {"quantity", "value"},
                         {{"lower_bound", num(r.lower_bound)},
                          {"mean_log_unstable", num(r.mean_log_unstable)},
                          {"fiber_entropy", num(r.fiber_entropy)},
                          {"entropy_term", "surrogate-not-certified"},
                          {"upper_available", r.upper_available ? "1" : "0"},
                          {"upper_estimate", num(r.upper_estimate)},
                          {"sandwich_slack", num(slack)},
                          {"sandwich_ok", r.sandwich_ok ? "1" : "0"}});
                 ctx.output("report", std::move(r));
               }});
  return a;
}

const std::vector<Analysis>& registry() {
  static const std::vector<Analysis> a = build_analyses();
  return a;
}

const Analysis* find_analysis(const std::string& name) {
  for (const auto& a : registry())
    if (a.info.name == name) return &a;
  return nullptr;
}

std::uint64_t effective_seed(const ExperimentConfig& cfg, const RunOverrides& o) {
  return o.seed ? *o.seed : cfg.seed.value_or(0);
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

const std::vector<AnalysisInfo>& analyses() {
  static const std::vector<AnalysisInfo> infos = [] {
    std::vector<AnalysisInfo> v;
    for (const auto& a : registry()) v.push_back(a.info);
    return v;
  }();
  return infos;
}

void validate_experiment(const ExperimentConfig& cfg, const RunOverrides& overrides) {
  std::set<std::string> available;
  std::set<std::string> listed;
  bool stochastic = false;
  for (const auto& st : cfg.stages) {
    const Analysis* a = find_analysis(st.name);
    if (!a) invalid("unknown analysis '" + st.name + "' in [pipeline]");
    if (!listed.insert(st.name).second) invalid("analysis '" + st.name + "' listed twice");
    if (a->uses_grid && cfg.ambient_dimension() > 3)
      invalid("analysis '" + st.name + "' needs a grid, which exists only for 2x2 and 3x3 systems; matrix A0 is " +
              std::to_string(cfg.ambient_dimension()) + "x" + std::to_string(cfg.ambient_dimension()));
    for (const auto& r : a->info.requires_artifacts)
      if (!available.count(r))
        invalid("analysis '" + st.name + "' needs artifact '" + r + "' from an earlier stage");
    const Params p(st, a->keys, cfg);
    a->check(p);
    for (const auto& out : a->info.produces) available.insert(out);
    stochastic = stochastic || a->info.stochastic;
  }
  for (const auto& [name, kv] : cfg.sections)
    if (!listed.count(name)) invalid("section [" + name + "] does not match any analysis in the pipeline");
  if (stochastic && !cfg.seed && !overrides.seed) invalid("[run] seed is required for stochastic analyses");
  if (overrides.threads && *overrides.threads == 0) invalid("threads must be at least 1");
}

RunResult run_experiment(const ExperimentConfig& cfg, const RunOverrides& overrides, std::ostream& log) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  RunResult res;
  res.output_dir = overrides.output_dir ? fs::path(*overrides.output_dir) : fs::path(cfg.output_dir);
  const unsigned threads = overrides.threads.value_or(cfg.threads);
  const std::uint64_t seed = effective_seed(cfg, overrides);

  nlohmann::ordered_json manifest;
  manifest["config"] = {{"path", cfg.source}, {"sha256", sha256_hex(cfg.text)}};
  {
    nlohmann::ordered_json mats = nlohmann::ordered_json::array();
    for (const Mat& m : cfg.matrices) {
      std::vector<double> e;
      for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) e.push_back(m(i, j));
      mats.push_back(e);
    }
    manifest["inputs"] = {{"matrices", mats}, {"control_lo", cfg.control_lo}, {"control_hi", cfg.control_hi}};
  }
  if (cfg.seed || overrides.seed)
    manifest["seed"] = seed;
  else
    manifest["seed"] = nullptr;
  manifest["threads"] = threads;
  manifest["parameters"] = nlohmann::ordered_json::object();
  manifest["stages"] = nlohmann::ordered_json::array();

  const auto sys = cfg.system();
  std::optional<ProjectiveGrid> grid;
  bool need_grid = false;
  for (const auto& st : cfg.stages) need_grid = need_grid || find_analysis(st.name)->uses_grid;
  int resolution = cfg.resolution;
  if (need_grid) {
    const int d = sys.projective_dimension();
    if (resolution == 0) resolution = d == 1 ? 2048 : 95;
    manifest["inputs"]["grid"] = {{"dimension", d}, {"resolution", resolution}};
  }

  std::map<std::string, std::any> store;
  auto finish = [&](const std::string& status) {
    manifest["status"] = status;
    manifest["wall_seconds"] = std::chrono::duration<double>(clock::now() - start).count();
    nlohmann::ordered_json files = nlohmann::ordered_json::array();
    for (const auto& f : res.files) {
      std::ifstream in(res.output_dir / f, std::ios::binary);
      std::ostringstream bytes;
      bytes << in.rdbuf();
      files.push_back({{"path", f.generic_string()}, {"bytes", bytes.str().size()}, {"sha256", sha256_hex(bytes.str())}});
    }
    manifest["files"] = files;
    std::ofstream out(res.output_dir / "manifest.json", std::ios::binary | std::ios::trunc);
    out << manifest.dump(2) << '\n';
    res.files.emplace_back("manifest.json");
  };

  try {
    fs::create_directories(res.output_dir);
  } catch (const std::exception& e) {
    res.exit_code = 3;
    res.failed_stage = "output";
    res.message = std::string("cannot create output directory: ") + e.what();
    return res;
  }

  for (const auto& st : cfg.stages) {
    const Analysis& a = *find_analysis(st.name);
    const auto t0 = clock::now();
    const Params p(st, a.keys, cfg);
    manifest["parameters"][st.name] = p.resolved();
    nlohmann::ordered_json record = {{"name", st.name}};
    try {
      if (a.uses_grid && !grid) grid = ProjectiveGrid::build(sys.projective_dimension(), resolution);
      StageContext ctx{a, cfg, sys, grid ? &*grid : nullptr, p, threads, seed, res.output_dir, store, {}};
      a.run(ctx);
      for (const auto& f : ctx.written) res.files.push_back(f);
      std::vector<std::string> written;
      for (const auto& f : ctx.written) written.push_back(f.generic_string());
      record["files"] = written;
      record["status"] = "ok";
    } catch (const std::exception& e) {
      record["status"] = "failed";
      record["error"] = e.what();
      record["wall_seconds"] = std::chrono::duration<double>(clock::now() - t0).count();
      manifest["stages"].push_back(record);
      res.exit_code = 3;
      res.failed_stage = st.name;
      res.message = "stage '" + st.name + "' failed: " + e.what();
      finish("failed");
      return res;
    }
    const double secs = std::chrono::duration<double>(clock::now() - t0).count();
    record["wall_seconds"] = secs;
    manifest["stages"].push_back(record);
    char took[32];
    std::snprintf(took, sizeof took, "%.3f", secs);
    log << "stage " << st.name << ": ok (" << took << " s)\n";
  }
  finish("ok");
  return res;
}

RunResult run_config_file(const fs::path& path, const RunOverrides& overrides, std::ostream& log, std::ostream& err) {
  ExperimentConfig cfg;
  try {
    cfg = load_config(path);
    validate_experiment(cfg, overrides);
  } catch (const std::exception& e) {
    RunResult r;
    r.exit_code = 2;
    r.message = std::string("invalid config: ") + e.what();
    err << r.message << '\n';
    return r;
  }
  RunResult r = run_experiment(cfg, overrides, log);
  if (r.exit_code != 0) err << r.message << '\n';
  return r;
}

}  // namespace hinv::cli
