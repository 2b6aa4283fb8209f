#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "gridil/case14.hpp"
#include "gridil/powerflow.hpp"
#include "oracles.hpp"

using namespace gridil;

namespace {

GridSpec two_bus_spec(double limit = 50.0) {
  GridSpec spec;
  spec.n_substations = 2;
  spec.generators = {{0, 0, 100.0, GeneratorKind::thermal}};
  spec.loads = {{0, 1}};
  spec.lines = {{0, 0, 1, 0.1, limit}};
  return spec;
}

// Random topology built from sane substation splits: both busbars keep at
// least one line endpoint, so buses stay tied into the network.
TopologyVector random_topology(const GridSpec& spec, std::mt19937_64& rng) {
  TopologyVector topo(spec.n_objects(), 1);
  std::uniform_int_distribution<int> n_splits(1, 3);
  for (int k = n_splits(rng); k > 0; --k) {
    int s = static_cast<int>(rng() % spec.n_substations);
    std::vector<int> eps, rest;
    for (int o : spec.substation_objects(s))
      (spec.is_endpoint_object(o) ? eps : rest).push_back(o);
    if (eps.size() < 2) continue;
    int to_move = 1 + static_cast<int>(rng() % (eps.size() - 1));
    for (int i = 0; i < to_move; ++i) topo[eps[i]] = 2;
    for (int o : rest) topo[o] = rng() % 2 ? 2 : 1;
  }
  return topo;
}

Injections random_injections(const GridSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Injections inj;
  for (const auto& g : spec.generators) inj.gen_mw.push_back(u(rng) * g.p_max_mw);
  for (size_t i = 0; i < spec.loads.size(); ++i)
    inj.load_mw.push_back(u(rng) * 1.5 * case14::kLoadBaseMw[i]);
  return inj;
}

}  // namespace

TEST_CASE("two-bus toy carries the full transfer") {
  GridSpec spec = two_bus_spec();
  Injections inj{{50.0}, {50.0}};
  TopologyVector topo = default_topology(spec, NetworkVariant::full());
  SolveResult res = solve_dc(build_electrical_graph(spec, topo, inj), spec);
  REQUIRE(res.ok());
  REQUIRE_THAT(res.solution.line_flow_mw[0], Catch::Matchers::WithinAbs(50.0, 1e-9));
  REQUIRE_THAT(max_loading(res.solution), Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("three-bus triangle splits 60/30/30") {
  GridSpec spec;
  spec.n_substations = 3;
  spec.generators = {{0, 0, 200.0, GeneratorKind::thermal}};
  spec.loads = {{0, 1}};
  spec.lines = {{0, 0, 1, 0.2, 100.0}, {1, 0, 2, 0.2, 100.0}, {2, 1, 2, 0.2, 100.0}};
  Injections inj{{90.0}, {90.0}};
  TopologyVector topo = default_topology(spec, NetworkVariant::full());
  SolveResult res = solve_dc(build_electrical_graph(spec, topo, inj), spec);
  REQUIRE(res.ok());
  // Hand oracle: reduced 2x2 system gives theta = (-0.12, -0.06), so the
  // direct line carries 60 MW and the detour 30 MW.
  REQUIRE_THAT(res.solution.line_flow_mw[0], Catch::Matchers::WithinAbs(60.0, 1e-9));
  REQUIRE_THAT(res.solution.line_flow_mw[1], Catch::Matchers::WithinAbs(30.0, 1e-9));
  REQUIRE_THAT(std::abs(res.solution.line_flow_mw[2]), Catch::Matchers::WithinAbs(30.0, 1e-9));
}

TEST_CASE("bus grouping") {
  GridSpec spec = build_default_spec();
  Injections inj = nominal_peak_injections(spec);

  SECTION("default topology forms exactly 14 buses") {
    TopologyVector topo = default_topology(spec, NetworkVariant::full());
    ElectricalGraph g = build_electrical_graph(spec, topo, inj);
    REQUIRE(g.n_buses() == 14);
  }

  SECTION("splitting one substation adds a bus") {
    TopologyVector topo = default_topology(spec, NetworkVariant::full());
    auto objs = spec.substation_objects(1);
    topo[objs.back()] = 2;
    topo[objs[objs.size() - 2]] = 2;
    ElectricalGraph g = build_electrical_graph(spec, topo, inj);
    REQUIRE(g.n_buses() == 15);
  }

  SECTION("branch follows its endpoint's busbar") {
    TopologyVector topo = default_topology(spec, NetworkVariant::full());
    int ep = spec.endpoint_object(0, LineEnd::from);  // line 0 at substation 0
    topo[ep] = 2;
    ElectricalGraph g = build_electrical_graph(spec, topo, inj);
    int bus = g.object_bus[ep];
    REQUIRE(g.buses[bus].busbar == 2);
    bool found = false;
    for (const auto& br : g.branches)
      if (br.line == 0) {
        found = true;
        REQUIRE((br.bus_from == bus || br.bus_to == bus));
      }
    REQUIRE(found);
  }
}

TEST_CASE("max_loading conventions") {
  FlowSolution sol;
  sol.rho = {0.3, 0.9, 0.5};
  sol.line_active = {1, 1, 1};
  sol.line_flow_mw = {0, 0, 0};
  REQUIRE(max_loading(sol) == 0.9);
  sol.line_active = {0, 0, 0};
  REQUIRE(max_loading(sol) == 0.0);
}

TEST_CASE("islanding and singularity") {
  GridSpec spec = build_default_spec();
  Injections inj = nominal_peak_injections(spec);

  SECTION("stranded load is an islanded grid") {
    GridSpec toy = two_bus_spec();
    TopologyVector topo = default_topology(toy, NetworkVariant::without_line(0));
    Injections want{{50.0}, {50.0}};
    SolveResult res = solve_dc(build_electrical_graph(toy, topo, want), toy);
    REQUIRE(res.error == SolveError::islanded_grid);
  }

  SECTION("zero-injection orphan bus is tolerated") {
    // Substation 7 is a passive dead-end tap behind line 18.
    TopologyVector topo = default_topology(spec, NetworkVariant::without_line(18));
    SolveResult res = solve_dc(build_electrical_graph(spec, topo, inj), spec);
    REQUIRE(res.ok());
    REQUIRE(res.solution.line_active[18] == 0);
    REQUIRE(res.solution.line_flow_mw[18] == 0.0);
  }

  SECTION("singular reduced system reported") {
    ElectricalGraph g;
    g.buses = {{0, 1, 0.0}, {1, 1, 10.0}};
    g.branches = {{0, 0, 1, 0.0}};  // degenerate susceptance
    g.object_bus = {};
    g.slack_bus = 0;
    GridSpec tiny = two_bus_spec();
    SolveResult res = solve_dc(g, tiny);
    REQUIRE(res.error == SolveError::singular_system);
  }
}

TEST_CASE("conservation holds on the default case") {
  GridSpec spec = build_default_spec();
  Injections inj = nominal_peak_injections(spec);
  TopologyVector topo = default_topology(spec, NetworkVariant::full());
  ElectricalGraph g = build_electrical_graph(spec, topo, inj);
  SolveResult res = solve_dc(g, spec);
  REQUIRE(res.ok());
  REQUIRE(conservation_residual_mw(g, res.solution) < 1e-8);
}

TEST_CASE("flows match the dense oracle on random states") {
  GridSpec spec = build_default_spec();
  std::mt19937_64 rng(2024);
  int compared = 0;
  for (int trial = 0; trial < 200 && compared < 100; ++trial) {
    TopologyVector topo = random_topology(spec, rng);
    Injections inj = random_injections(spec, rng);
    ElectricalGraph g = build_electrical_graph(spec, topo, inj);
    SolveResult res = solve_dc(g, spec);
    if (!res.ok()) continue;
    auto ref = oracle::dc_flows(g, spec);
    bool oracle_valid = true;
    for (double f : ref)
      if (!std::isfinite(f)) oracle_valid = false;
    if (!oracle_valid) continue;
    // Oracle assumes one component; cross-check via conservation first.
    if (conservation_residual_mw(g, res.solution) > 1e-8) FAIL("conservation violated");
    double worst = 0.0;
    for (size_t l = 0; l < ref.size(); ++l)
      worst = std::max(worst, std::abs(ref[l] - res.solution.line_flow_mw[l]));
    if (worst < 1e50) {  // oracle solvable
      REQUIRE(worst < 1e-6);
      compared++;
    }
  }
  REQUIRE(compared >= 100);
}

TEST_CASE("DC linearity: scaling injections scales flows") {
  GridSpec spec = build_default_spec();
  std::mt19937_64 rng(99);
  TopologyVector topo = default_topology(spec, NetworkVariant::full());
  for (double c : {0.5, 2.0, -1.0, 3.7}) {
    Injections inj = random_injections(spec, rng);
    Injections scaled = inj;
    for (auto& v : scaled.gen_mw) v *= c;
    for (auto& v : scaled.load_mw) v *= c;
    SolveResult a = solve_dc(build_electrical_graph(spec, topo, inj), spec);
    SolveResult b = solve_dc(build_electrical_graph(spec, topo, scaled), spec);
    REQUIRE(a.ok());
    REQUIRE(b.ok());
    for (size_t l = 0; l < spec.lines.size(); ++l) {
      double want = c * a.solution.line_flow_mw[l];
      double got = b.solution.line_flow_mw[l];
      REQUIRE_THAT(got, Catch::Matchers::WithinRel(want, 1e-10) ||
                            Catch::Matchers::WithinAbs(want, 1e-12));
    }
  }
}

TEST_CASE("bus identity is label-independent") {
  GridSpec spec = build_default_spec();
  Injections inj = nominal_peak_injections(spec);
  TopologyVector a = default_topology(spec, NetworkVariant::full());
  TopologyVector b = a;
  for (int o : spec.substation_objects(3)) b[o] = 2;  // same grouping, other label
  SolveResult ra = solve_dc(build_electrical_graph(spec, a, inj), spec);
  SolveResult rb = solve_dc(build_electrical_graph(spec, b, inj), spec);
  REQUIRE(ra.ok());
  REQUIRE(rb.ok());
  for (size_t l = 0; l < spec.lines.size(); ++l)
    REQUIRE(ra.solution.line_flow_mw[l] == rb.solution.line_flow_mw[l]);
}

TEST_CASE("thermal limits follow the calibration rule") {
  GridSpec bare = build_case14_without_limits();
  GridSpec spec = build_default_spec();
  Injections inj = nominal_peak_injections(bare);
  TopologyVector topo = default_topology(bare, NetworkVariant::full());
  SolveResult res = solve_dc(build_electrical_graph(bare, topo, inj), bare);
  REQUIRE(res.ok());
  for (const auto& ln : spec.lines) {
    double margin = ln.id <= 14 ? 1.3 : 1.0;
    double want = std::max(5.0, margin * std::abs(res.solution.line_flow_mw[ln.id]));
    REQUIRE_THAT(ln.thermal_limit_mw, Catch::Matchers::WithinRel(want, 1e-12));
  }
}
