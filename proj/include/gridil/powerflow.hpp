#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "gridil/grid.hpp"

namespace gridil {

inline constexpr double kBaseMva = 100.0;
inline constexpr double kPivotTolerance = 1e-12;

/// Electrical bus graph induced by a busbar assignment: one bus per
/// (substation, busbar) pair that hosts at least one connected object.
struct ElectricalGraph {
  struct Bus {
    int substation;
    int busbar;
    double injection_mw = 0.0;
  };
  struct Branch {
    int line;
    int bus_from;
    int bus_to;
    double susceptance;  // 1 / reactance, per unit
  };

  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<int> object_bus;  // per object; -1 for disconnected objects
  int slack_bus = -1;

  int n_buses() const { return static_cast<int>(buses.size()); }
};

enum class SolveError { none, islanded_grid, singular_system };

struct FlowSolution {
  std::vector<double> theta;         // per bus, radians; slack and dropped buses 0
  std::vector<double> line_flow_mw;  // per line id; 0 when disabled
  std::vector<uint8_t> line_active;  // per line id
  std::vector<double> rho;           // |flow| / thermal limit; 0 when disabled
};

struct SolveResult {
  SolveError error = SolveError::none;
  FlowSolution solution;

  bool ok() const { return error == SolveError::none; }
};

inline ElectricalGraph build_electrical_graph(const GridSpec& spec,
                                              const TopologyVector& topology,
                                              const Injections& inj) {
  ElectricalGraph g;
  g.object_bus.assign(spec.n_objects(), -1);

  // Bus lookup per (substation, busbar). Busbar values are 1 or 2.
  std::vector<int> bus_at(2 * spec.n_substations, -1);
  auto bus_for = [&](int substation, int busbar) {
    int key = 2 * substation + (busbar - 1);
    if (bus_at[key] == -1) {
      bus_at[key] = g.n_buses();
      g.buses.push_back({substation, busbar, 0.0});
    }
    return bus_at[key];
  };

  for (int o = 0; o < spec.n_objects(); ++o) {
    if (!topology.connected(o)) continue;
    g.object_bus[o] = bus_for(spec.object_substation(o), topology[o]);
  }
  for (const auto& gen : spec.generators) {
    int b = g.object_bus[spec.generator_object(gen.id)];
    if (b >= 0) g.buses[b].injection_mw += inj.gen_mw[gen.id];
  }
  for (const auto& ld : spec.loads) {
    int b = g.object_bus[spec.load_object(ld.id)];
    if (b >= 0) g.buses[b].injection_mw -= inj.load_mw[ld.id];
  }
  for (const auto& ln : spec.lines) {
    int bf = g.object_bus[spec.endpoint_object(ln.id, LineEnd::from)];
    int bt = g.object_bus[spec.endpoint_object(ln.id, LineEnd::to)];
    if (bf < 0 || bt < 0) continue;
    g.branches.push_back({ln.id, bf, bt, 1.0 / ln.reactance_pu});
  }

  // Slack: bus hosting the largest-capacity connected generator.
  double best = -1.0;
  for (const auto& gen : spec.generators) {
    int b = g.object_bus[spec.generator_object(gen.id)];
    if (b >= 0 && gen.p_max_mw > best) {
      best = gen.p_max_mw;
      g.slack_bus = b;
    }
  }
  return g;
}

/// Solve B theta = P over the slack's connected component. Orphan buses
/// with zero injection are dropped; any stranded injection is an islanding
/// failure.
inline SolveResult solve_dc(const ElectricalGraph& g, const GridSpec& spec) {
  SolveResult res;
  const int nb = g.n_buses();
  const int nl = static_cast<int>(spec.lines.size());
  res.solution.theta.assign(nb, 0.0);
  res.solution.line_flow_mw.assign(nl, 0.0);
  res.solution.line_active.assign(nl, 0);
  res.solution.rho.assign(nl, 0.0);
  for (const auto& br : g.branches) res.solution.line_active[br.line] = 1;

  if (g.slack_bus < 0) {
    res.error = SolveError::islanded_grid;
    return res;
  }

  // Connected component of the slack bus.
  std::vector<uint8_t> in_comp(nb, 0);
  std::vector<std::vector<int>> adj(nb);
  for (int i = 0; i < static_cast<int>(g.branches.size()); ++i) {
    adj[g.branches[i].bus_from].push_back(i);
    adj[g.branches[i].bus_to].push_back(i);
  }
  std::vector<int> stack{g.slack_bus};
  in_comp[g.slack_bus] = 1;
  while (!stack.empty()) {
    int b = stack.back();
    stack.pop_back();
    for (int bi : adj[b]) {
      const auto& br = g.branches[bi];
      int other = br.bus_from == b ? br.bus_to : br.bus_from;
      if (!in_comp[other]) {
        in_comp[other] = 1;
        stack.push_back(other);
      }
    }
  }
  for (int b = 0; b < nb; ++b) {
    if (!in_comp[b] && g.buses[b].injection_mw != 0.0) {
      res.error = SolveError::islanded_grid;
      return res;
    }
  }

  // Reduced susceptance system over component buses, slack removed.
  std::vector<int> idx(nb, -1);
  int n_red = 0;
  for (int b = 0; b < nb; ++b)
    if (in_comp[b] && b != g.slack_bus) idx[b] = n_red++;

  if (n_red > 0) {
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(n_red, n_red);
    Eigen::VectorXd P = Eigen::VectorXd::Zero(n_red);
    for (const auto& br : g.branches) {
      int f = idx[br.bus_from], t = idx[br.bus_to];
      if (f >= 0) B(f, f) += br.susceptance;
      if (t >= 0) B(t, t) += br.susceptance;
      if (f >= 0 && t >= 0) {
        B(f, t) -= br.susceptance;
        B(t, f) -= br.susceptance;
      }
    }
    for (int b = 0; b < nb; ++b)
      if (idx[b] >= 0) P(idx[b]) = g.buses[b].injection_mw / kBaseMva;

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(B);
    double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
    if (!(min_pivot > kPivotTolerance)) {
      res.error = SolveError::singular_system;
      return res;
    }
    Eigen::VectorXd theta = lu.solve(P);
    for (int b = 0; b < nb; ++b)
      if (idx[b] >= 0) res.solution.theta[b] = theta(idx[b]);
  }

  for (const auto& br : g.branches) {
    double flow = br.susceptance *
                  (res.solution.theta[br.bus_from] - res.solution.theta[br.bus_to]) * kBaseMva;
    res.solution.line_flow_mw[br.line] = flow;
    double limit = spec.lines[br.line].thermal_limit_mw;
    res.solution.rho[br.line] = limit > 0 ? std::abs(flow) / limit : 0.0;
  }
  return res;
}

/// Max loading over enabled lines; 0 when nothing is enabled.
inline double max_loading(const FlowSolution& sol) {
  double m = 0.0;
  for (size_t l = 0; l < sol.rho.size(); ++l)
    if (sol.line_active[l]) m = std::max(m, sol.rho[l]);
  return m;
}

/// Largest per-bus conservation residual (MW) over non-slack component
/// buses; diagnostic used by tests and the acceptance suite.
inline double conservation_residual_mw(const ElectricalGraph& g, const FlowSolution& sol) {
  std::vector<double> net(g.n_buses(), 0.0);
  std::vector<uint8_t> touched(g.n_buses(), 0);
  for (const auto& br : g.branches) {
    net[br.bus_from] += sol.line_flow_mw[br.line];
    net[br.bus_to] -= sol.line_flow_mw[br.line];
    touched[br.bus_from] = touched[br.bus_to] = 1;
  }
  double worst = 0.0;
  for (int b = 0; b < g.n_buses(); ++b) {
    if (b == g.slack_bus || !touched[b]) continue;
    worst = std::max(worst, std::abs(g.buses[b].injection_mw - net[b]));
  }
  return worst;
}

}  // namespace gridil
