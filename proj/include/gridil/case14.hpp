#pragma once

#include <array>

#include "gridil/grid.hpp"
#include "gridil/powerflow.hpp"

namespace gridil {

// The desk grid is shaped after the IEEE 14-bus case: substations 0-4 form
// the transmission side, 5-13 the distribution side, and lines 15-19 are the
// transformers that tie the two together. Branch reactances come from the
// canonical case data.

struct ThermalLimitOptions {
  double transmission_margin = 1.3;  // lines 0..14
  double transformer_margin = 1.0;   // lines 15..19
  double floor_mw = 5.0;
};

namespace case14 {

// Mean load levels (MW), one per load, from the canonical case.
inline constexpr std::array<double, 11> kLoadBaseMw = {
    21.7, 94.2, 47.8, 7.6, 11.2, 29.5, 9.0, 3.5, 6.1, 13.5, 14.9};

// Nominal operating point used to calibrate thermal limits: loads at their
// diurnal peak, renewables at an evening-peak level, dispatchable units
// covering the residual in proportion to capacity.
inline constexpr double kPeakLoadFactor = 1.30;
inline constexpr double kNominalSolarFraction = 0.15;
inline constexpr double kNominalWindFraction = 0.40;

}  // namespace case14

/// Split `residual_mw` across dispatchable (thermal/nuclear) units in
/// proportion to capacity, clipped to [0, p_max].
inline void dispatch_residual(const GridSpec& spec, double residual_mw,
                              std::vector<double>& gen_mw) {
  double cap = 0.0;
  for (const auto& g : spec.generators)
    if (g.kind == GeneratorKind::thermal || g.kind == GeneratorKind::nuclear)
      cap += g.p_max_mw;
  if (cap <= 0) return;
  double want = std::max(0.0, residual_mw);
  for (const auto& g : spec.generators) {
    if (g.kind != GeneratorKind::thermal && g.kind != GeneratorKind::nuclear) continue;
    gen_mw[g.id] = std::clamp(want * g.p_max_mw / cap, 0.0, g.p_max_mw);
  }
}

inline GridSpec build_case14_without_limits() {
  GridSpec spec;
  spec.n_substations = 14;
  // The fifth unit sits at substation 8 rather than the canonical bus-8
  // spot (substation 7): that substation hangs radially off transformer 18,
  // where a unit-margin limit would pin the line at its trip point.
  spec.generators = {
      {0, 0, 250.0, GeneratorKind::thermal},
      {1, 1, 180.0, GeneratorKind::nuclear},
      {2, 2, 120.0, GeneratorKind::wind},
      {3, 5, 90.0, GeneratorKind::solar},
      {4, 8, 120.0, GeneratorKind::thermal},
  };
  spec.loads = {
      {0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 8},
      {6, 9}, {7, 10}, {8, 11}, {9, 12}, {10, 13},
  };
  // Transmission and distribution branches first, the five transformers last.
  spec.lines = {
      {0, 0, 1, 0.05917, 0.0},   {1, 0, 4, 0.22304, 0.0},  {2, 1, 2, 0.19797, 0.0},
      {3, 1, 3, 0.17632, 0.0},   {4, 1, 4, 0.17388, 0.0},  {5, 2, 3, 0.17103, 0.0},
      {6, 3, 4, 0.04211, 0.0},   {7, 5, 10, 0.19890, 0.0}, {8, 5, 11, 0.25581, 0.0},
      {9, 5, 12, 0.13027, 0.0},  {10, 8, 9, 0.08450, 0.0}, {11, 8, 13, 0.27038, 0.0},
      {12, 9, 10, 0.19207, 0.0}, {13, 11, 12, 0.19988, 0.0}, {14, 12, 13, 0.34802, 0.0},
      {15, 3, 6, 0.20912, 0.0},  {16, 3, 8, 0.55618, 0.0}, {17, 4, 5, 0.25202, 0.0},
      {18, 6, 7, 0.17615, 0.0},  {19, 6, 8, 0.11001, 0.0},
  };
  return spec;
}

/// Deterministic peak-hour injections used to calibrate thermal limits and
/// to anchor chronics synthesis.
inline Injections nominal_peak_injections(const GridSpec& spec) {
  Injections inj;
  inj.gen_mw.assign(spec.generators.size(), 0.0);
  inj.load_mw.assign(spec.loads.size(), 0.0);
  double total_load = 0.0;
  for (size_t i = 0; i < spec.loads.size(); ++i) {
    inj.load_mw[i] = case14::kLoadBaseMw[i] * case14::kPeakLoadFactor;
    total_load += inj.load_mw[i];
  }
  double renewables = 0.0;
  for (const auto& g : spec.generators) {
    if (g.kind == GeneratorKind::solar)
      inj.gen_mw[g.id] = case14::kNominalSolarFraction * g.p_max_mw;
    else if (g.kind == GeneratorKind::wind)
      inj.gen_mw[g.id] = case14::kNominalWindFraction * g.p_max_mw;
    renewables += inj.gen_mw[g.id];
  }
  dispatch_residual(spec, total_load - renewables, inj.gen_mw);
  return inj;
}

/// Limits derive from the nominal-peak DC flows: margin times |flow| per line
/// class, floored. The distribution-side transformers end up the most
/// constrained, matching the operating intent of the case.
inline std::vector<double> compute_thermal_limits(const GridSpec& bare,
                                                  const ThermalLimitOptions& opt = {}) {
  Injections inj = nominal_peak_injections(bare);
  TopologyVector topo = default_topology(bare, NetworkVariant::full());
  SolveResult res = solve_dc(build_electrical_graph(bare, topo, inj), bare);
  if (!res.ok()) throw std::logic_error("nominal case14 flow failed to solve");
  std::vector<double> limits(bare.lines.size());
  for (const auto& ln : bare.lines) {
    double margin = ln.id <= 14 ? opt.transmission_margin : opt.transformer_margin;
    limits[ln.id] = std::max(opt.floor_mw, margin * std::abs(res.solution.line_flow_mw[ln.id]));
  }
  return limits;
}

/// The built-in 14-substation grid with calibrated thermal limits.
inline GridSpec build_default_spec(const ThermalLimitOptions& opt = {}) {
  GridSpec spec = build_case14_without_limits();
  std::vector<double> limits = compute_thermal_limits(spec, opt);
  for (auto& ln : spec.lines) ln.thermal_limit_mw = limits[ln.id];
  spec.validate();
  return spec;
}

}  // namespace gridil
