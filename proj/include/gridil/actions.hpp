#pragma once

#include <algorithm>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gridil/grid.hpp"
#include "gridil/powerflow.hpp"

namespace gridil {

/// Target busbar assignment for the connected objects of one substation,
/// in canonical form (lowest-indexed object pinned to busbar 1). The entry
/// with substation -1 is the global do-nothing action.
struct SubstationConfig {
  int substation = -1;
  std::vector<int> objects;   // ascending object ids
  std::vector<int8_t> busbar;  // parallel to objects, values 1/2

  bool is_do_nothing() const { return substation < 0; }
  bool operator==(const SubstationConfig&) const = default;
};

/// Filtered per-variant action space, deterministic order: the do-nothing
/// entry first, then by substation id and lexicographic assignment.
struct ActionSpace {
  NetworkVariant variant;
  std::vector<SubstationConfig> actions;

  int size() const { return static_cast<int>(actions.size()); }
};

namespace detail {

inline bool busbar_groups_valid(const GridSpec& spec, const std::vector<int>& objects,
                                const std::vector<int8_t>& busbar) {
  for (int side = 1; side <= 2; ++side) {
    int members = 0, endpoints = 0;
    for (size_t i = 0; i < objects.size(); ++i) {
      if (busbar[i] != side) continue;
      members++;
      if (spec.is_endpoint_object(objects[i])) endpoints++;
    }
    if (members == 0) continue;
    // A busbar without a line endpoint strands its generators and loads;
    // a lone endpoint forms a dead-end stub for its line.
    if (endpoints == 0) return false;
    if (members == 1 && endpoints == 1) return false;
  }
  return true;
}

/// True when applying the config to the variant's default topology leaves
/// every connected generator and load in the slack component.
inline bool config_keeps_grid_whole(const GridSpec& spec, const NetworkVariant& variant,
                                    const SubstationConfig& cfg) {
  TopologyVector topo = default_topology(spec, variant);
  for (size_t i = 0; i < cfg.objects.size(); ++i) topo[cfg.objects[i]] = cfg.busbar[i];
  Injections zero;
  zero.gen_mw.assign(spec.generators.size(), 0.0);
  zero.load_mw.assign(spec.loads.size(), 0.0);
  ElectricalGraph g = build_electrical_graph(spec, topo, zero);
  if (g.slack_bus < 0) return false;

  std::vector<std::vector<int>> adj(g.n_buses());
  for (const auto& br : g.branches) {
    adj[br.bus_from].push_back(br.bus_to);
    adj[br.bus_to].push_back(br.bus_from);
  }
  std::vector<uint8_t> seen(g.n_buses(), 0);
  std::vector<int> stack{g.slack_bus};
  seen[g.slack_bus] = 1;
  while (!stack.empty()) {
    int b = stack.back();
    stack.pop_back();
    for (int o : adj[b])
      if (!seen[o]) {
        seen[o] = 1;
        stack.push_back(o);
      }
  }
  for (const auto& gen : spec.generators) {
    int b = g.object_bus[spec.generator_object(gen.id)];
    if (b >= 0 && !seen[b]) return false;
  }
  for (const auto& ld : spec.loads) {
    int b = g.object_bus[spec.load_object(ld.id)];
    if (b >= 0 && !seen[b]) return false;
  }
  return true;
}

}  // namespace detail

/// Enumerate the filtered action space for a variant: canonical substation
/// splits that keep every busbar transit-capable and the grid whole.
inline ActionSpace enumerate_actions(const GridSpec& spec, const NetworkVariant& variant) {
  ActionSpace space;
  space.variant = variant;
  space.actions.push_back(SubstationConfig{});  // do-nothing

  TopologyVector base = default_topology(spec, variant);
  for (int s = 0; s < spec.n_substations; ++s) {
    std::vector<int> objs;
    for (int o : spec.substation_objects(s))
      if (base.connected(o)) objs.push_back(o);
    const int n = static_cast<int>(objs.size());
    if (n < 2) continue;

    std::vector<SubstationConfig> at_sub;
    for (uint32_t bits = 1; bits < (1u << (n - 1)); ++bits) {
      SubstationConfig cfg;
      cfg.substation = s;
      cfg.objects = objs;
      cfg.busbar.assign(n, 1);
      for (int i = 1; i < n; ++i)
        if (bits & (1u << (i - 1))) cfg.busbar[i] = 2;
      if (!detail::busbar_groups_valid(spec, cfg.objects, cfg.busbar)) continue;
      if (!detail::config_keeps_grid_whole(spec, variant, cfg)) continue;
      at_sub.push_back(std::move(cfg));
    }
    std::sort(at_sub.begin(), at_sub.end(),
              [](const SubstationConfig& a, const SubstationConfig& b) {
                return a.busbar < b.busbar;
              });
    for (auto& cfg : at_sub) space.actions.push_back(std::move(cfg));
  }
  return space;
}

/// Mask flipping the connected objects whose current busbar differs from the
/// target. Empty when the target assigns a currently disconnected object
/// (the action is not available in that state).
inline std::optional<SwitchAction> try_switch_for_target(const TopologyVector& current,
                                                         const SubstationConfig& target) {
  SwitchAction a(current.size());
  if (target.is_do_nothing()) return a;
  for (size_t i = 0; i < target.objects.size(); ++i) {
    int o = target.objects[i];
    if (!current.connected(o)) return std::nullopt;
    if (current[o] != target.busbar[i]) a.mask[o] = 1;
  }
  return a;
}

inline SwitchAction switch_for_target(const TopologyVector& current,
                                      const SubstationConfig& target) {
  auto a = try_switch_for_target(current, target);
  if (!a) throw IllegalAction("target assigns a disconnected object");
  return *a;
}

/// Substation whose above-0.5 prediction mass is largest; none when no
/// prediction exceeds 0.5. Ties resolve to the lowest substation id.
inline std::optional<int> predicted_substation(const GridSpec& spec,
                                               const std::vector<double>& p) {
  bool any = false;
  for (double v : p)
    if (v > 0.5) any = true;
  if (!any) return std::nullopt;
  int best = -1;
  double best_score = -1.0;
  for (int s = 0; s < spec.n_substations; ++s) {
    double score = 0.0;
    for (int o = 0; o < spec.n_objects(); ++o)
      if (spec.object_substation(o) == s) score += std::max(p[o] - 0.5, 0.0);
    if (score > best_score) {
      best_score = score;
      best = s;
    }
  }
  return best;
}

/// Project a prediction vector onto the action space: do-nothing when
/// classified as such, otherwise the available mask with least L1 distance
/// to p (ties keep action-space order).
inline SwitchAction nearest_action(const GridSpec& spec, const std::vector<double>& p,
                                   const ActionSpace& space, const TopologyVector& current) {
  if (!predicted_substation(spec, p)) return SwitchAction(current.size());
  SwitchAction best(current.size());
  double best_dist = std::numeric_limits<double>::infinity();
  for (const auto& cfg : space.actions) {
    auto mask = try_switch_for_target(current, cfg);
    if (!mask) continue;
    double d = 0.0;
    for (int o = 0; o < current.size(); ++o) d += std::abs(p[o] - mask->mask[o]);
    if (d < best_dist) {
      best_dist = d;
      best = *mask;
    }
  }
  return best;
}

/// Line-oriented dump, one configuration per line, for inspection and
/// oracle cross-checks.
inline std::string to_text(const ActionSpace& space) {
  std::ostringstream os;
  os << "gridil-actions v1 variant=" << space.variant.label()
     << " count=" << space.size() << "\n";
  for (const auto& cfg : space.actions) {
    if (cfg.is_do_nothing()) {
      os << "do-nothing\n";
      continue;
    }
    os << "sub=" << cfg.substation << " objects=";
    for (size_t i = 0; i < cfg.objects.size(); ++i)
      os << (i ? "," : "") << cfg.objects[i];
    os << " busbar=";
    for (size_t i = 0; i < cfg.busbar.size(); ++i)
      os << (i ? "," : "") << static_cast<int>(cfg.busbar[i]);
    os << "\n";
  }
  return os.str();
}

}  // namespace gridil
