#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridil {

/// Thrown when a switch mask touches a disconnected object or spans
/// more than one substation.
struct IllegalAction : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct GridFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class GeneratorKind { thermal, nuclear, wind, solar };

inline const char* to_string(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::thermal: return "thermal";
    case GeneratorKind::nuclear: return "nuclear";
    case GeneratorKind::wind: return "wind";
    case GeneratorKind::solar: return "solar";
  }
  return "?";
}

inline GeneratorKind parse_generator_kind(const std::string& s) {
  if (s == "thermal") return GeneratorKind::thermal;
  if (s == "nuclear") return GeneratorKind::nuclear;
  if (s == "wind") return GeneratorKind::wind;
  if (s == "solar") return GeneratorKind::solar;
  throw GridFormatError("unknown generator kind: " + s);
}

struct Generator {
  int id;
  int substation;
  double p_max_mw;
  GeneratorKind kind;
};

struct Load {
  int id;
  int substation;
};

struct Line {
  int id;
  int from_substation;
  int to_substation;
  double reactance_pu;
  double thermal_limit_mw;
};

enum class LineEnd : int { from = 0, to = 1 };

/// Static description of the grid: substations, objects attached to them,
/// and the line data needed for DC power flow.
///
/// Objects occupy fixed positions in the topology vector: generators first,
/// then loads, then line endpoints (from before to, by line id).
class GridSpec {
 public:
  int n_substations = 0;
  std::vector<Generator> generators;
  std::vector<Load> loads;
  std::vector<Line> lines;

  int n_objects() const {
    return static_cast<int>(generators.size() + loads.size() + 2 * lines.size());
  }

  int generator_object(int g) const { return g; }
  int load_object(int l) const { return static_cast<int>(generators.size()) + l; }
  int endpoint_object(int line, LineEnd end) const {
    return static_cast<int>(generators.size() + loads.size()) + 2 * line +
           static_cast<int>(end);
  }

  bool is_generator_object(int o) const { return o < static_cast<int>(generators.size()); }
  bool is_load_object(int o) const {
    return o >= static_cast<int>(generators.size()) &&
           o < static_cast<int>(generators.size() + loads.size());
  }
  bool is_endpoint_object(int o) const {
    return o >= static_cast<int>(generators.size() + loads.size()) && o < n_objects();
  }

  int generator_of_object(int o) const { return o; }
  int load_of_object(int o) const { return o - static_cast<int>(generators.size()); }
  int line_of_object(int o) const {
    return (o - static_cast<int>(generators.size() + loads.size())) / 2;
  }
  LineEnd end_of_object(int o) const {
    return static_cast<LineEnd>((o - static_cast<int>(generators.size() + loads.size())) % 2);
  }

  int object_substation(int o) const {
    if (is_generator_object(o)) return generators[o].substation;
    if (is_load_object(o)) return loads[load_of_object(o)].substation;
    const Line& ln = lines[line_of_object(o)];
    return end_of_object(o) == LineEnd::from ? ln.from_substation : ln.to_substation;
  }

  /// Objects attached to substation `s`, in topology-vector order.
  std::vector<int> substation_objects(int s) const {
    std::vector<int> out;
    for (int o = 0; o < n_objects(); ++o)
      if (object_substation(o) == s) out.push_back(o);
    return out;
  }

  void validate() const {
    if (n_substations <= 0) throw GridFormatError("no substations");
    for (const auto& g : generators) {
      if (g.substation < 0 || g.substation >= n_substations)
        throw GridFormatError("generator substation out of range");
      if (g.p_max_mw <= 0) throw GridFormatError("generator p_max must be positive");
    }
    for (const auto& l : loads)
      if (l.substation < 0 || l.substation >= n_substations)
        throw GridFormatError("load substation out of range");
    for (const auto& ln : lines) {
      if (ln.from_substation < 0 || ln.from_substation >= n_substations ||
          ln.to_substation < 0 || ln.to_substation >= n_substations)
        throw GridFormatError("line substation out of range");
      if (ln.from_substation == ln.to_substation)
        throw GridFormatError("line endpoints must differ");
      if (ln.reactance_pu <= 0) throw GridFormatError("reactance must be positive");
      if (ln.thermal_limit_mw < 0) throw GridFormatError("thermal limit must be >= 0");
    }
  }
};

/// Per-object busbar assignment: 1, 2, or -1 (disconnected).
class TopologyVector {
 public:
  TopologyVector() = default;
  explicit TopologyVector(int n, int8_t fill = 1) : busbar_(n, fill) {}

  int size() const { return static_cast<int>(busbar_.size()); }
  int8_t operator[](int o) const { return busbar_[o]; }
  int8_t& operator[](int o) { return busbar_[o]; }
  bool connected(int o) const { return busbar_[o] != -1; }

  bool operator==(const TopologyVector&) const = default;

  const std::vector<int8_t>& raw() const { return busbar_; }

 private:
  std::vector<int8_t> busbar_;
};

/// Binary switch mask over objects; bit set = flip busbar this step.
struct SwitchAction {
  std::vector<uint8_t> mask;

  explicit SwitchAction(int n = 0) : mask(n, 0) {}

  bool is_do_nothing() const {
    for (uint8_t b : mask)
      if (b) return false;
    return true;
  }
  bool operator==(const SwitchAction&) const = default;
};

/// Grid variant with statically disabled lines (empty = full network).
struct NetworkVariant {
  std::vector<int> disabled_lines;

  static NetworkVariant full() { return {}; }
  static NetworkVariant without_line(int line) { return {{line}}; }

  bool operator==(const NetworkVariant&) const = default;

  std::string label() const {
    if (disabled_lines.empty()) return "full";
    std::string s = "n1";
    for (int l : disabled_lines) s += "_" + std::to_string(l);
    return s;
  }
};

/// Generator and load setpoints in MW (consumption positive for loads).
struct Injections {
  std::vector<double> gen_mw;
  std::vector<double> load_mw;
};

inline TopologyVector default_topology(const GridSpec& spec, const NetworkVariant& variant) {
  TopologyVector topo(spec.n_objects(), 1);
  for (int l : variant.disabled_lines) {
    if (l < 0 || l >= static_cast<int>(spec.lines.size()))
      throw std::out_of_range("variant disables unknown line " + std::to_string(l));
    topo[spec.endpoint_object(l, LineEnd::from)] = -1;
    topo[spec.endpoint_object(l, LineEnd::to)] = -1;
  }
  return topo;
}

/// Flip flagged objects between busbars 1 and 2. Flagging a disconnected
/// object is an illegal switch.
inline TopologyVector apply_switch(const TopologyVector& topology, const SwitchAction& action) {
  if (static_cast<int>(action.mask.size()) != topology.size())
    throw IllegalAction("switch mask length does not match topology");
  TopologyVector out = topology;
  for (int o = 0; o < topology.size(); ++o) {
    if (!action.mask[o]) continue;
    if (!topology.connected(o))
      throw IllegalAction("switch flags disconnected object " + std::to_string(o));
    out[o] = topology[o] == 1 ? 2 : 1;
  }
  return out;
}

inline bool line_enabled(const GridSpec& spec, const TopologyVector& topo, int line) {
  return topo.connected(spec.endpoint_object(line, LineEnd::from));
}

// ---------------------------------------------------------------------------
// Spec serialization: sectioned key/value text.

inline std::string to_text(const GridSpec& spec) {
  std::ostringstream os;
  os.precision(17);
  os << "gridil-grid v1\n";
  os << "[substations]\ncount = " << spec.n_substations << "\n";
  os << "[generators]\n";
  for (const auto& g : spec.generators)
    os << g.id << " = " << g.substation << " " << g.p_max_mw << " " << to_string(g.kind)
       << "\n";
  os << "[loads]\n";
  for (const auto& l : spec.loads) os << l.id << " = " << l.substation << "\n";
  os << "[lines]\n";
  for (const auto& ln : spec.lines)
    os << ln.id << " = " << ln.from_substation << " " << ln.to_substation << " "
       << ln.reactance_pu << " " << ln.thermal_limit_mw << "\n";
  return os.str();
}

inline GridSpec parse_grid_spec(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "gridil-grid v1")
    throw GridFormatError("bad grid file header");
  GridSpec spec;
  std::string section;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      section = line;
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) throw GridFormatError("expected key = value: " + line);
    std::istringstream key(line.substr(0, eq)), val(line.substr(eq + 1));
    if (section == "[substations]") {
      val >> spec.n_substations;
    } else if (section == "[generators]") {
      Generator g{};
      std::string kind;
      key >> g.id;
      val >> g.substation >> g.p_max_mw >> kind;
      g.kind = parse_generator_kind(kind);
      spec.generators.push_back(g);
    } else if (section == "[loads]") {
      Load l{};
      key >> l.id;
      val >> l.substation;
      spec.loads.push_back(l);
    } else if (section == "[lines]") {
      Line ln{};
      key >> ln.id;
      val >> ln.from_substation >> ln.to_substation >> ln.reactance_pu >> ln.thermal_limit_mw;
      spec.lines.push_back(ln);
    } else {
      throw GridFormatError("unknown section: " + section);
    }
  }
  spec.validate();
  return spec;
}

/// FNV-1a hash of the spec's serialized form; identifies the grid in
/// dataset and report headers.
inline uint64_t spec_hash(const GridSpec& spec) {
  uint64_t h = 1469598103934665603ull;
  for (char c : to_text(spec)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace gridil
