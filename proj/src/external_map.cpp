#include "dagdp/external_map.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace dagdp {

std::string to_string(MappingScheme s) {
  return s == MappingScheme::Ordinal ? "ordinal" : "transition";
}

std::string LatticePoint::render() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i) out << ',';
    out << z[i];
  }
  return out.str();
}

LatticePoint parse_lattice_point(const std::string& text) {
  LatticePoint p;
  std::istringstream in(text);
  std::string field;
  while (std::getline(in, field, ',')) {
    try {
      std::size_t used = 0;
      const int v = std::stoi(field, &used);
      if (used != field.size()) throw InvalidSpec("bad lattice coordinate '" + field + "'");
      p.z.push_back(v);
    } catch (const std::exception&) {
      throw InvalidSpec("bad lattice coordinate '" + field + "'");
    }
  }
  if (p.z.empty()) throw InvalidSpec("empty lattice point '" + text + "'");
  return p;
}

bool ExternalMap::in_bounds(const LatticePoint& p) const {
  if (static_cast<int>(p.z.size()) != dimension) return false;
  for (int j = 0; j < dimension; ++j)
    if (p.z[static_cast<std::size_t>(j)] < lower[static_cast<std::size_t>(j)] ||
        p.z[static_cast<std::size_t>(j)] > upper[static_cast<std::size_t>(j)])
      return false;
  return true;
}

long long ExternalMap::lattice_size() const {
  long long total = 1;
  for (int j = 0; j < dimension; ++j)
    total *= upper[static_cast<std::size_t>(j)] - lower[static_cast<std::size_t>(j)] + 1;
  return total;
}

namespace {

// Mode schedule encoded by a transition point: coordinate r (0-based) is
// the element of {1..S} after which mode r+2 starts; S means never.  Later
// transitions override earlier ones.
BooleanAssignment transition_schedule(const ExternalMap& map, const LatticePoint& z) {
  BooleanAssignment a;
  a.selected.assign(static_cast<std::size_t>(map.stages), 0);
  for (int s = 0; s < map.stages; ++s) {
    int mode = 0;
    for (int r = 0; r < map.dimension; ++r) {
      const int c = z.z[static_cast<std::size_t>(r)];
      if (c < map.stages && s + 1 >= c + 1) mode = r + 1;
    }
    a.selected[static_cast<std::size_t>(s)] = mode;
  }
  return a;
}

bool logic_feasible(const ExternalMap& map, const BooleanAssignment& a) {
  for (const Proposition& p : map.propositions)
    if (!evaluate(p, a)) return false;
  return true;
}

// Every point of the map's lattice in lexicographic order.
template <typename Fn>
void for_each_point(const ExternalMap& map, Fn&& fn) {
  LatticePoint p;
  p.z = map.lower;
  while (true) {
    fn(p);
    int j = map.dimension - 1;
    while (j >= 0 && p.z[static_cast<std::size_t>(j)] == map.upper[static_cast<std::size_t>(j)]) {
      p.z[static_cast<std::size_t>(j)] = map.lower[static_cast<std::size_t>(j)];
      --j;
    }
    if (j < 0) break;
    ++p.z[static_cast<std::size_t>(j)];
  }
}

}  // namespace

ExternalMap build_map(const DagdpModel& model, MappingScheme scheme) {
  ExternalMap map;
  map.scheme = scheme;
  map.stages = model.stage_count();
  map.propositions = model.propositions();
  for (int s = 0; s < map.stages; ++s) map.disjunct_counts.push_back(model.disjunct_count(s));

  if (scheme == MappingScheme::Ordinal) {
    map.dimension = map.stages;
    map.lower.assign(static_cast<std::size_t>(map.stages), 1);
    for (int s = 0; s < map.stages; ++s) map.upper.push_back(map.disjunct_counts[s]);
    return map;
  }

  // Transition scheme: needs a uniform mode count D >= 2; one coordinate
  // per transition 1->2, 2->3, ..., each ranging over {1..S}.
  const int modes = map.disjunct_counts.empty() ? 0 : map.disjunct_counts.front();
  for (int c : map.disjunct_counts)
    if (c != modes)
      throw UnsupportedScheme("transition reformulation needs a uniform mode count per stage");
  if (modes < 2)
    throw UnsupportedScheme("transition reformulation needs at least two modes per stage");
  map.dimension = modes - 1;
  map.lower.assign(static_cast<std::size_t>(map.dimension), 1);
  map.upper.assign(static_cast<std::size_t>(map.dimension), map.stages);
  if (map.lattice_size() > 1'000'000)
    throw LatticeTooLarge("transition lattice exceeds the enumeration guard");

  // The scheme is valid only when the feasible decodes cover the model's
  // feasible assignments exactly (so the encoding loses nothing).
  std::set<std::vector<int>> decoded;
  for_each_point(map, [&](const LatticePoint& p) {
    const BooleanAssignment a = transition_schedule(map, p);
    if (logic_feasible(map, a)) decoded.insert(a.selected);
  });
  std::set<std::vector<int>> feasible;
  for (const BooleanAssignment& a : enumerate_feasible(model)) feasible.insert(a.selected);
  if (decoded != feasible)
    throw UnsupportedScheme(
        "transition reformulation cannot express this model's feasible set");
  return map;
}

std::optional<BooleanAssignment> decode(const ExternalMap& map, const LatticePoint& z) {
  if (!map.in_bounds(z))
    throw OutOfBounds("lattice point (" + z.render() + ") is outside the map bounds");
  BooleanAssignment a;
  if (map.scheme == MappingScheme::Ordinal) {
    for (int s = 0; s < map.stages; ++s)
      a.selected.push_back(z.z[static_cast<std::size_t>(s)] - 1);
  } else {
    a = transition_schedule(map, z);
  }
  if (!logic_feasible(map, a)) return std::nullopt;
  return a;
}

}  // namespace dagdp
