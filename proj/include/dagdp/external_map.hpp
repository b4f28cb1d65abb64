#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dagdp/model.hpp"

namespace dagdp {

enum class MappingScheme { Ordinal, Transition };
std::string to_string(MappingScheme s);

struct LatticePoint {
  std::vector<int> z;

  std::string render() const;  // "1,2"
  auto operator<=>(const LatticePoint&) const = default;
};

LatticePoint parse_lattice_point(const std::string& text);  // "c1,c2,..."

// Integer-lattice encoding of the model's mode selections.
//   Ordinal: one coordinate per stage, value = selected mode (1-based).
//   Transition: one coordinate per mode transition r -> r+1, value c < S
//     places the transition at stage c+1, value S means it never occurs.
// The map carries a copy of the model's logic so decoding is self-contained.
struct ExternalMap {
  MappingScheme scheme = MappingScheme::Ordinal;
  int dimension = 0;
  std::vector<int> lower;  // per-coordinate inclusive bounds
  std::vector<int> upper;
  int stages = 0;
  std::vector<int> disjunct_counts;     // per stage
  std::vector<Proposition> propositions;

  bool in_bounds(const LatticePoint& z) const;
  long long lattice_size() const;
};

// Throws UnsupportedScheme when Transition is requested for a model whose
// feasible assignments are not exactly the single-chain monotone schedules.
ExternalMap build_map(const DagdpModel& model, MappingScheme scheme);

// nullopt = the decoded assignment violates the model's propositions
// (first-class result, not an error).  Throws OutOfBounds.
std::optional<BooleanAssignment> decode(const ExternalMap& map, const LatticePoint& z);

}  // namespace dagdp
