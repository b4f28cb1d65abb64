#pragma once

#include <functional>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

#include "dagdp/external_map.hpp"
#include "dagdp/solver.hpp"

namespace dagdp {

enum class Neighborhood { L2, Linf };
std::string to_string(Neighborhood n);

enum class SearchStatus { Optimal, TimeLimit };
std::string to_string(SearchStatus s);

struct SearchSettings {
  Neighborhood neighborhood = Neighborhood::L2;
  double improvement_tol = 1e-6;  // strict-decrease threshold on the incumbent
  double time_limit_seconds = 900.0;
  SolverSettings solver;
  int threads = 1;  // concurrent subproblem evaluations within one round
};

enum class TracePhase { Initial, Neighbor, Line, Enumerate };
std::string to_string(TracePhase p);

struct TraceRecord {
  int index = 0;
  TracePhase phase = TracePhase::Initial;
  std::vector<int> point;      // lattice coordinates (or mode schedule for enumeration)
  bool decode_feasible = true;
  SolveStatus solver_status = SolveStatus::NumericFailure;  // valid when decode_feasible
  double objective = 0.0;      // +inf when unavailable
  double cumulative_seconds = 0.0;
};

struct SearchTrace {
  std::vector<TraceRecord> records;
  void write_csv(std::ostream& out) const;
};

struct SearchOutcome {
  SearchStatus status = SearchStatus::Optimal;
  LatticePoint best;
  double objective = 0.0;
  std::vector<double> primal;
  BooleanAssignment assignment;
  SearchTrace trace;
  int subproblems_solved = 0;   // NLP solves (infeasible decodes excluded)
  int neighbor_rounds = 0;
  int line_searches = 0;
  double wall_seconds = 0.0;
};

// Offset vectors of the integral neighborhood in deterministic
// lexicographic order.  L2: the 2d unit steps; Linf: {-1,0,1}^d minus zero.
std::vector<std::vector<int>> directions(int dimension, Neighborhood n);

// z + d for each direction, filtered to map bounds and not in `visited`,
// in directions order.
std::vector<LatticePoint> neighbors(const LatticePoint& z, const ExternalMap& map,
                                    Neighborhood n,
                                    const std::set<LatticePoint>& visited);

// Subproblem evaluation seam: production adapts the NLP pipeline, tests
// plug in synthetic lattice functions.
struct Evaluation {
  SolveStatus status = SolveStatus::NumericFailure;
  double objective = 0.0;
  std::vector<double> primal;
};
using Evaluator = std::function<Evaluation(const LatticePoint&, const BooleanAssignment&)>;

// Discrete steepest-descent core: evaluate z0, then alternate rounds of
// neighbor search (all unvisited feasible neighbors; infeasible decodes are
// marked visited without solving) and line search along the best improving
// direction, until a round yields no improvement beyond the tolerance.
SearchOutcome search_lattice(const ExternalMap& map, const LatticePoint& z0,
                             const Evaluator& evaluate, const SearchSettings& settings);

// Production searches over the collocation NLP subproblems.
SearchOutcome solve_ldsda(const DagdpModel& model, const ExternalMap& map,
                          const CollocationScheme& scheme, const LatticePoint& z0,
                          const SearchSettings& settings);

// Baseline: solve every feasible configuration, return the best.
SearchOutcome solve_enumerate(const DagdpModel& model, const CollocationScheme& scheme,
                              const SearchSettings& settings);

}  // namespace dagdp
