#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dagdp/transcription.hpp"

namespace dagdp {

enum class SolveStatus { Optimal, Infeasible, IterationLimit, NumericFailure };
std::string to_string(SolveStatus s);

struct SolverSettings {
  double feasibility_tol = 1e-6;
  double optimality_tol = 1e-6;
  double initial_penalty = 10.0;
  double penalty_growth = 10.0;
  double penalty_cap = 1e8;
  int max_outer_iterations = 50;
  int max_inner_iterations = 500;  // per outer iteration
  int lbfgs_memory = 20;
  int restarts = 0;       // extra solves from perturbed initial guesses
  std::uint64_t seed = 0; // perturbation stream for restarts
  // Diagnostics hook: when set, every accepted inner merit value is
  // appended (used to check line-search monotonicity).
  std::vector<double>* merit_history = nullptr;
};

struct SolveResult {
  SolveStatus status = SolveStatus::NumericFailure;
  double objective = 0.0;
  std::vector<double> primal;
  double max_violation = 0.0;
  int outer_iterations = 0;
  int inner_iterations = 0;  // total across outer iterations
  double wall_seconds = 0.0;
  double projected_gradient = 0.0;  // inf-norm at the returned point
};

// Augmented-Lagrangian solve of the equality/bound NLP: outer loop on
// multipliers and penalty, inner projected limited-memory quasi-Newton
// descent with a backtracking line search.
SolveResult solve(const DiscretizedNlp& nlp, std::vector<double> initial,
                  const SolverSettings& settings);

struct TrajectorySample {
  double time;
  std::vector<double> state;  // model states, quadrature accumulator last
};

// Classical RK4 integration of the active mode's dynamics with
// piecewise-constant controls.  `controls` is laid out [c*elements + e];
// the element count must be a multiple of the stage count.  Samples include
// every RK4 step point and all element boundaries.
std::vector<TrajectorySample> simulate(const DagdpModel& model, const BooleanAssignment& a,
                                       std::span<const double> controls,
                                       int steps_per_element);

// Initial point for solve(): controls at bound midpoints (or their fixed
// values), states from an RK4 pass under those controls clipped into
// bounds, quadrature integrated alongside.  Falls back to bound midpoints
// if the simulation blows up.
std::vector<double> initial_guess(const DagdpModel& model, const BooleanAssignment& a,
                                  const CollocationScheme& scheme);

}  // namespace dagdp
