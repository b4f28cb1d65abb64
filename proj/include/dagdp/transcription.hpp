#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dagdp/model.hpp"

namespace dagdp {

struct CollocationScheme {
  int n_fe_per_stage = 30;
  int n_cp = 3;  // 1..5, Radau family (right endpoint included)
};

// The n_cp Radau points on (0,1], ascending, last point exactly 1.
std::vector<double> radau_points(int n_cp);

// Lagrange-basis differentiation matrix over the nodes {0} union `points`:
// entry [j][k] = dl_j/dtau at points[k], shape (n+1) x n.
std::vector<std::vector<double>> differentiation_matrix(const std::vector<double>& points);

// Flat-variable metadata for one NLP index.
struct FlatVarInfo {
  enum class Kind { State, Quadrature, Algebraic, Control, Parameter };
  Kind kind;
  int stage = -1;       // -1 for parameters
  int element = -1;     // global element index; -1 where not applicable
  int point = -1;       // 0 = element start, 1..n_cp collocation points
  int declaration = -1; // index into the matching declaration list
  std::string name;     // e.g. x[e12,p3], u[e12]
  double time = 0.0;    // absolute time of the grid point (states) or element start
};

// Fixed-configuration NLP: box bounds, one objective expression, equality
// constraint expressions, and the metadata to interpret the flat vector.
// Continuity across elements holds by construction: the start point of an
// element is the same flat variable as the previous element's last Radau
// point, and initial conditions are fixed through equal bounds.
class DiscretizedNlp {
 public:
  DiscretizedNlp(std::vector<double> lower, std::vector<double> upper, Expr objective,
                 std::vector<Expr> constraints,
                 std::vector<FlatVarInfo> layout = {});

  int n_vars() const { return static_cast<int>(lower_.size()); }
  const std::vector<double>& lower() const { return lower_; }
  const std::vector<double>& upper() const { return upper_; }
  const Expr& objective() const { return objective_; }
  const std::vector<Expr>& constraints() const { return constraints_; }
  const std::vector<FlatVarInfo>& layout() const { return layout_; }

  // Grid shape; populated by transcribe(), zero for hand-built NLPs.
  int state_count = 0;       // model states + 1 quadrature state
  int control_count = 0;
  int algebraic_count = 0;
  int parameter_count = 0;
  int elements = 0;          // total over all stages
  int points_per_element = 0;
  std::vector<double> grid_times;      // size grid_points()

  int grid_points() const { return elements * points_per_element + 1; }
  int state_index(int m, int g) const;     // m in [0, state_count)
  int algebraic_index(int y, int e, int k) const;  // k in [1, n_cp]
  int control_index(int c, int e) const;
  int parameter_index(int p) const;

 private:
  std::vector<double> lower_;
  std::vector<double> upper_;
  Expr objective_;
  std::vector<Expr> constraints_;
  std::vector<FlatVarInfo> layout_;
};

// Collocation transcription of the model under a fixed mode assignment.
// For every element i and collocation point k:
//   sum_j x_{i,j} M[j][k] / h_i = f_mode(x_{i,k}, u_i, t_{i,k})
// (both sides divided by the element width h_i relative to the textbook
// form; the constraint set is identical and better scaled).  The payoff
// integral is carried by a quadrature state q with dq/dt = integrand; the
// minimized objective is -q at the final time.
DiscretizedNlp transcribe(const DagdpModel& model, const BooleanAssignment& a,
                          const CollocationScheme& scheme);

// Simulation mode: with fixed per-element controls, solve only the
// collocation equality system element by element (Newton on each square
// system).  Returns per-state grid values, quadrature last, sized
// state_count x grid_points.  Controls are laid out as [c*elements + e].
std::vector<std::vector<double>> collocation_simulate(const DagdpModel& model,
                                                      const BooleanAssignment& a,
                                                      const CollocationScheme& scheme,
                                                      const std::vector<double>& controls);

// Debug dump: variables, bounds, and constraints in prefix notation.
void write_debug(const DiscretizedNlp& nlp, std::ostream& out);

}  // namespace dagdp
