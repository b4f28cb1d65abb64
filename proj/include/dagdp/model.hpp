#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dagdp/errors.hpp"
#include "dagdp/expr.hpp"

namespace dagdp {

struct StateDecl {
  std::string name;
  double lower;
  double upper;
  double initial;
};

struct ControlDecl {
  std::string name;
  double lower;
  double upper;
  std::optional<double> fixed_initial;  // value pinned on the first element
};

struct AlgebraicDecl {
  std::string name;
  double lower;
  double upper;
};

struct ParameterDecl {
  std::string name;
  double lower;
  double upper;
};

// One dynamic mode of a stage: a right-hand side expression per state, plus
// optional algebraic equations.  Expressions index the model-local variable
// order (states, controls, algebraics, parameters, time); see
// DagdpModel::time_index().
struct Disjunct {
  std::vector<Expr> state_rhs;
  std::vector<Expr> algebraic;
};

// Formula tree over per-stage mode atoms.  Xor means exactly-one.  An OR
// (or XOR) over an empty child list is false.
class Proposition {
 public:
  enum class Kind : std::uint8_t { Atom, Not, And, Or, Xor, Implies, Iff };

  static Proposition atom(int stage, int disjunct);
  static Proposition not_of(Proposition p);
  static Proposition and_of(std::vector<Proposition> children);
  static Proposition or_of(std::vector<Proposition> children);
  static Proposition xor_of(std::vector<Proposition> children);
  static Proposition implies(Proposition antecedent, Proposition consequent);
  static Proposition iff(Proposition a, Proposition b);

  Kind kind() const { return kind_; }
  int stage() const { return stage_; }
  int disjunct() const { return disjunct_; }
  const std::vector<Proposition>& children() const { return children_; }

  std::string prefix() const;  // e.g. (implies (y 2 2) (or (y 1 1)))

 private:
  Proposition() = default;
  Kind kind_ = Kind::Atom;
  int stage_ = -1;     // 0-based
  int disjunct_ = -1;  // 0-based
  std::vector<Proposition> children_;
};

// One selected disjunct per stage; the exactly-one constraint of a mode
// assignment holds by construction.
struct BooleanAssignment {
  std::vector<int> selected;  // 0-based disjunct index per stage

  static BooleanAssignment from_modes(const std::vector<int>& one_based);
  std::vector<int> modes() const;  // 1-based, for display
  std::string render() const;      // "1,2,2"

  bool operator==(const BooleanAssignment&) const = default;
};

// A staged dynamic problem with per-stage mode disjunctions and logic
// propositions over the mode selections.
class DagdpModel {
 public:
  // boundaries = t_0 < t_1 < ... < t_S
  explicit DagdpModel(std::vector<double> stage_boundaries);

  void add_state(StateDecl s);
  void add_control(ControlDecl c);
  void add_algebraic(AlgebraicDecl a);
  void add_parameter(ParameterDecl p);
  void add_global_constraint(Expr e);

  // Disjuncts must be added for a stage before propositions referencing it.
  void add_disjunct(int stage, Disjunct d);
  void add_proposition(Proposition p);

  // Integrand of the accumulated payoff: the objective maximizes the
  // integral of this expression over the horizon (the transcribed NLP
  // minimizes its negation).
  void set_integrand(Expr e);

  int stage_count() const { return static_cast<int>(boundaries_.size()) - 1; }
  const std::vector<double>& boundaries() const { return boundaries_; }
  const std::vector<StateDecl>& states() const { return states_; }
  const std::vector<ControlDecl>& controls() const { return controls_; }
  const std::vector<AlgebraicDecl>& algebraics() const { return algebraics_; }
  const std::vector<ParameterDecl>& parameters() const { return parameters_; }
  const std::vector<Expr>& global_constraints() const { return globals_; }
  const std::vector<Disjunct>& disjuncts(int stage) const;
  int disjunct_count(int stage) const;
  const std::vector<Proposition>& propositions() const { return propositions_; }
  const Expr& integrand() const { return integrand_; }

  // Model-local expression variable order: states, controls, algebraics,
  // parameters, then the time symbol.
  int local_var_count() const { return time_index() + 1; }
  int time_index() const {
    return static_cast<int>(states_.size() + controls_.size() + algebraics_.size() +
                            parameters_.size());
  }
  Expr state_ref(int i) const;
  Expr control_ref(int i) const;
  Expr time_ref() const { return Expr::variable(time_index()); }
  std::vector<std::string> local_names() const;  // ends with "t"

 private:
  void check_stage(int stage) const;

  std::vector<double> boundaries_;
  std::vector<StateDecl> states_;
  std::vector<ControlDecl> controls_;
  std::vector<AlgebraicDecl> algebraics_;
  std::vector<ParameterDecl> parameters_;
  std::vector<Expr> globals_;
  std::vector<std::vector<Disjunct>> disjuncts_;
  std::vector<Proposition> propositions_;
  Expr integrand_;
};

// Truth value of a proposition under an assignment; throws InvalidAtom when
// an atom's stage is outside the assignment.
bool evaluate(const Proposition& prop, const BooleanAssignment& a);

// True iff every proposition of the model holds under the assignment.
bool is_feasible(const DagdpModel& model, const BooleanAssignment& a);

// All feasible assignments in lexicographic order of per-stage disjunct
// indices.  Guards the product of disjunct counts at 1e6 (LatticeTooLarge).
std::vector<BooleanAssignment> enumerate_feasible(const DagdpModel& model);

}  // namespace dagdp
