#include "dagdp/model.hpp"

#include <algorithm>

namespace dagdp {

Proposition Proposition::atom(int stage, int disjunct) {
  if (stage < 0 || disjunct < 0) throw InvalidAtom("negative atom index");
  Proposition p;
  p.kind_ = Kind::Atom;
  p.stage_ = stage;
  p.disjunct_ = disjunct;
  return p;
}

Proposition Proposition::not_of(Proposition x) {
  Proposition p;
  p.kind_ = Kind::Not;
  p.children_.push_back(std::move(x));
  return p;
}

Proposition Proposition::and_of(std::vector<Proposition> children) {
  Proposition p;
  p.kind_ = Kind::And;
  p.children_ = std::move(children);
  return p;
}

Proposition Proposition::or_of(std::vector<Proposition> children) {
  Proposition p;
  p.kind_ = Kind::Or;
  p.children_ = std::move(children);
  return p;
}

Proposition Proposition::xor_of(std::vector<Proposition> children) {
  Proposition p;
  p.kind_ = Kind::Xor;
  p.children_ = std::move(children);
  return p;
}

Proposition Proposition::implies(Proposition a, Proposition b) {
  Proposition p;
  p.kind_ = Kind::Implies;
  p.children_.push_back(std::move(a));
  p.children_.push_back(std::move(b));
  return p;
}

Proposition Proposition::iff(Proposition a, Proposition b) {
  Proposition p;
  p.kind_ = Kind::Iff;
  p.children_.push_back(std::move(a));
  p.children_.push_back(std::move(b));
  return p;
}

std::string Proposition::prefix() const {
  switch (kind_) {
    case Kind::Atom:
      return "(y " + std::to_string(stage_ + 1) + " " + std::to_string(disjunct_ + 1) + ")";
    case Kind::Not:
      return "(not " + children_[0].prefix() + ")";
    case Kind::Implies:
      return "(implies " + children_[0].prefix() + " " + children_[1].prefix() + ")";
    case Kind::Iff:
      return "(iff " + children_[0].prefix() + " " + children_[1].prefix() + ")";
    default: {
      std::string out = kind_ == Kind::And ? "(and" : kind_ == Kind::Or ? "(or" : "(xor";
      for (const Proposition& c : children_) out += " " + c.prefix();
      return out + ")";
    }
  }
}

BooleanAssignment BooleanAssignment::from_modes(const std::vector<int>& one_based) {
  BooleanAssignment a;
  a.selected.reserve(one_based.size());
  for (int m : one_based) {
    if (m < 1) throw InvalidAtom("mode numbers are 1-based");
    a.selected.push_back(m - 1);
  }
  return a;
}

std::vector<int> BooleanAssignment::modes() const {
  std::vector<int> out;
  out.reserve(selected.size());
  for (int r : selected) out.push_back(r + 1);
  return out;
}

std::string BooleanAssignment::render() const {
  std::string out;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(selected[i] + 1);
  }
  return out;
}

DagdpModel::DagdpModel(std::vector<double> stage_boundaries)
    : boundaries_(std::move(stage_boundaries)) {
  if (boundaries_.size() < 2) throw InvalidSpec("need at least one stage");
  for (std::size_t i = 1; i < boundaries_.size(); ++i)
    if (!(boundaries_[i - 1] < boundaries_[i]))
      throw InvalidSpec("stage boundaries must be strictly increasing");
  disjuncts_.resize(boundaries_.size() - 1);
}

void DagdpModel::add_state(StateDecl s) {
  if (!(s.lower <= s.initial && s.initial <= s.upper))
    throw InvalidSpec("state initial value outside its bounds: " + s.name);
  states_.push_back(std::move(s));
}

void DagdpModel::add_control(ControlDecl c) {
  if (!(c.lower <= c.upper)) throw InvalidSpec("control bounds inverted: " + c.name);
  if (c.fixed_initial && !(c.lower <= *c.fixed_initial && *c.fixed_initial <= c.upper))
    throw InvalidSpec("fixed initial control outside its bounds: " + c.name);
  controls_.push_back(std::move(c));
}

void DagdpModel::add_algebraic(AlgebraicDecl a) { algebraics_.push_back(std::move(a)); }

void DagdpModel::add_parameter(ParameterDecl p) { parameters_.push_back(std::move(p)); }

void DagdpModel::add_global_constraint(Expr e) { globals_.push_back(std::move(e)); }

void DagdpModel::add_disjunct(int stage, Disjunct d) {
  check_stage(stage);
  if (d.state_rhs.size() != states_.size())
    throw InvalidSpec("disjunct needs one RHS per declared state");
  for (const Expr& e : d.state_rhs)
    if (e.max_var_index() >= local_var_count())
      throw IndexOutOfRange("disjunct RHS references an undeclared variable");
  disjuncts_[static_cast<std::size_t>(stage)].push_back(std::move(d));
}

namespace {

void check_atoms(const Proposition& p, const DagdpModel& model) {
  if (p.kind() == Proposition::Kind::Atom) {
    if (p.stage() < 0 || p.stage() >= model.stage_count() || p.disjunct() < 0 ||
        p.disjunct() >= model.disjunct_count(p.stage()))
      throw InvalidAtom("proposition atom (" + std::to_string(p.stage() + 1) + "," +
                        std::to_string(p.disjunct() + 1) + ") outside the model");
    return;
  }
  for (const Proposition& c : p.children()) check_atoms(c, model);
}

}  // namespace

void DagdpModel::add_proposition(Proposition p) {
  check_atoms(p, *this);
  propositions_.push_back(std::move(p));
}

void DagdpModel::set_integrand(Expr e) {
  if (e.max_var_index() >= local_var_count())
    throw IndexOutOfRange("integrand references an undeclared variable");
  integrand_ = std::move(e);
}

const std::vector<Disjunct>& DagdpModel::disjuncts(int stage) const {
  check_stage(stage);
  return disjuncts_[static_cast<std::size_t>(stage)];
}

int DagdpModel::disjunct_count(int stage) const {
  check_stage(stage);
  return static_cast<int>(disjuncts_[static_cast<std::size_t>(stage)].size());
}

Expr DagdpModel::state_ref(int i) const {
  if (i < 0 || static_cast<std::size_t>(i) >= states_.size())
    throw IndexOutOfRange("state index");
  return Expr::variable(i);
}

Expr DagdpModel::control_ref(int i) const {
  if (i < 0 || static_cast<std::size_t>(i) >= controls_.size())
    throw IndexOutOfRange("control index");
  return Expr::variable(static_cast<int>(states_.size()) + i);
}

std::vector<std::string> DagdpModel::local_names() const {
  std::vector<std::string> names;
  for (const auto& s : states_) names.push_back(s.name);
  for (const auto& c : controls_) names.push_back(c.name);
  for (const auto& a : algebraics_) names.push_back(a.name);
  for (const auto& p : parameters_) names.push_back(p.name);
  names.push_back("t");
  return names;
}

void DagdpModel::check_stage(int stage) const {
  if (stage < 0 || stage >= stage_count())
    throw IndexOutOfRange("stage index " + std::to_string(stage));
}

bool evaluate(const Proposition& prop, const BooleanAssignment& a) {
  switch (prop.kind()) {
    case Proposition::Kind::Atom: {
      const int s = prop.stage();
      if (s < 0 || static_cast<std::size_t>(s) >= a.selected.size())
        throw InvalidAtom("atom stage outside the assignment");
      return a.selected[static_cast<std::size_t>(s)] == prop.disjunct();
    }
    case Proposition::Kind::Not:
      return !evaluate(prop.children()[0], a);
    case Proposition::Kind::And: {
      for (const auto& c : prop.children())
        if (!evaluate(c, a)) return false;
      return true;
    }
    case Proposition::Kind::Or: {
      for (const auto& c : prop.children())
        if (evaluate(c, a)) return true;
      return false;  // an empty disjunction is false
    }
    case Proposition::Kind::Xor: {
      int count = 0;
      for (const auto& c : prop.children())
        if (evaluate(c, a)) ++count;
      return count == 1;
    }
    case Proposition::Kind::Implies:
      return !evaluate(prop.children()[0], a) || evaluate(prop.children()[1], a);
    case Proposition::Kind::Iff:
      return evaluate(prop.children()[0], a) == evaluate(prop.children()[1], a);
  }
  throw Error("unreachable proposition kind");
}

bool is_feasible(const DagdpModel& model, const BooleanAssignment& a) {
  if (static_cast<int>(a.selected.size()) != model.stage_count())
    throw InvalidAtom("assignment length does not match the stage count");
  for (int s = 0; s < model.stage_count(); ++s) {
    const int r = a.selected[static_cast<std::size_t>(s)];
    if (r < 0 || r >= model.disjunct_count(s))
      throw InvalidAtom("assignment selects a disjunct outside stage " + std::to_string(s + 1));
  }
  for (const Proposition& p : model.propositions())
    if (!evaluate(p, a)) return false;
  return true;
}

std::vector<BooleanAssignment> enumerate_feasible(const DagdpModel& model) {
  const int stages = model.stage_count();
  double product = 1.0;
  for (int s = 0; s < stages; ++s) {
    if (model.disjunct_count(s) == 0) throw InvalidSpec("stage without disjuncts");
    product *= model.disjunct_count(s);
    if (product > 1e6) throw LatticeTooLarge("disjunct product exceeds 1e6");
  }
  std::vector<BooleanAssignment> out;
  BooleanAssignment a;
  a.selected.assign(static_cast<std::size_t>(stages), 0);
  while (true) {
    if (is_feasible(model, a)) out.push_back(a);
    int k = stages - 1;
    for (; k >= 0; --k) {
      auto& v = a.selected[static_cast<std::size_t>(k)];
      if (++v < model.disjunct_count(k)) break;
      v = 0;
    }
    if (k < 0) break;
  }
  return out;
}

}  // namespace dagdp
