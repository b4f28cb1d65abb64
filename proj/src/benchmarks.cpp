#include "dagdp/benchmarks.hpp"

#include <fstream>
#include <iostream>

#include <json.hpp>

namespace dagdp {

namespace {

// Shared pieces of the two problems: scalar state x in [0,10] from 1, one
// control u in [-4,4] pinned to 4 on the first element, payoff x^2.
void add_common_declarations(DagdpModel& m) {
  m.add_state({"x", 0.0, 10.0, 1.0});
  m.add_control({"u", -4.0, 4.0, 4.0});
  const Expr x = m.state_ref(0);
  m.set_integrand(x * x);
}

Expr mode_one_rhs(const DagdpModel& m) {
  const Expr x = m.state_ref(0);
  return Expr::neg(x) * Expr::exp(x - 1.0) + m.control_ref(0);
}

Expr mode_two_rhs(const DagdpModel& m) {
  const Expr x = m.state_ref(0);
  return (Expr::pow(x, 3) * 0.5 + m.control_ref(0)) / 20.0;
}

Expr mode_three_rhs(const DagdpModel& m) {
  const Expr x = m.state_ref(0);
  return (Expr::pow(x, 2) + m.control_ref(0)) / (m.time_ref() + 20.0);
}

// once_active(from, to, stage s): picking `to` at s needs `from` at some
// earlier stage (empty OR at s=0 forbids starting in `to`).
Proposition needs_history(int to, int from, int s) {
  std::vector<Proposition> earlier;
  for (int p = 0; p < s; ++p) earlier.push_back(Proposition::atom(p, from));
  return Proposition::implies(Proposition::atom(s, to), Proposition::or_of(std::move(earlier)));
}

// no_return(from, to, stage s): picking `to` at s forbids `from` at every
// later stage.
Proposition no_return(int to, int from, int s, int stages) {
  std::vector<Proposition> later;
  for (int p = s + 1; p < stages; ++p) later.push_back(Proposition::atom(p, from));
  return Proposition::implies(Proposition::atom(s, to),
                              Proposition::not_of(Proposition::or_of(std::move(later))));
}

}  // namespace

DagdpModel make_three_stage_problem() {
  DagdpModel m({0.0, 1.0, 2.0, 3.0});
  add_common_declarations(m);
  for (int s = 0; s < 3; ++s) {
    m.add_disjunct(s, Disjunct{{mode_one_rhs(m)}, {}});
    m.add_disjunct(s, Disjunct{{mode_two_rhs(m)}, {}});
  }
  // Mode 2 only after mode 1 was active, and no switch back: the feasible
  // schedules are exactly (1,1,1), (1,1,2), (1,2,2).
  m.add_proposition(needs_history(1, 0, 1));
  m.add_proposition(needs_history(1, 0, 2));
  m.add_proposition(no_return(1, 0, 0, 3));
  m.add_proposition(no_return(1, 0, 1, 3));
  return m;
}

DagdpModel make_multi_stage_problem(int stages) {
  if (stages < 2) throw InvalidSpec("multi-stage problem needs at least two stages");
  std::vector<double> boundaries;
  for (int s = 0; s <= stages; ++s) boundaries.push_back(static_cast<double>(s));
  DagdpModel m(std::move(boundaries));
  add_common_declarations(m);
  for (int s = 0; s < stages; ++s) {
    m.add_disjunct(s, Disjunct{{mode_one_rhs(m)}, {}});
    m.add_disjunct(s, Disjunct{{mode_two_rhs(m)}, {}});
    m.add_disjunct(s, Disjunct{{mode_three_rhs(m)}, {}});
  }
  // Chain logic 1 -> 2 -> 3: each later mode needs its predecessor active
  // earlier, and a left mode never reappears.
  for (int s = 0; s < stages; ++s) {
    m.add_proposition(needs_history(1, 0, s));
    m.add_proposition(needs_history(2, 1, s));
  }
  for (int s = 0; s + 1 < stages; ++s) {
    m.add_proposition(no_return(1, 0, s, stages));
    m.add_proposition(no_return(2, 1, s, stages));
  }
  return m;
}

namespace {

std::string method_name(BenchMethod m) {
  switch (m) {
    case BenchMethod::LdsdaL2: return "ldsda-l2";
    case BenchMethod::LdsdaLinf: return "ldsda-linf";
    case BenchMethod::Enumerate: return "enumerate";
  }
  return "unknown";
}

}  // namespace

int run_benchmark(const BenchmarkSpec& spec) {
  const bool three_stage = spec.problem == "three-stage";
  if (!three_stage && spec.problem != "multi-stage")
    throw InvalidSpec("unknown problem '" + spec.problem + "'");
  if (!three_stage && (spec.stages < 4 || spec.stages > 9))
    throw InvalidSpec("multi-stage problem supports 4..9 stages");
  const int stages = three_stage ? 3 : spec.stages;
  const DagdpModel model =
      three_stage ? make_three_stage_problem() : make_multi_stage_problem(stages);

  const MappingScheme reform = spec.reformulation.value_or(
      three_stage ? MappingScheme::Ordinal : MappingScheme::Transition);
  const ExternalMap map = build_map(model, reform);

  LatticePoint start;
  if (spec.start) {
    start = *spec.start;
  } else {
    // Ordinal: all-first-mode.  Transition: the staircase 1,2,... (each
    // transition one stage after the previous), feasible by construction.
    for (int j = 0; j < map.dimension; ++j)
      start.z.push_back(reform == MappingScheme::Ordinal ? 1 : j + 1);
  }

  SearchSettings settings;
  settings.neighborhood =
      spec.method == BenchMethod::LdsdaLinf ? Neighborhood::Linf : Neighborhood::L2;
  settings.time_limit_seconds =
      spec.time_limit_seconds > 0.0 ? spec.time_limit_seconds : (three_stage ? 900.0 : 3600.0);
  settings.solver.restarts = spec.restarts;
  settings.solver.seed = spec.seed;
  settings.threads = spec.threads;

  const SearchOutcome outcome =
      spec.method == BenchMethod::Enumerate
          ? solve_enumerate(model, spec.scheme, settings)
          : solve_ldsda(model, map, spec.scheme, start, settings);

  nlohmann::ordered_json doc;
  doc["problem"] = spec.problem;
  doc["stages"] = stages;
  doc["method"] = method_name(spec.method);
  doc["reformulation"] = to_string(reform);
  doc["nfe"] = spec.scheme.n_fe_per_stage;
  doc["ncp"] = spec.scheme.n_cp;
  doc["time_limit_seconds"] = settings.time_limit_seconds;
  doc["restarts"] = spec.restarts;
  doc["seed"] = spec.seed;
  doc["threads"] = spec.threads;
  if (spec.method != BenchMethod::Enumerate) doc["start"] = start.render();
  doc["status"] = to_string(outcome.status);
  doc["objective"] = outcome.objective;
  doc["terminal_point"] = outcome.best.render();
  doc["mode_schedule"] = outcome.assignment.render();
  doc["subproblems_solved"] = outcome.subproblems_solved;
  doc["neighbor_rounds"] = outcome.neighbor_rounds;
  doc["line_searches"] = outcome.line_searches;
  doc["wall_seconds"] = outcome.wall_seconds;

  if (spec.out_path.empty()) {
    std::cout << doc.dump(2) << '\n';
  } else {
    std::ofstream out(spec.out_path);
    if (!out) throw InvalidSpec("cannot open output path '" + spec.out_path + "'");
    out << doc.dump(2) << '\n';
  }
  if (!spec.trace_path.empty()) {
    std::ofstream trace(spec.trace_path);
    if (!trace) throw InvalidSpec("cannot open trace path '" + spec.trace_path + "'");
    outcome.trace.write_csv(trace);
  }
  return outcome.status == SearchStatus::TimeLimit ? 2 : 0;
}

}  // namespace dagdp
