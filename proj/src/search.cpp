#include "dagdp/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <limits>
#include <ostream>

namespace dagdp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::string to_string(Neighborhood n) {
  return n == Neighborhood::L2 ? "l2" : "linf";
}

std::string to_string(SearchStatus s) {
  return s == SearchStatus::Optimal ? "optimal" : "time-limit";
}

std::string to_string(TracePhase p) {
  switch (p) {
    case TracePhase::Initial: return "initial";
    case TracePhase::Neighbor: return "neighbor";
    case TracePhase::Line: return "line";
    case TracePhase::Enumerate: return "enumerate";
  }
  return "unknown";
}

void SearchTrace::write_csv(std::ostream& out) const {
  out << "index,phase,point,decode_feasible,solver_status,objective,cumulative_seconds\n";
  for (const TraceRecord& r : records) {
    out << r.index << ',' << to_string(r.phase) << ",\"";
    for (std::size_t i = 0; i < r.point.size(); ++i) {
      if (i) out << ',';
      out << r.point[i];
    }
    out << "\"," << (r.decode_feasible ? 1 : 0) << ','
        << (r.decode_feasible ? to_string(r.solver_status) : "skipped") << ','
        << format_double(r.objective) << ',' << format_double(r.cumulative_seconds) << '\n';
  }
}

std::vector<std::vector<int>> directions(int dimension, Neighborhood n) {
  if (dimension < 1) throw InvalidSpec("direction set needs a positive dimension");
  std::vector<std::vector<int>> dirs;
  if (n == Neighborhood::L2) {
    for (int j = 0; j < dimension; ++j) {
      std::vector<int> plus(static_cast<std::size_t>(dimension), 0);
      plus[static_cast<std::size_t>(j)] = 1;
      dirs.push_back(plus);
      plus[static_cast<std::size_t>(j)] = -1;
      dirs.push_back(std::move(plus));
    }
    return dirs;
  }
  // Linf: {-1,0,1}^d minus the origin, ascending lexicographic.
  std::vector<int> d(static_cast<std::size_t>(dimension), -1);
  while (true) {
    if (std::any_of(d.begin(), d.end(), [](int v) { return v != 0; })) dirs.push_back(d);
    int j = dimension - 1;
    while (j >= 0 && d[static_cast<std::size_t>(j)] == 1) {
      d[static_cast<std::size_t>(j)] = -1;
      --j;
    }
    if (j < 0) break;
    ++d[static_cast<std::size_t>(j)];
  }
  return dirs;
}

std::vector<LatticePoint> neighbors(const LatticePoint& z, const ExternalMap& map,
                                    Neighborhood n, const std::set<LatticePoint>& visited) {
  std::vector<LatticePoint> out;
  for (const std::vector<int>& d : directions(map.dimension, n)) {
    LatticePoint p = z;
    for (int j = 0; j < map.dimension; ++j)
      p.z[static_cast<std::size_t>(j)] += d[static_cast<std::size_t>(j)];
    if (map.in_bounds(p) && !visited.contains(p)) out.push_back(std::move(p));
  }
  return out;
}

namespace {

// One evaluated lattice point, as stored in the trace and compared by the
// search.  A point scores +inf unless it decodes and solves to optimality.
struct Scored {
  LatticePoint point;
  bool decode_feasible = false;
  std::optional<BooleanAssignment> assignment;
  Evaluation eval;
  double score = kInf;
  bool solved = false;  // an NLP solve was attempted (decode was feasible)
};

class SearchDriver {
 public:
  SearchDriver(const ExternalMap& map, const Evaluator& evaluate,
               const SearchSettings& settings)
      : map_(map), evaluate_(evaluate), settings_(settings),
        start_(std::chrono::steady_clock::now()) {}

  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }
  bool out_of_time() const { return elapsed() > settings_.time_limit_seconds; }

  Scored evaluate_point(const LatticePoint& p) const {
    Scored s;
    s.point = p;
    s.assignment = decode(map_, p);
    s.decode_feasible = s.assignment.has_value();
    if (s.decode_feasible) {
      s.eval = evaluate_(p, *s.assignment);
      s.solved = true;
      if (s.eval.status == SolveStatus::Optimal && std::isfinite(s.eval.objective))
        s.score = s.eval.objective;
    }
    return s;
  }

  void record(const Scored& s, TracePhase phase, SearchOutcome& outcome) {
    TraceRecord r;
    r.index = static_cast<int>(outcome.trace.records.size());
    r.phase = phase;
    r.point = s.point.z;
    r.decode_feasible = s.decode_feasible;
    r.solver_status = s.eval.status;
    r.objective = s.score;
    r.cumulative_seconds = elapsed();
    outcome.trace.records.push_back(std::move(r));
    if (s.solved) ++outcome.subproblems_solved;
    visited_.insert(s.point);
  }

  // Evaluate a batch of unvisited points, preserving the given order in the
  // trace and in the returned list regardless of the thread count.
  std::vector<Scored> evaluate_batch(const std::vector<LatticePoint>& points,
                                     TracePhase phase, SearchOutcome& outcome) {
    std::vector<Scored> scored;
    scored.reserve(points.size());
    if (settings_.threads > 1 && points.size() > 1) {
      std::vector<std::future<Scored>> futures;
      futures.reserve(points.size());
      for (const LatticePoint& p : points)
        futures.push_back(std::async(std::launch::async,
                                     [this, p] { return evaluate_point(p); }));
      for (auto& f : futures) scored.push_back(f.get());
    } else {
      for (const LatticePoint& p : points) {
        if (!scored.empty() && out_of_time()) break;  // between solves
        scored.push_back(evaluate_point(p));
      }
    }
    for (const Scored& s : scored) record(s, phase, outcome);
    return scored;
  }

  void adopt(SearchOutcome& outcome, const Scored& s) const {
    outcome.best = s.point;
    outcome.objective = s.score;
    outcome.primal = s.eval.primal;
    if (s.assignment) outcome.assignment = *s.assignment;
  }

  SearchOutcome run(const LatticePoint& z0) {
    SearchOutcome outcome;
    if (!map_.in_bounds(z0))
      throw OutOfBounds("start point (" + z0.render() + ") is outside the map bounds");
    if (!decode(map_, z0))
      throw InfeasibleStart("start point (" + z0.render() + ") violates the model logic");

    Scored incumbent = evaluate_point(z0);
    record(incumbent, TracePhase::Initial, outcome);
    adopt(outcome, incumbent);

    const auto dirs = directions(map_.dimension, settings_.neighborhood);
    while (true) {
      if (out_of_time()) {
        outcome.status = SearchStatus::TimeLimit;
        break;
      }
      // Neighbor round: score every unvisited in-bounds neighbor.
      ++outcome.neighbor_rounds;
      std::vector<LatticePoint> ring =
          neighbors(incumbent.point, map_, settings_.neighborhood, visited_);
      std::vector<Scored> scored = evaluate_batch(ring, TracePhase::Neighbor, outcome);
      if (scored.size() < ring.size()) {  // stopped early on the clock
        outcome.status = SearchStatus::TimeLimit;
        break;
      }
      int winner = -1;
      for (int i = 0; i < static_cast<int>(scored.size()); ++i) {
        const bool improves =
            scored[static_cast<std::size_t>(i)].score <
            incumbent.score - settings_.improvement_tol;
        const bool beats_winner =
            winner < 0 || scored[static_cast<std::size_t>(i)].score <
                              scored[static_cast<std::size_t>(winner)].score;
        if (improves && beats_winner) winner = i;
      }
      if (winner < 0) {
        outcome.status = SearchStatus::Optimal;
        break;
      }
      std::vector<int> step(static_cast<std::size_t>(map_.dimension));
      for (int j = 0; j < map_.dimension; ++j)
        step[static_cast<std::size_t>(j)] =
            scored[static_cast<std::size_t>(winner)].point.z[static_cast<std::size_t>(j)] -
            incumbent.point.z[static_cast<std::size_t>(j)];
      incumbent = scored[static_cast<std::size_t>(winner)];
      adopt(outcome, incumbent);

      // Line search: keep stepping along the winning direction while it
      // keeps improving; the final non-improving solve stays visited.
      ++outcome.line_searches;
      while (true) {
        LatticePoint next = incumbent.point;
        for (int j = 0; j < map_.dimension; ++j)
          next.z[static_cast<std::size_t>(j)] += step[static_cast<std::size_t>(j)];
        if (!map_.in_bounds(next) || visited_.contains(next)) break;
        if (out_of_time()) {
          outcome.status = SearchStatus::TimeLimit;
          outcome.wall_seconds = elapsed();
          return outcome;
        }
        Scored trial = evaluate_point(next);
        record(trial, TracePhase::Line, outcome);
        if (trial.score < incumbent.score - settings_.improvement_tol) {
          incumbent = trial;
          adopt(outcome, incumbent);
        } else {
          break;
        }
      }
    }
    outcome.wall_seconds = elapsed();
    return outcome;
  }

 private:
  const ExternalMap& map_;
  const Evaluator& evaluate_;
  const SearchSettings& settings_;
  std::chrono::steady_clock::time_point start_;
  std::set<LatticePoint> visited_;
};

}  // namespace

SearchOutcome search_lattice(const ExternalMap& map, const LatticePoint& z0,
                             const Evaluator& evaluate, const SearchSettings& settings) {
  SearchDriver driver(map, evaluate, settings);
  return driver.run(z0);
}

namespace {

Evaluator make_nlp_evaluator(const DagdpModel& model, const CollocationScheme& scheme,
                             const SolverSettings& solver) {
  return [&model, scheme, solver](const LatticePoint&, const BooleanAssignment& a) {
    const DiscretizedNlp nlp = transcribe(model, a, scheme);
    SolveResult r = solve(nlp, initial_guess(model, a, scheme), solver);
    Evaluation e;
    e.status = r.status;
    e.objective = r.objective;
    e.primal = std::move(r.primal);
    return e;
  };
}

}  // namespace

SearchOutcome solve_ldsda(const DagdpModel& model, const ExternalMap& map,
                          const CollocationScheme& scheme, const LatticePoint& z0,
                          const SearchSettings& settings) {
  return search_lattice(map, z0, make_nlp_evaluator(model, scheme, settings.solver),
                        settings);
}

SearchOutcome solve_enumerate(const DagdpModel& model, const CollocationScheme& scheme,
                              const SearchSettings& settings) {
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  const Evaluator evaluate = make_nlp_evaluator(model, scheme, settings.solver);

  SearchOutcome outcome;
  outcome.objective = kInf;
  bool first = true;
  for (const BooleanAssignment& a : enumerate_feasible(model)) {
    if (!first && elapsed() > settings.time_limit_seconds) {
      outcome.status = SearchStatus::TimeLimit;
      break;
    }
    first = false;
    const Evaluation e = evaluate(LatticePoint{}, a);
    const double score =
        (e.status == SolveStatus::Optimal && std::isfinite(e.objective)) ? e.objective : kInf;
    TraceRecord r;
    r.index = static_cast<int>(outcome.trace.records.size());
    r.phase = TracePhase::Enumerate;
    r.point = a.modes();
    r.decode_feasible = true;
    r.solver_status = e.status;
    r.objective = score;
    r.cumulative_seconds = elapsed();
    outcome.trace.records.push_back(std::move(r));
    ++outcome.subproblems_solved;
    if (score < outcome.objective) {
      outcome.objective = score;
      outcome.assignment = a;
      outcome.primal = e.primal;
      outcome.best.z = a.modes();
    }
  }
  outcome.wall_seconds = elapsed();
  return outcome;
}

}  // namespace dagdp
