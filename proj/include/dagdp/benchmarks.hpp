#pragma once

#include <optional>
#include <string>

#include "dagdp/search.hpp"

namespace dagdp {

// Three-stage switched system on [0,3]: modes
//   1: dx/dt = -x e^(x-1) + u      2: dx/dt = (0.5 x^3 + u) / 20
// with x(0) = 1, the first element's control fixed to 4, mode-precedence
// logic (mode 2 only after mode 1, never mode 1 after mode 2), and
// objective minimize -integral(x^2).
DagdpModel make_three_stage_problem();

// S-stage extension on [0,S] with a third mode dx/dt = (x^2 + u)/(t + 20)
// and chain logic 1 -> 2 -> 3.
DagdpModel make_multi_stage_problem(int stages);

enum class BenchMethod { LdsdaL2, LdsdaLinf, Enumerate };

struct BenchmarkSpec {
  std::string problem = "three-stage";  // or "multi-stage"
  int stages = 9;                       // multi-stage only, 4..9
  CollocationScheme scheme{30, 3};
  BenchMethod method = BenchMethod::LdsdaL2;
  std::optional<MappingScheme> reformulation;  // default: ordinal for
                                               // three-stage, transition for
                                               // multi-stage
  std::optional<LatticePoint> start;           // default: (1,..,1) ordinal, (1,2) transition
  double time_limit_seconds = 0.0;             // 0 -> 900 (three-stage) / 3600
  int restarts = 0;
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out_path;    // empty -> stdout
  std::string trace_path;  // empty -> no trace file
};

// Executes the selected method and writes the result document and trace.
// Exit code 0 on (locally) optimal termination, 2 on time limit.
int run_benchmark(const BenchmarkSpec& spec);

}  // namespace dagdp
