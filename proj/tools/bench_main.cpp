#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "dagdp/benchmarks.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Staged-disjunction benchmark runner"};

  dagdp::BenchmarkSpec spec;
  std::string method = "ldsda-l2";
  std::string reformulation;
  std::string start;

  app.add_option("--problem", spec.problem, "three-stage or multi-stage")
      ->check(CLI::IsMember({"three-stage", "multi-stage"}))
      ->capture_default_str();
  app.add_option("--stages", spec.stages, "stage count (multi-stage only, 4..9)")
      ->capture_default_str();
  app.add_option("--method", method, "ldsda-l2, ldsda-linf, or enumerate")
      ->check(CLI::IsMember({"ldsda-l2", "ldsda-linf", "enumerate"}))
      ->capture_default_str();
  app.add_option("--reformulation", reformulation,
                 "ordinal or transition (default by problem)")
      ->check(CLI::IsMember({"ordinal", "transition"}));
  app.add_option("--start", start, "search start, comma separated (e.g. 1,2)");
  app.add_option("--nfe", spec.scheme.n_fe_per_stage, "finite elements per stage")
      ->capture_default_str();
  app.add_option("--ncp", spec.scheme.n_cp, "collocation points per element (1..5)")
      ->capture_default_str();
  app.add_option("--time-limit", spec.time_limit_seconds,
                 "seconds; 0 picks the problem default (900 / 3600)")
      ->capture_default_str();
  app.add_option("--restarts", spec.restarts, "extra perturbed solves per subproblem")
      ->capture_default_str();
  app.add_option("--seed", spec.seed, "restart perturbation seed")->capture_default_str();
  app.add_option("--threads", spec.threads, "concurrent subproblem solves per round")
      ->capture_default_str();
  app.add_option("--out", spec.out_path, "result JSON path (default stdout)");
  app.add_option("--trace", spec.trace_path, "per-solve trace CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (method == "ldsda-l2") spec.method = dagdp::BenchMethod::LdsdaL2;
    else if (method == "ldsda-linf") spec.method = dagdp::BenchMethod::LdsdaLinf;
    else spec.method = dagdp::BenchMethod::Enumerate;
    if (reformulation == "ordinal") spec.reformulation = dagdp::MappingScheme::Ordinal;
    else if (reformulation == "transition") spec.reformulation = dagdp::MappingScheme::Transition;
    if (!start.empty()) spec.start = dagdp::parse_lattice_point(start);
    return dagdp::run_benchmark(spec);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
