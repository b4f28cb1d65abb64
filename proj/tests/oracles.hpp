// Shared test oracles: finite-difference derivative checks, a random
// expression generator, and brute-force logic enumeration.  Everything here
// is deliberately independent of the library internals it is used to check.
#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dagdp/expr.hpp"
#include "dagdp/model.hpp"

namespace oracles {

// Central finite difference of expr at `point`, step h per coordinate.
inline std::vector<double> central_difference(const dagdp::Expr& expr,
                                              std::vector<double> point,
                                              double h = 1e-6) {
  std::vector<double> fd(point.size(), 0.0);
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = expr.eval(point);
    point[i] = saved - h;
    const double down = expr.eval(point);
    point[i] = saved;
    fd[i] = (up - down) / (2.0 * h);
  }
  return fd;
}

// Random expression trees over n_vars variables, depth-bounded, constructed
// so that div and ln never sit on a singularity (denominators and log
// arguments are kept positive by construction).
class RandomExprGen {
 public:
  RandomExprGen(unsigned seed, int n_vars) : rng_(seed), n_vars_(n_vars) {}

  dagdp::Expr tree(int max_depth) {
    using dagdp::Expr;
    if (max_depth <= 0 || pick_(rng_) < 2) {
      if (pick_(rng_) % 2 == 0) return Expr::constant(constant_(rng_));
      return Expr::variable(var_(rng_) % n_vars_);
    }
    switch (pick_(rng_)) {
      case 2:
        return tree(max_depth - 1) + tree(max_depth - 1);
      case 3:
        return tree(max_depth - 1) - tree(max_depth - 1);
      case 4:
        return tree(max_depth - 1) * tree(max_depth - 1);
      case 5: {
        dagdp::Expr den = tree(max_depth - 1);
        return tree(max_depth - 1) / (den * den + Expr::constant(1.0));
      }
      case 6:
        return Expr::neg(tree(max_depth - 1));
      case 7:
        return Expr::exp(tree(max_depth - 1) * Expr::constant(0.25));
      case 8: {
        dagdp::Expr arg = tree(max_depth - 1);
        return Expr::ln(arg * arg + Expr::constant(0.5));
      }
      case 9:
        return Expr::pow(tree(max_depth - 1), 2.0);
      default:
        return Expr::pow(tree(max_depth - 1), 3.0);
    }
  }

  std::vector<double> point(int n) {
    std::vector<double> p(static_cast<std::size_t>(n));
    for (double& x : p) x = point_(rng_);
    return p;
  }

 private:
  std::mt19937 rng_;
  int n_vars_;
  std::uniform_int_distribution<int> pick_{0, 10};
  std::uniform_int_distribution<int> var_{0, 1 << 20};
  std::uniform_real_distribution<double> constant_{-2.0, 2.0};
  std::uniform_real_distribution<double> point_{-1.5, 1.5};
};

// Exhaustive feasibility count over all mode assignments of a model,
// written against the proposition evaluator only (no enumeration helper).
inline std::vector<std::vector<int>> brute_force_feasible(const dagdp::DagdpModel& model) {
  std::vector<std::vector<int>> out;
  const int stages = model.stage_count();
  std::vector<int> modes(static_cast<std::size_t>(stages), 0);
  while (true) {
    dagdp::BooleanAssignment a{modes};
    bool ok = true;
    for (const auto& prop : model.propositions())
      if (!dagdp::evaluate(prop, a)) {
        ok = false;
        break;
      }
    if (ok) out.push_back(modes);
    int k = stages - 1;
    for (; k >= 0; --k) {
      if (++modes[static_cast<std::size_t>(k)] <
          model.disjunct_count(k))
        break;
      modes[static_cast<std::size_t>(k)] = 0;
    }
    if (k < 0) break;
  }
  return out;
}

}  // namespace oracles
