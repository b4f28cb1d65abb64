#include "dagdp/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <random>

namespace dagdp {

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::IterationLimit: return "iteration-limit";
    case SolveStatus::NumericFailure: return "numeric-failure";
  }
  return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// All constraint tapes concatenated for cache-friendly sweeps.  Node child
// indices stay relative to their segment.  Arithmetic here follows IEEE
// semantics (no domain exceptions): non-finite intermediate values surface
// as a non-finite merit and reject the trial step.
class ConstraintTape {
 public:
  explicit ConstraintTape(const std::vector<Expr>& constraints) {
    seg_.reserve(constraints.size() + 1);
    seg_.push_back(0);
    std::size_t total = 0;
    for (const Expr& c : constraints) total += c.size();
    nodes_.reserve(total);
    for (const Expr& c : constraints) {
      nodes_.insert(nodes_.end(), c.nodes().begin(), c.nodes().end());
      seg_.push_back(static_cast<int>(nodes_.size()));
    }
    values_.resize(nodes_.size());
    adjoints_.resize(nodes_.size());
    // Sparsity: the sorted set of variables each constraint touches.
    rows_.resize(constraints.size());
    for (int ci = 0; ci < count(); ++ci) {
      std::vector<int>& row = rows_[static_cast<std::size_t>(ci)];
      for (int i = seg_[static_cast<std::size_t>(ci)]; i < seg_[static_cast<std::size_t>(ci) + 1]; ++i)
        if (nodes_[static_cast<std::size_t>(i)].op == ExprOp::Variable)
          row.push_back(nodes_[static_cast<std::size_t>(i)].a);
      std::sort(row.begin(), row.end());
      row.erase(std::unique(row.begin(), row.end()), row.end());
    }
  }

  int count() const { return static_cast<int>(seg_.size()) - 1; }

  // Per-constraint variable index lists (the Jacobian sparsity pattern).
  const std::vector<std::vector<int>>& sparsity() const { return rows_; }

  // Forward sweep of every constraint; returns false if any value is
  // non-finite.
  bool forward(std::span<const double> x, std::vector<double>& c_out) {
    bool finite = true;
    for (int ci = 0; ci < count(); ++ci) {
      const int b = seg_[static_cast<std::size_t>(ci)];
      const int e = seg_[static_cast<std::size_t>(ci) + 1];
      for (int i = b; i < e; ++i) {
        const ExprNode& n = nodes_[static_cast<std::size_t>(i)];
        double v;
        switch (n.op) {
          case ExprOp::Constant: v = n.value; break;
          case ExprOp::Variable: v = x[static_cast<std::size_t>(n.a)]; break;
          case ExprOp::Neg: v = -values_[static_cast<std::size_t>(b + n.a)]; break;
          case ExprOp::Exp: v = std::exp(values_[static_cast<std::size_t>(b + n.a)]); break;
          case ExprOp::Ln: v = std::log(values_[static_cast<std::size_t>(b + n.a)]); break;
          case ExprOp::Add:
            v = values_[static_cast<std::size_t>(b + n.a)] + values_[static_cast<std::size_t>(b + n.b)];
            break;
          case ExprOp::Sub:
            v = values_[static_cast<std::size_t>(b + n.a)] - values_[static_cast<std::size_t>(b + n.b)];
            break;
          case ExprOp::Mul:
            v = values_[static_cast<std::size_t>(b + n.a)] * values_[static_cast<std::size_t>(b + n.b)];
            break;
          case ExprOp::Div:
            v = values_[static_cast<std::size_t>(b + n.a)] / values_[static_cast<std::size_t>(b + n.b)];
            break;
          case ExprOp::Pow: {
            const double base = values_[static_cast<std::size_t>(b + n.a)];
            v = n.value == 2.0   ? base * base
                : n.value == 3.0 ? base * base * base
                                 : std::pow(base, n.value);
            break;
          }
          default: v = 0.0; break;
        }
        values_[static_cast<std::size_t>(i)] = v;
      }
      const double root = values_[static_cast<std::size_t>(e - 1)];
      c_out[static_cast<std::size_t>(ci)] = root;
      if (!std::isfinite(root)) finite = false;
    }
    return finite;
  }

  // Forward directional derivative of every constraint at the point of the
  // last forward() call: out[ci] = (J v)_ci.
  void jvp(std::span<const double> v, std::vector<double>& out) {
    dvalues_.resize(nodes_.size());
    for (int ci = 0; ci < count(); ++ci) {
      const int b = seg_[static_cast<std::size_t>(ci)];
      const int e = seg_[static_cast<std::size_t>(ci) + 1];
      for (int i = b; i < e; ++i) {
        const ExprNode& n = nodes_[static_cast<std::size_t>(i)];
        double d;
        switch (n.op) {
          case ExprOp::Constant: d = 0.0; break;
          case ExprOp::Variable: d = v[static_cast<std::size_t>(n.a)]; break;
          case ExprOp::Neg: d = -dvalues_[static_cast<std::size_t>(b + n.a)]; break;
          case ExprOp::Exp:
            d = dvalues_[static_cast<std::size_t>(b + n.a)] *
                values_[static_cast<std::size_t>(i)];
            break;
          case ExprOp::Ln:
            d = dvalues_[static_cast<std::size_t>(b + n.a)] /
                values_[static_cast<std::size_t>(b + n.a)];
            break;
          case ExprOp::Add:
            d = dvalues_[static_cast<std::size_t>(b + n.a)] +
                dvalues_[static_cast<std::size_t>(b + n.b)];
            break;
          case ExprOp::Sub:
            d = dvalues_[static_cast<std::size_t>(b + n.a)] -
                dvalues_[static_cast<std::size_t>(b + n.b)];
            break;
          case ExprOp::Mul:
            d = dvalues_[static_cast<std::size_t>(b + n.a)] *
                    values_[static_cast<std::size_t>(b + n.b)] +
                values_[static_cast<std::size_t>(b + n.a)] *
                    dvalues_[static_cast<std::size_t>(b + n.b)];
            break;
          case ExprOp::Div: {
            const double denom = values_[static_cast<std::size_t>(b + n.b)];
            d = (dvalues_[static_cast<std::size_t>(b + n.a)] -
                 values_[static_cast<std::size_t>(i)] *
                     dvalues_[static_cast<std::size_t>(b + n.b)]) /
                denom;
            break;
          }
          case ExprOp::Pow: {
            const double base = values_[static_cast<std::size_t>(b + n.a)];
            const double g = n.value == 2.0   ? 2.0 * base
                             : n.value == 3.0 ? 3.0 * base * base
                                              : n.value * std::pow(base, n.value - 1.0);
            d = g * dvalues_[static_cast<std::size_t>(b + n.a)];
            break;
          }
          default: d = 0.0; break;
        }
        dvalues_[static_cast<std::size_t>(i)] = d;
      }
      out[static_cast<std::size_t>(ci)] = dvalues_[static_cast<std::size_t>(e - 1)];
    }
  }

  // Second-order reverse sweep (reverse over the forward tangent): for the
  // composite sum_i psi_i(c_i(x)) this accumulates
  //   sum_i [ wdot_i * grad c_i + w_i * (Hess c_i) v ]
  // into out, where v is the tangent passed to the preceding jvp() call,
  // w_i the adjoint seeds and wdot_i their tangents.  With w = psi'(c) and
  // wdot = psi'' * (J v) this is the exact Hessian-vector product of the
  // constraint part of the merit.
  void hvp_accumulate(const std::vector<double>& w, const std::vector<double>& wdot,
                      std::span<double> out) {
    tadjoints_.resize(nodes_.size());
    for (int ci = 0; ci < count(); ++ci) {
      const int b = seg_[static_cast<std::size_t>(ci)];
      const int e = seg_[static_cast<std::size_t>(ci) + 1];
      for (int i = b; i < e; ++i) {
        adjoints_[static_cast<std::size_t>(i)] = 0.0;
        tadjoints_[static_cast<std::size_t>(i)] = 0.0;
      }
      adjoints_[static_cast<std::size_t>(e - 1)] = w[static_cast<std::size_t>(ci)];
      tadjoints_[static_cast<std::size_t>(e - 1)] = wdot[static_cast<std::size_t>(ci)];
      for (int i = e - 1; i >= b; --i) {
        const double a = adjoints_[static_cast<std::size_t>(i)];
        const double t = tadjoints_[static_cast<std::size_t>(i)];
        if (a == 0.0 && t == 0.0) continue;
        const ExprNode& n = nodes_[static_cast<std::size_t>(i)];
        const auto va = [&] { return values_[static_cast<std::size_t>(b + n.a)]; };
        const auto vb = [&] { return values_[static_cast<std::size_t>(b + n.b)]; };
        const auto da = [&] { return dvalues_[static_cast<std::size_t>(b + n.a)]; };
        const auto db = [&] { return dvalues_[static_cast<std::size_t>(b + n.b)]; };
        auto push = [&](int32_t child, double dadj, double dtan) {
          adjoints_[static_cast<std::size_t>(b + child)] += dadj;
          tadjoints_[static_cast<std::size_t>(b + child)] += dtan;
        };
        switch (n.op) {
          case ExprOp::Constant: break;
          case ExprOp::Variable: out[static_cast<std::size_t>(n.a)] += t; break;
          case ExprOp::Neg: push(n.a, -a, -t); break;
          case ExprOp::Exp: {
            const double vi = values_[static_cast<std::size_t>(i)];
            const double di = dvalues_[static_cast<std::size_t>(i)];
            push(n.a, a * vi, t * vi + a * di);
            break;
          }
          case ExprOp::Ln:
            push(n.a, a / va(), t / va() - a * da() / (va() * va()));
            break;
          case ExprOp::Add:
            push(n.a, a, t);
            push(n.b, a, t);
            break;
          case ExprOp::Sub:
            push(n.a, a, t);
            push(n.b, -a, -t);
            break;
          case ExprOp::Mul:
            push(n.a, a * vb(), t * vb() + a * db());
            push(n.b, a * va(), t * va() + a * da());
            break;
          case ExprOp::Div: {
            const double vi = values_[static_cast<std::size_t>(i)];
            const double di = dvalues_[static_cast<std::size_t>(i)];
            push(n.a, a / vb(), t / vb() - a * db() / (vb() * vb()));
            push(n.b, -a * vi / vb(),
                 -t * vi / vb() - a * di / vb() + a * vi * db() / (vb() * vb()));
            break;
          }
          case ExprOp::Pow: {
            if (n.value == 2.0) {
              push(n.a, 2.0 * a * va(), 2.0 * (t * va() + a * da()));
            } else if (n.value == 3.0) {
              push(n.a, 3.0 * a * va() * va(),
                   3.0 * (t * va() * va() + 2.0 * a * va() * da()));
            } else {
              const double p1 = n.value * std::pow(va(), n.value - 1.0);
              const double p2 = n.value * (n.value - 1.0) * std::pow(va(), n.value - 2.0);
              push(n.a, a * p1, t * p1 + a * p2 * da());
            }
            break;
          }
          default: break;
        }
      }
    }
  }

  // Reverse sweep of constraint ci using the forward values already in
  // place; accumulates seed * dc_i/dx into grad.
  void backprop(int ci, double seed, std::span<double> grad) {
    const int b = seg_[static_cast<std::size_t>(ci)];
    const int e = seg_[static_cast<std::size_t>(ci) + 1];
    for (int i = b; i < e; ++i) adjoints_[static_cast<std::size_t>(i)] = 0.0;
    adjoints_[static_cast<std::size_t>(e - 1)] = seed;
    for (int i = e - 1; i >= b; --i) {
      const double a = adjoints_[static_cast<std::size_t>(i)];
      if (a == 0.0) continue;
      const ExprNode& n = nodes_[static_cast<std::size_t>(i)];
      switch (n.op) {
        case ExprOp::Constant: break;
        case ExprOp::Variable: grad[static_cast<std::size_t>(n.a)] += a; break;
        case ExprOp::Neg: adjoints_[static_cast<std::size_t>(b + n.a)] -= a; break;
        case ExprOp::Exp:
          adjoints_[static_cast<std::size_t>(b + n.a)] += a * values_[static_cast<std::size_t>(i)];
          break;
        case ExprOp::Ln:
          adjoints_[static_cast<std::size_t>(b + n.a)] += a / values_[static_cast<std::size_t>(b + n.a)];
          break;
        case ExprOp::Add:
          adjoints_[static_cast<std::size_t>(b + n.a)] += a;
          adjoints_[static_cast<std::size_t>(b + n.b)] += a;
          break;
        case ExprOp::Sub:
          adjoints_[static_cast<std::size_t>(b + n.a)] += a;
          adjoints_[static_cast<std::size_t>(b + n.b)] -= a;
          break;
        case ExprOp::Mul:
          adjoints_[static_cast<std::size_t>(b + n.a)] += a * values_[static_cast<std::size_t>(b + n.b)];
          adjoints_[static_cast<std::size_t>(b + n.b)] += a * values_[static_cast<std::size_t>(b + n.a)];
          break;
        case ExprOp::Div: {
          const double denom = values_[static_cast<std::size_t>(b + n.b)];
          adjoints_[static_cast<std::size_t>(b + n.a)] += a / denom;
          adjoints_[static_cast<std::size_t>(b + n.b)] -=
              a * values_[static_cast<std::size_t>(i)] / denom;
          break;
        }
        case ExprOp::Pow: {
          const double base = values_[static_cast<std::size_t>(b + n.a)];
          const double d = n.value == 2.0   ? 2.0 * base
                           : n.value == 3.0 ? 3.0 * base * base
                                            : n.value * std::pow(base, n.value - 1.0);
          adjoints_[static_cast<std::size_t>(b + n.a)] += a * d;
          break;
        }
        default: break;
      }
    }
  }

 private:
  std::vector<ExprNode> nodes_;
  std::vector<int> seg_;
  std::vector<double> values_;
  std::vector<double> dvalues_;
  std::vector<double> adjoints_;
  std::vector<double> tadjoints_;
  std::vector<std::vector<int>> rows_;
};

// Augmented-Lagrangian merit over the NLP with the current multipliers.
class AugLag {
 public:
  explicit AugLag(const DiscretizedNlp& nlp)
      : nlp_(nlp),
        tape_(nlp.constraints()),
        obj_tape_({nlp.objective()}),
        c_(nlp.constraints().size(), 0.0),
        lambda_(nlp.constraints().size(), 0.0) {}

  int n_cons() const { return tape_.count(); }
  std::vector<double>& lambda() { return lambda_; }
  const std::vector<double>& c() const { return c_; }
  double mu = 10.0;

  double max_violation() const {
    double v = 0.0;
    for (double ci : c_) v = std::max(v, std::abs(ci));
    return v;
  }

  // Merit value only; +inf when any quantity is non-finite.
  double value(std::span<const double> x) {
    double obj;
    if (!eval_objective(x, obj)) return kInf;
    if (!tape_.forward(x, c_)) return kInf;
    double total = obj;
    for (std::size_t i = 0; i < c_.size(); ++i)
      total += lambda_[i] * c_[i] + 0.5 * mu * c_[i] * c_[i];
    return std::isfinite(total) ? total : kInf;
  }

  // Merit and gradient; returns +inf (gradient invalid) on non-finite.
  // Also leaves both tapes evaluated at x, which exact_hessian_apply relies
  // on.
  double value_and_gradient(std::span<const double> x, std::span<double> grad) {
    double obj;
    if (!eval_objective(x, obj)) return kInf;
    if (!tape_.forward(x, c_)) return kInf;
    if (!obj_tape_.forward(x, obj_value_)) return kInf;
    std::fill(grad.begin(), grad.end(), 0.0);
    nlp_.objective().backprop(1.0, grad, obj_scratch_);
    double total = obj;
    for (int i = 0; i < n_cons(); ++i) {
      const double ci = c_[static_cast<std::size_t>(i)];
      total += lambda_[static_cast<std::size_t>(i)] * ci + 0.5 * mu * ci * ci;
      tape_.backprop(i, lambda_[static_cast<std::size_t>(i)] + mu * ci, grad);
    }
    if (!std::isfinite(total)) return kInf;
    for (double g : grad)
      if (!std::isfinite(g)) return kInf;
    return total;
  }

  // Diagonal of the Gauss-Newton Hessian model mu * J^T J (+ zero objective
  // curvature), used to precondition the inner CG solves.
  void gauss_newton_diagonal(std::span<const double> x, std::vector<double>& diag) {
    diag.assign(x.size(), 0.0);
    if (!tape_.forward(x, c_)) return;
    row_.assign(x.size(), 0.0);
    for (int i = 0; i < n_cons(); ++i) {
      tape_.backprop(i, 1.0, row_);
      for (std::size_t j = 0; j < row_.size(); ++j) {
        diag[j] += mu * row_[j] * row_[j];
        row_[j] = 0.0;
      }
    }
  }

  // Exact Hessian-vector product of the constraint part of the merit
  // (lambda^T c + mu/2 ||c||^2) at the point of the most recent forward
  // sweep.  The objective's curvature is not included (it is linear in the
  // transcribed NLPs); the quasi-Newton pairs absorb any difference.
  // Gauss-Newton application out = mu * J' J v.  Dropping the
  // second-derivative terms (whose weights lambda + mu*c change sign) keeps
  // the operator positive semidefinite, which the seed CG solve requires.
  void hessian_apply(const std::vector<double>& v, std::vector<double>& out) {
    jw_.resize(c_.size());
    tape_.jvp(v, jw_);
    w_.resize(c_.size());
    wdot_.resize(c_.size());
    for (std::size_t i = 0; i < c_.size(); ++i) {
      w_[i] = 0.0;
      wdot_[i] = mu * jw_[i];
    }
    std::fill(out.begin(), out.end(), 0.0);
    tape_.hvp_accumulate(w_, wdot_, out);
  }

  // Exact merit Hessian-vector product at the point of the last
  // value_and_gradient call: sum_i (lambda_i + mu c_i) Hess(c_i) v
  // + mu J'J v + Hess(f) v.  Used by the banded seed extraction; unlike the
  // Gauss-Newton product it can be indefinite, which the caller's damping
  // loop absorbs.
  void exact_hessian_apply(const std::vector<double>& v, std::vector<double>& out) {
    jw_.resize(c_.size());
    tape_.jvp(v, jw_);
    w_.resize(c_.size());
    wdot_.resize(c_.size());
    for (std::size_t i = 0; i < c_.size(); ++i) {
      w_[i] = lambda_[i] + mu * c_[i];
      wdot_[i] = mu * jw_[i];
    }
    std::fill(out.begin(), out.end(), 0.0);
    tape_.hvp_accumulate(w_, wdot_, out);
    obj_tape_.jvp(v, obj_jw_);
    obj_tape_.hvp_accumulate(obj_w_, obj_wdot_, out);
  }

  // Variable-support rows used to order and bound the banded seed: one row
  // per constraint plus one for the objective.
  const std::vector<std::vector<int>>& jacobian_sparsity() const { return tape_.sparsity(); }
  const std::vector<int>& objective_row() const { return obj_tape_.sparsity().front(); }

  // Plain objective at x.
  bool eval_objective(std::span<const double> x, double& out) {
    try {
      out = nlp_.objective().eval(x, obj_scratch_);
    } catch (const Error&) {
      return false;
    }
    return std::isfinite(out);
  }

 private:
  const DiscretizedNlp& nlp_;
  ConstraintTape tape_;
  ConstraintTape obj_tape_;  // one-row tape for the objective's curvature
  std::vector<double> c_;
  std::vector<double> lambda_;
  std::vector<double> row_;
  std::vector<double> jw_;
  std::vector<double> w_, wdot_;
  std::vector<double> obj_value_ = std::vector<double>(1, 0.0);
  std::vector<double> obj_jw_ = std::vector<double>(1, 0.0);
  const std::vector<double> obj_w_ = std::vector<double>(1, 1.0);
  const std::vector<double> obj_wdot_ = std::vector<double>(1, 0.0);
  EvalScratch obj_scratch_;
};

struct InnerReport {
  double merit = kInf;
  double projected_gradient = kInf;
  int iterations = 0;
  bool converged = false;  // projected gradient under the inner tolerance
  bool stalled = false;    // line search found no acceptable step
  bool finite = true;
};

// Direct banded treatment of the merit Hessian.  The constraint graph of a
// collocation transcription is a chain of small element blocks, so a
// bandwidth-reducing (reverse Cuthill-McKee) ordering makes the Hessian
// narrow-banded; its entries are recovered exactly from bandwidth+1
// Hessian-vector probes (comb vectors, one color per residue class, with
// the overlap between paired columns removed by symmetry), and a banded
// Cholesky factorization then gives exact seed directions - far cheaper
// than iterating a Krylov method over tape sweeps.
class BandedHessian {
 public:
  // Compute the ordering from the sparsity pattern.  Returns false when the
  // resulting bandwidth would make direct factorization unprofitable.
  bool setup(const std::vector<std::vector<int>>& rows, int n) {
    n_ = n;
    // Adjacency: variables sharing a constraint are neighbours.
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (const auto& row : rows)
      for (std::size_t a = 0; a < row.size(); ++a)
        for (std::size_t b = a + 1; b < row.size(); ++b) {
          adj[static_cast<std::size_t>(row[a])].push_back(row[b]);
          adj[static_cast<std::size_t>(row[b])].push_back(row[a]);
        }
    for (auto& list : adj) {
      std::sort(list.begin(), list.end());
      list.erase(std::unique(list.begin(), list.end()), list.end());
    }
    // Reverse Cuthill-McKee: breadth-first from a low-degree vertex of each
    // component, neighbours in increasing degree order, order reversed.
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(n));
    std::vector<char> seen(static_cast<std::size_t>(n), 0);
    std::vector<int> queue;
    std::vector<int> by_degree(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) by_degree[static_cast<std::size_t>(i)] = i;
    std::sort(by_degree.begin(), by_degree.end(), [&](int a, int b) {
      return adj[static_cast<std::size_t>(a)].size() < adj[static_cast<std::size_t>(b)].size();
    });
    for (int start : by_degree) {
      if (seen[static_cast<std::size_t>(start)]) continue;
      queue.clear();
      queue.push_back(start);
      seen[static_cast<std::size_t>(start)] = 1;
      for (std::size_t head = 0; head < queue.size(); ++head) {
        const int v = queue[head];
        order.push_back(v);
        auto neighbours = adj[static_cast<std::size_t>(v)];
        std::sort(neighbours.begin(), neighbours.end(), [&](int a, int b) {
          return adj[static_cast<std::size_t>(a)].size() <
                 adj[static_cast<std::size_t>(b)].size();
        });
        for (int w : neighbours)
          if (!seen[static_cast<std::size_t>(w)]) {
            seen[static_cast<std::size_t>(w)] = 1;
            queue.push_back(w);
          }
      }
    }
    std::reverse(order.begin(), order.end());
    perm_ = std::move(order);
    inv_.assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; ++i) inv_[static_cast<std::size_t>(perm_[static_cast<std::size_t>(i)])] = i;
    bw_ = 0;
    for (const auto& row : rows) {
      int lo = n, hi = -1;
      for (int v : row) {
        lo = std::min(lo, inv_[static_cast<std::size_t>(v)]);
        hi = std::max(hi, inv_[static_cast<std::size_t>(v)]);
      }
      if (hi >= 0) bw_ = std::max(bw_, hi - lo);
    }
    if (bw_ > 150 || bw_ >= n) return false;
    const std::size_t cells = static_cast<std::size_t>(bw_ + 1) * static_cast<std::size_t>(n_);
    band_.assign(cells, 0.0);
    raw_.assign(cells, 0.0);
    hv_.assign(static_cast<std::size_t>(bw_ + 1),
               std::vector<double>(static_cast<std::size_t>(n_), 0.0));
    comb_.resize(static_cast<std::size_t>(n_));
    y_.resize(static_cast<std::size_t>(n_));
    return true;
  }

  // Recover the banded Hessian from bandwidth+1 Hessian-vector products.
  // Each comb vector activates one residue class of the permuted ordering;
  // paired columns of the same class are bandwidth+1 apart, so their overlap
  // within a row is a single already-recovered entry, removed right to left.
  // Returns false when a probe produced a non-finite value.
  template <typename Probe>
  bool extract(Probe&& probe) {
    const int ncolor = bw_ + 1;
    for (int k = 0; k < ncolor; ++k) {
      for (int i = 0; i < n_; ++i)
        comb_[static_cast<std::size_t>(perm_[static_cast<std::size_t>(i)])] =
            i % ncolor == k ? 1.0 : 0.0;
      probe(comb_, hv_[static_cast<std::size_t>(k)]);
    }
    const std::size_t stride = static_cast<std::size_t>(n_);
    bool finite = true;
    for (int j = n_ - 1; j >= 0; --j) {
      const std::vector<double>& col = hv_[static_cast<std::size_t>(j % ncolor)];
      const int dmax = std::min(bw_, n_ - 1 - j);
      for (int d = 0; d <= dmax; ++d) {
        double val = col[static_cast<std::size_t>(perm_[static_cast<std::size_t>(j + d)])];
        if (d >= 1 && j + bw_ + 1 < n_)
          val -= raw_[static_cast<std::size_t>(bw_ + 1 - d) * stride +
                      static_cast<std::size_t>(j + d)];
        raw_[static_cast<std::size_t>(d) * stride + static_cast<std::size_t>(j)] = val;
        finite = finite && std::isfinite(val);
      }
    }
    return finite;
  }

  // Assemble the extracted Hessian + diag(extra) in the permuted ordering
  // (identity rows for binding coordinates) and factor in place.  Returns
  // false on a non-positive pivot, which doubles as the indefiniteness
  // signal that drives the damping escalation.
  bool factor(const std::vector<double>& extra_diag, const std::vector<char>& binding) {
    const std::size_t stride = static_cast<std::size_t>(n_);
    for (int j = 0; j < n_; ++j) {
      const int oj = perm_[static_cast<std::size_t>(j)];
      const bool bj = binding[static_cast<std::size_t>(oj)] != 0;
      band_[static_cast<std::size_t>(j)] =
          bj ? 1.0
             : raw_[static_cast<std::size_t>(j)] + extra_diag[static_cast<std::size_t>(oj)];
      const int dmax = std::min(bw_, n_ - 1 - j);
      for (int d = 1; d <= dmax; ++d) {
        const bool bi =
            binding[static_cast<std::size_t>(perm_[static_cast<std::size_t>(j + d)])] != 0;
        band_[static_cast<std::size_t>(d) * stride + static_cast<std::size_t>(j)] =
            bj || bi ? 0.0
                     : raw_[static_cast<std::size_t>(d) * stride + static_cast<std::size_t>(j)];
      }
    }
    // In-place banded Cholesky (lower storage by diagonal).
    for (int j = 0; j < n_; ++j) {
      double diag = band_[static_cast<std::size_t>(j)];
      const int kmin = std::max(0, j - bw_);
      for (int k = kmin; k < j; ++k) {
        const double ljk = band_[static_cast<std::size_t>(j - k) * stride + static_cast<std::size_t>(k)];
        diag -= ljk * ljk;
      }
      if (!(diag > 0.0) || !std::isfinite(diag)) return false;
      const double dj = std::sqrt(diag);
      band_[static_cast<std::size_t>(j)] = dj;
      const int imax = std::min(n_ - 1, j + bw_);
      for (int i = j + 1; i <= imax; ++i) {
        double v = band_[static_cast<std::size_t>(i - j) * stride + static_cast<std::size_t>(j)];
        const int k0 = std::max({0, i - bw_, j - bw_});
        for (int k = k0; k < j; ++k)
          v -= band_[static_cast<std::size_t>(i - k) * stride + static_cast<std::size_t>(k)] *
               band_[static_cast<std::size_t>(j - k) * stride + static_cast<std::size_t>(k)];
        band_[static_cast<std::size_t>(i - j) * stride + static_cast<std::size_t>(j)] = v / dj;
      }
    }
    return true;
  }

  // Solve A out = q with the current factorization (all in original
  // variable order).
  void solve(const std::vector<double>& q, std::vector<double>& out) {
    const std::size_t stride = static_cast<std::size_t>(n_);
    for (int i = 0; i < n_; ++i)
      y_[static_cast<std::size_t>(i)] = q[static_cast<std::size_t>(perm_[static_cast<std::size_t>(i)])];
    for (int i = 0; i < n_; ++i) {
      double v = y_[static_cast<std::size_t>(i)];
      const int k0 = std::max(0, i - bw_);
      for (int k = k0; k < i; ++k)
        v -= band_[static_cast<std::size_t>(i - k) * stride + static_cast<std::size_t>(k)] *
             y_[static_cast<std::size_t>(k)];
      y_[static_cast<std::size_t>(i)] = v / band_[static_cast<std::size_t>(i)];
    }
    for (int i = n_ - 1; i >= 0; --i) {
      double v = y_[static_cast<std::size_t>(i)];
      const int kmax = std::min(n_ - 1, i + bw_);
      for (int k = i + 1; k <= kmax; ++k)
        v -= band_[static_cast<std::size_t>(k - i) * stride + static_cast<std::size_t>(i)] *
             y_[static_cast<std::size_t>(k)];
      y_[static_cast<std::size_t>(i)] = v / band_[static_cast<std::size_t>(i)];
    }
    out.resize(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i)
      out[static_cast<std::size_t>(perm_[static_cast<std::size_t>(i)])] =
          y_[static_cast<std::size_t>(i)];
  }

  int bandwidth() const { return bw_; }

 private:
  int n_ = 0;
  int bw_ = 0;
  std::vector<int> perm_, inv_;  // perm_[new] = old, inv_[old] = new
  std::vector<double> raw_;      // extracted Hessian band, raw_[d*n + j] = H(j+d, j)
  std::vector<double> band_;     // factored copy, same layout
  std::vector<std::vector<double>> hv_;  // probe products, original indexing
  std::vector<double> comb_;
  std::vector<double> y_;
};

class ProjectedLbfgs {
 public:
  ProjectedLbfgs(const DiscretizedNlp& nlp, int memory)
      : lb_(nlp.lower()), ub_(nlp.upper()), memory_(std::max(0, memory)) {}

  void project(std::vector<double>& x) const {
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lb_[i], ub_[i]);
  }

  double projected_gradient_norm(const std::vector<double>& x,
                                 const std::vector<double>& g) const {
    double norm = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double step = std::clamp(x[i] - g[i], lb_[i], ub_[i]) - x[i];
      norm = std::max(norm, std::abs(step));
    }
    return norm;
  }

  // Minimize the merit from x in place.
  InnerReport minimize(AugLag& merit, std::vector<double>& x, double tol, int max_iters,
                       std::vector<double>* merit_history) {
    const std::size_t n = x.size();
    InnerReport report;
    pairs_.clear();
    std::vector<double> g(n), g_new(n), xt(n), d(n), masked(n);

    double f = merit.value_and_gradient(x, g);
    if (!std::isfinite(f)) {
      report.finite = false;
      return report;
    }
    merit.gauss_newton_diagonal(x, precond_);
    double dmax = 0.0;
    for (double v : precond_) dmax = std::max(dmax, v);
    delta_ = std::max(1e-8 * dmax, 1e-12);
    for (double& v : precond_) v += delta_;
    if (!banded_tried_ && merit.n_cons() > 0) {
      banded_tried_ = true;
      std::vector<std::vector<int>> rows = merit.jacobian_sparsity();
      rows.push_back(merit.objective_row());
      banded_ok_ = banded_.setup(rows, static_cast<int>(n));
      if (std::getenv("DAGDP_INNER_DEBUG") != nullptr)
        std::fprintf(stderr, "    seed solve: %s (bandwidth %d)\n",
                     banded_ok_ ? "banded direct" : "conjugate gradient", banded_.bandwidth());
    }
    // Initial step cap: a modest multiple of the box/gradient scale.  The
    // adaptation below doubles it on full steps, so starting small is cheap
    // while starting huge lets ill-scaled directions through.
    double box = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double w = ub_[i] - lb_[i];
      if (std::isfinite(w)) box = std::max(box, w);
    }
    cap0_ = std::clamp(box, 1.0, 10.0);
    cap_ = cap0_;

    const bool debug = std::getenv("DAGDP_INNER_DEBUG") != nullptr;
    double last_alpha = 0.0, last_dnorm = 0.0;
    for (int it = 0; it < max_iters; ++it) {
      report.merit = f;
      report.projected_gradient = projected_gradient_norm(x, g);
      if (debug && (it < 30 || it % 25 == 0)) {
        int nbind = 0;
        for (char b : binding_) nbind += b != 0;
        std::size_t imax = 0;
        double gmax = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double lo = lb_[i], up = ub_[i];
          double gi = g[i];
          if (x[i] <= lo && gi > 0.0) gi = 0.0;
          if (x[i] >= up && gi < 0.0) gi = 0.0;
          if (std::abs(gi) > gmax) { gmax = std::abs(gi); imax = i; }
        }
        std::fprintf(stderr,
                     "    it %4d merit=%+.10e pg=%.3e pairs=%zu alpha=%.2e dnorm=%.2e "
                     "bind=%d cg=%d res=%.1e imax=%zu x=%+.3e g=%+.3e d=%+.3e\n",
                     it, f, report.projected_gradient, pairs_.size(), last_alpha,
                     last_dnorm, nbind, cg_iters_, cg_residual_, imax, x[imax], g[imax],
                     d[imax]);
      }
      if (report.projected_gradient <= tol) {
        report.converged = true;
        report.iterations = it;
        return report;
      }

      // Zero the gradient on firmly bound-active coordinates so the
      // quasi-Newton direction lives in the free subspace.
      binding_.assign(n, 0);
      for (std::size_t i = 0; i < n; ++i) {
        const bool at_lower = x[i] <= lb_[i] && g[i] > 0.0;
        const bool at_upper = x[i] >= ub_[i] && g[i] < 0.0;
        binding_[i] = (at_lower || at_upper) ? 1 : 0;
        masked[i] = binding_[i] ? 0.0 : g[i];
      }
      banded_have_vals_ = false;  // x and the binding set moved
      const double seed_lambda_prev = lm_lambda_;
      two_loop(merit, masked, d);
      // The quasi-Newton pairs are corrections to the seed; when the seed's
      // damping jumps regimes the old pairs describe a different matrix, so
      // drop them rather than letting them distort fresh directions.
      const double lam_ratio = (lm_lambda_ + 1e-12) / (seed_lambda_prev + 1e-12);
      if (lam_ratio > 4.0 || lam_ratio < 0.25) pairs_.clear();
      for (std::size_t i = 0; i < n; ++i)
        if (masked[i] == 0.0 && (x[i] <= lb_[i] || x[i] >= ub_[i])) d[i] = 0.0;

      auto directional = [&] {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += d[i] * masked[i];
        return acc;
      };
      double descent = directional();
      double dnorm = 0.0, gnorm = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        dnorm = std::max(dnorm, std::abs(d[i]));
        gnorm = std::max(gnorm, std::abs(masked[i]));
      }
      if (!(descent < -1e-14 * dnorm * gnorm) || !std::isfinite(descent)) {
        // Not a descent direction: drop the pairs, retry from the seed
        // matrix, then fall back to plain steepest descent.
        pairs_.clear();
        two_loop(merit, masked, d);
        for (std::size_t i = 0; i < n; ++i)
          if (masked[i] == 0.0 && (x[i] <= lb_[i] || x[i] >= ub_[i])) d[i] = 0.0;
        descent = directional();
        if (!(descent < 0.0) || !std::isfinite(descent)) {
          for (std::size_t i = 0; i < n; ++i) d[i] = -masked[i];
          descent = directional();
        }
        if (!(descent < 0.0)) {
          report.stalled = true;
          report.iterations = it;
          return report;
        }
      }

      // Backtracking Armijo search along the projected path.
      double alpha = 1.0;
      double f_new = kInf;
      bool accepted = false;
      for (int ls = 0; ls < 60; ++ls) {
        for (std::size_t i = 0; i < n; ++i)
          xt[i] = std::clamp(x[i] + alpha * d[i], lb_[i], ub_[i]);
        f_new = merit.value(xt);
        if (std::isfinite(f_new)) {
          double pred = 0.0;
          for (std::size_t i = 0; i < n; ++i) pred += g[i] * (xt[i] - x[i]);
          if (pred < 0.0 && f_new <= f + 1e-4 * pred) {
            accepted = true;
            break;
          }
        }
        alpha *= 0.5;
      }
      if (!accepted) {
        report.stalled = true;
        report.iterations = it;
        return report;
      }
      last_alpha = alpha;
      last_dnorm = dnorm;
      // Adapt the seed-step cap like a trust region: full steps earn a
      // bigger cap, heavily backtracked ones shrink it toward the usable
      // scale.
      double step_norm = 0.0;
      for (std::size_t i = 0; i < n; ++i) step_norm = std::max(step_norm, std::abs(xt[i] - x[i]));
      if (alpha == 1.0) {
        cap_ = std::min(cap_ * 2.0, 10.0 * cap0_);
      } else if (alpha < 0.1) {
        cap_ = std::max({cap_ * 0.25, 2.0 * step_norm, 1e-9});
      }

      f_new = merit.value_and_gradient(xt, g_new);
      if (!std::isfinite(f_new)) {
        report.finite = false;
        report.iterations = it;
        return report;
      }
      // Pair update.  Armijo-only searches admit steps with near-zero (or
      // negative) curvature s'y, so damp y against the seed model (Powell):
      // rho then stays bounded relative to the model curvature.
      Pair pair;
      pair.s.resize(n);
      pair.y.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        pair.s[i] = xt[i] - x[i];
        pair.y[i] = g_new[i] - g[i];
      }
      double sy = 0.0, ss = 0.0, yy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sy += pair.s[i] * pair.y[i];
        ss += pair.s[i] * pair.s[i];
        yy += pair.y[i] * pair.y[i];
      }
      bool pair_ok = std::isfinite(sy) && ss > 0.0;
      if (pair_ok && merit.n_cons() > 0) {
        std::vector<double>& bs = cg_ap_;
        bs.resize(n);
        merit.hessian_apply(pair.s, bs);
        double sbs = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          bs[i] += (delta_ + lm_lambda_) * pair.s[i];
          sbs += pair.s[i] * bs[i];
        }
        if (std::isfinite(sbs) && sbs > 0.0 && sy < 0.2 * sbs) {
          const double theta = 0.8 * sbs / (sbs - sy);
          sy = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            pair.y[i] = theta * pair.y[i] + (1.0 - theta) * bs[i];
            sy += pair.s[i] * pair.y[i];
          }
        }
        pair_ok = std::isfinite(sy) && sy > 1e-12 * sbs && sbs > 0.0;
      } else if (pair_ok) {
        pair_ok = sy > 1e-10 * std::sqrt(ss * yy);
      }
      if (pair_ok && memory_ > 0) {
        if (static_cast<int>(pairs_.size()) >= memory_) pairs_.erase(pairs_.begin());
        pair.rho = 1.0 / sy;
        pairs_.push_back(std::move(pair));
      }
      x = xt;
      f = f_new;
      g = g_new;
      if (merit_history) merit_history->push_back(f);
      report.iterations = it + 1;
    }
    report.merit = f;
    report.projected_gradient = projected_gradient_norm(x, g);
    report.converged = report.projected_gradient <= tol;
    return report;
  }

 private:
  struct Pair {
    std::vector<double> s, y;
    double rho = 0.0;
  };

  // Seed-matrix application H0 q.  With constraints present, H0 is the
  // (regularized) inverse of the merit's local curvature, applied by a
  // short Jacobi-preconditioned CG solve with exact tape-level
  // Hessian-vector products; the iterate is truncated at the adaptive step
  // cap and at negative curvature (Steihaug).  This is what lets the
  // direction track the penalty valley of the collocation chain.  Without
  // constraints it is the classical scaled identity.
  void apply_seed(AugLag& merit, std::vector<double>& q) {
    const std::size_t n = q.size();
    if (merit.n_cons() == 0) {
      double gamma = 1.0;
      if (!pairs_.empty()) {
        const Pair& last = pairs_.back();
        double sy = 0.0, yy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          sy += last.s[i] * last.y[i];
          yy += last.y[i] * last.y[i];
        }
        if (yy > 0.0 && std::isfinite(yy)) gamma = std::clamp(sy / yy, 1e-8, 1e8);
      }
      for (std::size_t i = 0; i < n; ++i) q[i] *= gamma;
      return;
    }

    if (banded_ok_ && seed_direct(merit, q)) return;

    std::vector<double>& out = cg_x_;
    std::vector<double>& r = cg_r_;
    std::vector<double>& z = cg_z_;
    std::vector<double>& p = cg_p_;
    std::vector<double>& ap = cg_ap_;
    out.assign(n, 0.0);
    r.resize(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = binding_[i] ? 0.0 : q[i];
    double bnorm = 0.0;
    for (std::size_t i = 0; i < n; ++i) bnorm += r[i] * r[i];
    if (bnorm == 0.0) {
      q = out;
      return;
    }
    z.resize(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / precond_[i];
    p = z;
    double rz = 0.0;
    for (std::size_t i = 0; i < n; ++i) rz += r[i] * z[i];
    ap.resize(n);
    auto inf_norm = [](const std::vector<double>& v) {
      double m = 0.0;
      for (double vi : v) m = std::max(m, std::abs(vi));
      return m;
    };
    // Chains of coupled constraints need one CG iteration per link for
    // information to traverse them, so the budget scales with n.  The solve
    // runs to its tolerance rather than stopping at the step cap: a
    // truncated solve only covers the near end of a constraint chain and
    // yields directions that activate one bound at a time.  The cap is
    // applied afterwards by rescaling the complete direction.
    const int max_cg = static_cast<int>(n) + 10;
    cg_iters_ = 0;
    cg_residual_ = 1.0;
    for (int iter = 0; iter < max_cg; ++iter) {
      cg_iters_ = iter + 1;
      // Restrict the operator to the free subspace so the solve anticipates
      // that bound-active coordinates cannot compensate.
      merit.hessian_apply(p, ap);
      for (std::size_t i = 0; i < n; ++i)
        ap[i] = binding_[i] ? 0.0 : ap[i] + delta_ * p[i];
      double pap = 0.0;
      for (std::size_t i = 0; i < n; ++i) pap += p[i] * ap[i];
      if (!std::isfinite(pap) || pap <= 0.0) {
        // The Gauss-Newton operator is positive semidefinite, so this only
        // triggers on numerical breakdown: fall back to the preconditioned
        // gradient if nothing has accumulated yet.
        if (inf_norm(out) == 0.0) out = z;
        break;
      }
      const double alpha = rz / pap;
      double rnorm = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        out[i] += alpha * p[i];
        r[i] -= alpha * ap[i];
        rnorm += r[i] * r[i];
      }
      cg_residual_ = std::sqrt(rnorm / bnorm);
      if (rnorm <= cg_forcing_ * cg_forcing_ * bnorm) break;
      double rz_next = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        z[i] = r[i] / precond_[i];
        rz_next += r[i] * z[i];
      }
      const double beta = rz_next / rz;
      rz = rz_next;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    const double onorm = inf_norm(out);
    if (onorm > cap_)
      for (std::size_t i = 0; i < n; ++i) out[i] *= cap_ / onorm;
    q = out;
  }

  // Direct seed solve (mu J'J + delta I + lambda diag) d = q on the free
  // subspace.  The Marquardt damping lambda is escalated by refactoring
  // until the step obeys the cap, which the narrow band makes affordable;
  // this solves the trust-region subproblem the CG path only approximates
  // by rescaling.  Returns false to fall back to CG.
  bool seed_direct(AugLag& merit, std::vector<double>& q) {
    const std::size_t n = q.size();
    if (!banded_have_vals_) {
      const bool extracted = banded_.extract(
          [&](const std::vector<double>& v, std::vector<double>& out) {
            merit.exact_hessian_apply(v, out);
          });
      if (!extracted) return false;
      banded_have_vals_ = true;
      banded_factored_ = false;
    }
    std::vector<double>& rhs = cg_r_;
    std::vector<double>& out = cg_x_;
    rhs.resize(n);
    double bnorm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      rhs[i] = binding_[i] ? 0.0 : q[i];
      bnorm = std::max(bnorm, std::abs(rhs[i]));
    }
    if (bnorm == 0.0) {
      q.assign(n, 0.0);
      return true;
    }
    // The exact Hessian can be indefinite; the Cholesky factorization
    // rejects it with a failed pivot and the loop below answers with more
    // damping, so the floor here only needs to absorb roundoff.  The
    // damping is an absolute lambda*I - the trust-region metric is the step
    // norm itself - because a diagonal-scaled term would crush the gently
    // curved directions (where all the remaining progress lives) long
    // before it touches the stiff ones.
    const double delta_floor = 1e-4 * delta_;
    auto refactor = [&](double lam) {
      extra_diag_.resize(n);
      for (std::size_t i = 0; i < n; ++i) extra_diag_[i] = delta_floor + lam;
      return banded_.factor(extra_diag_, binding_);
    };
    auto inf_norm = [](const std::vector<double>& v) {
      double m = 0.0;
      for (double vi : v) m = std::max(m, std::abs(vi));
      return m;
    };
    int factors = 0;
    if (!banded_factored_) {
      // Fresh iterate: trust-region semantics.  Try the pure Newton step
      // first; damping exists only to handle indefiniteness and to pull an
      // over-long step inside the cap, so it is re-derived every solve
      // rather than carried as state.  (Persistent damping throttles the
      // projected step exactly when a whole block of variables should sweep
      // onto its bounds at once, turning active-set identification into a
      // one-variable-per-iteration crawl.)
      double lam = 0.0;
      bool ok = refactor(lam);
      ++factors;
      if (ok) banded_.solve(rhs, out);
      double onorm = ok ? inf_norm(out) : kInf;
      if (!(onorm <= cap_) || !std::isfinite(onorm)) {
        // Escalate via a multiplicative secant on the overflow ratio until
        // the solution obeys the cap.  The previous solve's damping is the
        // best prior for the starting level; a tiny relative floor covers
        // the cold start.
        lam = lm_lambda_ > 0.0 ? 0.25 * lm_lambda_
                               : 1e-10 * std::max(1.0, precond_.empty() ? 1.0 : *std::max_element(precond_.begin(), precond_.end()));
        if (refactor(lam)) {
          ++factors;
          banded_.solve(rhs, out);
          onorm = inf_norm(out);
        } else {
          onorm = kInf;
        }
        while ((!(onorm <= cap_) || !std::isfinite(onorm)) && factors < 60) {
          double ratio = std::isfinite(onorm) && onorm > 0.0
                             ? std::pow(onorm / cap_, 0.7)
                             : 8.0;
          ratio = std::clamp(ratio, 2.0, 1e6);
          lam = std::max(lam * ratio, 1e-10);
          ++factors;
          if (refactor(lam)) {
            banded_.solve(rhs, out);
            onorm = inf_norm(out);
          } else {
            onorm = kInf;
          }
        }
        if (!std::isfinite(onorm)) return false;
      }
      lm_lambda_ = lam;
      banded_factored_ = true;
    } else {
      // Same iterate (direction retry): reuse the factorization.
      banded_.solve(rhs, out);
    }
    double onorm = inf_norm(out);
    if (!std::isfinite(onorm)) return false;
    if (onorm > cap_)
      for (std::size_t i = 0; i < n; ++i) out[i] *= cap_ / onorm;
    cg_iters_ = factors;       // diagnostics: factorizations this solve
    cg_residual_ = lm_lambda_; // diagnostics: damping in effect
    q = out;
    return true;
  }

  // Two-loop recursion around the seed application.
  void two_loop(AugLag& merit, const std::vector<double>& g, std::vector<double>& d) {
    const std::size_t n = g.size();
    d.assign(n, 0.0);
    std::vector<double>& q = work_;
    q.assign(g.begin(), g.end());
    std::vector<double> alpha(pairs_.size());
    for (std::size_t p = pairs_.size(); p-- > 0;) {
      double sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) sq += pairs_[p].s[i] * q[i];
      alpha[p] = pairs_[p].rho * sq;
      for (std::size_t i = 0; i < n; ++i) q[i] -= alpha[p] * pairs_[p].y[i];
    }
    apply_seed(merit, q);
    for (std::size_t p = 0; p < pairs_.size(); ++p) {
      double yq = 0.0;
      for (std::size_t i = 0; i < n; ++i) yq += pairs_[p].y[i] * q[i];
      const double beta = pairs_[p].rho * yq;
      for (std::size_t i = 0; i < n; ++i) q[i] += (alpha[p] - beta) * pairs_[p].s[i];
    }
    for (std::size_t i = 0; i < n; ++i) d[i] = -q[i];
  }

  const std::vector<double>& lb_;
  const std::vector<double>& ub_;
  int memory_;
  double delta_ = 1e-12;
  double cap_ = 1.0;  // adaptive bound on the seed-step inf-norm
  std::vector<Pair> pairs_;
  std::vector<double> precond_;
  std::vector<char> binding_;  // coordinates pinned at an active bound
  double cg_forcing_ = 1e-2;   // relative residual target for the seed solve
  int cg_iters_ = 0;           // diagnostics from the last seed solve
  double cg_residual_ = 0.0;
  std::vector<double> work_;
  std::vector<double> cg_x_, cg_r_, cg_z_, cg_p_, cg_ap_;
  BandedHessian banded_;
  bool banded_tried_ = false;   // ordering computed (once per problem)
  bool banded_ok_ = false;      // bandwidth small enough for the direct path
  bool banded_have_vals_ = false;
  bool banded_factored_ = false;
  double lm_lambda_ = 0.0;  // persistent Marquardt damping, relative to precond_
  double cap0_ = 1.0;       // baseline cap; growth is bounded by a multiple of it
  std::vector<double> extra_diag_;
};

SolveResult solve_single(const DiscretizedNlp& nlp, std::vector<double> x,
                         const SolverSettings& settings) {
  const auto start_time = std::chrono::steady_clock::now();
  SolveResult result;
  if (static_cast<int>(x.size()) != nlp.n_vars())
    throw InvalidSpec("initial point length does not match the NLP");

  AugLag merit(nlp);
  merit.mu = settings.initial_penalty;
  ProjectedLbfgs inner(nlp, settings.lbfgs_memory);
  inner.project(x);

  double prev_viol = kInf;
  double omega = 1e-2;  // inner tolerance, tightened every outer iteration
  int stalled_outers = 0;
  result.status = SolveStatus::IterationLimit;

  for (int outer = 1; outer <= settings.max_outer_iterations; ++outer) {
    result.outer_iterations = outer;
    const double inner_tol = std::max(settings.optimality_tol, omega);
    InnerReport rep = inner.minimize(merit, x, inner_tol, settings.max_inner_iterations,
                                     settings.merit_history);
    result.inner_iterations += rep.iterations;
    if (std::getenv("DAGDP_SOLVER_DEBUG") != nullptr)
      std::fprintf(stderr,
                   "  outer %2d: mu=%.1e inner=%4d merit=%+.8e pg=%.3e viol=%.3e %s%s\n",
                   outer, merit.mu, rep.iterations, rep.merit, rep.projected_gradient,
                   merit.max_violation(), rep.converged ? "converged" : "",
                   rep.stalled ? "stalled" : "");
    if (!rep.finite) {
      result.status = SolveStatus::NumericFailure;
      break;
    }
    merit.value(x);  // refresh constraint values at the accepted point
    const double viol = merit.max_violation();
    result.max_violation = viol;
    result.projected_gradient = rep.projected_gradient;

    if (viol <= settings.feasibility_tol &&
        rep.projected_gradient <= settings.optimality_tol) {
      result.status = SolveStatus::Optimal;
      break;
    }

    // A stalled inner at an already-feasible point means the iterate is at
    // the merit function's numerical floor: the multiplier update below
    // would shift the gradient without the inner being able to respond, so
    // skip it, and give up once a repeat round confirms nothing moves.
    if (rep.stalled && viol <= settings.feasibility_tol) {
      if (++stalled_outers >= 2) break;
      prev_viol = viol;
      omega = std::max(settings.optimality_tol, omega * 0.2);
      continue;
    }
    stalled_outers = 0;

    // Multiplier update, then penalty growth when feasibility stalls.
    for (int i = 0; i < merit.n_cons(); ++i)
      merit.lambda()[static_cast<std::size_t>(i)] += merit.mu * merit.c()[static_cast<std::size_t>(i)];
    if (viol > settings.feasibility_tol && viol > 0.25 * prev_viol) {
      if (merit.mu >= settings.penalty_cap) {
        if (viol > 1e-4) {
          result.status = SolveStatus::Infeasible;
          break;
        }
      } else {
        merit.mu = std::min(merit.mu * settings.penalty_growth, settings.penalty_cap);
      }
    }
    prev_viol = viol;
    omega = std::max(settings.optimality_tol, omega * 0.2);
  }

  result.primal = std::move(x);
  merit.eval_objective(result.primal, result.objective);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return result;
}

bool better(const SolveResult& a, const SolveResult& b) {
  const bool a_ok = a.status == SolveStatus::Optimal;
  const bool b_ok = b.status == SolveStatus::Optimal;
  if (a_ok != b_ok) return a_ok;
  if (a_ok) return a.objective < b.objective;
  return a.max_violation < b.max_violation;
}

}  // namespace

SolveResult solve(const DiscretizedNlp& nlp, std::vector<double> initial,
                  const SolverSettings& settings) {
  const auto start_time = std::chrono::steady_clock::now();
  SolveResult best = solve_single(nlp, initial, settings);
  if (settings.restarts > 0) {
    std::mt19937_64 rng(settings.seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int r = 0; r < settings.restarts; ++r) {
      std::vector<double> perturbed = initial;
      for (std::size_t i = 0; i < perturbed.size(); ++i) {
        const double range = nlp.upper()[i] - nlp.lower()[i];
        const double width = std::isfinite(range) ? range : 1.0;
        perturbed[i] = std::clamp(perturbed[i] + 0.1 * width * unit(rng), nlp.lower()[i],
                                  nlp.upper()[i]);
      }
      SolveResult candidate = solve_single(nlp, std::move(perturbed), settings);
      if (better(candidate, best)) best = std::move(candidate);
    }
  }
  best.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return best;
}

// ---------------------------------------------------------------------------
// RK4 simulation and initialization
// ---------------------------------------------------------------------------

namespace {

// One RK4 step of the active mode from (t, x) with fixed controls.
void rk4_step(const DagdpModel& model, const Disjunct& dis, std::vector<double>& local,
              std::vector<double>& x, double t, double dt, EvalScratch& scratch) {
  const int nx = static_cast<int>(model.states().size());
  const int nq = nx + 1;  // quadrature slot appended to x
  const int time_idx = model.time_index();
  auto deriv = [&](const std::vector<double>& state, double at, std::vector<double>& out) {
    for (int m = 0; m < nx; ++m) local[static_cast<std::size_t>(m)] = state[static_cast<std::size_t>(m)];
    local[static_cast<std::size_t>(time_idx)] = at;
    for (int m = 0; m < nx; ++m)
      out[static_cast<std::size_t>(m)] =
          dis.state_rhs[static_cast<std::size_t>(m)].eval(local, scratch);
    out[static_cast<std::size_t>(nx)] =
        model.integrand().empty() ? 0.0 : model.integrand().eval(local, scratch);
  };
  static thread_local std::vector<double> k1, k2, k3, k4, tmp;
  k1.resize(static_cast<std::size_t>(nq));
  k2.resize(static_cast<std::size_t>(nq));
  k3.resize(static_cast<std::size_t>(nq));
  k4.resize(static_cast<std::size_t>(nq));
  tmp.resize(static_cast<std::size_t>(nq));
  deriv(x, t, k1);
  for (int m = 0; m < nq; ++m) tmp[m] = x[m] + 0.5 * dt * k1[m];
  deriv(tmp, t + 0.5 * dt, k2);
  for (int m = 0; m < nq; ++m) tmp[m] = x[m] + 0.5 * dt * k2[m];
  deriv(tmp, t + 0.5 * dt, k3);
  for (int m = 0; m < nq; ++m) tmp[m] = x[m] + dt * k3[m];
  deriv(tmp, t + dt, k4);
  for (int m = 0; m < nq; ++m)
    x[m] += dt / 6.0 * (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m]);
  for (int m = 0; m < nq; ++m)
    if (!std::isfinite(x[m]) || std::abs(x[m]) > 1e15)
      throw NonFiniteState("state blew up during integration");
}

}  // namespace

std::vector<TrajectorySample> simulate(const DagdpModel& model, const BooleanAssignment& a,
                                       std::span<const double> controls,
                                       int steps_per_element) {
  if (!is_feasible(model, a))
    throw InfeasibleConfiguration("assignment " + a.render() + " violates the model logic");
  if (steps_per_element < 1) throw InvalidSpec("steps per element must be positive");
  const int stages = model.stage_count();
  const int nu = static_cast<int>(model.controls().size());
  int elements;
  if (nu == 0) {
    elements = stages;
  } else {
    if (controls.size() % static_cast<std::size_t>(nu) != 0)
      throw InvalidSpec("controls length must be a multiple of the control count");
    elements = static_cast<int>(controls.size()) / nu;
    if (elements == 0 || elements % stages != 0)
      throw InvalidSpec("controls must cover an equal element count per stage");
  }
  const int nfe = elements / stages;
  const int nx = static_cast<int>(model.states().size());

  std::vector<double> local(static_cast<std::size_t>(model.local_var_count()), 0.0);
  EvalScratch scratch;
  std::vector<double> x(static_cast<std::size_t>(nx + 1), 0.0);
  for (int m = 0; m < nx; ++m) x[static_cast<std::size_t>(m)] = model.states()[m].initial;

  std::vector<TrajectorySample> samples;
  samples.push_back({model.boundaries()[0], x});
  for (int e = 0; e < elements; ++e) {
    const int stage = e / nfe;
    const int mode = a.selected[static_cast<std::size_t>(stage)];
    const Disjunct& dis = model.disjuncts(stage)[static_cast<std::size_t>(mode)];
    const double width = (model.boundaries()[stage + 1] - model.boundaries()[stage]) / nfe;
    const double t0 = model.boundaries()[stage] + (e - stage * nfe) * width;
    for (int c = 0; c < nu; ++c)
      local[static_cast<std::size_t>(nx + c)] = controls[static_cast<std::size_t>(c * elements + e)];
    const double dt = width / steps_per_element;
    for (int step = 0; step < steps_per_element; ++step) {
      rk4_step(model, dis, local, x, t0 + step * dt, dt, scratch);
      samples.push_back({t0 + (step + 1) * dt, x});
    }
  }
  return samples;
}

std::vector<double> initial_guess(const DagdpModel& model, const BooleanAssignment& a,
                                  const CollocationScheme& scheme) {
  DiscretizedNlp nlp = transcribe(model, a, scheme);
  const int nx = static_cast<int>(model.states().size());
  const int nu = static_cast<int>(model.controls().size());
  std::vector<double> guess(static_cast<std::size_t>(nlp.n_vars()));

  // Bound midpoints everywhere reachable as a baseline (also the fallback
  // when integration blows up); fixed bounds collapse to the fixed value.
  auto midpoint = [&](int idx) {
    const double lo = nlp.lower()[static_cast<std::size_t>(idx)];
    const double hi = nlp.upper()[static_cast<std::size_t>(idx)];
    return 0.5 * (lo + hi);
  };
  for (int i = 0; i < nlp.n_vars(); ++i) guess[static_cast<std::size_t>(i)] = midpoint(i);

  try {
    const auto tau = radau_points(scheme.n_cp);
    std::vector<double> local(static_cast<std::size_t>(model.local_var_count()), 0.0);
    EvalScratch scratch;
    std::vector<double> x(static_cast<std::size_t>(nx + 1), 0.0);
    for (int m = 0; m < nx; ++m) x[static_cast<std::size_t>(m)] = model.states()[m].initial;

    for (int e = 0; e < nlp.elements; ++e) {
      const int stage = e / scheme.n_fe_per_stage;
      const int mode = a.selected[static_cast<std::size_t>(stage)];
      const Disjunct& dis = model.disjuncts(stage)[static_cast<std::size_t>(mode)];
      const double width =
          (model.boundaries()[stage + 1] - model.boundaries()[stage]) / scheme.n_fe_per_stage;
      const double t0 = model.boundaries()[stage] + (e - stage * scheme.n_fe_per_stage) * width;
      for (int c = 0; c < nu; ++c)
        local[static_cast<std::size_t>(nx + c)] =
            guess[static_cast<std::size_t>(nlp.control_index(c, e))];
      double t_prev = t0;
      for (int k = 1; k <= scheme.n_cp; ++k) {
        const double t_next = t0 + width * tau[static_cast<std::size_t>(k - 1)];
        const int substeps = 4;
        const double dt = (t_next - t_prev) / substeps;
        for (int s = 0; s < substeps; ++s)
          rk4_step(model, dis, local, x, t_prev + s * dt, dt, scratch);
        for (int m = 0; m <= nx; ++m) {
          const int idx = nlp.state_index(m, e * scheme.n_cp + k);
          guess[static_cast<std::size_t>(idx)] =
              std::clamp(x[static_cast<std::size_t>(m)],
                         nlp.lower()[static_cast<std::size_t>(idx)],
                         nlp.upper()[static_cast<std::size_t>(idx)]);
        }
        t_prev = t_next;
      }
    }
  } catch (const NonFiniteState&) {
    for (int i = 0; i < nlp.n_vars(); ++i) guess[static_cast<std::size_t>(i)] = midpoint(i);
  }
  return guess;
}

}  // namespace dagdp
