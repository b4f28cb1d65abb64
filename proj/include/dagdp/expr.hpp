#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dagdp/errors.hpp"

namespace dagdp {

enum class ExprOp : std::uint8_t {
  Constant,  // value
  Variable,  // a = variable index
  Neg,       // a
  Exp,       // a
  Ln,        // a
  Add,       // a, b
  Sub,       // a, b
  Mul,       // a, b
  Div,       // a, b
  Pow,       // a, value = constant exponent
};

struct ExprNode {
  ExprOp op;
  std::int32_t a = -1;
  std::int32_t b = -1;
  double value = 0.0;
};

// Reusable buffers for tape evaluation; avoids per-call allocation in hot
// loops.  A scratch filled by eval() can be handed straight to backprop().
struct EvalScratch {
  std::vector<double> values;
  std::vector<double> adjoints;
};

// Immutable scalar expression stored as a postorder tape.  The root is the
// last node.  Composition copies node vectors, which keeps every Expr
// self-contained and cheap to move.
class Expr {
 public:
  Expr() = default;
  Expr(double v) { nodes_.push_back({ExprOp::Constant, -1, -1, v}); }  // NOLINT: implicit by design

  static Expr constant(double v) { return Expr(v); }
  static Expr variable(int index);

  static Expr neg(const Expr& x) { return unary(ExprOp::Neg, x); }
  static Expr exp(const Expr& x) { return unary(ExprOp::Exp, x); }
  static Expr ln(const Expr& x) { return unary(ExprOp::Ln, x); }
  static Expr pow(const Expr& x, double exponent);

  friend Expr operator+(const Expr& a, const Expr& b) { return binary(ExprOp::Add, a, b); }
  friend Expr operator-(const Expr& a, const Expr& b) { return binary(ExprOp::Sub, a, b); }
  friend Expr operator*(const Expr& a, const Expr& b) { return binary(ExprOp::Mul, a, b); }
  friend Expr operator/(const Expr& a, const Expr& b) { return binary(ExprOp::Div, a, b); }
  friend Expr operator-(const Expr& a) { return neg(a); }

  bool empty() const { return nodes_.empty(); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<ExprNode>& nodes() const { return nodes_; }

  // Largest variable index referenced, or -1 for a variable-free expression.
  int max_var_index() const;

  // Forward sweep.  `point` must cover every referenced variable index.
  // Throws DomainError on division by zero or ln of a nonpositive value,
  // IndexOutOfRange when a variable index is not covered by `point`.
  double eval(std::span<const double> point) const;
  double eval(std::span<const double> point, EvalScratch& scratch) const;

  // Reverse sweep over the forward values left in `scratch` by the
  // immediately preceding eval() of this expression at the same point.
  // Accumulates seed * d(expr)/d(x_i) into grad[i].
  void backprop(double seed, std::span<double> grad, EvalScratch& scratch) const;

  // Convenience: dense gradient of length n_vars (n_vars must exceed
  // max_var_index()).
  std::vector<double> gradient(std::span<const double> point, int n_vars) const;

  // Structural rewrite: every Variable node with index i is replaced by
  // replacement(i).  Used by the transcription to map model-local variables
  // onto flat NLP indices and to substitute collocation times.
  Expr substitute(const std::function<Expr(int)>& replacement) const;

  // Prefix-notation rendering, e.g. (add (mul (neg x) (exp (sub x 1))) u).
  // Variables print as names[i] when provided, otherwise v<i>.
  std::string prefix(std::span<const std::string> names = {}) const;

 private:
  static Expr unary(ExprOp op, const Expr& x);
  static Expr binary(ExprOp op, const Expr& a, const Expr& b);

  std::vector<ExprNode> nodes_;
};

// Shortest decimal rendering that parses back to exactly the same double.
std::string format_double(double v);

}  // namespace dagdp
