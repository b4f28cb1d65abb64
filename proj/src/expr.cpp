#include "dagdp/expr.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

namespace dagdp {

Expr Expr::variable(int index) {
  if (index < 0) throw IndexOutOfRange("negative variable index");
  Expr e;
  e.nodes_.push_back({ExprOp::Variable, index, -1, 0.0});
  return e;
}

Expr Expr::pow(const Expr& x, double exponent) {
  Expr e = unary(ExprOp::Pow, x);
  e.nodes_.back().value = exponent;
  return e;
}

Expr Expr::unary(ExprOp op, const Expr& x) {
  Expr e;
  e.nodes_ = x.nodes_;
  e.nodes_.push_back({op, static_cast<std::int32_t>(e.nodes_.size() - 1), -1, 0.0});
  return e;
}

Expr Expr::binary(ExprOp op, const Expr& a, const Expr& b) {
  Expr e;
  e.nodes_.reserve(a.nodes_.size() + b.nodes_.size() + 1);
  e.nodes_ = a.nodes_;
  const auto offset = static_cast<std::int32_t>(e.nodes_.size());
  for (const ExprNode& n : b.nodes_) {
    ExprNode shifted = n;
    if (shifted.op != ExprOp::Constant && shifted.op != ExprOp::Variable) {
      shifted.a += offset;
      if (shifted.b >= 0) shifted.b += offset;
    }
    e.nodes_.push_back(shifted);
  }
  e.nodes_.push_back({op, offset - 1,
                      static_cast<std::int32_t>(e.nodes_.size() - 1), 0.0});
  return e;
}

int Expr::max_var_index() const {
  int m = -1;
  for (const ExprNode& n : nodes_)
    if (n.op == ExprOp::Variable && n.a > m) m = n.a;
  return m;
}

namespace {

inline double eval_pow(double base, double exponent) {
  if (exponent == 2.0) return base * base;
  if (exponent == 3.0) return base * base * base;
  return std::pow(base, exponent);
}

}  // namespace

double Expr::eval(std::span<const double> point) const {
  EvalScratch scratch;
  return eval(point, scratch);
}

double Expr::eval(std::span<const double> point, EvalScratch& scratch) const {
  if (nodes_.empty()) throw Error("eval of an empty expression");
  auto& v = scratch.values;
  if (v.size() < nodes_.size()) v.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const ExprNode& n = nodes_[i];
    switch (n.op) {
      case ExprOp::Constant:
        v[i] = n.value;
        break;
      case ExprOp::Variable:
        if (n.a < 0 || static_cast<std::size_t>(n.a) >= point.size())
          throw IndexOutOfRange("variable index " + std::to_string(n.a) +
                                " outside point of size " + std::to_string(point.size()));
        v[i] = point[static_cast<std::size_t>(n.a)];
        break;
      case ExprOp::Neg:
        v[i] = -v[n.a];
        break;
      case ExprOp::Exp:
        v[i] = std::exp(v[n.a]);
        break;
      case ExprOp::Ln:
        if (!(v[n.a] > 0.0)) throw DomainError("ln of nonpositive value");
        v[i] = std::log(v[n.a]);
        break;
      case ExprOp::Add:
        v[i] = v[n.a] + v[n.b];
        break;
      case ExprOp::Sub:
        v[i] = v[n.a] - v[n.b];
        break;
      case ExprOp::Mul:
        v[i] = v[n.a] * v[n.b];
        break;
      case ExprOp::Div:
        if (v[n.b] == 0.0) throw DomainError("division by zero");
        v[i] = v[n.a] / v[n.b];
        break;
      case ExprOp::Pow:
        v[i] = eval_pow(v[n.a], n.value);
        break;
    }
  }
  return v[nodes_.size() - 1];
}

void Expr::backprop(double seed, std::span<double> grad, EvalScratch& scratch) const {
  if (nodes_.empty()) throw Error("backprop through an empty expression");
  const auto& v = scratch.values;
  auto& adj = scratch.adjoints;
  if (adj.size() < nodes_.size()) adj.resize(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) adj[i] = 0.0;
  adj[nodes_.size() - 1] = seed;
  for (std::size_t ri = nodes_.size(); ri-- > 0;) {
    const ExprNode& n = nodes_[ri];
    const double a = adj[ri];
    if (a == 0.0) continue;
    switch (n.op) {
      case ExprOp::Constant:
        break;
      case ExprOp::Variable:
        if (n.a < 0 || static_cast<std::size_t>(n.a) >= grad.size())
          throw IndexOutOfRange("gradient shorter than variable index " + std::to_string(n.a));
        grad[static_cast<std::size_t>(n.a)] += a;
        break;
      case ExprOp::Neg:
        adj[n.a] -= a;
        break;
      case ExprOp::Exp:
        adj[n.a] += a * v[ri];
        break;
      case ExprOp::Ln:
        adj[n.a] += a / v[n.a];
        break;
      case ExprOp::Add:
        adj[n.a] += a;
        adj[n.b] += a;
        break;
      case ExprOp::Sub:
        adj[n.a] += a;
        adj[n.b] -= a;
        break;
      case ExprOp::Mul:
        adj[n.a] += a * v[n.b];
        adj[n.b] += a * v[n.a];
        break;
      case ExprOp::Div:
        adj[n.a] += a / v[n.b];
        adj[n.b] -= a * v[ri] / v[n.b];
        break;
      case ExprOp::Pow:
        if (n.value == 2.0)
          adj[n.a] += a * 2.0 * v[n.a];
        else if (n.value == 3.0)
          adj[n.a] += a * 3.0 * v[n.a] * v[n.a];
        else
          adj[n.a] += a * n.value * std::pow(v[n.a], n.value - 1.0);
        break;
    }
  }
}

std::vector<double> Expr::gradient(std::span<const double> point, int n_vars) const {
  if (n_vars <= max_var_index())
    throw IndexOutOfRange("declared variable count does not cover the expression");
  std::vector<double> grad(static_cast<std::size_t>(n_vars), 0.0);
  EvalScratch scratch;
  eval(point, scratch);
  backprop(1.0, grad, scratch);
  return grad;
}

Expr Expr::substitute(const std::function<Expr(int)>& replacement) const {
  std::vector<Expr> stack;
  for (const ExprNode& n : nodes_) {
    switch (n.op) {
      case ExprOp::Constant:
        stack.push_back(Expr(n.value));
        break;
      case ExprOp::Variable:
        stack.push_back(replacement(n.a));
        break;
      case ExprOp::Neg:
      case ExprOp::Exp:
      case ExprOp::Ln:
      case ExprOp::Pow: {
        Expr x = std::move(stack.back());
        stack.pop_back();
        if (n.op == ExprOp::Neg) stack.push_back(neg(x));
        else if (n.op == ExprOp::Exp) stack.push_back(exp(x));
        else if (n.op == ExprOp::Ln) stack.push_back(ln(x));
        else stack.push_back(pow(x, n.value));
        break;
      }
      default: {
        Expr b = std::move(stack.back());
        stack.pop_back();
        Expr a = std::move(stack.back());
        stack.pop_back();
        if (n.op == ExprOp::Add) stack.push_back(a + b);
        else if (n.op == ExprOp::Sub) stack.push_back(a - b);
        else if (n.op == ExprOp::Mul) stack.push_back(a * b);
        else stack.push_back(a / b);
        break;
      }
    }
  }
  if (stack.size() != 1) throw Error("malformed expression tape");
  return stack.back();
}

std::string Expr::prefix(std::span<const std::string> names) const {
  std::vector<std::string> stack;
  for (const ExprNode& n : nodes_) {
    switch (n.op) {
      case ExprOp::Constant:
        stack.push_back(format_double(n.value));
        break;
      case ExprOp::Variable: {
        if (static_cast<std::size_t>(n.a) < names.size())
          stack.push_back(names[static_cast<std::size_t>(n.a)]);
        else
          stack.push_back("v" + std::to_string(n.a));
        break;
      }
      case ExprOp::Neg:
      case ExprOp::Exp:
      case ExprOp::Ln: {
        const char* tag = n.op == ExprOp::Neg ? "neg" : n.op == ExprOp::Exp ? "exp" : "ln";
        stack.back() = std::string("(") + tag + " " + stack.back() + ")";
        break;
      }
      case ExprOp::Pow:
        stack.back() = "(pow " + stack.back() + " " + format_double(n.value) + ")";
        break;
      default: {
        std::string b = std::move(stack.back());
        stack.pop_back();
        const char* tag = n.op == ExprOp::Add   ? "add"
                          : n.op == ExprOp::Sub ? "sub"
                          : n.op == ExprOp::Mul ? "mul"
                                                : "div";
        stack.back() = std::string("(") + tag + " " + stack.back() + " " + b + ")";
        break;
      }
    }
  }
  if (stack.size() != 1) throw Error("malformed expression tape");
  return stack.back();
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

}  // namespace dagdp
