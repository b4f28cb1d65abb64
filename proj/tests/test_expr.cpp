#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "dagdp/expr.hpp"
#include "oracles.hpp"

using dagdp::Expr;

namespace {
const Expr x0 = Expr::variable(0);
const Expr x1 = Expr::variable(1);
}  // namespace

TEST_CASE("eval of basic compositions") {
  CHECK(( x0 * x0 ).eval(std::vector<double>{3.0}) == doctest::Approx(9.0));

  Expr mode1 = Expr::exp(x0 - Expr::constant(1.0)) * (-x0);
  CHECK(mode1.eval(std::vector<double>{1.0}) == doctest::Approx(-1.0));

  Expr mode2 = (Expr::pow(x0, 3.0) * Expr::constant(0.5) + x1) / Expr::constant(20.0);
  CHECK(mode2.eval(std::vector<double>{2.0, 4.0}) == doctest::Approx(0.4));
}

TEST_CASE("eval error conditions") {
  CHECK_THROWS_AS(x1.eval(std::vector<double>{1.0}), dagdp::IndexOutOfRange);
  Expr div = x0 / (x0 - Expr::constant(2.0));
  CHECK_THROWS_AS(div.eval(std::vector<double>{2.0}), dagdp::DomainError);
  Expr log = Expr::ln(x0);
  CHECK_THROWS_AS(log.eval(std::vector<double>{-1.0}), dagdp::DomainError);
  CHECK_THROWS_AS(log.eval(std::vector<double>{0.0}), dagdp::DomainError);
  CHECK(log.eval(std::vector<double>{std::exp(1.0)}) == doctest::Approx(1.0));
}

TEST_CASE("gradient of simple expressions") {
  auto g1 = Expr::pow(x0, 2.0).gradient(std::vector<double>{3.0}, 1);
  REQUIRE(g1.size() == 1);
  CHECK(g1[0] == doctest::Approx(6.0));

  auto g2 = (x0 * x1).gradient(std::vector<double>{2.0, 5.0}, 2);
  REQUIRE(g2.size() == 2);
  CHECK(g2[0] == doctest::Approx(5.0));
  CHECK(g2[1] == doctest::Approx(2.0));

  // -x0 * exp(x0 - 1) + x1 at (1, 0); cross-checked against the
  // finite-difference oracle below.
  Expr f = (-x0) * Expr::exp(x0 - Expr::constant(1.0)) + x1;
  auto g3 = f.gradient(std::vector<double>{1.0, 0.0}, 2);
  REQUIRE(g3.size() == 2);
  CHECK(g3[0] == doctest::Approx(-2.0));
  CHECK(g3[1] == doctest::Approx(1.0));
  auto fd = oracles::central_difference(f, {1.0, 0.0});
  CHECK(std::abs(g3[0] - fd[0]) <= 1e-8);
  CHECK(std::abs(g3[1] - fd[1]) <= 1e-8);
}

TEST_CASE("gradient of a constant expression is zero") {
  auto g = (Expr::constant(4.0) * Expr::constant(2.5)).gradient(std::vector<double>{1.0, 2.0, 3.0}, 3);
  for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("gradient length covers the declared variable count") {
  auto g = x0.gradient(std::vector<double>{2.0, 7.0, 9.0}, 3);
  REQUIRE(g.size() == 3);
  CHECK(g[0] == 1.0);
  CHECK(g[1] == 0.0);
  CHECK_THROWS_AS(x1.gradient(std::vector<double>{2.0, 7.0}, 1), dagdp::IndexOutOfRange);
}

TEST_CASE("randomized gradient agrees with central finite differences") {
  oracles::RandomExprGen gen(20240817u, 3);
  int checked = 0;
  for (int trial = 0; trial < 400 && checked < 200; ++trial) {
    Expr e = gen.tree(6);
    std::vector<double> p = gen.point(3);
    double v;
    try {
      v = e.eval(p);
    } catch (const dagdp::Error&) {
      continue;
    }
    if (!std::isfinite(v) || std::abs(v) > 1e3) continue;
    auto ad = e.gradient(p, 3);
    auto fd = oracles::central_difference(e, p);
    bool usable = true;
    for (std::size_t i = 0; i < 3; ++i)
      if (!std::isfinite(ad[i]) || !std::isfinite(fd[i]) || std::abs(ad[i]) > 1e3) usable = false;
    if (!usable) continue;
    ++checked;
    for (std::size_t i = 0; i < 3; ++i) {
      const double scale = std::max({1.0, std::abs(ad[i]), std::abs(fd[i])});
      CHECK(std::abs(ad[i] - fd[i]) / scale <= 1e-6);
    }
  }
  // The generator must produce plenty of usable samples.
  CHECK(checked >= 150);
}

TEST_CASE("eval is additive and gradient is linear in expression addition") {
  oracles::RandomExprGen gen(77u, 2);
  for (int trial = 0; trial < 25; ++trial) {
    Expr a = gen.tree(4);
    Expr b = gen.tree(4);
    std::vector<double> p = gen.point(2);
    double va, vb, vab;
    try {
      va = a.eval(p);
      vb = b.eval(p);
      vab = (a + b).eval(p);
    } catch (const dagdp::Error&) {
      continue;
    }
    if (!std::isfinite(va) || !std::isfinite(vb)) continue;
    CHECK(vab == va + vb);  // identical operation order, exact equality
    auto ga = a.gradient(p, 2);
    auto gb = b.gradient(p, 2);
    auto gab = (a + b).gradient(p, 2);
    for (std::size_t i = 0; i < 2; ++i)
      CHECK(gab[i] == doctest::Approx(ga[i] + gb[i]).epsilon(1e-12));
  }
}

TEST_CASE("scratch reuse matches fresh evaluation") {
  dagdp::EvalScratch scratch;
  Expr f = Expr::exp(x0) * x1 + Expr::pow(x0, 3.0);
  std::vector<double> p{0.3, -1.2};
  const double fresh = f.eval(p);
  CHECK(f.eval(p, scratch) == fresh);
  std::vector<double> grad(2, 0.0);
  f.backprop(1.0, grad, scratch);
  auto ref = f.gradient(p, 2);
  CHECK(grad[0] == doctest::Approx(ref[0]).epsilon(1e-14));
  CHECK(grad[1] == doctest::Approx(ref[1]).epsilon(1e-14));
}

TEST_CASE("substitute remaps variables and fixes values") {
  Expr f = x0 * x1 + Expr::constant(1.0);
  // x1 -> constant 4, x0 -> variable 5
  Expr g = f.substitute([](int i) {
    return i == 1 ? Expr::constant(4.0) : Expr::variable(5);
  });
  std::vector<double> p(6, 0.0);
  p[5] = 2.5;
  CHECK(g.eval(p) == doctest::Approx(11.0));
  CHECK(g.max_var_index() == 5);
}

TEST_CASE("prefix rendering") {
  std::vector<std::string> names{"x", "u"};
  Expr f = (-x0) * Expr::exp(x0 - Expr::constant(1.0)) + x1;
  CHECK(f.prefix(names) == "(add (mul (neg x) (exp (sub x 1))) u)");
  CHECK(Expr::pow(x0, 3.0).prefix(names) == "(pow x 3)");
  CHECK(Expr::constant(0.5).prefix(names) == "0.5");
  CHECK(Expr::variable(7).prefix(names) == "v7");
}
