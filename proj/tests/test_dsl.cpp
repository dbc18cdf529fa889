#include <doctest.h>

#include <cmath>
#include <random>

#include "e2cfd/dsl.hpp"
#include "oracles.hpp"

using namespace e2cfd::dsl;

namespace {

double eval_text(const std::string& text, const FeatureMap& f = {}) {
  return evaluate(parse_or_throw(text), f);
}

}  // namespace

TEST_CASE("parse builds the expected tree") {
  const auto r = parse("min(1.0, dist_hazard_min) - 1.0");
  REQUIRE(r.ok());
  const auto expected = binary(BinaryOp::kSub,
                               binary(BinaryOp::kMin, constant(1.0),
                                      feature("dist_hazard_min")),
                               constant(1.0));
  CHECK(r.expr() == expected);
}

TEST_CASE("truncated input fails at the end") {
  const auto r = parse("1 + ");
  REQUIRE_FALSE(r.ok());
  CHECK(r.error().offset == 4);
  CHECK(r.error().kind == ParseError::Kind::kSyntax);
}

TEST_CASE("syntax errors carry offsets") {
  CHECK(parse("min(1.0,").error().offset == 8);
  CHECK(parse("x y").error().offset == 2);
  CHECK(parse("").error().offset == 0);
  CHECK(parse("foo(1)").error().offset == 3);
  CHECK_FALSE(parse("1e999").ok());
  CHECK_FALSE(parse("min(1)").ok());
  CHECK_FALSE(parse("if(x, 1, 2)").ok());
}

TEST_CASE("unary plus is accepted and leaves no node") {
  CHECK(parse_or_throw("+5.0 * in_hazard") == parse_or_throw("5 * in_hazard"));
}

TEST_CASE("evaluate examples") {
  CHECK(eval_text("-(1.0 - min(dist_hazard_min, 1.0))", {{"dist_hazard_min", 0.5}}) ==
        -0.5);
  CHECK(eval_text("1.0/0.0") == 1e8);
  CHECK(eval_text("1.0/-0.0") == -1e8);
  CHECK(eval_text("if(in_hazard > 0.5, -10.0, 0.0)", {{"in_hazard", 1.0}}) == -10.0);
  CHECK(eval_text("if(in_hazard > 0.5, -10.0, 0.0)", {{"in_hazard", 0.0}}) == 0.0);
}

TEST_CASE("evaluation guards keep results finite") {
  CHECK(eval_text("log(0)") == doctest::Approx(std::log(1e-8)));
  CHECK(eval_text("sqrt(-4)") == doctest::Approx(std::sqrt(1e-8)));
  CHECK(std::isfinite(eval_text("exp(1000)")));
  CHECK(std::isfinite(eval_text("exp(exp(exp(10)))")));
  CHECK(eval_text("1e300 * 1e300") == kSaturation);
  CHECK(eval_text("-1e300 * 1e300") == -kSaturation);
  CHECK(eval_text("step(0)") == 0.0);
  CHECK(eval_text("step(0.1)") == 1.0);
  CHECK(eval_text("clip(5, 0, 1)") == 1.0);
  CHECK(eval_text("clip(-5, 0, 1)") == 0.0);
}

TEST_CASE("evaluate rejects unbound and non-finite inputs") {
  CHECK_THROWS_AS(eval_text("x + 1"), UnboundFeature);
  CHECK_THROWS_AS(eval_text("x", {{"x", std::nan("")}}), std::invalid_argument);
  CHECK_THROWS_AS(eval_text("x", {{"x", INFINITY}}), std::invalid_argument);
}

TEST_CASE("free_features") {
  CHECK(free_features(parse_or_throw("1 + 2 * 3")).empty());
  CHECK(free_features(parse_or_throw("x + x")) == std::set<std::string>{"x"});
  CHECK(free_features(parse_or_throw("if(a > b, if(c < 1, d, e), f)")) ==
        std::set<std::string>{"a", "b", "c", "d", "e", "f"});
}

TEST_CASE("limits are enforced") {
  std::string deep = "x";
  for (int i = 0; i < 40; ++i) deep = "abs(" + deep + ")";
  const auto r = parse(deep);
  REQUIRE_FALSE(r.ok());
  CHECK(r.error().kind == ParseError::Kind::kLimitExceeded);
  CHECK(parse(deep, Limits::composite()).ok());

  std::string wide = "x";
  for (int i = 0; i < 200; ++i) wide += " + x";
  CHECK_FALSE(parse(wide).ok());
  CHECK(parse(wide, Limits::composite()).ok());

  // Deep parentheses must not overflow the stack.
  std::string parens(100000, '(');
  CHECK_FALSE(parse(parens).ok());
}

TEST_CASE("pretty uses minimal parentheses") {
  CHECK(pretty(parse_or_throw("(x + y) + z")) == "x + y + z");
  CHECK(pretty(parse_or_throw("x + (y + z)")) == "x + (y + z)");
  CHECK(pretty(parse_or_throw("x - (y - z)")) == "x - (y - z)");
  CHECK(pretty(parse_or_throw("(x * y) + z")) == "x * y + z");
  CHECK(pretty(parse_or_throw("((x))")) == "x");
  CHECK(pretty(parse_or_throw("-(1)")) == "-(1)");
  CHECK(pretty(parse_or_throw("-1")) == "-1");
  CHECK(pretty(parse_or_throw("x * -2")) == "x * -2");
  CHECK(pretty(constant(0.1)) == "0.1");
}

TEST_CASE("round trip over the corpus") {
  for (const auto& text : oracle::corpus()) {
    CAPTURE(text);
    const auto e = parse_or_throw(text);
    const auto again = parse(pretty(e));
    REQUIRE(again.ok());
    CHECK(again.expr() == e);
    CHECK(pretty(again.expr()) == pretty(e));
  }
}

TEST_CASE("round trip over random trees") {
  std::mt19937_64 rng(7);
  const std::vector<std::string> names = {"x", "y", "in_hazard"};
  for (int i = 0; i < 500; ++i) {
    const auto e = oracle::random_expr(rng, names, 5);
    const auto again = parse(pretty(e), Limits::composite());
    REQUIRE(again.ok());
    CHECK(again.expr() == e);
  }
}

TEST_CASE("fuzzed input never crashes") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 2000; ++i) {
    const auto text = oracle::fuzz_text(rng);
    const auto r = parse(text);
    if (r.ok()) {
      CHECK(parse(pretty(r.expr())).ok());
    } else {
      CHECK(r.error().offset <= text.size());
    }
  }
}

TEST_CASE("BoundExpr agrees with evaluate") {
  std::mt19937_64 rng(3);
  const std::vector<std::string> names = {"x", "y", "z"};
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 200; ++i) {
    const auto e = oracle::random_expr(rng, names, 5);
    const BoundExpr b(e, names);
    const double v[3] = {u(rng), u(rng), u(rng)};
    const FeatureMap m{{"x", v[0]}, {"y", v[1]}, {"z", v[2]}};
    CHECK(b(std::span<const double>(v, 3)) == evaluate(e, m));
  }
  const std::vector<std::string> only_x = {"x"};
  CHECK_THROWS_AS(BoundExpr(parse_or_throw("y"), only_x), UnboundFeature);
}

TEST_CASE("weighted_sum") {
  const std::vector<CostExpr> one = {parse_or_throw("x * 3 - 1")};
  const std::vector<double> w1 = {1.0};
  const auto s1 = weighted_sum(one, w1);
  for (double x : {-2.0, 0.0, 0.5, 7.0}) {
    CHECK(evaluate(s1, {{"x", x}}) == evaluate(one[0], {{"x", x}}));
  }

  const std::vector<CostExpr> xy = {feature("x"), feature("y")};
  const std::vector<double> w2 = {0.25, 0.75};
  CHECK(evaluate(weighted_sum(xy, w2), {{"x", 4.0}, {"y", 0.0}}) == 1.0);

  const std::vector<double> bad = {1.0};
  CHECK_THROWS_AS(weighted_sum(xy, bad), std::invalid_argument);
  CHECK_THROWS_AS(weighted_sum(std::span<const CostExpr>{}, std::span<const double>{}),
                  std::invalid_argument);
}

TEST_CASE("weighted_sum matches the direct sum on random inputs") {
  std::mt19937_64 rng(5);
  const std::vector<std::string> names = {"x", "y", "z"};
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_real_distribution<double> w(0.0, 1.0);
  std::vector<CostExpr> exprs;
  std::vector<double> weights;
  for (int i = 0; i < 3; ++i) {
    exprs.push_back(oracle::random_expr(rng, names, 4));
    weights.push_back(w(rng));
  }
  const auto sum = weighted_sum(exprs, weights);
  for (int k = 0; k < 1000; ++k) {
    const FeatureMap m{{"x", u(rng)}, {"y", u(rng)}, {"z", u(rng)}};
    double direct = 0.0;
    for (std::size_t i = 0; i < exprs.size(); ++i) direct += weights[i] * evaluate(exprs[i], m);
    CHECK(std::abs(evaluate(sum, m) - direct) <= 1e-12 * std::max(1.0, std::abs(direct)));
  }
}

TEST_CASE("node_count and depth") {
  const auto e = parse_or_throw("x + abs(y)");
  CHECK(node_count(e) == 4);
  CHECK(depth(e) == 3);
}
