#ifndef E2CFD_DSL_HPP_
#define E2CFD_DSL_HPP_

#include <cstddef>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

// Cost expression language. Every generated cost function and every scoring
// function is a CostExpr: an immutable tree over named scalar features.
namespace e2cfd::dsl {

enum class UnaryOp { kNeg, kAbs, kExp, kLog, kSqrt, kTanh, kStep };
enum class BinaryOp { kAdd, kSub, kMul, kDiv, kMin, kMax };
enum class CompareOp { kLt, kLe, kGt, kGe, kEq };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Constant {
  double value;
};
struct Feature {
  std::string name;
};
struct Unary {
  UnaryOp op;
  NodePtr arg;
};
struct Binary {
  BinaryOp op;
  NodePtr lhs;
  NodePtr rhs;
};
struct Clip {
  NodePtr value;
  NodePtr lo;
  NodePtr hi;
};
struct If {
  CompareOp cmp;
  NodePtr cond_lhs;
  NodePtr cond_rhs;
  NodePtr then_branch;
  NodePtr else_branch;
};

struct Node {
  std::variant<Constant, Feature, Unary, Binary, Clip, If> data;
};

// Structural limits enforced on parse. Untrusted text (generator output, seed
// files) uses the defaults; composite functions written by the evolution loop
// are reloaded with `composite()`.
struct Limits {
  std::size_t max_depth = 32;
  std::size_t max_nodes = 512;

  static Limits composite() { return Limits{256, 1u << 16}; }
};

// Name -> value bindings. Values must be finite.
using FeatureMap = std::map<std::string, double, std::less<>>;

class CostExpr {
 public:
  CostExpr() = default;
  explicit CostExpr(NodePtr root) : root_(std::move(root)) {}

  const Node& root() const { return *root_; }
  const NodePtr& ptr() const { return root_; }
  bool empty() const { return root_ == nullptr; }

  friend bool operator==(const CostExpr& a, const CostExpr& b);

 private:
  NodePtr root_;
};

// Node constructors.
CostExpr constant(double v);
CostExpr feature(std::string name);
CostExpr unary(UnaryOp op, const CostExpr& arg);
CostExpr binary(BinaryOp op, const CostExpr& lhs, const CostExpr& rhs);
CostExpr clip(const CostExpr& v, const CostExpr& lo, const CostExpr& hi);
CostExpr if_then_else(CompareOp cmp, const CostExpr& a, const CostExpr& b,
                      const CostExpr& then_branch,
                      const CostExpr& else_branch);

struct ParseError {
  enum class Kind { kSyntax, kLimitExceeded };
  Kind kind = Kind::kSyntax;
  std::size_t offset = 0;
  std::string expected;
  std::string excerpt;

  std::string message() const;
};

class ParseResult {
 public:
  ParseResult(CostExpr e) : value_(std::move(e)) {}  // NOLINT
  ParseResult(ParseError e) : value_(std::move(e)) {}  // NOLINT

  bool ok() const { return std::holds_alternative<CostExpr>(value_); }
  explicit operator bool() const { return ok(); }
  const CostExpr& expr() const { return std::get<CostExpr>(value_); }
  const ParseError& error() const { return std::get<ParseError>(value_); }

 private:
  std::variant<CostExpr, ParseError> value_;
};

ParseResult parse(std::string_view text, const Limits& limits = {});

// Parses or throws std::invalid_argument carrying the ParseError message.
CostExpr parse_or_throw(std::string_view text, const Limits& limits = {});

// Canonical single-line form with minimal parentheses.
// parse(pretty(e)) == e for every tree within limits.
std::string pretty(const CostExpr& expr);

std::set<std::string> free_features(const CostExpr& expr);
std::size_t node_count(const CostExpr& expr);
std::size_t depth(const CostExpr& expr);

class UnboundFeature : public std::runtime_error {
 public:
  explicit UnboundFeature(const std::string& name)
      : std::runtime_error("unbound feature '" + name + "'"), name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

// Guarded evaluation: division uses sign(y)*max(|y|,1e-8), log/sqrt clamp
// their argument to >= 1e-8, exp saturates, and every intermediate value is
// saturated to +-kSaturation so the result is always finite.
inline constexpr double kGuardEpsilon = 1e-8;
inline constexpr double kSaturation = 1e300;

double evaluate(const CostExpr& expr, const FeatureMap& features);

// An expression with feature names resolved to positions of a fixed name
// list, for evaluation inside rollout loops.
class BoundExpr {
 public:
  BoundExpr() = default;
  // Throws UnboundFeature if the expression uses a name not in `names`.
  BoundExpr(const CostExpr& expr, std::span<const std::string> names);

  double operator()(std::span<const double> values) const;
  bool empty() const { return nodes_.empty(); }

 private:
  struct Op {
    int kind;
    int code;
    double value;
    int a, b, c, d, e;
  };
  int flatten(const Node& node, std::span<const std::string> names);
  std::vector<Op> nodes_;
  int root_ = -1;
};

// Sum_i weights[i] * exprs[i], folded left to right so that evaluation of the
// result reproduces the direct weighted sum bit for bit.
CostExpr weighted_sum(std::span<const CostExpr> exprs,
                      std::span<const double> weights);

std::string_view to_string(UnaryOp op);
std::string_view to_string(BinaryOp op);
std::string_view to_string(CompareOp op);

}  // namespace e2cfd::dsl

#endif  // E2CFD_DSL_HPP_
