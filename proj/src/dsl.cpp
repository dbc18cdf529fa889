#include "e2cfd/dsl.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>

namespace e2cfd::dsl {

namespace {

NodePtr make(auto&& data) {
  return std::make_shared<const Node>(Node{std::forward<decltype(data)>(data)});
}

double saturate(double x) {
  if (x > kSaturation) return kSaturation;
  if (x < -kSaturation) return -kSaturation;
  return x;
}

double apply_unary(UnaryOp op, double x) {
  switch (op) {
    case UnaryOp::kNeg: return -x;
    case UnaryOp::kAbs: return std::fabs(x);
    case UnaryOp::kExp: return saturate(std::exp(std::min(x, 690.0)));
    case UnaryOp::kLog: return std::log(std::max(x, kGuardEpsilon));
    case UnaryOp::kSqrt: return std::sqrt(std::max(x, kGuardEpsilon));
    case UnaryOp::kTanh: return std::tanh(x);
    case UnaryOp::kStep: return x > 0.0 ? 1.0 : 0.0;
  }
  return 0.0;
}

double apply_binary(BinaryOp op, double a, double b) {
  switch (op) {
    case BinaryOp::kAdd: return saturate(a + b);
    case BinaryOp::kSub: return saturate(a - b);
    case BinaryOp::kMul: return saturate(a * b);
    case BinaryOp::kDiv: {
      const double sign = std::signbit(b) ? -1.0 : 1.0;
      return saturate(a / (sign * std::max(std::fabs(b), kGuardEpsilon)));
    }
    case BinaryOp::kMin: return std::min(a, b);
    case BinaryOp::kMax: return std::max(a, b);
  }
  return 0.0;
}

bool apply_compare(CompareOp op, double a, double b) {
  switch (op) {
    case CompareOp::kLt: return a < b;
    case CompareOp::kLe: return a <= b;
    case CompareOp::kGt: return a > b;
    case CompareOp::kGe: return a >= b;
    case CompareOp::kEq: return a == b;
  }
  return false;
}

double clip_value(double v, double lo, double hi) {
  // lo > hi resolves to hi, like min(max(v, lo), hi).
  return std::min(std::max(v, lo), hi);
}

template <typename Lookup>
double eval_node(const Node& node, const Lookup& lookup) {
  return std::visit(
      [&](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Constant>) {
          return n.value;
        } else if constexpr (std::is_same_v<T, Feature>) {
          return lookup(n.name);
        } else if constexpr (std::is_same_v<T, Unary>) {
          return apply_unary(n.op, eval_node(*n.arg, lookup));
        } else if constexpr (std::is_same_v<T, Binary>) {
          const double a = eval_node(*n.lhs, lookup);
          const double b = eval_node(*n.rhs, lookup);
          return apply_binary(n.op, a, b);
        } else if constexpr (std::is_same_v<T, Clip>) {
          return clip_value(eval_node(*n.value, lookup),
                            eval_node(*n.lo, lookup), eval_node(*n.hi, lookup));
        } else {
          const bool c = apply_compare(n.cmp, eval_node(*n.cond_lhs, lookup),
                                       eval_node(*n.cond_rhs, lookup));
          return c ? eval_node(*n.then_branch, lookup)
                   : eval_node(*n.else_branch, lookup);
        }
      },
      node.data);
}

bool equal_nodes(const Node& a, const Node& b) {
  if (a.data.index() != b.data.index()) return false;
  return std::visit(
      [&](const auto& x) -> bool {
        using T = std::decay_t<decltype(x)>;
        const auto& y = std::get<T>(b.data);
        if constexpr (std::is_same_v<T, Constant>) {
          return std::bit_cast<std::uint64_t>(x.value) ==
                 std::bit_cast<std::uint64_t>(y.value);
        } else if constexpr (std::is_same_v<T, Feature>) {
          return x.name == y.name;
        } else if constexpr (std::is_same_v<T, Unary>) {
          return x.op == y.op && equal_nodes(*x.arg, *y.arg);
        } else if constexpr (std::is_same_v<T, Binary>) {
          return x.op == y.op && equal_nodes(*x.lhs, *y.lhs) &&
                 equal_nodes(*x.rhs, *y.rhs);
        } else if constexpr (std::is_same_v<T, Clip>) {
          return equal_nodes(*x.value, *y.value) && equal_nodes(*x.lo, *y.lo) &&
                 equal_nodes(*x.hi, *y.hi);
        } else {
          return x.cmp == y.cmp && equal_nodes(*x.cond_lhs, *y.cond_lhs) &&
                 equal_nodes(*x.cond_rhs, *y.cond_rhs) &&
                 equal_nodes(*x.then_branch, *y.then_branch) &&
                 equal_nodes(*x.else_branch, *y.else_branch);
        }
      },
      a.data);
}

template <typename F>
void for_each_child(const Node& node, F&& f) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Unary>) {
          f(*n.arg);
        } else if constexpr (std::is_same_v<T, Binary>) {
          f(*n.lhs);
          f(*n.rhs);
        } else if constexpr (std::is_same_v<T, Clip>) {
          f(*n.value);
          f(*n.lo);
          f(*n.hi);
        } else if constexpr (std::is_same_v<T, If>) {
          f(*n.cond_lhs);
          f(*n.cond_rhs);
          f(*n.then_branch);
          f(*n.else_branch);
        }
      },
      node.data);
}

// ---------------------------------------------------------------------------
// Parser

struct NamedUnary {
  std::string_view name;
  UnaryOp op;
};
constexpr NamedUnary kUnaryFns[] = {
    {"abs", UnaryOp::kAbs},   {"exp", UnaryOp::kExp},   {"log", UnaryOp::kLog},
    {"sqrt", UnaryOp::kSqrt}, {"tanh", UnaryOp::kTanh}, {"step", UnaryOp::kStep},
};

bool is_reserved(std::string_view id) {
  for (const auto& f : kUnaryFns) {
    if (f.name == id) return true;
  }
  return id == "min" || id == "max" || id == "clip" || id == "if";
}

class Parser {
 public:
  Parser(std::string_view text, const Limits& limits)
      : text_(text), limits_(limits) {}

  ParseResult run() {
    NodePtr root = expr();
    if (!failed()) {
      skip_ws();
      if (pos_ < text_.size()) fail("end of input");
    }
    if (failed()) return *error_;
    CostExpr out(root);
    if (node_count(out) > limits_.max_nodes) {
      return limit_error("node count exceeds " +
                         std::to_string(limits_.max_nodes));
    }
    if (depth(out) > limits_.max_depth) {
      return limit_error("tree depth exceeds " +
                         std::to_string(limits_.max_depth));
    }
    return out;
  }

 private:
  bool failed() const { return error_.has_value(); }

  void fail(std::string expected) {
    if (failed()) return;
    ParseError e;
    e.kind = ParseError::Kind::kSyntax;
    e.offset = std::min(pos_, text_.size());
    e.expected = std::move(expected);
    e.excerpt = excerpt(e.offset);
    error_ = std::move(e);
  }

  ParseError limit_error(std::string what) {
    ParseError e;
    e.kind = ParseError::Kind::kLimitExceeded;
    e.offset = std::min(pos_, text_.size());
    e.expected = std::move(what);
    e.excerpt = excerpt(0);
    return e;
  }

  std::string excerpt(std::size_t at) const {
    const std::size_t begin = at > 16 ? at - 16 : 0;
    return std::string(text_.substr(begin, 32));
  }

  void skip_ws() {
    while (pos_ < text_.size() &&
           (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
            text_[pos_] == '\r')) {
      ++pos_;
    }
  }

  bool peek(char c) {
    skip_ws();
    return pos_ < text_.size() && text_[pos_] == c;
  }

  bool accept(char c) {
    if (peek(c)) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) fail(std::string("'") + c + "'");
  }

  // Guards against stack exhaustion on deeply nested input before the tree
  // exists to be measured.
  struct Nest {
    explicit Nest(Parser& p) : p_(p) {
      if (++p_.nesting_ > 2 * p_.limits_.max_depth + 8) {
        if (!p_.failed()) {
          ParseError e = p_.limit_error(
              "nesting exceeds " + std::to_string(p_.limits_.max_depth));
          p_.error_ = std::move(e);
        }
      }
    }
    ~Nest() { --p_.nesting_; }
    Parser& p_;
  };

  NodePtr expr() {
    Nest guard(*this);
    if (failed()) return nullptr;
    NodePtr lhs = term();
    while (!failed()) {
      BinaryOp op;
      if (accept('+')) {
        op = BinaryOp::kAdd;
      } else if (accept('-')) {
        op = BinaryOp::kSub;
      } else {
        break;
      }
      NodePtr rhs = term();
      if (failed()) return nullptr;
      lhs = make(Binary{op, lhs, rhs});
      if (++nodes_ > limits_.max_nodes * 4) fail("smaller expression");
    }
    return lhs;
  }

  NodePtr term() {
    NodePtr lhs = factor();
    while (!failed()) {
      BinaryOp op;
      if (accept('*')) {
        op = BinaryOp::kMul;
      } else if (accept('/')) {
        op = BinaryOp::kDiv;
      } else {
        break;
      }
      NodePtr rhs = factor();
      if (failed()) return nullptr;
      lhs = make(Binary{op, lhs, rhs});
      if (++nodes_ > limits_.max_nodes * 4) fail("smaller expression");
    }
    return lhs;
  }

  NodePtr factor() {
    if (accept('-')) {
      skip_ws();
      if (pos_ < text_.size() &&
          (std::isdigit(static_cast<unsigned char>(text_[pos_])) ||
           text_[pos_] == '.')) {
        auto v = number();
        if (!v) return nullptr;
        return make(Constant{-*v});
      }
      NodePtr arg = atom();
      if (failed()) return nullptr;
      return make(Unary{UnaryOp::kNeg, arg});
    }
    // Unary plus is accepted and dropped.
    if (accept('+')) return atom();
    return atom();
  }

  std::optional<double> number() {
    skip_ws();
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < text_.size() &&
             std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
        ++n;
      }
      return n;
    };
    std::size_t n = digits();
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      n += digits();
    }
    if (n == 0) {
      pos_ = start;
      fail("number");
      return std::nullopt;
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      const std::size_t mark = pos_;
      ++pos_;
      if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) {
        ++pos_;
      }
      if (digits() == 0) {
        pos_ = mark + 1;
        fail("exponent digits");
        return std::nullopt;
      }
    }
    double v = 0.0;
    const char* first = text_.data() + start;
    const char* last = text_.data() + pos_;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
      pos_ = start;
      fail("finite number");
      return std::nullopt;
    }
    return v;
  }

  std::string identifier() {
    const std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
            text_[pos_] == '_')) {
      ++pos_;
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  std::vector<NodePtr> args(std::size_t count) {
    std::vector<NodePtr> out;
    expect('(');
    for (std::size_t i = 0; i < count && !failed(); ++i) {
      if (i > 0) expect(',');
      if (failed()) break;
      out.push_back(expr());
    }
    if (!failed()) expect(')');
    return out;
  }

  NodePtr atom() {
    skip_ws();
    if (pos_ >= text_.size()) {
      fail("number, identifier, function call or '('");
      return nullptr;
    }
    const char c = text_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      auto v = number();
      if (!v) return nullptr;
      return make(Constant{*v});
    }
    if (c == '(') {
      ++pos_;
      NodePtr inner = expr();
      if (failed()) return nullptr;
      expect(')');
      return failed() ? nullptr : inner;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t id_start = pos_;
      const std::string id = identifier();
      if (!is_reserved(id)) return make(Feature{id});
      if (!peek('(')) {
        fail("'(' after '" + id + "'");
        return nullptr;
      }
      (void)id_start;
      if (id == "if") return if_expr();
      if (id == "min" || id == "max") {
        auto a = args(2);
        if (failed()) return nullptr;
        return make(Binary{id == "min" ? BinaryOp::kMin : BinaryOp::kMax, a[0],
                           a[1]});
      }
      if (id == "clip") {
        auto a = args(3);
        if (failed()) return nullptr;
        return make(Clip{a[0], a[1], a[2]});
      }
      for (const auto& f : kUnaryFns) {
        if (f.name == id) {
          auto a = args(1);
          if (failed()) return nullptr;
          return make(Unary{f.op, a[0]});
        }
      }
    }
    fail("number, identifier, function call or '('");
    return nullptr;
  }

  NodePtr if_expr() {
    Nest guard(*this);
    expect('(');
    if (failed()) return nullptr;
    NodePtr lhs = expr();
    if (failed()) return nullptr;
    skip_ws();
    CompareOp cmp;
    auto next_is = [&](std::string_view s) {
      return text_.substr(pos_, s.size()) == s;
    };
    if (next_is("<=")) {
      cmp = CompareOp::kLe;
      pos_ += 2;
    } else if (next_is(">=")) {
      cmp = CompareOp::kGe;
      pos_ += 2;
    } else if (next_is("==")) {
      cmp = CompareOp::kEq;
      pos_ += 2;
    } else if (next_is("<")) {
      cmp = CompareOp::kLt;
      pos_ += 1;
    } else if (next_is(">")) {
      cmp = CompareOp::kGt;
      pos_ += 1;
    } else {
      fail("comparison operator");
      return nullptr;
    }
    NodePtr rhs = expr();
    if (failed()) return nullptr;
    expect(',');
    if (failed()) return nullptr;
    NodePtr then_branch = expr();
    if (failed()) return nullptr;
    expect(',');
    if (failed()) return nullptr;
    NodePtr else_branch = expr();
    if (failed()) return nullptr;
    expect(')');
    if (failed()) return nullptr;
    return make(If{cmp, lhs, rhs, then_branch, else_branch});
  }

  std::string_view text_;
  Limits limits_;
  std::size_t pos_ = 0;
  std::size_t nesting_ = 0;
  std::size_t nodes_ = 0;
  std::optional<ParseError> error_;
};

// ---------------------------------------------------------------------------
// Printer

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

// 1: additive, 2: multiplicative, 3: prefix minus, 4: atom.
int precedence(const Node& node) {
  if (const auto* b = std::get_if<Binary>(&node.data)) {
    switch (b->op) {
      case BinaryOp::kAdd:
      case BinaryOp::kSub: return 1;
      case BinaryOp::kMul:
      case BinaryOp::kDiv: return 2;
      default: return 4;
    }
  }
  if (const auto* u = std::get_if<Unary>(&node.data)) {
    return u->op == UnaryOp::kNeg ? 3 : 4;
  }
  if (const auto* c = std::get_if<Constant>(&node.data)) {
    return std::signbit(c->value) ? 3 : 4;
  }
  return 4;
}

void print(const Node& node, std::string& out);

void print_wrapped(const Node& node, bool parens, std::string& out) {
  if (parens) out += '(';
  print(node, out);
  if (parens) out += ')';
}

void print(const Node& node, std::string& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Constant>) {
          out += format_number(n.value);
        } else if constexpr (std::is_same_v<T, Feature>) {
          out += n.name;
        } else if constexpr (std::is_same_v<T, Unary>) {
          if (n.op == UnaryOp::kNeg) {
            out += '-';
            const bool is_const = std::holds_alternative<Constant>(n.arg->data);
            print_wrapped(*n.arg, is_const || precedence(*n.arg) < 4, out);
          } else {
            out += to_string(n.op);
            print_wrapped(*n.arg, true, out);
          }
        } else if constexpr (std::is_same_v<T, Binary>) {
          if (n.op == BinaryOp::kMin || n.op == BinaryOp::kMax) {
            out += to_string(n.op);
            out += '(';
            print(*n.lhs, out);
            out += ", ";
            print(*n.rhs, out);
            out += ')';
          } else {
            const int prec = precedence(node);
            print_wrapped(*n.lhs, precedence(*n.lhs) < prec, out);
            out += ' ';
            out += to_string(n.op);
            out += ' ';
            print_wrapped(*n.rhs, precedence(*n.rhs) <= prec, out);
          }
        } else if constexpr (std::is_same_v<T, Clip>) {
          out += "clip(";
          print(*n.value, out);
          out += ", ";
          print(*n.lo, out);
          out += ", ";
          print(*n.hi, out);
          out += ')';
        } else {
          out += "if(";
          print(*n.cond_lhs, out);
          out += ' ';
          out += to_string(n.cmp);
          out += ' ';
          print(*n.cond_rhs, out);
          out += ", ";
          print(*n.then_branch, out);
          out += ", ";
          print(*n.else_branch, out);
          out += ')';
        }
      },
      node.data);
}

}  // namespace

bool operator==(const CostExpr& a, const CostExpr& b) {
  if (a.root_ == b.root_) return true;
  if (!a.root_ || !b.root_) return false;
  return equal_nodes(*a.root_, *b.root_);
}

CostExpr constant(double v) { return CostExpr(make(Constant{v})); }
CostExpr feature(std::string name) {
  return CostExpr(make(Feature{std::move(name)}));
}
CostExpr unary(UnaryOp op, const CostExpr& arg) {
  return CostExpr(make(Unary{op, arg.ptr()}));
}
CostExpr binary(BinaryOp op, const CostExpr& lhs, const CostExpr& rhs) {
  return CostExpr(make(Binary{op, lhs.ptr(), rhs.ptr()}));
}
CostExpr clip(const CostExpr& v, const CostExpr& lo, const CostExpr& hi) {
  return CostExpr(make(Clip{v.ptr(), lo.ptr(), hi.ptr()}));
}
CostExpr if_then_else(CompareOp cmp, const CostExpr& a, const CostExpr& b,
                      const CostExpr& then_branch,
                      const CostExpr& else_branch) {
  return CostExpr(make(If{cmp, a.ptr(), b.ptr(), then_branch.ptr(),
                          else_branch.ptr()}));
}

std::string ParseError::message() const {
  std::string head = kind == Kind::kLimitExceeded ? "limit exceeded: "
                                                  : "parse error at offset " +
                                                        std::to_string(offset) +
                                                        ": expected ";
  return head + expected + " near \"" + excerpt + "\"";
}

ParseResult parse(std::string_view text, const Limits& limits) {
  return Parser(text, limits).run();
}

CostExpr parse_or_throw(std::string_view text, const Limits& limits) {
  auto r = parse(text, limits);
  if (!r) throw std::invalid_argument(r.error().message());
  return r.expr();
}

std::string pretty(const CostExpr& expr) {
  std::string out;
  print(expr.root(), out);
  return out;
}

std::set<std::string> free_features(const CostExpr& expr) {
  std::set<std::string> names;
  std::function<void(const Node&)> walk = [&](const Node& n) {
    if (const auto* f = std::get_if<Feature>(&n.data)) names.insert(f->name);
    for_each_child(n, walk);
  };
  walk(expr.root());
  return names;
}

std::size_t node_count(const CostExpr& expr) {
  std::size_t count = 0;
  std::function<void(const Node&)> walk = [&](const Node& n) {
    ++count;
    for_each_child(n, walk);
  };
  walk(expr.root());
  return count;
}

std::size_t depth(const CostExpr& expr) {
  std::function<std::size_t(const Node&)> walk = [&](const Node& n) {
    std::size_t d = 0;
    for_each_child(n, [&](const Node& c) { d = std::max(d, walk(c)); });
    return d + 1;
  };
  return walk(expr.root());
}

double evaluate(const CostExpr& expr, const FeatureMap& features) {
  const double v = eval_node(expr.root(), [&](const std::string& name) {
    auto it = features.find(name);
    if (it == features.end()) throw UnboundFeature(name);
    if (!std::isfinite(it->second)) {
      throw std::invalid_argument("non-finite value for feature '" + name +
                                  "'");
    }
    return it->second;
  });
  if (!std::isfinite(v)) {
    throw std::logic_error("cost expression produced a non-finite value");
  }
  return v;
}

// BoundExpr op kinds.
namespace {
enum : int { kOpConst, kOpFeature, kOpUnary, kOpBinary, kOpClip, kOpIf };
}

BoundExpr::BoundExpr(const CostExpr& expr, std::span<const std::string> names) {
  root_ = flatten(expr.root(), names);
}

int BoundExpr::flatten(const Node& node, std::span<const std::string> names) {
  Op op{};
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Constant>) {
          op.kind = kOpConst;
          op.value = n.value;
        } else if constexpr (std::is_same_v<T, Feature>) {
          auto it = std::find(names.begin(), names.end(), n.name);
          if (it == names.end()) throw UnboundFeature(n.name);
          op.kind = kOpFeature;
          op.code = static_cast<int>(it - names.begin());
        } else if constexpr (std::is_same_v<T, Unary>) {
          op.kind = kOpUnary;
          op.code = static_cast<int>(n.op);
          op.a = flatten(*n.arg, names);
        } else if constexpr (std::is_same_v<T, Binary>) {
          op.kind = kOpBinary;
          op.code = static_cast<int>(n.op);
          op.a = flatten(*n.lhs, names);
          op.b = flatten(*n.rhs, names);
        } else if constexpr (std::is_same_v<T, Clip>) {
          op.kind = kOpClip;
          op.a = flatten(*n.value, names);
          op.b = flatten(*n.lo, names);
          op.c = flatten(*n.hi, names);
        } else {
          op.kind = kOpIf;
          op.code = static_cast<int>(n.cmp);
          op.a = flatten(*n.cond_lhs, names);
          op.b = flatten(*n.cond_rhs, names);
          op.d = flatten(*n.then_branch, names);
          op.e = flatten(*n.else_branch, names);
        }
      },
      node.data);
  nodes_.push_back(op);
  return static_cast<int>(nodes_.size()) - 1;
}

double BoundExpr::operator()(std::span<const double> values) const {
  std::function<double(int)> eval = [&](int i) -> double {
    const Op& op = nodes_[static_cast<std::size_t>(i)];
    switch (op.kind) {
      case kOpConst: return op.value;
      case kOpFeature: return values[static_cast<std::size_t>(op.code)];
      case kOpUnary: return apply_unary(static_cast<UnaryOp>(op.code), eval(op.a));
      case kOpBinary: {
        const double a = eval(op.a);
        const double b = eval(op.b);
        return apply_binary(static_cast<BinaryOp>(op.code), a, b);
      }
      case kOpClip: return clip_value(eval(op.a), eval(op.b), eval(op.c));
      default:
        return apply_compare(static_cast<CompareOp>(op.code), eval(op.a),
                             eval(op.b))
                   ? eval(op.d)
                   : eval(op.e);
    }
  };
  return eval(root_);
}

CostExpr weighted_sum(std::span<const CostExpr> exprs,
                      std::span<const double> weights) {
  if (exprs.size() != weights.size()) {
    throw std::invalid_argument("weighted_sum: " + std::to_string(exprs.size()) +
                                " expressions but " +
                                std::to_string(weights.size()) + " weights");
  }
  if (exprs.empty()) {
    throw std::invalid_argument("weighted_sum: empty population");
  }
  CostExpr acc = binary(BinaryOp::kMul, constant(weights[0]), exprs[0]);
  for (std::size_t i = 1; i < exprs.size(); ++i) {
    acc = binary(BinaryOp::kAdd, acc,
                 binary(BinaryOp::kMul, constant(weights[i]), exprs[i]));
  }
  return acc;
}

std::string_view to_string(UnaryOp op) {
  switch (op) {
    case UnaryOp::kNeg: return "-";
    case UnaryOp::kAbs: return "abs";
    case UnaryOp::kExp: return "exp";
    case UnaryOp::kLog: return "log";
    case UnaryOp::kSqrt: return "sqrt";
    case UnaryOp::kTanh: return "tanh";
    case UnaryOp::kStep: return "step";
  }
  return "?";
}

std::string_view to_string(BinaryOp op) {
  switch (op) {
    case BinaryOp::kAdd: return "+";
    case BinaryOp::kSub: return "-";
    case BinaryOp::kMul: return "*";
    case BinaryOp::kDiv: return "/";
    case BinaryOp::kMin: return "min";
    case BinaryOp::kMax: return "max";
  }
  return "?";
}

std::string_view to_string(CompareOp op) {
  switch (op) {
    case CompareOp::kLt: return "<";
    case CompareOp::kLe: return "<=";
    case CompareOp::kGt: return ">";
    case CompareOp::kGe: return ">=";
    case CompareOp::kEq: return "==";
  }
  return "?";
}

}  // namespace e2cfd::dsl
