#include "needle/expr.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

#include "needle/error.hpp"

namespace needle {

enum class Op { Num, Var, Neg, Add, Sub, Mul, Div, Pow, Sin, Cos, Exp, Log, Abs, Sqrt };

struct Expr::Node {
  Op op = Op::Num;
  double value = 0.0;
  int var = 0;
  std::shared_ptr<const Node> a;
  std::shared_ptr<const Node> b;
};

namespace {

using NodePtr = std::shared_ptr<const Expr::Node>;

NodePtr make(Op op, NodePtr a = nullptr, NodePtr b = nullptr) {
  auto n = std::make_shared<Expr::Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  NodePtr parse_all() {
    NodePtr e = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected character");
    return e;
  }

  int arity = 0;

 private:
  [[noreturn]] void fail(const std::string& what) { throw ParseError(ErrorCode::SyntaxError, pos_, what); }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+'))
        lhs = make(Op::Add, lhs, term());
      else if (accept('-'))
        lhs = make(Op::Sub, lhs, term());
      else
        return lhs;
    }
  }

  NodePtr term() {
    NodePtr lhs = factor();
    for (;;) {
      if (accept('*'))
        lhs = make(Op::Mul, lhs, factor());
      else if (accept('/'))
        lhs = make(Op::Div, lhs, factor());
      else
        return lhs;
    }
  }

  NodePtr factor() {
    const bool neg = accept('-');
    NodePtr base = atom();
    if (accept('^')) base = make(Op::Pow, base, atom());
    return neg ? make(Op::Neg, base) : base;
  }

  NodePtr atom() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (c == '(') {
      ++pos_;
      NodePtr e = expr();
      if (!accept(')')) fail("expected ')'");
      return e;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
    fail("expected a number, variable, function or '('");
  }

  NodePtr number() {
    const std::size_t start = pos_;
    std::size_t end = pos_;
    while (end < s_.size() && (std::isdigit(static_cast<unsigned char>(s_[end])) || s_[end] == '.')) ++end;
    if (end < s_.size() && (s_[end] == 'e' || s_[end] == 'E')) {
      std::size_t k = end + 1;
      if (k < s_.size() && (s_[k] == '+' || s_[k] == '-')) ++k;
      if (k < s_.size() && std::isdigit(static_cast<unsigned char>(s_[k]))) {
        while (k < s_.size() && std::isdigit(static_cast<unsigned char>(s_[k]))) ++k;
        end = k;
      }
    }
    double v = 0.0;
    auto res = std::from_chars(s_.data() + start, s_.data() + end, v);
    if (res.ec != std::errc() || res.ptr != s_.data() + end) fail("malformed number");
    pos_ = end;
    auto n = std::make_shared<Expr::Node>();
    n->op = Op::Num;
    n->value = v;
    return n;
  }

  NodePtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    const std::string_view id = s_.substr(start, pos_ - start);
    if (id == "x1" || id == "x2" || id == "x3") {
      auto n = std::make_shared<Expr::Node>();
      n->op = Op::Var;
      n->var = id[1] - '1';
      arity = std::max(arity, n->var + 1);
      return n;
    }
    static constexpr std::pair<std::string_view, Op> funcs[] = {
        {"sin", Op::Sin}, {"cos", Op::Cos}, {"exp", Op::Exp}, {"log", Op::Log}, {"abs", Op::Abs}, {"sqrt", Op::Sqrt}};
    for (const auto& [name, op] : funcs) {
      if (id != name) continue;
      if (!accept('(')) fail("expected '(' after function name");
      NodePtr arg = expr();
      if (!accept(')')) fail("expected ')'");
      return make(op, arg);
    }
    throw ParseError(ErrorCode::UnknownIdentifier, start, "unknown identifier '" + std::string(id) + "'");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

double eval(const Expr::Node& n, const Point& x) {
  switch (n.op) {
    case Op::Num: return n.value;
    case Op::Var: return x[n.var];
    case Op::Neg: return -eval(*n.a, x);
    case Op::Add: return eval(*n.a, x) + eval(*n.b, x);
    case Op::Sub: return eval(*n.a, x) - eval(*n.b, x);
    case Op::Mul: return eval(*n.a, x) * eval(*n.b, x);
    case Op::Div: return eval(*n.a, x) / eval(*n.b, x);
    case Op::Pow: return std::pow(eval(*n.a, x), eval(*n.b, x));
    case Op::Sin: return std::sin(eval(*n.a, x));
    case Op::Cos: return std::cos(eval(*n.a, x));
    case Op::Exp: return std::exp(eval(*n.a, x));
    case Op::Log: return std::log(eval(*n.a, x));
    case Op::Abs: return std::abs(eval(*n.a, x));
    case Op::Sqrt: return std::sqrt(eval(*n.a, x));
  }
  return 0.0;
}

struct Dual {
  double v = 0.0;
  Point g = Point::Zero();
};

Dual eval_dual(const Expr::Node& n, const Point& x) {
  switch (n.op) {
    case Op::Num: return {n.value, Point::Zero()};
    case Op::Var: {
      Dual d{x[n.var], Point::Zero()};
      d.g[n.var] = 1.0;
      return d;
    }
    case Op::Neg: {
      Dual a = eval_dual(*n.a, x);
      return {-a.v, -a.g};
    }
    case Op::Add: {
      Dual a = eval_dual(*n.a, x), b = eval_dual(*n.b, x);
      return {a.v + b.v, a.g + b.g};
    }
    case Op::Sub: {
      Dual a = eval_dual(*n.a, x), b = eval_dual(*n.b, x);
      return {a.v - b.v, a.g - b.g};
    }
    case Op::Mul: {
      Dual a = eval_dual(*n.a, x), b = eval_dual(*n.b, x);
      return {a.v * b.v, a.g * b.v + b.g * a.v};
    }
    case Op::Div: {
      Dual a = eval_dual(*n.a, x), b = eval_dual(*n.b, x);
      return {a.v / b.v, (a.g * b.v - b.g * a.v) / (b.v * b.v)};
    }
    case Op::Pow: {
      Dual a = eval_dual(*n.a, x), b = eval_dual(*n.b, x);
      const double v = std::pow(a.v, b.v);
      Point g = Point::Zero();
      if (b.v != 0.0) g += b.v * std::pow(a.v, b.v - 1.0) * a.g;
      if (!b.g.isZero(0.0)) g += v * std::log(a.v) * b.g;
      return {v, g};
    }
    case Op::Sin: {
      Dual a = eval_dual(*n.a, x);
      return {std::sin(a.v), std::cos(a.v) * a.g};
    }
    case Op::Cos: {
      Dual a = eval_dual(*n.a, x);
      return {std::cos(a.v), -std::sin(a.v) * a.g};
    }
    case Op::Exp: {
      Dual a = eval_dual(*n.a, x);
      const double e = std::exp(a.v);
      return {e, e * a.g};
    }
    case Op::Log: {
      Dual a = eval_dual(*n.a, x);
      return {std::log(a.v), a.g / a.v};
    }
    case Op::Abs: {
      Dual a = eval_dual(*n.a, x);
      const double s = a.v > 0 ? 1.0 : (a.v < 0 ? -1.0 : 0.0);
      return {std::abs(a.v), s * a.g};
    }
    case Op::Sqrt: {
      Dual a = eval_dual(*n.a, x);
      const double r = std::sqrt(a.v);
      return {r, a.g / (2.0 * r)};
    }
  }
  return {};
}

}  // namespace

Expr Expr::parse(std::string_view source) {
  Parser p(source);
  Expr e;
  e.root_ = p.parse_all();
  e.source_ = std::string(source);
  e.arity_ = p.arity;
  return e;
}

Expr Expr::constant(double value) {
  auto n = std::make_shared<Node>();
  n->op = Op::Num;
  n->value = value;
  Expr e;
  e.root_ = n;
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, value);
  e.source_.assign(buf, r.ptr);
  return e;
}

double Expr::operator()(const Point& x) const { return root_ ? eval(*root_, x) : 0.0; }

double Expr::eval_grad(const Point& x, Point* grad) const {
  if (!root_) {
    if (grad) *grad = Point::Zero();
    return 0.0;
  }
  Dual d = eval_dual(*root_, x);
  if (grad) *grad = d.g;
  return d.v;
}

}  // namespace needle
