#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "needle/types.hpp"

namespace needle {

// Arithmetic expressions over x1..x3:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := '-'? atom ('^' atom)?
//   atom   := number | x1 | x2 | x3 | func '(' expr ')' | '(' expr ')'
// with func one of sin cos exp log abs sqrt.
class Expr {
 public:
  struct Node;

  Expr() = default;
  // Throws ParseError with code SyntaxError or UnknownIdentifier.
  static Expr parse(std::string_view source);
  static Expr constant(double value);

  double operator()(const Point& x) const;
  // Value and gradient by forward-mode differentiation.
  double eval_grad(const Point& x, Point* grad) const;

  // Highest variable index referenced (0 when none).
  int arity() const { return arity_; }
  const std::string& source() const { return source_; }
  bool empty() const { return !root_; }

 private:
  std::shared_ptr<const Node> root_;
  std::string source_;
  int arity_ = 0;
};

}  // namespace needle
