#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wcontract {

using ParamMap = std::map<std::string, double, std::less<>>;

class ParseError : public std::runtime_error {
 public:
  enum class Kind { syntax, unknown_identifier, unbound_parameter };
  ParseError(Kind kind, std::size_t position, const std::string& what);
  Kind kind() const { return kind_; }
  //! Zero-based byte offset into the source text.
  std::size_t position() const { return position_; }

 private:
  Kind kind_;
  std::size_t position_;
};

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
struct ExprNode;
}

//! Scalar function of x built from {const, x, param, +, -, *, /, ^int,
//! exp, cos, sin, tanh}. Immutable; cheap to copy.
class ScalarExpr {
 public:
  ScalarExpr();

  double operator()(double x) const { return eval(x); }
  //! Throws EvalError on division by zero.
  double eval(double x) const;

  //! Fully parenthesized text that parses back to the same tree.
  std::string to_string() const;
  //! Number of tree nodes.
  std::size_t size() const;

  const std::shared_ptr<const detail::ExprNode>& root() const { return root_; }
  explicit ScalarExpr(std::shared_ptr<const detail::ExprNode> root);

 private:
  struct Instr {
    int op;
    int n;
    double value;
  };
  void compile();

  std::shared_ptr<const detail::ExprNode> root_;
  std::vector<Instr> code_;
  int max_depth_ = 0;
};

ScalarExpr parse_expression(std::string_view source, const ParamMap& params = {});
ScalarExpr differentiate(const ScalarExpr& e);

namespace detail {

enum class Op { constant, var, param, add, sub, mul, div, neg, pow, exp, cos, sin, tanh };

struct ExprNode {
  Op op;
  double value = 0;  // constant or bound parameter value
  int exponent = 0;  // pow only
  std::string name;  // param only
  std::shared_ptr<const ExprNode> a, b;
};

}  // namespace detail
}  // namespace wcontract
