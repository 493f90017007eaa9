#include "wcontract/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace wcontract {

using detail::ExprNode;
using detail::Op;
using NodePtr = std::shared_ptr<const ExprNode>;

ParseError::ParseError(Kind kind, std::size_t position, const std::string& what)
    : std::runtime_error(what + " at position " + std::to_string(position)),
      kind_(kind),
      position_(position) {}

namespace {

NodePtr make(Op op, NodePtr a = nullptr, NodePtr b = nullptr) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

NodePtr constant(double v) {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::constant;
  n->value = v;
  return n;
}

NodePtr pow_node(NodePtr a, int k) {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::pow;
  n->exponent = k;
  n->a = std::move(a);
  return n;
}

bool is_const(const NodePtr& n, double v) {
  return n->op == Op::constant && n->value == v;
}

//---------------------------------------------------------------------------//
// Parser
//---------------------------------------------------------------------------//

class Parser {
 public:
  Parser(std::string_view src, const ParamMap& params) : s_(src), params_(params) {}

  NodePtr parse() {
    NodePtr e = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected character '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(ParseError::Kind::syntax, pos_, "syntax error: " + msg);
  }

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

  void expect(char c) {
    if (!accept(c)) fail(std::string("expected '") + c + "'");
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+'))
        lhs = make(Op::add, lhs, term());
      else if (accept('-'))
        lhs = make(Op::sub, lhs, term());
      else
        return lhs;
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*'))
        lhs = make(Op::mul, lhs, unary());
      else if (accept('/'))
        lhs = make(Op::div, lhs, unary());
      else
        return lhs;
    }
  }

  NodePtr unary() {
    if (accept('-')) return make(Op::neg, unary());
    if (accept('+')) return unary();
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return pow_node(base, int_literal());
    return base;
  }

  int int_literal() {
    skip();
    bool paren = accept('(');
    skip();
    bool negative = false;
    if (accept('-'))
      negative = true;
    else
      accept('+');
    skip();
    std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) fail("exponent must be an integer literal");
    if (pos_ < s_.size() && (s_[pos_] == '.' || s_[pos_] == 'e' || s_[pos_] == 'E'))
      fail("exponent must be an integer literal");
    if (pos_ - start > 6) fail("exponent too large");
    int k = std::atoi(std::string(s_.substr(start, pos_ - start)).c_str());
    if (paren) expect(')');
    return negative ? -k : k;
  }

  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of input");
    char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      NodePtr e = expr();
      expect(')');
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    fail("unexpected character '" + std::string(1, c) + "'");
  }

  NodePtr number() {
    std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ < s_.size() && s_[pos_] == '.') {
      ++pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      std::size_t digits = pos_;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      if (digits == pos_) pos_ = save;
    }
    std::string text(s_.substr(start, pos_ - start));
    if (text == ".") {
      pos_ = start;
      fail("malformed number");
    }
    return constant(std::strtod(text.c_str(), nullptr));
  }

  NodePtr identifier() {
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
      ++pos_;
    std::string id(s_.substr(start, pos_ - start));
    skip();
    bool call = pos_ < s_.size() && s_[pos_] == '(';
    if (call) {
      Op op;
      if (id == "exp")
        op = Op::exp;
      else if (id == "cos")
        op = Op::cos;
      else if (id == "sin")
        op = Op::sin;
      else if (id == "tanh")
        op = Op::tanh;
      else
        throw ParseError(ParseError::Kind::unknown_identifier, start,
                         "unknown function '" + id + "'");
      ++pos_;
      NodePtr arg = expr();
      expect(')');
      return make(op, arg);
    }
    if (id == "x") return make(Op::var);
    auto it = params_.find(id);
    if (it == params_.end())
      throw ParseError(ParseError::Kind::unbound_parameter, start,
                       "unbound parameter '" + id + "'");
    auto n = std::make_shared<ExprNode>();
    n->op = Op::param;
    n->name = id;
    n->value = it->second;
    return n;
  }

  std::string_view s_;
  const ParamMap& params_;
  std::size_t pos_ = 0;
};

//---------------------------------------------------------------------------//
// Simplifying constructors used by the differentiator
//---------------------------------------------------------------------------//

NodePtr s_add(NodePtr a, NodePtr b) {
  if (is_const(a, 0)) return b;
  if (is_const(b, 0)) return a;
  if (a->op == Op::constant && b->op == Op::constant) return constant(a->value + b->value);
  return make(Op::add, a, b);
}

NodePtr s_neg(NodePtr a) {
  if (a->op == Op::constant) return constant(-a->value);
  if (a->op == Op::neg) return a->a;
  return make(Op::neg, a);
}

NodePtr s_sub(NodePtr a, NodePtr b) {
  if (is_const(b, 0)) return a;
  if (is_const(a, 0)) return s_neg(b);
  if (a->op == Op::constant && b->op == Op::constant) return constant(a->value - b->value);
  return make(Op::sub, a, b);
}

NodePtr s_mul(NodePtr a, NodePtr b) {
  if (is_const(a, 0) || is_const(b, 0)) return constant(0);
  if (is_const(a, 1)) return b;
  if (is_const(b, 1)) return a;
  if (a->op == Op::constant && b->op == Op::constant) return constant(a->value * b->value);
  if (b->op == Op::constant) std::swap(a, b);
  if (a->op == Op::constant && b->op == Op::mul && b->a->op == Op::constant)
    return s_mul(constant(a->value * b->a->value), b->b);
  return make(Op::mul, a, b);
}

NodePtr s_div(NodePtr a, NodePtr b) {
  if (is_const(a, 0) && !is_const(b, 0)) return constant(0);
  if (is_const(b, 1)) return a;
  return make(Op::div, a, b);
}

NodePtr s_pow(NodePtr a, int k) {
  if (k == 0) return constant(1);
  if (k == 1) return a;
  return pow_node(a, k);
}

NodePtr diff(const NodePtr& n) {
  switch (n->op) {
    case Op::constant:
    case Op::param:
      return constant(0);
    case Op::var:
      return constant(1);
    case Op::add:
      return s_add(diff(n->a), diff(n->b));
    case Op::sub:
      return s_sub(diff(n->a), diff(n->b));
    case Op::neg:
      return s_neg(diff(n->a));
    case Op::mul:
      return s_add(s_mul(diff(n->a), n->b), s_mul(n->a, diff(n->b)));
    case Op::div: {
      // (a'b - ab') / b^2
      NodePtr num = s_sub(s_mul(diff(n->a), n->b), s_mul(n->a, diff(n->b)));
      return s_div(num, s_pow(n->b, 2));
    }
    case Op::pow: {
      int k = n->exponent;
      return s_mul(s_mul(constant(k), s_pow(n->a, k - 1)), diff(n->a));
    }
    case Op::exp:
      return s_mul(n, diff(n->a));
    case Op::cos:
      return s_mul(s_neg(make(Op::sin, n->a)), diff(n->a));
    case Op::sin:
      return s_mul(make(Op::cos, n->a), diff(n->a));
    case Op::tanh: {
      // 1 - tanh^2
      return s_mul(s_sub(constant(1), s_pow(n, 2)), diff(n->a));
    }
  }
  return constant(0);
}

void print(const NodePtr& n, std::string& out) {
  char buf[40];
  switch (n->op) {
    case Op::constant:
      std::snprintf(buf, sizeof buf, "%.17g", std::fabs(n->value));
      if (std::signbit(n->value)) {
        out += "(-";
        out += buf;
        out += ")";
      } else {
        out += buf;
      }
      return;
    case Op::var:
      out += "x";
      return;
    case Op::param:
      out += n->name;
      return;
    case Op::add:
    case Op::sub:
    case Op::mul:
    case Op::div: {
      const char* sym = n->op == Op::add ? "+" : n->op == Op::sub ? "-" : n->op == Op::mul ? "*" : "/";
      out += "(";
      print(n->a, out);
      out += sym;
      print(n->b, out);
      out += ")";
      return;
    }
    case Op::neg:
      out += "(-";
      print(n->a, out);
      out += ")";
      return;
    case Op::pow:
      out += "(";
      print(n->a, out);
      out += "^(" + std::to_string(n->exponent) + "))";
      return;
    case Op::exp:
    case Op::cos:
    case Op::sin:
    case Op::tanh: {
      const char* fn = n->op == Op::exp ? "exp" : n->op == Op::cos ? "cos" : n->op == Op::sin ? "sin" : "tanh";
      out += fn;
      out += "(";
      print(n->a, out);
      out += ")";
      return;
    }
  }
}

std::size_t count(const NodePtr& n) {
  if (!n) return 0;
  return 1 + count(n->a) + count(n->b);
}

double ipow(double base, int k) {
  unsigned e = static_cast<unsigned>(k < 0 ? -k : k);
  double r = 1.0;
  double b = base;
  while (e) {
    if (e & 1u) r *= b;
    b *= b;
    e >>= 1;
  }
  if (k < 0) {
    if (r == 0.0) throw EvalError("division by zero in negative power");
    r = 1.0 / r;
  }
  return r;
}

}  // namespace

//---------------------------------------------------------------------------//
// ScalarExpr
//---------------------------------------------------------------------------//

ScalarExpr::ScalarExpr() : ScalarExpr(constant(0)) {}

ScalarExpr::ScalarExpr(std::shared_ptr<const ExprNode> root) : root_(std::move(root)) {
  compile();
}

void ScalarExpr::compile() {
  code_.clear();
  int depth = 0;
  max_depth_ = 0;
  auto emit = [&](auto& self, const NodePtr& n) -> void {
    if (n->a) self(self, n->a);
    if (n->b) self(self, n->b);
    Instr in{static_cast<int>(n->op), n->exponent, n->value};
    if (n->op == Op::param) in.op = static_cast<int>(Op::constant);
    code_.push_back(in);
    switch (n->op) {
      case Op::constant:
      case Op::param:
      case Op::var:
        ++depth;
        break;
      case Op::add:
      case Op::sub:
      case Op::mul:
      case Op::div:
        --depth;
        break;
      default:
        break;
    }
    if (depth > max_depth_) max_depth_ = depth;
  };
  emit(emit, root_);
}

double ScalarExpr::eval(double x) const {
  constexpr int kInline = 64;
  double inline_stack[kInline];
  inline_stack[0] = 0;
  std::vector<double> heap;
  double* st = inline_stack;
  if (max_depth_ > kInline) {
    heap.resize(max_depth_);
    st = heap.data();
  }
  int sp = 0;
  for (const Instr& in : code_) {
    switch (static_cast<Op>(in.op)) {
      case Op::constant:
      case Op::param:
        st[sp++] = in.value;
        break;
      case Op::var:
        st[sp++] = x;
        break;
      case Op::add:
        --sp;
        st[sp - 1] += st[sp];
        break;
      case Op::sub:
        --sp;
        st[sp - 1] -= st[sp];
        break;
      case Op::mul:
        --sp;
        st[sp - 1] *= st[sp];
        break;
      case Op::div:
        --sp;
        if (st[sp] == 0.0) throw EvalError("division by zero");
        st[sp - 1] /= st[sp];
        break;
      case Op::neg:
        st[sp - 1] = -st[sp - 1];
        break;
      case Op::pow:
        st[sp - 1] = ipow(st[sp - 1], in.n);
        break;
      case Op::exp:
        st[sp - 1] = std::exp(st[sp - 1]);
        break;
      case Op::cos:
        st[sp - 1] = std::cos(st[sp - 1]);
        break;
      case Op::sin:
        st[sp - 1] = std::sin(st[sp - 1]);
        break;
      case Op::tanh:
        st[sp - 1] = std::tanh(st[sp - 1]);
        break;
    }
  }
  return st[0];
}

std::string ScalarExpr::to_string() const {
  std::string out;
  print(root_, out);
  return out;
}

std::size_t ScalarExpr::size() const { return count(root_); }

ScalarExpr parse_expression(std::string_view source, const ParamMap& params) {
  Parser p(source, params);
  return ScalarExpr(p.parse());
}

ScalarExpr differentiate(const ScalarExpr& e) { return ScalarExpr(diff(e.root())); }

}  // namespace wcontract
