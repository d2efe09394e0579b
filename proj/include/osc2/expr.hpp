// Closed-form scalar expressions: recursive-descent parser, exact symbolic
// differentiation, and numeric evaluation templated on the scalar type
// (double or a forward-AD jet).
//
// Grammar:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := '-' factor | base ('^' integer)?
//   base   := number | identifier | func '(' expr ')' | '(' expr ')'
//   func   in {sin, cos, exp, log, sqrt}
//
// The only tree rewrites ever performed are constant folding and zero/one
// elimination; correctness is defined by evaluation, not by canonical form.
#pragma once

#include <cctype>
#include <cstdlib>
#include <map>
#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "osc2/jet.hpp"

namespace osc2 {

enum class Op { Const, Var, Add, Sub, Mul, Div, Neg, Pow, Sin, Cos, Exp, Log, Sqrt };

struct ExprNode;
using Expr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  Op op;
  double cval = 0.0;     // Op::Const
  std::string name;      // Op::Var
  int expo = 0;          // Op::Pow
  Expr a, b;             // children
  int offset = -1;       // byte offset in the source text, -1 if synthesized
};

struct ExprError : std::runtime_error {
  int offset;
  ExprError(const std::string& msg, int off)
      : std::runtime_error(msg + " (offset " + std::to_string(off) + ")"), offset(off) {}
};

// --- constructors with constant folding / zero-one elimination --------------

inline Expr make_const(double v) {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Const;
  n->cval = v;
  return n;
}
inline Expr make_var(const std::string& name, int offset = -1) {
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Var;
  n->name = name;
  n->offset = offset;
  return n;
}
inline bool is_const(const Expr& e, double v) { return e->op == Op::Const && e->cval == v; }
inline bool is_const(const Expr& e) { return e->op == Op::Const; }

inline std::shared_ptr<ExprNode> make_binary(Op op, Expr a, Expr b) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

inline Expr add(Expr a, Expr b) {
  if (is_const(a) && is_const(b)) return make_const(a->cval + b->cval);
  if (is_const(a, 0)) return b;
  if (is_const(b, 0)) return a;
  return make_binary(Op::Add, std::move(a), std::move(b));
}
inline Expr neg(Expr a);
inline Expr sub(Expr a, Expr b) {
  if (is_const(a) && is_const(b)) return make_const(a->cval - b->cval);
  if (is_const(b, 0)) return a;
  if (is_const(a, 0)) return neg(std::move(b));
  return make_binary(Op::Sub, std::move(a), std::move(b));
}
inline Expr mul(Expr a, Expr b) {
  if (is_const(a) && is_const(b)) return make_const(a->cval * b->cval);
  if (is_const(a, 0) || is_const(b, 0)) return make_const(0);
  if (is_const(a, 1)) return b;
  if (is_const(b, 1)) return a;
  return make_binary(Op::Mul, std::move(a), std::move(b));
}
inline Expr div(Expr a, Expr b, int offset = -1) {
  if (is_const(a) && is_const(b) && b->cval != 0) return make_const(a->cval / b->cval);
  if (is_const(a, 0) && !is_const(b, 0)) return make_const(0);
  if (is_const(b, 1)) return a;
  auto n = make_binary(Op::Div, std::move(a), std::move(b));
  n->offset = offset;
  return n;
}
inline Expr neg(Expr a) {
  if (is_const(a)) return make_const(-a->cval);
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Neg;
  n->a = std::move(a);
  return n;
}
inline Expr pow_int(Expr a, int k) {
  if (k == 0) return make_const(1);
  if (k == 1) return a;
  if (is_const(a)) return make_const(std::pow(a->cval, k));
  auto n = std::make_shared<ExprNode>();
  n->op = Op::Pow;
  n->a = std::move(a);
  n->expo = k;
  return n;
}
inline Expr call(Op fn, Expr a, int offset = -1) {
  if (is_const(a)) {
    const double v = a->cval;
    switch (fn) {
      case Op::Sin: return make_const(std::sin(v));
      case Op::Cos: return make_const(std::cos(v));
      case Op::Exp: return make_const(std::exp(v));
      case Op::Log: if (v > 0) return make_const(std::log(v)); break;
      case Op::Sqrt: if (v >= 0) return make_const(std::sqrt(v)); break;
      default: break;
    }
  }
  auto n = std::make_shared<ExprNode>();
  n->op = fn;
  n->a = std::move(a);
  n->offset = offset;
  return n;
}

// --- parser ------------------------------------------------------------------

namespace detail {

class Parser {
 public:
  explicit Parser(const std::string& text) : s_(text) {}

  Expr run() {
    Expr e = expr();
    skip_ws();
    if (pos_ != s_.size()) throw ExprError("unexpected trailing input", int(pos_));
    return e;
  }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  char peek() {
    skip_ws();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  Expr expr() {
    Expr e = term();
    for (;;) {
      if (eat('+')) e = add(e, term());
      else if (eat('-')) e = sub(e, term());
      else return e;
    }
  }
  Expr term() {
    Expr e = factor();
    for (;;) {
      skip_ws();
      const int off = int(pos_);
      if (eat('*')) e = mul(e, factor());
      else if (eat('/')) e = div(e, factor(), off);
      else return e;
    }
  }
  Expr factor() {
    if (eat('-')) return neg(factor());
    Expr e = base();
    skip_ws();
    if (eat('^')) {
      skip_ws();
      const int off = int(pos_);
      std::size_t p = pos_;
      if (p < s_.size() && (s_[p] == '+' || s_[p] == '-')) ++p;
      std::size_t digits_begin = p;
      while (p < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p]))) ++p;
      if (p == digits_begin) throw ExprError("expected integer exponent", off);
      if (p < s_.size() && (s_[p] == '.' || s_[p] == 'e' || s_[p] == 'E'))
        throw ExprError("non-integer exponent", off);
      const int k = std::atoi(s_.substr(pos_, p - pos_).c_str());
      pos_ = p;
      e = pow_int(e, k);
    }
    return e;
  }
  Expr base() {
    skip_ws();
    const int off = int(pos_);
    if (pos_ >= s_.size()) throw ExprError("unexpected end of input", off);
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number(off);
    if (std::isalpha(static_cast<unsigned char>(c))) return ident(off);
    if (eat('(')) {
      Expr e = expr();
      if (!eat(')')) throw ExprError("expected ')'", int(pos_));
      return e;
    }
    throw ExprError("unexpected character '" + std::string(1, c) + "'", off);
  }
  Expr number(int off) {
    const char* begin = s_.c_str() + pos_;
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) throw ExprError("malformed number", off);
    pos_ += std::size_t(end - begin);
    return make_const(v);
  }
  Expr ident(int off) {
    std::size_t p = pos_;
    while (p < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[p])) || s_[p] == '_'))
      ++p;
    std::string name = s_.substr(pos_, p - pos_);
    pos_ = p;
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '(') {
      Op fn;
      if (name == "sin") fn = Op::Sin;
      else if (name == "cos") fn = Op::Cos;
      else if (name == "exp") fn = Op::Exp;
      else if (name == "log") fn = Op::Log;
      else if (name == "sqrt") fn = Op::Sqrt;
      else throw ExprError("unknown function '" + name + "'", off);
      ++pos_;  // '('
      Expr arg = expr();
      if (!eat(')')) throw ExprError("expected ')'", int(pos_));
      return call(fn, arg, off);
    }
    return make_var(name, off);
  }
};

}  // namespace detail

inline Expr parse(const std::string& text) { return detail::Parser(text).run(); }

// --- differentiation ----------------------------------------------------------

inline Expr differentiate(const Expr& e, const std::string& var) {
  switch (e->op) {
    case Op::Const: return make_const(0);
    case Op::Var: return make_const(e->name == var ? 1 : 0);
    case Op::Add: return add(differentiate(e->a, var), differentiate(e->b, var));
    case Op::Sub: return sub(differentiate(e->a, var), differentiate(e->b, var));
    case Op::Mul:
      return add(mul(differentiate(e->a, var), e->b), mul(e->a, differentiate(e->b, var)));
    case Op::Div:
      // (u/v)' = u'/v - u v'/v^2
      return sub(div(differentiate(e->a, var), e->b),
                 div(mul(e->a, differentiate(e->b, var)), pow_int(e->b, 2)));
    case Op::Neg: return neg(differentiate(e->a, var));
    case Op::Pow:
      return mul(mul(make_const(e->expo), pow_int(e->a, e->expo - 1)),
                 differentiate(e->a, var));
    case Op::Sin: return mul(call(Op::Cos, e->a), differentiate(e->a, var));
    case Op::Cos: return neg(mul(call(Op::Sin, e->a), differentiate(e->a, var)));
    case Op::Exp: return mul(call(Op::Exp, e->a), differentiate(e->a, var));
    case Op::Log: return div(differentiate(e->a, var), e->a);
    case Op::Sqrt:
      return div(differentiate(e->a, var), mul(make_const(2), call(Op::Sqrt, e->a)));
  }
  throw std::logic_error("differentiate: bad node");
}

// --- evaluation ----------------------------------------------------------------

template <class S>
using VarEnv = std::unordered_map<std::string, S>;

// Subtrees are shared aggressively by the symbolic pipeline, so evaluation
// memoizes on node identity. The memo keys own their nodes: otherwise a
// caller could free a temporary tree, the allocator could recycle the
// address, and a later lookup would silently hit the stale entry.
template <class S>
class EvalContext {
 public:
  explicit EvalContext(const VarEnv<S>& env) : env_(env) {}

  const S& eval(const Expr& e) {
    auto it = memo_.find(e);
    if (it != memo_.end()) return it->second;
    S v = compute(e);
    return memo_.emplace(e, std::move(v)).first->second;
  }

 private:
  struct PtrHash {
    std::size_t operator()(const Expr& e) const {
      return std::hash<const ExprNode*>()(e.get());
    }
  };
  struct PtrEq {
    bool operator()(const Expr& a, const Expr& b) const { return a.get() == b.get(); }
  };
  const VarEnv<S>& env_;
  std::unordered_map<Expr, S, PtrHash, PtrEq> memo_;

  S compute(const Expr& e) {
    switch (e->op) {
      case Op::Const: return S(e->cval);
      case Op::Var: {
        auto it = env_.find(e->name);
        if (it == env_.end())
          throw ExprError("unbound variable '" + e->name + "'", e->offset);
        return it->second;
      }
      case Op::Add: return eval(e->a) + eval(e->b);
      case Op::Sub: return eval(e->a) - eval(e->b);
      case Op::Mul: return eval(e->a) * eval(e->b);
      case Op::Div: {
        S d = eval(e->b);
        if (value(d) == 0.0) throw ExprError("division by zero", e->offset);
        return eval(e->a) / d;
      }
      case Op::Neg: return -eval(e->a);
      case Op::Pow: return pow_int(eval(e->a), e->expo);
      case Op::Sin: return sin(eval(e->a));
      case Op::Cos: return cos(eval(e->a));
      case Op::Exp: return exp(eval(e->a));
      case Op::Log: {
        S a = eval(e->a);
        if (value(a) <= 0.0) throw ExprError("log of non-positive value", e->offset);
        return log(a);
      }
      case Op::Sqrt: {
        S a = eval(e->a);
        if (value(a) < 0.0) throw ExprError("sqrt of negative value", e->offset);
        return sqrt(a);
      }
    }
    throw std::logic_error("evaluate: bad node");
  }
};

template <class S>
S evaluate(const Expr& e, const VarEnv<S>& env) {
  return EvalContext<S>(env).eval(e);
}
inline double evaluate(const Expr& e, const VarEnv<double>& env) {
  return EvalContext<double>(env).eval(e);
}

// --- utilities -------------------------------------------------------------------

inline void collect_vars(const Expr& e, std::set<std::string>& out) {
  if (e->op == Op::Var) out.insert(e->name);
  if (e->a) collect_vars(e->a, out);
  if (e->b) collect_vars(e->b, out);
}

// Substitution of variables by expressions (used to compose chart changes).
inline Expr substitute(const Expr& e, const std::map<std::string, Expr>& sub) {
  switch (e->op) {
    case Op::Const: return e;
    case Op::Var: {
      auto it = sub.find(e->name);
      return it == sub.end() ? e : it->second;
    }
    case Op::Add: return add(substitute(e->a, sub), substitute(e->b, sub));
    case Op::Sub: return osc2::sub(substitute(e->a, sub), substitute(e->b, sub));
    case Op::Mul: return mul(substitute(e->a, sub), substitute(e->b, sub));
    case Op::Div: return div(substitute(e->a, sub), substitute(e->b, sub));
    case Op::Neg: return neg(substitute(e->a, sub));
    case Op::Pow: return pow_int(substitute(e->a, sub), e->expo);
    default: return call(e->op, substitute(e->a, sub), e->offset);
  }
}

// Conventional coordinate names: x1..xn / y1_1..y1_n / y2_1..y2_n on the
// ambient space, u1..um / v1_1..v1_m / v2_1..v2_m on the submanifold.
inline std::string var_x(int i) { return "x" + std::to_string(i + 1); }
inline std::string var_y1(int i) { return "y1_" + std::to_string(i + 1); }
inline std::string var_y2(int i) { return "y2_" + std::to_string(i + 1); }
inline std::string var_u(int i) { return "u" + std::to_string(i + 1); }
inline std::string var_v1(int i) { return "v1_" + std::to_string(i + 1); }
inline std::string var_v2(int i) { return "v2_" + std::to_string(i + 1); }

}  // namespace osc2
