#include "pq/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <shared_mutex>

namespace pq {

namespace {

std::shared_ptr<const ExprNode> make_node(ExprNode n) {
  return std::make_shared<const ExprNode>(std::move(n));
}

std::shared_ptr<const ExprNode> make_const(double c) {
  ExprNode n;
  n.kind = ExprKind::Const;
  n.value = c;
  return make_node(std::move(n));
}

bool is_const(const std::shared_ptr<const ExprNode>& n, double c) {
  return n->kind == ExprKind::Const && n->value == c;
}

}  // namespace

ScalarExpr::ScalarExpr() : n_(make_const(0.0)) {}

ScalarExpr ScalarExpr::constant(double c) { return ScalarExpr(make_const(c)); }

ScalarExpr ScalarExpr::variable(const std::string& name, int index) {
  ExprNode n;
  n.kind = ExprKind::Var;
  n.name = name;
  n.index = index;
  return ScalarExpr(make_node(std::move(n)));
}

ScalarExpr operator+(const ScalarExpr& a, const ScalarExpr& b) {
  if (a.is_constant() && b.is_constant())
    return ScalarExpr::constant(a.constant_value() + b.constant_value());
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  ExprNode n;
  n.kind = ExprKind::Add;
  n.a = a.share();
  n.b = b.share();
  return ScalarExpr(make_node(std::move(n)));
}

ScalarExpr operator-(const ScalarExpr& a, const ScalarExpr& b) {
  if (a.is_constant() && b.is_constant())
    return ScalarExpr::constant(a.constant_value() - b.constant_value());
  if (b.is_zero()) return a;
  if (a.is_zero()) return -b;
  if (a.node() == b.node()) return ScalarExpr::constant(0.0);
  ExprNode n;
  n.kind = ExprKind::Sub;
  n.a = a.share();
  n.b = b.share();
  return ScalarExpr(make_node(std::move(n)));
}

ScalarExpr operator*(const ScalarExpr& a, const ScalarExpr& b) {
  if (a.is_constant() && b.is_constant())
    return ScalarExpr::constant(a.constant_value() * b.constant_value());
  if (a.is_zero() || b.is_zero()) return ScalarExpr::constant(0.0);
  if (is_const(a.share(), 1.0)) return b;
  if (is_const(b.share(), 1.0)) return a;
  ExprNode n;
  n.kind = ExprKind::Mul;
  n.a = a.share();
  n.b = b.share();
  return ScalarExpr(make_node(std::move(n)));
}

ScalarExpr operator/(const ScalarExpr& a, const ScalarExpr& b) {
  if (a.is_constant() && b.is_constant() && b.constant_value() != 0.0)
    return ScalarExpr::constant(a.constant_value() / b.constant_value());
  if (a.is_zero() && !b.is_zero()) return ScalarExpr::constant(0.0);
  if (is_const(b.share(), 1.0)) return a;
  ExprNode n;
  n.kind = ExprKind::Div;
  n.a = a.share();
  n.b = b.share();
  return ScalarExpr(make_node(std::move(n)));
}

ScalarExpr operator-(const ScalarExpr& a) {
  if (a.is_constant()) return ScalarExpr::constant(-a.constant_value());
  if (a.node()->kind == ExprKind::Neg) return ScalarExpr(a.node()->a);
  ExprNode n;
  n.kind = ExprKind::Neg;
  n.a = a.share();
  return ScalarExpr(make_node(std::move(n)));
}

ScalarExpr ScalarExpr::pow(int k) const {
  if (k == 0) return ScalarExpr::constant(1.0);
  if (k == 1) return *this;
  if (is_constant()) return ScalarExpr::constant(std::pow(constant_value(), k));
  ExprNode n;
  n.kind = ExprKind::IntPow;
  n.exponent = k;
  n.a = n_;
  return ScalarExpr(make_node(std::move(n)));
}

ScalarExpr sqrt(const ScalarExpr& a) {
  ExprNode n;
  n.kind = ExprKind::Sqrt;
  n.a = a.share();
  return ScalarExpr(make_node(std::move(n)));
}

ScalarExpr exp(const ScalarExpr& a) {
  ExprNode n;
  n.kind = ExprKind::Exp;
  n.a = a.share();
  return ScalarExpr(make_node(std::move(n)));
}

ScalarExpr apply_function(const std::string& func, const ScalarExpr& arg) {
  if (!function_registered(func)) throw Error("unknown function: " + func);
  ExprNode n;
  n.kind = ExprKind::Func;
  n.name = func;
  n.a = arg.share();
  return ScalarExpr(make_node(std::move(n)));
}

// --- function registry ------------------------------------------------------

namespace {

struct Registry {
  std::shared_mutex mutex;
  std::unordered_map<std::string, FunctionDef> map;

  Registry() {
    map.emplace("zero", FunctionDef{[](double) { return 0.0; }, std::nullopt});
    map.emplace("const1", FunctionDef{[](double) { return 1.0; }, std::nullopt});
    map.emplace("id", FunctionDef{[](double s) { return s; }, std::string("const1")});
  }
};

Registry& registry() {
  static Registry r;
  return r;
}

}  // namespace

void register_function(const std::string& name, std::function<double(double)> value,
                       std::optional<std::string> derivative) {
  std::unique_lock lock(registry().mutex);
  registry().map[name] = FunctionDef{std::move(value), std::move(derivative)};
}

bool function_registered(const std::string& name) {
  std::shared_lock lock(registry().mutex);
  return registry().map.count(name) > 0;
}

const FunctionDef& function_lookup(const std::string& name) {
  std::shared_lock lock(registry().mutex);
  auto it = registry().map.find(name);
  if (it == registry().map.end()) throw Error("unknown function: " + name);
  return it->second;
}

// --- parsing -----------------------------------------------------------------

namespace {

class Parser {
public:
  Parser(const std::string& src, const std::vector<std::string>& coords)
      : src_(src), coords_(coords) {}

  ScalarExpr run() {
    ScalarExpr e = expr();
    skip_ws();
    if (pos_ != static_cast<int>(src_.size()))
      throw ParseError("unexpected trailing input", pos_);
    return e;
  }

private:
  ScalarExpr expr() {
    ScalarExpr e = term();
    for (;;) {
      skip_ws();
      if (accept('+'))
        e = e + term();
      else if (accept('-'))
        e = e - term();
      else
        return e;
    }
  }

  ScalarExpr term() {
    ScalarExpr e = factor();
    for (;;) {
      skip_ws();
      if (accept('*'))
        e = e * factor();
      else if (accept('/'))
        e = e / factor();
      else
        return e;
    }
  }

  ScalarExpr factor() {
    ScalarExpr e = base();
    skip_ws();
    if (accept('^')) {
      skip_ws();
      int sign = accept('-') ? -1 : 1;
      if (pos_ >= static_cast<int>(src_.size()) || !std::isdigit(src_[pos_]))
        throw ParseError("expected integer exponent", pos_);
      long k = 0;
      while (pos_ < static_cast<int>(src_.size()) && std::isdigit(src_[pos_]))
        k = 10 * k + (src_[pos_++] - '0');
      e = e.pow(static_cast<int>(sign * k));
    }
    return e;
  }

  ScalarExpr base() {
    skip_ws();
    int start = pos_;
    if (accept('-')) return -base();
    if (accept('(')) {
      ScalarExpr e = expr();
      expect(')');
      return e;
    }
    if (pos_ < static_cast<int>(src_.size()) &&
        (std::isdigit(src_[pos_]) || src_[pos_] == '.'))
      return number(start);
    if (pos_ < static_cast<int>(src_.size()) &&
        (std::isalpha(src_[pos_]) || src_[pos_] == '_'))
      return identifier(start);
    throw ParseError("expected number, identifier or parenthesis", pos_);
  }

  ScalarExpr number(int start) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(src_.substr(start), &used);
    } catch (const std::exception&) {
      throw ParseError("malformed number", start);
    }
    pos_ = start + static_cast<int>(used);
    ScalarExpr e = ScalarExpr::constant(v);
    return with_pos(e, start);
  }

  ScalarExpr identifier(int start) {
    while (pos_ < static_cast<int>(src_.size()) &&
           (std::isalnum(src_[pos_]) || src_[pos_] == '_'))
      ++pos_;
    std::string name = src_.substr(start, pos_ - start);
    skip_ws();
    if (accept('(')) {
      ScalarExpr arg = expr();
      expect(')');
      if (name == "sqrt") return with_pos(sqrt(arg), start);
      if (name == "exp") return with_pos(exp(arg), start);
      if (!function_registered(name))
        throw ParseError("unknown function: " + name, start);
      return with_pos(apply_function(name, arg), start);
    }
    for (std::size_t i = 0; i < coords_.size(); ++i)
      if (coords_[i] == name)
        return with_pos(ScalarExpr::variable(name, static_cast<int>(i)), start);
    throw ParseError("unknown identifier: " + name, start);
  }

  static ScalarExpr with_pos(const ScalarExpr& e, int pos) {
    ExprNode n = *e.node();
    n.src_pos = pos;
    return ScalarExpr(std::make_shared<const ExprNode>(std::move(n)));
  }

  void skip_ws() {
    while (pos_ < static_cast<int>(src_.size()) && std::isspace(src_[pos_])) ++pos_;
  }

  bool accept(char c) {
    if (pos_ < static_cast<int>(src_.size()) && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) throw ParseError(std::string("expected '") + c + "'", pos_);
  }

  const std::string& src_;
  const std::vector<std::string>& coords_;
  int pos_ = 0;
};

}  // namespace

ScalarExpr parse_expr(const std::string& src, const std::vector<std::string>& coords) {
  return Parser(src, coords).run();
}

// --- differentiation ---------------------------------------------------------

ScalarExpr DiffCache::operator()(const ScalarExpr& e) { return diff(e.share()); }

ScalarExpr DiffCache::diff(const std::shared_ptr<const ExprNode>& n) {
  auto it = memo_.find(n.get());
  if (it != memo_.end()) return it->second;
  ScalarExpr out;
  switch (n->kind) {
    case ExprKind::Const:
      out = ScalarExpr::constant(0.0);
      break;
    case ExprKind::Var:
      out = ScalarExpr::constant(n->name == var_ ? 1.0 : 0.0);
      break;
    case ExprKind::Add:
      out = diff(n->a) + diff(n->b);
      break;
    case ExprKind::Sub:
      out = diff(n->a) - diff(n->b);
      break;
    case ExprKind::Mul:
      out = diff(n->a) * ScalarExpr(n->b) + ScalarExpr(n->a) * diff(n->b);
      break;
    case ExprKind::Div: {
      ScalarExpr a(n->a), b(n->b);
      out = (diff(n->a) * b - a * diff(n->b)) / (b * b);
      break;
    }
    case ExprKind::IntPow: {
      ScalarExpr a(n->a);
      out = ScalarExpr::constant(n->exponent) * a.pow(n->exponent - 1) * diff(n->a);
      break;
    }
    case ExprKind::Neg:
      out = -diff(n->a);
      break;
    case ExprKind::Sqrt: {
      ScalarExpr a(n->a);
      out = diff(n->a) / (ScalarExpr::constant(2.0) * sqrt(a));
      break;
    }
    case ExprKind::Exp: {
      ScalarExpr a(n->a);
      out = diff(n->a) * exp(a);
      break;
    }
    case ExprKind::Func: {
      const FunctionDef& def = function_lookup(n->name);
      if (!def.derivative) {
        out = ScalarExpr::constant(0.0);
      } else {
        ScalarExpr a(n->a);
        out = apply_function(*def.derivative, a) * diff(n->a);
      }
      break;
    }
  }
  memo_.emplace(n.get(), out);
  return out;
}

ScalarExpr differentiate(const ScalarExpr& e, const std::string& var) {
  DiffCache d(var);
  return d(e);
}

// --- evaluation ---------------------------------------------------------------

namespace {

[[noreturn]] void eval_fail(const ExprNode* n, const std::string& what) {
  std::string where =
      n->src_pos >= 0 ? " (source position " + std::to_string(n->src_pos) + ")" : "";
  throw EvalError(what + where);
}

}  // namespace

double EvalCache::operator()(const ScalarExpr& e) { return eval(e.node()); }

double EvalCache::eval(const ExprNode* n) {
  auto it = memo_.find(n);
  if (it != memo_.end()) return it->second;
  double out = 0.0;
  switch (n->kind) {
    case ExprKind::Const:
      out = n->value;
      break;
    case ExprKind::Var:
      if (n->index < 0 || n->index >= static_cast<int>(p_->v.size()))
        eval_fail(n, "coordinate index out of range for point: " + n->name);
      out = p_->v[n->index];
      break;
    case ExprKind::Add:
      out = eval(n->a.get()) + eval(n->b.get());
      break;
    case ExprKind::Sub:
      out = eval(n->a.get()) - eval(n->b.get());
      break;
    case ExprKind::Mul:
      out = eval(n->a.get()) * eval(n->b.get());
      break;
    case ExprKind::Div: {
      double d = eval(n->b.get());
      if (d == 0.0) eval_fail(n, "division by zero");
      out = eval(n->a.get()) / d;
      break;
    }
    case ExprKind::IntPow:
      out = std::pow(eval(n->a.get()), n->exponent);
      if (!std::isfinite(out)) eval_fail(n, "non-finite power");
      break;
    case ExprKind::Neg:
      out = -eval(n->a.get());
      break;
    case ExprKind::Sqrt: {
      double a = eval(n->a.get());
      if (a < 0.0) eval_fail(n, "square root of negative value");
      out = std::sqrt(a);
      break;
    }
    case ExprKind::Exp:
      out = std::exp(eval(n->a.get()));
      break;
    case ExprKind::Func:
      out = function_lookup(n->name).value(eval(n->a.get()));
      break;
  }
  memo_.emplace(n, out);
  return out;
}

double evaluate(const ScalarExpr& e, const Point& p) {
  EvalCache c(p);
  return c(e);
}

// --- printing ------------------------------------------------------------------

namespace {

void print_node(const ExprNode* n, std::string& out) {
  switch (n->kind) {
    case ExprKind::Const: {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", n->value);
      if (n->value < 0.0) {
        out += '(';
        out += buf;
        out += ')';
      } else {
        out += buf;
      }
      break;
    }
    case ExprKind::Var:
      out += n->name;
      break;
    case ExprKind::Add:
    case ExprKind::Sub:
    case ExprKind::Mul:
    case ExprKind::Div: {
      const char* op = n->kind == ExprKind::Add   ? "+"
                       : n->kind == ExprKind::Sub ? "-"
                       : n->kind == ExprKind::Mul ? "*"
                                                  : "/";
      out += '(';
      print_node(n->a.get(), out);
      out += op;
      print_node(n->b.get(), out);
      out += ')';
      break;
    }
    case ExprKind::IntPow:
      out += '(';
      print_node(n->a.get(), out);
      out += '^';
      if (n->exponent < 0) out += '-';
      out += std::to_string(std::abs(n->exponent));
      out += ')';
      break;
    case ExprKind::Neg:
      out += "(-";
      print_node(n->a.get(), out);
      out += ')';
      break;
    case ExprKind::Sqrt:
      out += "sqrt(";
      print_node(n->a.get(), out);
      out += ')';
      break;
    case ExprKind::Exp:
      out += "exp(";
      print_node(n->a.get(), out);
      out += ')';
      break;
    case ExprKind::Func:
      out += n->name;
      out += '(';
      print_node(n->a.get(), out);
      out += ')';
      break;
  }
}

}  // namespace

std::string to_string(const ScalarExpr& e) {
  std::string out;
  print_node(e.node(), out);
  return out;
}

}  // namespace pq
