// Scalar expression language over chart coordinates: parsing, exact symbolic
// differentiation, and pointwise evaluation. Expressions are immutable DAGs
// shared via shared_ptr; all evaluation walks are memoized per call so that
// heavily shared subtrees (adjugate matrices, jet tables) stay linear-time.
#ifndef PQ_EXPR_HPP
#define PQ_EXPR_HPP

#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace pq {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
  ParseError(const std::string& what, int pos) : Error(what), pos_(pos) {}
  int position() const { return pos_; }

private:
  int pos_;
};

class EvalError : public Error {
public:
  using Error::Error;
};

// Evaluation point: coordinate values in chart order.
struct Point {
  std::string chart;
  std::vector<double> v;

  Point() = default;
  Point(std::string chart_id, std::vector<double> values)
      : chart(std::move(chart_id)), v(std::move(values)) {}
  explicit Point(std::vector<double> values) : v(std::move(values)) {}
  int dim() const { return static_cast<int>(v.size()); }
};

enum class ExprKind { Const, Var, Add, Sub, Mul, Div, IntPow, Neg, Sqrt, Exp, Func };

struct ExprNode {
  ExprKind kind;
  double value = 0.0;        // Const
  std::string name;          // Var or Func name
  int index = -1;            // Var: position in the chart coordinate list
  int exponent = 0;          // IntPow
  int src_pos = -1;          // source offset when parsed, -1 if synthesized
  std::shared_ptr<const ExprNode> a, b;
};

class ScalarExpr {
public:
  ScalarExpr();  // constant 0
  static ScalarExpr constant(double c);
  static ScalarExpr variable(const std::string& name, int index);

  const ExprNode* node() const { return n_.get(); }
  std::shared_ptr<const ExprNode> share() const { return n_; }
  bool is_constant() const { return n_->kind == ExprKind::Const; }
  bool is_zero() const { return is_constant() && n_->value == 0.0; }
  double constant_value() const { return n_->value; }

  ScalarExpr pow(int k) const;

  explicit ScalarExpr(std::shared_ptr<const ExprNode> n) : n_(std::move(n)) {}

private:
  std::shared_ptr<const ExprNode> n_;
};

ScalarExpr operator+(const ScalarExpr& a, const ScalarExpr& b);
ScalarExpr operator-(const ScalarExpr& a, const ScalarExpr& b);
ScalarExpr operator*(const ScalarExpr& a, const ScalarExpr& b);
ScalarExpr operator/(const ScalarExpr& a, const ScalarExpr& b);
ScalarExpr operator-(const ScalarExpr& a);
ScalarExpr sqrt(const ScalarExpr& a);
ScalarExpr exp(const ScalarExpr& a);
// Application of a registered univariate function.
ScalarExpr apply_function(const std::string& func, const ScalarExpr& arg);

// Registered univariate functions. The derivative is another registered
// function name; an absent derivative name means the derivative is zero.
// Ships with "const1" (h = 1), "id" (h = s) and "zero" for the counterexample
// runs. Registration is process-global and must happen before concurrent use.
struct FunctionDef {
  std::function<double(double)> value;
  std::optional<std::string> derivative;
};

void register_function(const std::string& name, std::function<double(double)> value,
                       std::optional<std::string> derivative);
bool function_registered(const std::string& name);
const FunctionDef& function_lookup(const std::string& name);

// Parses the grammar
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := base ('^' integer)?
//   base   := number | ident | ident '(' expr ')' | '(' expr ')' | '-' base
// where ident is a chart coordinate or a registered function name.
ScalarExpr parse_expr(const std::string& src, const std::vector<std::string>& coords);

// Exact partial derivative with respect to the named coordinate.
ScalarExpr differentiate(const ScalarExpr& e, const std::string& var);

double evaluate(const ScalarExpr& e, const Point& p);

// Full-parenthesized printer; parse_expr(to_string(e)) evaluates identically.
std::string to_string(const ScalarExpr& e);

// Memoizing evaluator for batches of expressions sharing subtrees at one
// point. One cache per (point, batch); not thread-safe across threads.
class EvalCache {
public:
  explicit EvalCache(const Point& p) : p_(&p) {}
  double operator()(const ScalarExpr& e);

private:
  double eval(const ExprNode* n);
  const Point* p_;
  std::unordered_map<const ExprNode*, double> memo_;
};

// Memoizing differentiator for batches sharing subtrees, one coordinate.
class DiffCache {
public:
  explicit DiffCache(std::string var) : var_(std::move(var)) {}
  ScalarExpr operator()(const ScalarExpr& e);

private:
  ScalarExpr diff(const std::shared_ptr<const ExprNode>& n);
  std::string var_;
  std::unordered_map<const ExprNode*, ScalarExpr> memo_;
};

}  // namespace pq

#endif
