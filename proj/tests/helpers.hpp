// Shared test utilities: finite-difference oracles and random generators.
// Everything here goes through the public evaluation API only, so these
// checks stay independent of the symbolic differentiation path.
#pragma once

#include <pq/expr.hpp>
#include <pq/geometry.hpp>

#include <Eigen/Dense>
#include <random>
#include <vector>

namespace pqtest {

// Central difference d e / d coords[k] at p.  Fourth-order error is not
// needed; h = 1e-5 balances truncation against cancellation for values O(1).
inline double fd_derivative(const pq::ScalarExpr& e, const pq::Point& p, int k,
                            double h = 1e-5) {
  pq::Point hi = p;
  pq::Point lo = p;
  hi.v[k] += h;
  lo.v[k] -= h;
  return (pq::evaluate(e, hi) - pq::evaluate(e, lo)) / (2.0 * h);
}

// Central difference of one endomorphism entry.
inline double fd_entry(const pq::EndomorphismField& J, int i, int j,
                       const pq::Point& p, int k, double h = 1e-5) {
  pq::Point hi = p;
  pq::Point lo = p;
  hi.v[k] += h;
  lo.v[k] -= h;
  return (pq::evaluate(J.at(i, j), hi) - pq::evaluate(J.at(i, j), lo)) /
         (2.0 * h);
}

// Random expression over chart coordinates.  Shapes are restricted so that
// every generated expression is smooth on the box [0.4, 1.6]^n: square roots
// see 1 + (.)^2, denominators see 0.5 + (.)^2, exponents stay small.
inline pq::ScalarExpr gen_expr(std::mt19937_64& rng, const pq::Chart& chart,
                               int depth) {
  std::uniform_int_distribution<int> var_pick(0, chart.dim() - 1);
  std::uniform_real_distribution<double> coef(-2.0, 2.0);
  if (depth <= 0) {
    if (rng() % 3 == 0) return pq::ScalarExpr::constant(coef(rng));
    return chart.var(var_pick(rng));
  }
  std::uniform_int_distribution<int> kind(0, 8);
  switch (kind(rng)) {
    case 0:
      return gen_expr(rng, chart, depth - 1) + gen_expr(rng, chart, depth - 1);
    case 1:
      return gen_expr(rng, chart, depth - 1) - gen_expr(rng, chart, depth - 1);
    case 2:
      return gen_expr(rng, chart, depth - 1) * gen_expr(rng, chart, depth - 1);
    case 3: {
      pq::ScalarExpr den = gen_expr(rng, chart, depth - 1);
      return gen_expr(rng, chart, depth - 1) /
             (pq::ScalarExpr::constant(0.5) + den * den);
    }
    case 4: {
      pq::ScalarExpr base = gen_expr(rng, chart, depth - 1);
      std::uniform_int_distribution<int> exp_pick(2, 3);
      return base.pow(exp_pick(rng));
    }
    case 5:
      return -gen_expr(rng, chart, depth - 1);
    case 6: {
      pq::ScalarExpr a = gen_expr(rng, chart, depth - 1);
      return pq::sqrt(pq::ScalarExpr::constant(1.0) + a * a);
    }
    case 7:
      return pq::exp(pq::ScalarExpr::constant(0.25 * coef(rng)) *
                     chart.var(var_pick(rng)));
    default:
      return pq::ScalarExpr::constant(coef(rng)) *
             gen_expr(rng, chart, depth - 1);
  }
}

inline pq::Point random_point(std::mt19937_64& rng, const pq::Chart& chart,
                              double lo = 0.4, double hi = 1.6) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(chart.dim());
  for (double& x : v) x = dist(rng);
  return chart.point(v);
}

inline double max_abs(const Eigen::MatrixXd& m) {
  return m.cwiseAbs().maxCoeff();
}

}  // namespace pqtest
