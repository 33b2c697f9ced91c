// Charts, symbolic vector/endomorphism fields, almost para-quaternionic
// structures with their Lorentzian fiber metric, and the structure generators
// used by the test batteries (flat model, conjugations, coordinate pullbacks,
// the diagonal rational family).
#ifndef PQ_GEOMETRY_HPP
#define PQ_GEOMETRY_HPP

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pq/expr.hpp"

namespace pq {

// Coordinate chart on R^{4m}, coordinates (x1..x{2m}, y1..y{2m}) by default.
struct Chart {
  int m = 2;
  std::vector<std::string> coords;

  static Chart standard(int m);
  int dim() const { return 4 * m; }
  ScalarExpr var(int i) const { return ScalarExpr::variable(coords.at(i), i); }
  // Paper indices: x_i is coordinate i-1, y_j is coordinate 2m+j-1 (1-based i,j).
  int x_index(int i) const { return i - 1; }
  int y_index(int j) const { return 2 * m + j - 1; }
  Point point(std::vector<double> v) const;
  std::string name() const { return "R" + std::to_string(dim()); }
};

struct VectorField {
  Chart chart;
  std::vector<ScalarExpr> comp;  // length n

  Eigen::VectorXd eval(const Point& p) const;
  Eigen::VectorXd eval(EvalCache& cache) const;
  static VectorField zero(const Chart& c);
  static VectorField coordinate(const Chart& c, int k);
  static VectorField constant(const Chart& c, const Eigen::VectorXd& v);
};

struct OneForm {
  Chart chart;
  std::vector<ScalarExpr> comp;  // length n

  Eigen::VectorXd eval(const Point& p) const;
  static OneForm zero(const Chart& c);
  static OneForm constant(const Chart& c, const Eigen::VectorXd& v);
};

// n x n matrix of expressions acting on tangent components by columns:
// (J v)^i = sum_j J(i,j) v^j.
struct EndomorphismField {
  Chart chart;
  std::vector<ScalarExpr> e;  // row-major, length n*n

  const ScalarExpr& at(int i, int j) const { return e[i * chart.dim() + j]; }
  ScalarExpr& at(int i, int j) { return e[i * chart.dim() + j]; }
  Eigen::MatrixXd eval(const Point& p) const;
  Eigen::MatrixXd eval(EvalCache& cache) const;
  VectorField apply(const VectorField& X) const;

  static EndomorphismField zero(const Chart& c);
  static EndomorphismField identity(const Chart& c);
  static EndomorphismField constant(const Chart& c, const Eigen::MatrixXd& M);
};

EndomorphismField operator*(const EndomorphismField& A, const EndomorphismField& B);
EndomorphismField operator+(const EndomorphismField& A, const EndomorphismField& B);
EndomorphismField operator-(const EndomorphismField& A, const EndomorphismField& B);
EndomorphismField operator*(const ScalarExpr& s, const EndomorphismField& A);

// Symbolic inverse by adjugate over determinant (subset DP, shared DAG).
// Practical through n = 12; larger charts are rejected.
EndomorphismField symbolic_inverse(const EndomorphismField& G);
ScalarExpr symbolic_determinant(const EndomorphismField& G);

// Admissible basis (J1, J2, J3): J1^2 = -Id, J2^2 = J3^2 = +Id, pairwise
// anti-commuting, J3 = J1 J2. Signs eps = (-1, +1, +1).
struct PqStructure {
  Chart chart;
  std::array<EndomorphismField, 3> J;

  static constexpr std::array<int, 3> eps{-1, 1, 1};
  const EndomorphismField& J1() const { return J[0]; }
  const EndomorphismField& J2() const { return J[1]; }
  const EndomorphismField& J3() const { return J[2]; }
};

// Element a1 J1 + a2 J2 + a3 J3 of the span, coefficients possibly varying.
struct StructureElement {
  std::array<ScalarExpr, 3> a;

  static StructureElement constant(double a1, double a2, double a3);
  Eigen::Vector3d eval(const Point& p) const;
};

// Lorentzian fiber metric <u, v> = -a1 b1 + a2 b2 + a3 b3 at p.
double structure_metric(const StructureElement& u, const StructureElement& v,
                        const Point& p);

// Same metric and the oriented cross product on coefficient vectors:
// (a.J)(b.J) = <a,b> Id + cross(a,b).J for any admissible basis.
double lorentz_dot(const Eigen::Vector3d& a, const Eigen::Vector3d& b);
Eigen::Vector3d lorentz_cross(const Eigen::Vector3d& a, const Eigen::Vector3d& b);

EndomorphismField element_field(const PqStructure& H, const StructureElement& u);

struct BasisCheck {
  struct Item {
    std::string invariant;
    double residual;
    int sample;  // index of the worst sample
  };
  std::vector<Item> items;
  double max_violation = 0.0;
  double tol = 0.0;
  bool pass() const { return max_violation <= tol; }
};

BasisCheck admissible_basis_check(const PqStructure& H, const std::vector<Point>& samples,
                                  double tol);

// Constant-coefficient model on R^{4m}: J1 = blockdiag(R, -R) with R the
// 2m x 2m rotation blockdiag([[0,-1],[1,0]], ...), J2 the x/y block swap,
// J3 = J1 J2.
PqStructure flat_model(int m);

// Pointwise conjugation J_i -> G J_i G^{-1} with symbolic inverse; the
// two-argument overload computes G^{-1}, the three-argument one trusts it.
PqStructure conjugate_structure(const PqStructure& H, const EndomorphismField& G);
PqStructure conjugate_structure(const PqStructure& H, const EndomorphismField& G,
                                const EndomorphismField& Ginv);

// Diagonal rational family on R^{4m}: J1(dx_i) = f_i dy_i,
// J1(dy_j) = -(1/f_j) dx_j, J2 = +Id on x / -Id on y, J3 = J1 J2, with
// f_1 = h(Sx/Sy), f_i = x_i Sy / (y_i Sx) for i >= 2, where Sx, Sy are the
// coordinate square sums excluding index 1. h is a registered function name.
PqStructure propo_structure(int m, const std::string& h);
// The 2m diagonal entries f_i of that family.
std::vector<ScalarExpr> propo_f(int m, const std::string& h);

// Generator menu for the suites; all deterministic in the seed.
enum class CommuteWith { None, J1, J2 };
EndomorphismField random_unit_triangular(const Chart& c, std::uint64_t seed, int terms);
PqStructure conjugated_flat_structure(int m, std::uint64_t seed,
                                      CommuteWith commute = CommuteWith::None);
// Coordinate pullback of the flat model by a polynomial diffeomorphism with
// unit-triangular Jacobian; preserves T^P = 0 and every N_{J_i} = 0.
PqStructure pullback_flat_structure(int m, std::uint64_t seed);

// Second admissible basis of the same span, related to H by a pointwise
// orientation-preserving SO(1,2) rotation with rational entries.
PqStructure rotated_admissible_basis(const PqStructure& H, std::uint64_t seed);

// Structure file round-trip, JSON keys {dim, coords, J1, J2, J3} with each J
// an n x n array of expression strings.
std::string structure_to_json(const PqStructure& H);
PqStructure structure_from_json(const std::string& text);
void save_structure(const PqStructure& H, const std::string& path);
PqStructure load_structure(const std::string& path);

// Cached symbolic first derivatives of the basis fields; evaluation returns
// J_i(p) and all coordinate derivatives at p in one memoized pass.
class StructureJets {
public:
  explicit StructureJets(const PqStructure& H);

  struct Values {
    std::array<Eigen::MatrixXd, 3> J;
    std::array<std::vector<Eigen::MatrixXd>, 3> dJ;  // dJ[i][k] = d_k J_i
  };
  Values at(const Point& p) const;
  const PqStructure& structure() const { return H_; }

private:
  PqStructure H_;
  std::array<std::vector<ScalarExpr>, 3> d_;  // [i][(k*n + r)*n + c]
};

// Deterministic sampling helpers.
std::vector<Point> sample_box(const Chart& c, double lo, double hi, int count,
                              std::uint64_t seed);
std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> tangent_pairs(int n, int count,
                                                                       std::uint64_t seed);

}  // namespace pq

#endif
