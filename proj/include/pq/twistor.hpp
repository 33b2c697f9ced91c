// Fiber quadrics of the structure span and the almost structures they
// carry: the connection splitting, quadric charts, the chart matrix field
// on the total space, its finite-difference Nijenhuis tensor, independence
// from the choice of minimal connection, and the tautological-section
// stability test.
#ifndef PQ_TWISTOR_HPP
#define PQ_TWISTOR_HPP

#include "connections.hpp"
#include "geometry.hpp"
#include "integrability.hpp"

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

namespace pq {

// Point (p, A) of the eps-quadric bundle: A = r1 J1 + r2 J2 + r3 J3 with
// <r, r> = eps, so A^2 = eps * Id.
struct FiberPoint {
  Point p;
  Eigen::Vector3d r = Eigen::Vector3d::Zero();

  double quadric_residual(int eps) const;  // |<r,r> - eps|
  // A as an endomorphism of the tangent space at p.
  Eigen::MatrixXd matrix(const PqStructure& H) const;
};

// Tangent of the quadric bundle in the splitting of a connection jet:
// horizontal leg in T_p M, vertical leg a coefficient velocity with
// <r, vert> = 0 (the linearized quadric constraint; equivalently the
// vertical endomorphism anti-commutes with A).
struct TotalTangent {
  Eigen::VectorXd h;
  Eigen::Vector3d vert = Eigen::Vector3d::Zero();
};

// Seeded points on the eps-quadric over p, alternating between the two
// sheets (eps = -1) or the two sides of the waist (eps = +1).
std::vector<FiberPoint> fiber_sample(int eps, const Point& p, int count,
                                     std::uint64_t seed = 0x7e15);

// Action of the almost structure at fp in the splitting of c: horizontal
// X -> A X, vertical B -> A o B, which is cross(r, .) on coefficients.
// c must be based at fp.p and preserve the span; fp must sit on the
// quadric and v.vert on its tangent plane.
TotalTangent twistor_J(const PqStructure& H, const ConnectionJet& c,
                       const FiberPoint& fp, int eps, const TotalTangent& v);

// Quadric chart around r: the parameters are the two non-pivot
// coefficients, the pivot coefficient is recovered from the constraint on
// the declared side. Selection pivots on the timelike coefficient r1
// (always valid for eps = -1) unless the point sits inside the seam band
// |r2^2 + r3^2 - 1| < 1e-4 of the eps = +1 waist, where it falls back to
// the larger spacelike coefficient.
struct FiberChart {
  int eps = 1;
  int pivot = 0;  // index of the recovered coefficient
  int sign = 1;   // sign of the recovered coefficient on this sheet

  static FiberChart select(int eps, const Eigen::Vector3d& r);
  // Chart with the given pivot, side matching r; rejects a pivot whose
  // coefficient is too small to parametrize a neighborhood.
  static FiberChart pivoted(int eps, const Eigen::Vector3d& r, int pivot);
  std::array<int, 2> params() const;  // coefficient indices of (u1, u2)
  Eigen::Vector3d lift(const Eigen::Vector2d& u) const;
  Eigen::Vector2d project(const Eigen::Vector3d& r) const;
  // Columns: d lift / d u_j at r.
  Eigen::Matrix<double, 3, 2> jacobian(const Eigen::Vector3d& r) const;
};

// Matrix of the almost structure on the quadric bundle at fp in the chart
// coordinates (base coordinates, quadric parameters): block lower
// triangular [[A, 0], [V, Q]] with A the base action, V the mixing of base
// directions into fiber velocities through the connection form, Q the
// vertical action. Satisfies M^2 = eps * Id.
Eigen::MatrixXd total_matrix(const PqStructure& H, const ConnectionJet& c,
                             const FiberPoint& fp, int eps,
                             const FiberChart& chart);

// Nijenhuis tensor of the total-space structure at fp by central
// differences of the chart matrix field, step 1e-4, with minimal jets
// solved afresh at every base stencil node. A residual within 10x of tol
// triggers a half-step Richardson extrapolation to separate discretization
// error from genuine obstruction; a stencil that leaves the quadric chart
// retries on the chart pivoted at the larger spacelike coefficient.
IntegrabilityReport twistor_nijenhuis(const PqStructure& H, int eps,
                                      const FiberPoint& fp, int pairs,
                                      double tol);

// Discrepancy at fp between the total-space structures of minimal(H, p, 0)
// and minimal(H, p, alpha), as chart matrices, for each alpha.
IntegrabilityReport minimal_independence(const PqStructure& H,
                                         const FiberPoint& fp, int eps,
                                         const std::vector<OneForm>& alphas,
                                         double tol);

// Stability of the graph of p -> coefficients of J under the total-space
// structure of sign J.sign, compared against is_integrable(J); the two
// verdicts must agree. Needs the span torsion to vanish at the samples;
// otherwise the stability side is skipped and only the torsion is
// reported.
IntegrabilityReport tautological_section_check(const PqStructure& H,
                                               const CompatibleStructure& J,
                                               const std::vector<Point>& samples,
                                               double tol);

}  // namespace pq

#endif
