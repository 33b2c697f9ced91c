// Pointwise jets of structure-preserving connections: Christoffel matrices
// solving nabla J_i = 0 with prescribed torsion, the unique jet with torsion
// T^H, the minimal family with torsion T^P parametrized by S^alpha, and the
// induced so(1,2)-valued connection form on the structure span.
#ifndef PQ_CONNECTIONS_HPP
#define PQ_CONNECTIONS_HPP

#include "geometry.hpp"
#include "tensorcalc.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

namespace pq {

struct ConnectionJet {
  Point p;
  std::vector<Eigen::MatrixXd> gamma;  // gamma[k](r,c) = Gamma^r_{k c}
  StructureJets::Values jets;          // J_i(p) and d_k J_i(p)
  double solve_residual = 0.0;

  int dim() const { return static_cast<int>(gamma.size()); }
  // (nabla_k J_i)(p) = d_k J_i + [Gamma_k, J_i].
  Eigen::MatrixXd nabla_J(int k, int i) const;
  double preserve_residual() const;  // max_{k,i} |nabla_k J_i|
  double span_residual() const;      // max_{k,i} distance from span{J_1,J_2,J_3}
  TwoFormValue torsion() const;      // T^k_{ij} = (Gamma_i)^k_j - (Gamma_j)^k_i
  // Jet of nabla + eta: adds eta(e_k) to Gamma_k; torsion moves by delta(eta).
  ConnectionJet shifted(const EndoOneFormValue& eta) const;
};

enum class SolveMode { Reference, Factored };

// Christoffel matrices with [Gamma_k, J_i(p)] = -(d_k J_i)(p) for i = 1,2,3
// and torsion equal to target. Reference mode solves one dense least-squares
// system in the n^3 unknowns (optionally with shuffled equation order);
// Factored mode decomposes the preservation operator once, then fixes the
// centralizer-valued freedom by the torsion equations. The solution is
// unique, so both modes agree. Throws when the target is unreachable.
ConnectionJet solve_preserving(const PqStructure& H, const Point& p,
                               const TwoFormValue& target,
                               SolveMode mode = SolveMode::Factored,
                               std::optional<std::uint64_t> shuffle_seed = {});

// Minimum-norm jet solving only the preservation equations; the torsion
// lands wherever the least-squares solution puts it. Lets tests recover
// T^H from P(torsion) without ever feeding T^H to a solver.
ConnectionJet solve_preserving_only(const PqStructure& H, const Point& p);

// The unique jet preserving every J_i with torsion T^H(p).
ConnectionJet obata(const PqStructure& H, const Point& p,
                    SolveMode mode = SolveMode::Factored);

// Minimal jet: obata shifted by -sum_i tau_i (x) J_i, then by S^alpha.
// Torsion equals T^P(p) for every alpha; the span is preserved, not each J_i.
ConnectionJet minimal(const PqStructure& H, const Point& p,
                      const OneForm& alpha,
                      SolveMode mode = SolveMode::Factored);

// Connection form on the span: nabla_k J_i = sum_j omega_k(j, i) J_j.
struct FiberConnectionForm {
  std::vector<Eigen::Matrix3d> omega;
  double projection_residual = 0.0;
  // Skewness relative to the (-,+,+) fiber metric:
  // max_k |omega_k^T S + S omega_k|, S = diag(-1,1,1).
  double so12_residual() const;
};
FiberConnectionForm fiber_form(const ConnectionJet& c, const PqStructure& H);

}  // namespace pq

#endif
