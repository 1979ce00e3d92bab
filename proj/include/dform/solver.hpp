// Variational solvers for the Hodge-Laplacian boundary value problems.
//
// One constraint engine drives all four problems. Essential constraints are
// imposed by restriction to a subcomplex:
//   Tangential     zero values on tangential-boundary cells (a genuine
//                  subcomplex: d preserves it, so its Hodge theory computes
//                  the relative cohomology, dim = B_{n-r});
//   Normal         no constraints: the full complex encodes the absolute
//                  boundary conditions naturally, dim ker = B_r;
//   FullDirichlet  zero values on every boundary-touching cell;
//   Natural        no constraints (used for data transport only).
// The bilinear form is D(a,b) = (da,db) + (delta_C a, delta_C b) with the
// codifferential projected back into the constrained subspace.
#ifndef DFORM_SOLVER_HPP
#define DFORM_SOLVER_HPP

#include <optional>

#include "dform/cochain.hpp"

namespace dform {

struct BoundaryCondition {
  enum class Kind { FullDirichlet, Tangential, Normal, Natural };
  Kind kind = Kind::Tangential;

  static BoundaryCondition fullDirichlet() { return {Kind::FullDirichlet}; }
  static BoundaryCondition tangential() { return {Kind::Tangential}; }
  static BoundaryCondition normal() { return {Kind::Normal}; }
  static BoundaryCondition natural() { return {Kind::Natural}; }
};

struct HarmonicBasis {
  int degree = 0;
  BoundaryCondition bc;
  std::vector<Cochain> fields;  // mass-orthonormal
  double eigengap = 0;          // first nonkernel eigenvalue / kernel threshold
  int dim() const { return int(fields.size()); }
};

struct SolveReport {
  int iterations = 0;
  double residual = 0;
  int harmonicDim = 0;
  double compatViolation = 0;
};

struct VariationalProblem {
  int degree = 0;
  std::optional<Cochain> eta;  // degree r
  std::optional<Cochain> phi;  // degree r+1 (pairs with d zeta)
  std::optional<Cochain> psi;  // degree r-1 (pairs with delta zeta)
  BoundaryCondition bc;
  double tolerance = 1e-10;
};

class HodgeSolver {
 public:
  HodgeSolver(const CubicalComplex& cx, const MetricField& g);

  const HodgeOps& ops() const { return ops_; }
  const CubicalComplex& complex() const { return ops_.complex(); }

  // 1 where the degree-r value is constrained to zero under bc.
  const std::vector<uint8_t>& constrained(const BoundaryCondition& bc, int r) const;

  Cochain project(const BoundaryCondition& bc, const Cochain& c) const;  // zero constrained cells
  // Codifferential with the output projected into the bc subspace.
  Cochain deltaC(const BoundaryCondition& bc, const Cochain& c) const;
  Cochain dC(const BoundaryCondition& bc, const Cochain& c) const;  // d then project
  // D-form operator A c (degree r -> r), matrix-free on full-length vectors.
  Cochain applyD(const BoundaryCondition& bc, const Cochain& c) const;
  double energy(const BoundaryCondition& bc, const Cochain& a, const Cochain& b) const;

  const HarmonicBasis& harmonicBasis(const BoundaryCondition& bc, int r) const;
  Cochain projectHarmonic(const Cochain& c, const HarmonicBasis& basis) const;

  // Generic weak solve: D(w, z) = (eta, z) + (phi, dz) + (psi, delta z) for all
  // constrained test z, with harmonic deflation. Throws on incompatible data.
  Cochain solveWeak(const VariationalProblem& p, SolveReport* report = nullptr) const;

  Cochain dirichletPotential(const Cochain& eta, SolveReport* report = nullptr) const;      // G_D
  Cochain neumannPotential(const Cochain& eta, SolveReport* report = nullptr) const;        // G_N
  Cochain fullDirichletPotential(const Cochain& eta, SolveReport* report = nullptr) const;  // G_0

  // Reciprocal of the smallest nonkernel eigenvalue of the constrained D-form.
  double poincareConstant(const BoundaryCondition& bc, int r) const;

  // ||w||_{W^{1,p},h} / (||dw||_p + ||delta w||_p + ||w||_1), whitney-sampled.
  double gaffneyRatio(const Cochain& w, const BoundaryCondition& bc,
                      const struct ExponentField& p) const;

  double defaultTolerance() const { return 1e-10; }

 private:
  HodgeOps ops_;
  mutable std::map<std::pair<int, int>, std::vector<uint8_t>> constraintCache_;
  mutable std::map<std::pair<int, int>, SpMat> opCache_;
  mutable std::map<std::pair<int, int>, HarmonicBasis> harmonicCache_;

  const SpMat& assembled(const BoundaryCondition& bc, int r) const;
  Cochain cg(const BoundaryCondition& bc, int r, const Eigen::VectorXd& rhs, double tol,
             SolveReport* report) const;
  std::vector<double> smallestEigs(const BoundaryCondition& bc, int r, int count,
                                   std::vector<Cochain>* vecs) const;
};

// Exact Poincare-Lefschetz transport on a box: primal degree-r cochains of the
// full complex map to degree-(n-r) cochains on the tangential subcomplex of a
// dual box (grid shifted by h/2, one extra cell per axis). Used to validate
// the Neumann route against an independently assembled Dirichlet solve.
struct DualComplex {
  CubicalComplex dual;
  // transport of a primal cochain (degree r) to the dual (degree n-r)
  Cochain toDual(const CubicalComplex& primal, const Cochain& c) const;
  Cochain fromDual(const CubicalComplex& primal, int degree, const Cochain& cd) const;
  static DualComplex ofBox(const CubicalComplex& primal);
};

}  // namespace dform

#endif
