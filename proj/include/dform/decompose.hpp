// Hodge decompositions, cohomology resolution, gauge fixing, div-curl and
// Hodge-Dirac solvers, the Poincare lemma with full Dirichlet trace, the
// natural-BC composition, and the p(x)-Laplacian cohomological minimizer.
#ifndef DFORM_DECOMPOSE_HPP
#define DFORM_DECOMPOSE_HPP

#include "dform/exponent.hpp"
#include "dform/solver.hpp"

namespace dform {

enum class HodgeFlavor { Tangential, Normal, Mixed };

struct HodgeTriple {
  Cochain h;      // harmonic part, degree r
  Cochain alpha;  // degree r-1 (absent at r=0: zero length)
  Cochain beta;   // degree r+1 (absent at r=n)
  HodgeFlavor flavor;
};

HodgeTriple hodgeDecompose(const HodgeSolver& solver, const Cochain& w, HodgeFlavor flavor);
// Recombine h + d alpha + deltaC beta for residual audits.
Cochain hodgeRecombine(const HodgeSolver& solver, const HodgeTriple& t);

enum class ResolveVariant { S1, S2, S3, S4 };
// L:S1/S2: f closed -> primitive alpha with f = d alpha (delta alpha = 0);
// L:S3/S4: g co-closed -> beta with g = delta beta (d beta = 0).
Cochain cohomologyResolve(const HodgeSolver& solver, const Cochain& f, ResolveVariant variant);

enum class GaugeVariant { I0, I1, I2, I3 };
// C:I0: w = deltaC G_D[d eta] with d w = d eta, delta w = 0, P_T w = 0; etc.
Cochain gaugeFix(const HodgeSolver& solver, const Cochain& eta, GaugeVariant variant);

struct DivCurlData {
  Cochain f;    // degree r+1, df = 0
  Cochain v;    // degree r-1, delta v = 0
  Cochain phi;  // degree r trace carrier
};
// eq:sysDsol / eq:sysNsol.
Cochain solveDivCurl(const HodgeSolver& solver, const DivCurlData& data, HodgeFlavor bc);

// Mixed-degree Hodge-Dirac: d w^{r-1} + alpha delta w^{r+1} = f^r per degree.
std::vector<Cochain> solveHodgeDirac(const HodgeSolver& solver, const std::vector<Cochain>& f,
                                     double alpha, HodgeFlavor bc);

// d w = f with the full trace w = phi on the boundary; the normal-trace
// correction is a discrete collar field (see decisions in the repo notes).
Cochain poincareDirichlet(const HodgeSolver& solver, const Cochain& f, const Cochain& phi);

// T:Natur2 composition w = dG_D[deltaC G_D[eta]] + delta G_N[d G_N[eta]].
Cochain solveNatural(const HodgeSolver& solver, const Cochain& eta);

struct PxLaplacianOptions {
  double gamma = 0.5, L = 2.0;   // bounds for a(x) (validated)
  double tolerance = 1e-9;       // sup-norm bound on the Euler-Lagrange residual
  int maxIterations = 40000;
  double epsRegularize = 1e-10;  // |t|^{p-2} smoothing near t = 0
};

struct PxLaplacianResult {
  Cochain u;
  std::vector<double> energyHistory;
  double elResidual = 0;
  int iterations = 0;
};

// Minimize sum (a/p)|du|^p - <F, du> over u in u0 + {co-closed, tangential-zero}
// cochains. Search directions are M^{-1}-preconditioned gradients, which are
// exactly co-closed, so the gauge constraint delta u = delta u0 is preserved
// to machine precision without projection solves.
PxLaplacianResult solvePxLaplacian(const HodgeSolver& solver, const Cochain& u0, const Cochain& F,
                                   const ScalarField& a, const ExponentField& p,
                                   const PxLaplacianOptions& opts = {});

// Energy of a candidate (same quadrature as the minimizer).
double pxEnergy(const HodgeSolver& solver, const Cochain& u, const Cochain& F,
                const ScalarField& a, const ExponentField& p, double epsReg = 1e-10);

// Linear reference solve for p = 2, a = 1 (preconditioned CG on the stiffness
// form over the same constraint manifold).
Cochain pxLinearReference(const HodgeSolver& solver, const Cochain& u0, const Cochain& F,
                          double tol = 1e-12);

}  // namespace dform

#endif
