// Localized parametrix machinery: coefficient tensors of the variational form
// in coordinates, cutoffs and localization, the operator T, Neumann-series
// solves with contraction-norm estimates, and a direct sparse solve of the
// same localized weak form for cross-checking.
//
// Potential evaluations on the patch are backed by finite-difference Poisson
// solves whose outer-ring boundary data comes from the analytic kernels
// (Gauss 3x3 per source cell). Both the series route and the direct route
// therefore share one discrete Laplacian and one discrete gradient, and the
// comparison is limited only by the ring data and solver tolerances.
#ifndef DFORM_PARAMETRIX_HPP
#define DFORM_PARAMETRIX_HPP

#include <map>
#include <vector>

#include "dform/exponent.hpp"
#include "dform/grid.hpp"
#include "dform/metric.hpp"
#include "dform/multiindex.hpp"

namespace dform {

enum class PatchKind { Interior, Half };

// Multi-component field on a patch grid: one scalar field per ordered index.
struct PatchField {
  std::vector<Eigen::VectorXd> comp;  // [iComp][cell]
  int comps() const { return int(comp.size()); }
  static PatchField zero(int nComps, int cells) {
    PatchField f;
    f.comp.assign(nComps, Eigen::VectorXd::Zero(cells));
    return f;
  }
};

struct LocalProblem {
  PatchKind patch = PatchKind::Interior;
  Grid grid;           // square [-2R,2R]^n, or half with x_n in [0,2R]
  double R = 0.25;
  int degree = 0;
  std::vector<unsigned> combos;   // index sets of degree r
  std::vector<uint8_t> dirichlet; // per component: 1 if in I_0
  // coefficient samples per cell
  std::vector<Eigen::VectorXd> a;     // [(iI*nc+iJ)*n*n + al*n + be]
  std::vector<Eigen::VectorXd> b;     // [(iI*nc+iJ)*n + al]
  std::vector<Eigen::VectorXd> bStar; // same layout
  std::vector<Eigen::VectorXd> c;     // [iI*nc+iJ]
  Eigen::VectorXd a0;                 // a at the patch center, same index layout

  int n() const { return grid.n; }
  int nComps() const { return int(combos.size()); }
  double xi(const Vec3& x) const;       // 1 on B_R, 0 outside B_{7R/4}
  Vec3 gradXi(const Vec3& x) const;     // analytic gradient
  double xiStar(const Vec3& x) const;   // 1 on B_{7R/4}, 0 outside B_2R

  // lazily built dense ring-sum kernels (outer boundary data of the patch
  // Poisson solves); keyed by (kind, axis, image sign)
  mutable std::map<int, Eigen::MatrixXd> ringKernels;
  mutable std::vector<int> ringCells;
};

// Build the patch problem for a diagonal metric (normalized so g(center) = id;
// a non-normalized metric is rescaled with a warning flag in the return).
LocalProblem coefficientsFromMetric(const MetricField& g, int degree, PatchKind patch, double R,
                                    int cellsPerR = 16, bool* normalized = nullptr);

struct LocalizedData {
  PatchField Omega;  // omega * xi
  PatchField E;      // [comp*n + axis]: xi e - a omega grad xi
  PatchField F;      // xi f + e grad xi + a grad omega grad xi + (b-b*) omega grad xi
};
// e is indexed like E ([comp*n+axis]), f like F ([comp]).
LocalizedData localize(const LocalProblem& lp, const PatchField& omega, const PatchField& e,
                       const PatchField& f);

// FD-backed potentials (see header comment). Q takes E-layout, P takes F-layout.
PatchField patchPotentialQ(const LocalProblem& lp, const PatchField& E);
PatchField patchPotentialP(const LocalProblem& lp, const PatchField& F);

// T[Omega] = Q[xi*((a - a(0)) grad Omega + b Omega)] + P[xi*(b* grad Omega + c Omega)];
// in 2D the primed variant subtracting the planar constants is used.
PatchField applyT(const LocalProblem& lp, const PatchField& Omega);

// Starred Sobolev norm: R^{-1} ||Omega||_{p(.)} + ||grad Omega||_{p(.)} summed
// over components.
double starNorm(const LocalProblem& lp, const PatchField& Omega, const ExponentField& p);

struct ContractionEstimate {
  double norm = 0;
  std::vector<double> history;
};
ContractionEstimate contractionNormEstimate(const LocalProblem& lp, const ExponentField& p,
                                            int iterations = 20, uint64_t seed = 7);

struct SeriesResult {
  PatchField Omega;
  int terms = 0;
  std::vector<double> termNorms;
};
SeriesResult neumannSeriesSolve(const LocalProblem& lp, const PatchField& E, const PatchField& F,
                                const ExponentField& p, double tol = 1e-10);

// Direct sparse-LU solve of the localized weak form with the same stencils.
PatchField directSolve(const LocalProblem& lp, const PatchField& E, const PatchField& F);

double patchRelDiff(const LocalProblem& lp, const PatchField& A, const PatchField& B);

// Gradient of a patch component field by centered differences (one-sided at edges).
std::vector<Eigen::VectorXd> patchGradient(const Grid& g, const Eigen::VectorXd& u);

}  // namespace dform

#endif
