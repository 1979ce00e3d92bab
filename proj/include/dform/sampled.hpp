// Forms sampled by components at cell centers, with the pointwise algebra:
// wedge, interior product, Hodge star, metric scalar product, Christoffel
// symbols and the coordinate codifferential.
#ifndef DFORM_SAMPLED_HPP
#define DFORM_SAMPLED_HPP

#include <vector>

#include "dform/cochain.hpp"
#include "dform/grid.hpp"
#include "dform/metric.hpp"
#include "dform/multiindex.hpp"

namespace dform {

struct SampledForm {
  int n = 2;
  int degree = 0;
  Grid grid;
  std::vector<Eigen::VectorXd> comps;  // one per ordered index set, combo order

  SampledForm() = default;
  SampledForm(const Grid& g, int r)
      : n(g.n), degree(r), grid(g),
        comps(comboCount(g.n, r), Eigen::VectorXd::Zero(g.cellCount())) {}

  int numComps() const { return int(comps.size()); }

  // Sample an analytic form: comp(axesMask, x).
  template <class F>
  static SampledForm sample(const Grid& g, int r, F&& f) {
    SampledForm s(g, r);
    auto combos = axisCombos(g.n, r);
    for (int c = 0; c < int(combos.size()); ++c)
      for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
          for (int i = 0; i < g.dims[0]; ++i)
            if (g.active(i, j, k))
              s.comps[c][g.rawIndex(i, j, k)] = f(combos[c], g.center(i, j, k));
    return s;
  }

  // Component value for a possibly unsorted index list (sign-resolved, 0 on repeats).
  double compAt(const std::vector<int>& idx, int cell) const;
};

// Pointwise algebra (diagonal metric g; Euclidean g for the metric-free ops).
SampledForm wedge(const SampledForm& a, const SampledForm& b);
SampledForm interiorProduct(const SampledForm& a, const SampledForm& b, const MetricField& g);
SampledForm hodgeStar(const SampledForm& a, const MetricField& g);
// <a,b> at every cell.
ScalarField scalarProduct(const SampledForm& a, const SampledForm& b, const MetricField& g);

// Christoffel symbols Gamma^k_{lm} at a cell (centered differences of the
// sampled metric entries, one-sided at mask edges).
struct ChristoffelField {
  ChristoffelField(const Grid& g, const MetricField& metric);
  // Gamma^k_{lm} at raw cell index.
  double gamma(int k, int l, int m, int cell) const;
  const Grid& grid() const { return *grid_; }

 private:
  const Grid* grid_;
  int n_;
  std::vector<ScalarField> dg_;  // d(g_aa)/dx_l, layout a*n+l
  std::vector<ScalarField> g_;   // g_aa samples
};

// Coordinate codifferential (full formula with Christoffel terms).
SampledForm pointwiseCodifferential(const SampledForm& w, const MetricField& g);

// Whitney sampling: average the cochain values of the 2^(n-r) incident r-cells
// to each cell center and divide by h^r.
SampledForm whitneySample(const CubicalComplex& cx, const Cochain& c);

// de Rham map of a sampled form (interpolates components to r-cell centers).
Cochain deRhamMap(const CubicalComplex& cx, const SampledForm& s);

// Boundary split at face centers: keep components excluding (tangential) or
// containing (normal) the face conormal. Output arrays are indexed per
// boundary face, per component of the input degree.
struct BoundaryValues {
  int degree;
  std::vector<std::vector<double>> perFace;  // [face][comp]
};
BoundaryValues tangentialPart(const CubicalComplex& cx, const SampledForm& w);
BoundaryValues normalPart(const CubicalComplex& cx, const SampledForm& w);

// Analytic boundary pairing [f,v] = sum over boundary faces of <nu ^ f, v> dsigma.
double boundaryPairing(const CubicalComplex& cx, const MetricField& g,
                       const std::function<double(unsigned, const Vec3&)>& f, int degF,
                       const std::function<double(unsigned, const Vec3&)>& v);
// Sampled variant: forms evaluated at the cell center adjacent to each face.
double boundaryPairing(const CubicalComplex& cx, const MetricField& g, const SampledForm& f,
                       const SampledForm& v);

}  // namespace dform

#endif
