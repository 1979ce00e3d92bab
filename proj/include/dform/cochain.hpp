// Cochains and the metric structure on them.
//
// A degree-r cochain stores one value per active r-cell (the integral of the
// form over the cell). HodgeOps bundles the diagonal mass matrices of a
// (complex, metric) pair and the derived operators:
//   d        signed coboundary (exact),
//   delta    M^{-1} d^T M, the adjoint codifferential,
//   deltaC   the same with the output projected to a constrained subcomplex.
#ifndef DFORM_COCHAIN_HPP
#define DFORM_COCHAIN_HPP

#include <functional>
#include <stdexcept>

#include <Eigen/Dense>

#include "dform/complex.hpp"
#include "dform/metric.hpp"

namespace dform {

struct Cochain {
  int degree = 0;
  Eigen::VectorXd values;

  Cochain() = default;
  Cochain(int r, Eigen::VectorXd v) : degree(r), values(std::move(v)) {}
  static Cochain zero(const CubicalComplex& cx, int r) {
    return Cochain(r, Eigen::VectorXd::Zero(cx.numCells(r)));
  }
};

class HodgeOps {
 public:
  HodgeOps(const CubicalComplex& cx, const MetricField& g);

  const CubicalComplex& complex() const { return *cx_; }
  const MetricField& metric() const { return g_; }

  // Diagonal mass weights: G^{II}(bary) sqrt(g)(bary) h^{n-2r}.
  const Eigen::VectorXd& mass(int r) const { return mass_[r]; }

  Cochain d(const Cochain& c) const;
  // Full adjoint codifferential M^{-1} d^T M.
  Cochain delta(const Cochain& c) const;

  double inner(const Cochain& a, const Cochain& b) const;
  double norm(const Cochain& a) const;
  // (da,db) + (delta a, delta b) with the full codifferential.
  double dirichletEnergy(const Cochain& a, const Cochain& b) const;

  // de Rham map: integrate an analytic form over r-cells (midpoint rule).
  // comp(axesMask, x) returns the component value at x.
  Cochain deRham(int r, const std::function<double(unsigned, const Vec3&)>& comp) const;

 private:
  const CubicalComplex* cx_;
  MetricField g_;
  std::vector<Eigen::VectorXd> mass_;
};

}  // namespace dform

#endif
