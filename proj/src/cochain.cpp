#include "dform/cochain.hpp"

#include <cmath>

namespace dform {

HodgeOps::HodgeOps(const CubicalComplex& cx, const MetricField& g) : cx_(&cx), g_(g) {
  const int n = cx.dim();
  mass_.resize(n + 1);
  for (int r = 0; r <= n; ++r) {
    Eigen::VectorXd m(cx.numCells(r));
    double hpow = std::pow(cx.h(), n - 2 * r);
    for (int i = 0; i < cx.numCells(r); ++i) {
      Vec3 x = cx.cellCenter(r, i);
      m[i] = g.ginvProduct(cx.cell(r, i).axes, x) * g.sqrtDet(x) * hpow;
    }
    mass_[r] = m;
  }
}

Cochain HodgeOps::d(const Cochain& c) const {
  if (c.degree >= cx_->dim()) throw std::invalid_argument("top degree");
  return Cochain(c.degree + 1, cx_->d(c.degree) * c.values);
}

Cochain HodgeOps::delta(const Cochain& c) const {
  if (c.degree == 0) throw std::invalid_argument("cannot take delta of a 0-cochain");
  int r = c.degree;
  Eigen::VectorXd w = cx_->d(r - 1).transpose() * (mass_[r].cwiseProduct(c.values));
  return Cochain(r - 1, w.cwiseQuotient(mass_[r - 1]));
}

double HodgeOps::inner(const Cochain& a, const Cochain& b) const {
  if (a.degree != b.degree) throw std::invalid_argument("degree mismatch");
  return a.values.dot(mass_[a.degree].cwiseProduct(b.values));
}

double HodgeOps::norm(const Cochain& a) const { return std::sqrt(std::max(0.0, inner(a, a))); }

double HodgeOps::dirichletEnergy(const Cochain& a, const Cochain& b) const {
  if (a.degree != b.degree) throw std::invalid_argument("degree mismatch");
  double s = 0;
  if (a.degree < cx_->dim()) s += inner(d(a), d(b));
  if (a.degree > 0) s += inner(delta(a), delta(b));
  return s;
}

Cochain HodgeOps::deRham(int r, const std::function<double(unsigned, const Vec3&)>& comp) const {
  Cochain c = Cochain::zero(*cx_, r);
  double hr = std::pow(cx_->h(), r);
  for (int i = 0; i < cx_->numCells(r); ++i)
    c.values[i] = comp(cx_->cell(r, i).axes, cx_->cellCenter(r, i)) * hr;
  return c;
}

}  // namespace dform
