// Diagonal Riemannian metrics on a chart.
//
// Only diagonal metrics are supported. The metric is carried as a closed-form
// evaluator (so mass weights can be taken at arbitrary barycenters) together
// with uniform ellipticity bounds.
#ifndef DFORM_METRIC_HPP
#define DFORM_METRIC_HPP

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "dform/grid.hpp"
#include "dform/multiindex.hpp"

namespace dform {

struct MetricField {
  enum class Kind { Euclidean, DiagConst, DiagExp, DiagLip };

  Kind kind = Kind::Euclidean;
  int n = 2;
  std::array<double, 3> diag{1, 1, 1};  // DiagConst entries
  int axis = 0;                         // DiagExp / DiagLip parameter axis
  double rate = 1.0;                    // g_aa = exp(rate*x_axis) on entry `axis`
  double slope = 0.25;                  // g_aa = 1 + slope*x_axis on entry `axis`

  static MetricField euclidean(int n) {
    MetricField m;
    m.kind = Kind::Euclidean;
    m.n = n;
    return m;
  }
  static MetricField diagConst(int n, std::array<double, 3> d) {
    MetricField m;
    m.kind = Kind::DiagConst;
    m.n = n;
    m.diag = d;
    return m;
  }
  static MetricField diagExp(int n, int axis, double rate) {
    MetricField m;
    m.kind = Kind::DiagExp;
    m.n = n;
    m.axis = axis;
    m.rate = rate;
    return m;
  }
  // Lipschitz test metric g = diag(1 + slope*x_axis, 1, ...).
  static MetricField diagLip(int n, int axis, double slope) {
    MetricField m;
    m.kind = Kind::DiagLip;
    m.n = n;
    m.axis = axis;
    m.slope = slope;
    return m;
  }

  bool isEuclidean() const { return kind == Kind::Euclidean; }

  std::array<double, 3> entries(const Vec3& x) const {
    std::array<double, 3> g{1, 1, 1};
    switch (kind) {
      case Kind::Euclidean: break;
      case Kind::DiagConst: g = diag; break;
      case Kind::DiagExp: g[axis] = std::exp(rate * x[axis]); break;
      case Kind::DiagLip: g[axis] = 1.0 + slope * x[axis]; break;
    }
    for (int a = 0; a < n; ++a)
      if (!(g[a] > 0.0)) throw std::runtime_error("metric not uniformly elliptic");
    return g;
  }

  double sqrtDet(const Vec3& x) const {
    auto g = entries(x);
    double d = 1;
    for (int a = 0; a < n; ++a) d *= g[a];
    return std::sqrt(d);
  }

  // G^{II} for ordered index set I (diagonal metric: product of inverse entries).
  double ginvProduct(unsigned axes, const Vec3& x) const {
    auto g = entries(x);
    double p = 1;
    for (int a = 0; a < n; ++a)
      if (axes & (1u << a)) p /= g[a];
    return p;
  }
};

}  // namespace dform

#endif
