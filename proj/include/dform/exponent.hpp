// Variable-exponent Lebesgue/Sobolev machinery: the Luxemburg norm and its
// modular, the log-Holder constant, maximal and Riesz potential operators,
// mollification, and the McShane exponent extension.
#ifndef DFORM_EXPONENT_HPP
#define DFORM_EXPONENT_HPP

#include <vector>

#include "dform/grid.hpp"

namespace dform {

struct ExponentField {
  Grid grid;
  Eigen::VectorXd values;  // p(x) per cell center
  double pMinus = 0, pPlus = 0;

  ExponentField() = default;
  ExponentField(const Grid& g, Eigen::VectorXd v);

  template <class F>
  static ExponentField sample(const Grid& g, F&& f) {
    ScalarField s = ScalarField::sample(g, f);
    return ExponentField(g, s.values);
  }
  static ExponentField constant(const Grid& g, double p);

  // Pointwise conjugate p/(p-1).
  ExponentField conjugate() const;
};

// max over cell pairs of |p(x)-p(y)| log(e + 1/|x-y|).
double logHolderConstant(const ExponentField& p);

// sum |f|^p(x) h^n over active cells.
double modular(const ScalarField& f, const ExponentField& p);
// Pointwise magnitude field of a multi-component quantity, then modular.
double modular(const std::vector<ScalarField>& comps, const ExponentField& p);

// inf{lambda > 0 : modular(f/lambda) <= 1} by monotone bisection.
double luxemburgNorm(const ScalarField& f, const ExponentField& p);
double luxemburgNorm(const std::vector<ScalarField>& comps, const ExponentField& p);

// sum_{l=0..k} ||grad^l f||_{p(.)}, centered differences inside the mask.
double sobolevNorm(const ScalarField& f, int k, const ExponentField& p);

// Hardy-Littlewood maximal function over node-centered cubes clipped to the mask.
ScalarField maximalFunction(const ScalarField& f);

// I_alpha f(x) = sum f(y) |x-y|^{alpha-n} h^n, singular cell by the exact
// integral over the equal-volume ball.
ScalarField rieszPotential(const ScalarField& f, double alpha);

// n=2 only: I_{log,R} f(x) = sum f(y) log(|x-y|/R) h^2.
ScalarField logPotential(const ScalarField& f, double R);

struct PoincareRatios {
  double ratio;        // ||f|| / (R ||grad f||)
  double ratioSharp;   // ||f||_{kappa p} / (R^{1/(n p'_-)} ||grad f||_p)
};
PoincareRatios poincareCheck(const ScalarField& f, const ExponentField& p, double R);

// Discrete convolution with a normalized C^2 bump supported in B_eps
// (f extended by zero outside the mask).
ScalarField mollify(const ScalarField& f, double eps);

// McShane-Whitney extension of p from the submask (active cells of p.grid)
// to the full box, with modulus L/log(e + 1/t), L = logHolderConstant(p).
ExponentField mcshaneExtend(const ExponentField& p, const Grid& fullBox);

}  // namespace dform

#endif
