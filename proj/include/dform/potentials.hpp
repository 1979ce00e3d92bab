// Volume and layer potentials by direct kernel summation.
//
// Desk-scale evaluators: O(N^2) double loops in a fixed row-major order, with
// the singular self-cell replaced by the exact integral over the equal-volume
// ball (zero for the odd kernels). Half-space variants use the method of
// images with the anisotropy parameter rho of Delta_rho.
#ifndef DFORM_POTENTIALS_HPP
#define DFORM_POTENTIALS_HPP

#include <functional>

#include "dform/grid.hpp"

namespace dform {

struct KernelSpec {
  int n = 2;
  double rho = 1.0;  // Delta_rho anisotropy; 1 = Laplacian
};

// K_0(z) = |z|^{2-n} / ((2-n) omega_n)  (n>=3),  log|z| / (2 pi)  (n=2).
double kernelK0(int n, const Vec3& z);
// K_0(z; rho) = rho^{-1} K_0(z', z_n / rho).
double kernelK0Rho(int n, const Vec3& z, double rho);
// Gradient of K_0 in z.
Vec3 kernelK0Grad(int n, const Vec3& z);

// Newtonian potential P[f](x) = sum K_0(x-y) f(y) h^n.
ScalarField newtonianPotential(const ScalarField& f);

// Q_alpha[f](x) = omega_n^{-1} sum |x-y|^{-n} (y_a - x_a) f(y) h^n.
ScalarField derivativePotential(const ScalarField& f, int axis);

enum class HalfBC { Dirichlet, Neumann };
enum class HalfKind { P, Q };

// Half-space potentials on a grid occupying {x_n >= 0} (the last used axis is
// the normal direction). For Q the axis parameter selects alpha.
ScalarField halfspacePotential(const ScalarField& f, HalfBC bc, HalfKind kind, int axis,
                               double rho);

// Evaluate the half-space P potential at arbitrary points (used for traces).
std::vector<double> halfspacePotentialAt(const ScalarField& f, HalfBC bc,
                                         const std::vector<Vec3>& targets, double rho);

// Single layer U_rho[f](x) = sum_{y'} g_N(x, (y',0)) f(y') h^{n-1}; the
// boundary density is given per trace-face center of the grid's x_n = 0 side.
ScalarField singleLayer(const ScalarField& fTrace, const Grid& volume, double rho);
std::vector<double> singleLayerAt(const ScalarField& fTrace, const std::vector<Vec3>& targets,
                                  int n, double rho);

// gamma_I = (eta/2)(U_{1/2}[data] - 2 U_1[data]) per boundary component; eta=1
// here (flat patch). Returns the extension sampled on the volume grid.
ScalarField traceExtension(const ScalarField& data, const Grid& volume);

// n=2: c(f; B_2R) = (log 2R / 2 pi) sum f h^2.
double planarConstant(const ScalarField& f, double R);

// Discrete 5/7-point Laplacian with one-sided clamp at mask edges (used for
// residual reporting Delta_h P[f] = f).
ScalarField discreteLaplacian(const ScalarField& u);

}  // namespace dform

#endif
