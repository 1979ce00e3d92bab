#include "dform/decompose.hpp"

#include <cmath>
#include <sstream>

#include "dform/sampled.hpp"

namespace dform {

namespace {

BoundaryCondition bcOf(HodgeFlavor f) {
  return f == HodgeFlavor::Tangential ? BoundaryCondition::tangential()
                                      : BoundaryCondition::normal();
}

void gate(bool ok, const std::string& name, double measured) {
  if (!ok) {
    std::ostringstream os;
    os << "compatibility violation: " << name << " defect " << measured;
    throw std::runtime_error(os.str());
  }
}

double relNorm(const HodgeOps& ops, const Cochain& c, double scale) {
  return ops.norm(c) / std::max(scale, 1e-300);
}

}  // namespace

HodgeTriple hodgeDecompose(const HodgeSolver& solver, const Cochain& w, HodgeFlavor flavor) {
  const HodgeOps& ops = solver.ops();
  const CubicalComplex& cx = ops.complex();
  const int n = cx.dim(), r = w.degree;
  HodgeTriple t;
  t.flavor = flavor;
  if (flavor == HodgeFlavor::Tangential || flavor == HodgeFlavor::Normal) {
    BoundaryCondition bc = bcOf(flavor);
    const auto& basis = solver.harmonicBasis(bc, r);
    Cochain input = (flavor == HodgeFlavor::Tangential)
                        ? solver.project(bc, w)
                        : w;  // tangential flavor acts on the subcomplex part
    t.h = solver.projectHarmonic(input, basis);
    Cochain rem(r, input.values - t.h.values);
    // repeat the projection once: removes the roundoff-level harmonic residue
    // that would otherwise dominate the compatibility gate for harmonic inputs
    rem.values -= solver.projectHarmonic(rem, basis).values;
    Cochain G = (flavor == HodgeFlavor::Tangential) ? solver.dirichletPotential(rem)
                                                    : solver.neumannPotential(rem);
    t.alpha = (r > 0) ? solver.deltaC(bc, G) : Cochain(r - 1, Eigen::VectorXd());
    t.beta = (r < n) ? ops.d(G) : Cochain(r + 1, Eigen::VectorXd());
    if (flavor == HodgeFlavor::Tangential && r < n) t.beta = solver.project(bc, t.beta);
    return t;
  }
  // mixed: alpha from the Dirichlet side, beta from the Neumann side, h = remainder
  BoundaryCondition bcT = BoundaryCondition::tangential();
  BoundaryCondition bcN = BoundaryCondition::normal();
  Cochain wT = solver.project(bcT, w);
  Cochain hT = solver.projectHarmonic(wT, solver.harmonicBasis(bcT, r));
  Cochain hN = solver.projectHarmonic(w, solver.harmonicBasis(bcN, r));
  Cochain remT(r, wT.values - hT.values);
  remT.values -= solver.projectHarmonic(remT, solver.harmonicBasis(bcT, r)).values;
  Cochain remN(r, w.values - hN.values);
  remN.values -= solver.projectHarmonic(remN, solver.harmonicBasis(bcN, r)).values;
  Cochain GD = solver.dirichletPotential(remT);
  Cochain GN = solver.neumannPotential(remN);
  t.alpha = (r > 0) ? solver.deltaC(bcT, GD) : Cochain(r - 1, Eigen::VectorXd());
  t.beta = (r < n) ? ops.d(GN) : Cochain(r + 1, Eigen::VectorXd());
  Eigen::VectorXd rem = w.values;
  if (r > 0) rem -= ops.d(t.alpha).values;
  if (r < n) rem -= ops.delta(t.beta).values;
  t.h = Cochain(r, rem);
  return t;
}

Cochain hodgeRecombine(const HodgeSolver& solver, const HodgeTriple& t) {
  const HodgeOps& ops = solver.ops();
  const int n = ops.complex().dim();
  Cochain out = t.h;
  if (t.alpha.values.size() > 0) out.values += ops.d(t.alpha).values;
  if (t.beta.values.size() > 0) {
    Cochain db = (t.flavor == HodgeFlavor::Tangential)
                     ? solver.deltaC(BoundaryCondition::tangential(), t.beta)
                     : ops.delta(t.beta);
    out.values += db.values;
  }
  (void)n;
  return out;
}

Cochain cohomologyResolve(const HodgeSolver& solver, const Cochain& f, ResolveVariant variant) {
  const HodgeOps& ops = solver.ops();
  const CubicalComplex& cx = ops.complex();
  double scale = std::max(ops.norm(f), 1e-300);
  BoundaryCondition bcT = BoundaryCondition::tangential();
  BoundaryCondition bcN = BoundaryCondition::normal();
  switch (variant) {
    case ResolveVariant::S1: {
      if (f.degree < cx.dim())
        gate(relNorm(ops, ops.d(f), scale) < 1e-8, "df = 0", relNorm(ops, ops.d(f), scale));
      Cochain pf = solver.project(bcT, f);
      gate((f.values - pf.values).norm() / scale < 1e-8, "tf = 0",
           (f.values - pf.values).norm() / scale);
      Cochain h = solver.projectHarmonic(pf, solver.harmonicBasis(bcT, f.degree));
      gate(ops.norm(h) / scale < 1e-8, "P_T f = 0", ops.norm(h) / scale);
      return solver.deltaC(bcT, solver.dirichletPotential(pf));
    }
    case ResolveVariant::S2: {
      if (f.degree < cx.dim())
        gate(relNorm(ops, ops.d(f), scale) < 1e-8, "df = 0", relNorm(ops, ops.d(f), scale));
      Cochain h = solver.projectHarmonic(f, solver.harmonicBasis(bcN, f.degree));
      gate(ops.norm(h) / scale < 1e-8, "P_N f = 0", ops.norm(h) / scale);
      return ops.delta(solver.neumannPotential(f));
    }
    case ResolveVariant::S3: {
      if (f.degree > 0)
        gate(relNorm(ops, ops.delta(f), scale) < 1e-8, "delta g = 0 (weak n-trace)",
             relNorm(ops, ops.delta(f), scale));
      Cochain h = solver.projectHarmonic(f, solver.harmonicBasis(bcN, f.degree));
      gate(ops.norm(h) / scale < 1e-8, "P_N g = 0", ops.norm(h) / scale);
      return ops.d(solver.neumannPotential(f));
    }
    case ResolveVariant::S4: {
      Cochain pf = solver.project(bcT, f);
      if (f.degree > 0)
        gate(relNorm(ops, solver.deltaC(bcT, pf), scale) < 1e-8, "deltaC g = 0",
             relNorm(ops, solver.deltaC(bcT, pf), scale));
      Cochain h = solver.projectHarmonic(pf, solver.harmonicBasis(bcT, f.degree));
      gate(ops.norm(h) / scale < 1e-8, "P_T g = 0", ops.norm(h) / scale);
      return solver.project(bcT, ops.d(solver.dirichletPotential(pf)));
    }
  }
  throw std::logic_error("unreachable");
}

Cochain gaugeFix(const HodgeSolver& solver, const Cochain& eta, GaugeVariant variant) {
  const HodgeOps& ops = solver.ops();
  BoundaryCondition bcT = BoundaryCondition::tangential();
  // closed (or co-closed) inputs leave only roundoff in the derived data
  auto negligible = [&](const Cochain& data) {
    return ops.norm(data) <= 1e-12 * (ops.norm(eta) + 1.0);
  };
  switch (variant) {
    case GaugeVariant::I0: {
      Cochain pe = solver.project(bcT, eta);
      double tdef = (eta.values - pe.values).norm() / std::max(1e-300, eta.values.norm());
      gate(tdef < 1e-8, "t eta = 0", tdef);
      Cochain de = ops.d(pe);
      if (negligible(de)) return Cochain::zero(ops.complex(), eta.degree);
      return solver.deltaC(bcT, solver.dirichletPotential(de));
    }
    case GaugeVariant::I1: {
      Cochain de = ops.d(eta);
      if (negligible(de)) return Cochain::zero(ops.complex(), eta.degree);
      return ops.delta(solver.neumannPotential(de));
    }
    case GaugeVariant::I2: {
      Cochain dl = ops.delta(eta);
      if (negligible(dl)) return Cochain::zero(ops.complex(), eta.degree);
      return ops.d(solver.neumannPotential(dl));
    }
    case GaugeVariant::I3: {
      Cochain dl = solver.deltaC(bcT, eta);
      if (negligible(dl)) return Cochain::zero(ops.complex(), eta.degree);
      return solver.project(bcT, ops.d(solver.dirichletPotential(dl)));
    }
  }
  throw std::logic_error("unreachable");
}

Cochain solveDivCurl(const HodgeSolver& solver, const DivCurlData& data, HodgeFlavor bcFlavor) {
  const HodgeOps& ops = solver.ops();
  const CubicalComplex& cx = ops.complex();
  const int n = cx.dim();
  const int r = data.phi.degree;
  if (data.f.degree != r + 1 || data.v.degree != r - 1)
    throw std::invalid_argument("div-curl data degrees must be (r+1, r-1, r)");
  double scale = std::max({ops.norm(data.f), ops.norm(data.v), ops.norm(data.phi), 1e-12});
  std::ostringstream problems;

  BoundaryCondition bc = bcOf(bcFlavor);
  Cochain fdphi(r + 1, data.f.values - ops.d(data.phi).values);
  Cochain dphi = ops.d(data.phi);

  if (r + 1 < n) {
    double dfDef = ops.norm(ops.d(data.f)) / scale;
    if (dfDef > 1e-8) problems << " df=0 defect " << dfDef << ";";
  }
  // Moment conditions are gated on the harmonic pairings of the potential
  // inputs (f - dphi) and (v - delta phi). At the discrete level these are the
  // exact solvability conditions; the continuum forms (f,h) = [phi,h] and
  // (v,h) = -[h,phi] reduce to them by the adjointness identity, whereas the
  // whitney-sampled boundary pairing only reproduces them to O(h).
  if (bcFlavor == HodgeFlavor::Tangential) {
    Cochain pf = solver.project(bc, fdphi);
    double tDef = (fdphi.values - pf.values).norm() / scale;
    if (tDef > 1e-8) problems << " t(f-dphi)=0 defect " << tDef << ";";
    Cochain vdphi(r - 1, data.v.values - solver.deltaC(bc, data.phi).values);
    Cochain pv = solver.project(bc, vdphi);
    if (r - 1 > 0) {
      double dvDef = ops.norm(solver.deltaC(bc, solver.project(bc, data.v))) / scale;
      if (dvDef > 1e-8) problems << " delta v=0 defect " << dvDef << ";";
    }
    const auto& hv = solver.harmonicBasis(bc, r - 1);
    for (int q = 0; q < hv.dim(); ++q) {
      double m = std::abs(ops.inner(pv, hv.fields[q])) / scale;
      if (m > 1e-8) problems << " (v-delta phi,h_T[" << q << "]) defect " << m << ";";
    }
    const auto& hf = solver.harmonicBasis(bc, r + 1);
    for (int q = 0; q < hf.dim(); ++q) {
      double m = std::abs(ops.inner(pf, hf.fields[q])) / scale;
      if (m > 1e-8) problems << " (f,h_T[" << q << "])-[phi,h] defect " << m << ";";
    }
    if (!problems.str().empty())
      throw std::runtime_error("compatibility violation:" + problems.str());
    Cochain a = solver.dirichletPotential(pf);
    Cochain b = solver.dirichletPotential(pv);
    Eigen::VectorXd w = data.phi.values + solver.deltaC(bc, a).values +
                        solver.project(bc, ops.d(b)).values;
    return Cochain(r, w);
  }
  // Normal flavor (eq:sysNsol)
  {
    Cochain vdphi(r - 1, data.v.values - ops.delta(data.phi).values);
    const auto& hf = solver.harmonicBasis(bc, r + 1);
    for (int q = 0; q < hf.dim(); ++q) {
      double m = std::abs(ops.inner(fdphi, hf.fields[q])) / scale;
      if (m > 1e-8) problems << " (f,h_N[" << q << "]) defect " << m << ";";
    }
    if (r - 1 > 0) {
      double dvDef = ops.norm(ops.delta(data.v)) / scale;
      if (dvDef > 1e-8) problems << " delta v=0 defect " << dvDef << ";";
    }
    const auto& hv = solver.harmonicBasis(bc, r - 1);
    for (int q = 0; q < hv.dim(); ++q) {
      double m = std::abs(ops.inner(vdphi, hv.fields[q])) / scale;
      if (m > 1e-8) problems << " (v,h_N[" << q << "])+[h,phi] defect " << m << ";";
    }
    if (!problems.str().empty())
      throw std::runtime_error("compatibility violation:" + problems.str());
    Cochain a = solver.neumannPotential(fdphi);
    Cochain b = solver.neumannPotential(vdphi);
    Eigen::VectorXd w = data.phi.values + ops.delta(a).values + ops.d(b).values;
    return Cochain(r, w);
  }
}

std::vector<Cochain> solveHodgeDirac(const HodgeSolver& solver, const std::vector<Cochain>& f,
                                     double alpha, HodgeFlavor bcFlavor) {
  if (alpha == 0.0) throw std::invalid_argument("alpha must be nonzero");
  const HodgeOps& ops = solver.ops();
  const CubicalComplex& cx = ops.complex();
  const int n = cx.dim();
  if (int(f.size()) != n + 1) throw std::invalid_argument("need one cochain per degree 0..n");
  BoundaryCondition bc = bcOf(bcFlavor);
  std::vector<Cochain> G(n + 1);
  for (int r = 0; r <= n; ++r) {
    Cochain fr = (bcFlavor == HodgeFlavor::Tangential) ? solver.project(bc, f[r]) : f[r];
    double scale = std::max(ops.norm(f[r]), 1e-300);
    if (bcFlavor == HodgeFlavor::Tangential) {
      double tdef = (f[r].values - fr.values).norm() / scale;
      if (ops.norm(f[r]) > 0) gate(tdef < 1e-8, "t f^r = 0", tdef);
    }
    Cochain h = solver.projectHarmonic(fr, solver.harmonicBasis(bc, r));
    if (ops.norm(f[r]) > 0)
      gate(ops.norm(h) / scale < 1e-8, "P f^r = 0", ops.norm(h) / scale);
    G[r] = (bcFlavor == HodgeFlavor::Tangential) ? solver.dirichletPotential(fr)
                                                 : solver.neumannPotential(fr);
  }
  std::vector<Cochain> w(n + 1);
  for (int r = 0; r <= n; ++r) {
    Cochain acc = Cochain::zero(cx, r);
    if (r > 0) acc.values += ops.d(G[r - 1]).values / alpha;
    if (r < n)
      acc.values += (bcFlavor == HodgeFlavor::Tangential ? solver.deltaC(bc, G[r + 1])
                                                         : ops.delta(G[r + 1]))
                        .values;
    w[r] = acc;
  }
  return w;
}

Cochain poincareDirichlet(const HodgeSolver& solver, const Cochain& f, const Cochain& phi) {
  const HodgeOps& ops = solver.ops();
  const CubicalComplex& cx = ops.complex();
  const int n = cx.dim();
  const int r = phi.degree;
  if (f.degree != r + 1) throw std::invalid_argument("poincare data degrees must be (r+1, r)");
  BoundaryCondition bc = BoundaryCondition::tangential();
  double scale = std::max({ops.norm(f), ops.norm(phi), 1e-12});
  if (r + 1 < n) gate(ops.norm(ops.d(f)) / scale < 1e-8, "df = 0", ops.norm(ops.d(f)) / scale);
  Cochain fdphi(r + 1, f.values - ops.d(phi).values);
  Cochain pf = solver.project(bc, fdphi);
  gate((fdphi.values - pf.values).norm() / scale < 1e-8, "t(f-dphi) = 0",
       (fdphi.values - pf.values).norm() / scale);
  const auto& hf = solver.harmonicBasis(bc, r + 1);
  for (int q = 0; q < hf.dim(); ++q) {
    // discrete-exact form of (f,h_T) = [phi,h_T]: the projected input pairs to zero
    double m = std::abs(ops.inner(pf, hf.fields[q])) / scale;
    gate(m < 1e-8, "(f,h_T) = [phi,h_T]", m);
  }
  Cochain G = solver.dirichletPotential(pf);
  Cochain omega0 = solver.deltaC(bc, G);  // degree r, vanishes on tangential cells

  // Discrete collar correction: cancel the normal-trace defect of omega0 by a
  // (r-1)-cochain gamma supported one cell inside each face, vanishing on all
  // boundary cells. Writes into cells lying in another boundary face are
  // skipped (corner cells), leaving a measured residual there.
  Cochain gamma = Cochain::zero(cx, r > 0 ? r - 1 : 0);
  if (r > 0) {
    const auto& normalAdj = cx.normalAdjacent(r);
    const auto& tangPrev = cx.tangentialBoundary(r - 1);
    for (const auto& bf : cx.boundaryFaces()) {
      int m = bf.axis;
      for (int idx = 0; idx < cx.numCells(r); ++idx) {
        if (!normalAdj[idx]) continue;
        const auto& cell = cx.cell(r, idx);
        if (!(cell.axes & (1u << m))) continue;
        // the facet on this face must lie in bf's span
        unsigned sub = cell.axes & ~(1u << m);
        std::array<int, 3> faceSide = cell.corner;
        if (bf.side < 0) faceSide[m] += 0;  // boundary below: facet at corner
        else faceSide[m] += 1;              // boundary above: facet at corner+e_m
        int facet = cx.cellIndex(r - 1, faceSide, sub);
        if (facet < 0 || !(cx.containmentConormals(r - 1)[facet] & (1u << m))) continue;
        // gamma cell: the interior facet
        std::array<int, 3> inner = cell.corner;
        if (bf.side < 0) inner[m] += 1;
        int gcell = cx.cellIndex(r - 1, inner, sub);
        if (gcell < 0 || tangPrev[gcell]) continue;  // cannot write into the boundary
        // current defect of (omega0 - 0) + current dgamma at this cell
        double current = omega0.values[idx] - (cx.d(r - 1) * gamma.values)[idx];
        // coefficient of gamma[gcell] inside (d gamma)[idx]
        double coef = cx.d(r - 1).coeff(idx, gcell);
        if (coef == 0.0) continue;
        gamma.values[gcell] += current / coef;
      }
    }
  }
  Eigen::VectorXd w = phi.values + omega0.values;
  if (r > 0) w -= cx.d(r - 1) * gamma.values;
  return Cochain(r, w);
}

Cochain solveNatural(const HodgeSolver& solver, const Cochain& eta) {
  const HodgeOps& ops = solver.ops();
  const int r = eta.degree;
  const int n = ops.complex().dim();
  // gate: mixed projector P eta = 0 (remainder of the mixed decomposition)
  HodgeTriple t = hodgeDecompose(solver, eta, HodgeFlavor::Mixed);
  double scale = std::max(ops.norm(eta), 1e-300);
  gate(ops.norm(t.h) / scale < 1e-6, "P eta = 0 (mixed)", ops.norm(t.h) / scale);
  BoundaryCondition bcT = BoundaryCondition::tangential();
  Cochain out = Cochain::zero(ops.complex(), r);
  if (r > 0) {
    Cochain GD = solver.dirichletPotential(solver.project(bcT, eta));
    Cochain inner = solver.deltaC(bcT, GD);
    out.values += ops.d(solver.dirichletPotential(inner)).values;
  }
  if (r < n) {
    Cochain GN = solver.neumannPotential(eta);
    Cochain inner = ops.d(GN);
    out.values += ops.delta(solver.neumannPotential(inner)).values;
  }
  return out;
}

double pxEnergy(const HodgeSolver& solver, const Cochain& u, const Cochain& F,
                const ScalarField& a, const ExponentField& p, double epsReg) {
  const HodgeOps& ops = solver.ops();
  const CubicalComplex& cx = ops.complex();
  const int n = cx.dim();
  const int r = u.degree;
  Cochain du = ops.d(u);
  double hr1 = std::pow(cx.h(), r + 1);
  double vol = std::pow(cx.h(), n);
  double E = 0;
  for (int i = 0; i < cx.numCells(r + 1); ++i) {
    Vec3 x = cx.cellCenter(r + 1, i);
    const Grid& g = cx.cellGrid();
    int ci = std::clamp(int(std::floor((x[0] - g.origin[0]) / g.h)), 0, g.dims[0] - 1);
    int cj = std::clamp(int(std::floor((x[1] - g.origin[1]) / g.h)), 0, g.dims[1] - 1);
    int ck = n > 2 ? std::clamp(int(std::floor((x[2] - g.origin[2]) / g.h)), 0, g.dims[2] - 1) : 0;
    int cell = g.rawIndex(ci, cj, ck);
    double av = a.values[cell], pv = p.values[cell];
    double t = du.values[i] / hr1;
    E += vol * (av / pv) * (std::pow(t * t + epsReg * epsReg, pv / 2) - std::pow(epsReg, pv));
  }
  E -= ops.inner(F, du);
  return E;
}

namespace {

// Euler-Lagrange gradient d^T (sigma(du) - M F) restricted to the free cells.
Eigen::VectorXd pxGradient(const HodgeSolver& solver, const Cochain& u, const Cochain& F,
                           const ScalarField& a, const ExponentField& p, double epsReg) {
  const HodgeOps& ops = solver.ops();
  const CubicalComplex& cx = ops.complex();
  const int n = cx.dim();
  const int r = u.degree;
  Cochain du = ops.d(u);
  double hr1 = std::pow(cx.h(), r + 1);
  double vol = std::pow(cx.h(), n);
  Eigen::VectorXd s(cx.numCells(r + 1));
  const Grid& g = cx.cellGrid();
  for (int i = 0; i < cx.numCells(r + 1); ++i) {
    Vec3 x = cx.cellCenter(r + 1, i);
    int ci = std::clamp(int(std::floor((x[0] - g.origin[0]) / g.h)), 0, g.dims[0] - 1);
    int cj = std::clamp(int(std::floor((x[1] - g.origin[1]) / g.h)), 0, g.dims[1] - 1);
    int ck = n > 2 ? std::clamp(int(std::floor((x[2] - g.origin[2]) / g.h)), 0, g.dims[2] - 1) : 0;
    int cell = g.rawIndex(ci, cj, ck);
    double av = a.values[cell], pv = p.values[cell];
    double t = du.values[i] / hr1;
    s[i] = vol * av * std::pow(t * t + epsReg * epsReg, (pv - 2) / 2) * t / hr1;
  }
  s -= ops.mass(r + 1).cwiseProduct(F.values);
  Eigen::VectorXd grad = cx.d(r).transpose() * s;
  const auto& mask = solver.constrained(BoundaryCondition::tangential(), r);
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) grad[int(i)] = 0.0;
  return grad;
}

}  // namespace

PxLaplacianResult solvePxLaplacian(const HodgeSolver& solver, const Cochain& u0, const Cochain& F,
                                   const ScalarField& a, const ExponentField& p,
                                   const PxLaplacianOptions& opts) {
  const HodgeOps& ops = solver.ops();
  for (int i = 0; i < a.values.size(); ++i) {
    if (a.grid.mask.empty() || a.grid.mask[i]) {
      if (a.values[i] < opts.gamma - 1e-12 || a.values[i] > opts.L + 1e-12)
        throw std::invalid_argument("coefficient a out of [gamma, L]");
    }
  }
  PxLaplacianResult res;
  Cochain u = u0;  // the constrained trace of u0 is part of the data
  double E = pxEnergy(solver, u, F, a, p, opts.epsRegularize);
  res.energyHistory.push_back(E);
  Eigen::VectorXd g = pxGradient(solver, u, F, a, p, opts.epsRegularize);
  Eigen::VectorXd z = g.cwiseQuotient(ops.mass(u.degree));
  Eigen::VectorXd dir = -z;
  double gz = g.dot(z);
  double step = 1.0 / std::max(1.0, std::sqrt(gz));
  const double armijoC = 1e-4;
  int it = 0;
  int stall = 0;  // consecutive iterations with no representable energy decrease
  for (; it < opts.maxIterations; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= opts.tolerance) break;
    if (stall >= 50) break;  // double-precision energy floor reached
    double slope = g.dot(dir);
    if (slope >= 0) {  // restart on loss of descent
      dir = -z;
      slope = g.dot(dir);
    }
    double alpha = step;
    double Enew = 0;
    bool ok = false;
    for (int ls = 0; ls < 60; ++ls) {
      Cochain trial(u.degree, u.values + alpha * dir);
      Enew = pxEnergy(solver, trial, F, a, p, opts.epsRegularize);
      if (Enew <= E + armijoC * alpha * slope) {
        u = trial;
        ok = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!ok) {
      std::ostringstream os;
      os << "line-search failure at iteration " << it << " (energy " << E << ")";
      throw std::runtime_error(os.str());
    }
    stall = (Enew >= E) ? stall + 1 : 0;
    step = alpha * 2;
    E = Enew;
    res.energyHistory.push_back(E);
    Eigen::VectorXd gNew = pxGradient(solver, u, F, a, p, opts.epsRegularize);
    Eigen::VectorXd zNew = gNew.cwiseQuotient(ops.mass(u.degree));
    double beta = 0;
    if ((it + 1) % 50 != 0) {
      beta = std::max(0.0, zNew.dot(gNew - g) / std::max(gz, 1e-300));  // Polak-Ribiere
    }
    dir = -zNew + beta * dir;
    g = gNew;
    z = zNew;
    gz = g.dot(z);
  }
  res.u = u;
  res.iterations = it;
  res.elResidual = g.lpNorm<Eigen::Infinity>();
  return res;
}

Cochain pxLinearReference(const HodgeSolver& solver, const Cochain& u0, const Cochain& F,
                          double tol) {
  const HodgeOps& ops = solver.ops();
  const CubicalComplex& cx = ops.complex();
  const int r = u0.degree;
  const auto& mask = solver.constrained(BoundaryCondition::tangential(), r);
  auto applyA = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd y = cx.d(r).transpose() * ops.mass(r + 1).cwiseProduct(cx.d(r) * x);
    for (size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) y[int(i)] = 0.0;
    return y;
  };
  Eigen::VectorXd b = cx.d(r).transpose() * ops.mass(r + 1).cwiseProduct(F.values);
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) b[int(i)] = 0.0;
  Eigen::VectorXd x = u0.values;
  Eigen::VectorXd res = b - applyA(x);
  Eigen::VectorXd z = res.cwiseQuotient(ops.mass(r));
  Eigen::VectorXd pdir = z;
  double rz = res.dot(z);
  double bInf = std::max(1.0, b.lpNorm<Eigen::Infinity>());
  for (int it = 0; it < 20 * int(b.size()) + 100; ++it) {
    if (res.lpNorm<Eigen::Infinity>() <= tol * bInf) break;
    Eigen::VectorXd Ap = applyA(pdir);
    double denom = pdir.dot(Ap);
    if (denom <= 0) break;
    double alpha = rz / denom;
    x += alpha * pdir;
    res -= alpha * Ap;
    z = res.cwiseQuotient(ops.mass(r));
    double rzNew = res.dot(z);
    pdir = z + (rzNew / rz) * pdir;
    rz = rzNew;
  }
  return Cochain(r, x);
}

}  // namespace dform
