#include "dform/sampled.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dform {

double SampledForm::compAt(const std::vector<int>& idx, int cell) const {
  unsigned m = 0;
  int sign = 1;
  // insertion sort, tracking parity; repeated axes kill the term
  std::vector<int> v = idx;
  for (size_t i = 1; i < v.size(); ++i)
    for (size_t j = i; j > 0 && v[j] < v[j - 1]; --j) {
      std::swap(v[j], v[j - 1]);
      sign = -sign;
    }
  for (size_t i = 0; i + 1 < v.size(); ++i)
    if (v[i] == v[i + 1]) return 0.0;
  for (int a : v) m |= (1u << a);
  return sign * comps[comboRank(n, m)][cell];
}

SampledForm wedge(const SampledForm& a, const SampledForm& b) {
  requireSameGrid(a.grid, b.grid);
  int k = a.degree, l = b.degree, n = a.n;
  if (k + l > n) throw std::invalid_argument("wedge exceeds top degree");
  SampledForm out(a.grid, k + l);
  auto outCombos = axisCombos(n, k + l);
  auto aCombos = axisCombos(n, k);
  for (int oc = 0; oc < int(outCombos.size()); ++oc) {
    unsigned K = outCombos[oc];
    for (unsigned A : aCombos) {
      if ((A & K) != A) continue;
      unsigned B = K & ~A;
      int s = mergeSign(A, B);
      if (s == 0) continue;
      out.comps[oc] += s * a.comps[comboRank(n, A)].cwiseProduct(b.comps[comboRank(n, B)]);
    }
  }
  return out;
}

SampledForm interiorProduct(const SampledForm& a, const SampledForm& b, const MetricField& g) {
  requireSameGrid(a.grid, b.grid);
  int k = a.degree, l = b.degree, n = a.n;
  if (k > l) throw std::invalid_argument("interior product needs deg a <= deg b");
  if (k == 0) {  // scalar multiplication
    SampledForm out(b.grid, l);
    for (int c = 0; c < out.numComps(); ++c) out.comps[c] = a.comps[0].cwiseProduct(b.comps[c]);
    return out;
  }
  SampledForm out(a.grid, l - k);
  auto outCombos = axisCombos(n, l - k);
  auto aCombos = axisCombos(n, k);
  const Grid& gr = a.grid;
  for (int oc = 0; oc < int(outCombos.size()); ++oc) {
    unsigned K = outCombos[oc];
    for (unsigned A : aCombos) {
      int s = mergeSign(A, K);
      if (s == 0) continue;
      int bIdx = comboRank(n, A | K);
      int aIdx = comboRank(n, A);
      for (int kk = 0; kk < gr.dims[2]; ++kk)
        for (int jj = 0; jj < gr.dims[1]; ++jj)
          for (int ii = 0; ii < gr.dims[0]; ++ii) {
            if (!gr.active(ii, jj, kk)) continue;
            int cell = gr.rawIndex(ii, jj, kk);
            double raise = g.ginvProduct(A, gr.center(ii, jj, kk));
            out.comps[oc][cell] += s * raise * a.comps[aIdx][cell] * b.comps[bIdx][cell];
          }
    }
  }
  return out;
}

SampledForm hodgeStar(const SampledForm& a, const MetricField& g) {
  int n = a.n, k = a.degree;
  SampledForm out(a.grid, n - k);
  auto aCombos = axisCombos(n, k);
  unsigned full = (1u << n) - 1;
  const Grid& gr = a.grid;
  for (unsigned A : aCombos) {
    unsigned Ac = full & ~A;
    int s = mergeSign(A, Ac);
    int src = comboRank(n, A), dst = comboRank(n, Ac);
    for (int kk = 0; kk < gr.dims[2]; ++kk)
      for (int jj = 0; jj < gr.dims[1]; ++jj)
        for (int ii = 0; ii < gr.dims[0]; ++ii) {
          if (!gr.active(ii, jj, kk)) continue;
          int cell = gr.rawIndex(ii, jj, kk);
          Vec3 x = gr.center(ii, jj, kk);
          out.comps[dst][cell] = s * g.ginvProduct(A, x) * g.sqrtDet(x) * a.comps[src][cell];
        }
  }
  return out;
}

ScalarField scalarProduct(const SampledForm& a, const SampledForm& b, const MetricField& g) {
  requireSameGrid(a.grid, b.grid);
  if (a.degree != b.degree) throw std::invalid_argument("degree mismatch");
  ScalarField out(a.grid);
  auto combos = axisCombos(a.n, a.degree);
  const Grid& gr = a.grid;
  for (int c = 0; c < int(combos.size()); ++c)
    for (int kk = 0; kk < gr.dims[2]; ++kk)
      for (int jj = 0; jj < gr.dims[1]; ++jj)
        for (int ii = 0; ii < gr.dims[0]; ++ii) {
          if (!gr.active(ii, jj, kk)) continue;
          int cell = gr.rawIndex(ii, jj, kk);
          out.values[cell] += g.ginvProduct(combos[c], gr.center(ii, jj, kk)) *
                              a.comps[c][cell] * b.comps[c][cell];
        }
  return out;
}

std::vector<ScalarField> gradient(const ScalarField& f) {
  const Grid& g = f.grid;
  std::vector<ScalarField> out(g.n, ScalarField(g));
  for (int a = 0; a < g.n; ++a) {
    std::array<int, 3> e{0, 0, 0};
    e[a] = 1;
    for (int k = 0; k < g.dims[2]; ++k)
      for (int j = 0; j < g.dims[1]; ++j)
        for (int i = 0; i < g.dims[0]; ++i) {
          if (!g.active(i, j, k)) continue;
          bool up = g.active(i + e[0], j + e[1], k + e[2]);
          bool lo = g.active(i - e[0], j - e[1], k - e[2]);
          double v = 0;
          if (up && lo)
            v = (f.at(i + e[0], j + e[1], k + e[2]) - f.at(i - e[0], j - e[1], k - e[2])) /
                (2 * g.h);
          else if (up)
            v = (f.at(i + e[0], j + e[1], k + e[2]) - f.at(i, j, k)) / g.h;
          else if (lo)
            v = (f.at(i, j, k) - f.at(i - e[0], j - e[1], k - e[2])) / g.h;
          out[a].at(i, j, k) = v;
        }
  }
  return out;
}

ChristoffelField::ChristoffelField(const Grid& g, const MetricField& metric)
    : grid_(&g), n_(g.n) {
  g_.reserve(n_);
  for (int a = 0; a < n_; ++a)
    g_.push_back(ScalarField::sample(g, [&](const Vec3& x) { return metric.entries(x)[a]; }));
  dg_.resize(n_ * n_, ScalarField(g));
  for (int a = 0; a < n_; ++a) {
    auto da = gradient(g_[a]);
    for (int l = 0; l < n_; ++l) dg_[a * n_ + l] = da[l];
  }
}

double ChristoffelField::gamma(int k, int l, int m, int cell) const {
  // Diagonal metric: Gamma^k_{lm} = (1/2) g^{kk} (d_l g_km + d_m g_lk - d_k g_lm).
  double gkk = g_[k].values[cell];
  double t = 0;
  if (k == m) t += dg_[k * n_ + l].values[cell];
  if (l == k) t += dg_[k * n_ + m].values[cell];
  if (l == m) t -= dg_[l * n_ + k].values[cell];
  return 0.5 * t / gkk;
}

SampledForm pointwiseCodifferential(const SampledForm& w, const MetricField& g) {
  if (w.degree == 0) throw std::invalid_argument("codifferential of a 0-form");
  const Grid& gr = w.grid;
  int n = w.n, r = w.degree;
  SampledForm out(gr, r - 1);
  ChristoffelField chris(gr, g);
  // partial derivatives of every component
  std::vector<std::vector<ScalarField>> dcomp(w.numComps());
  for (int c = 0; c < w.numComps(); ++c) {
    ScalarField sf(gr);
    sf.values = w.comps[c];
    dcomp[c] = gradient(sf);
  }
  auto outCombos = axisCombos(n, r - 1);
  for (int oc = 0; oc < int(outCombos.size()); ++oc) {
    auto I = maskAxes(outCombos[oc]);
    for (int kk = 0; kk < gr.dims[2]; ++kk)
      for (int jj = 0; jj < gr.dims[1]; ++jj)
        for (int ii = 0; ii < gr.dims[0]; ++ii) {
          if (!gr.active(ii, jj, kk)) continue;
          int cell = gr.rawIndex(ii, jj, kk);
          Vec3 x = gr.center(ii, jj, kk);
          auto ge = g.entries(x);
          double acc = 0;
          for (int k = 0; k < n; ++k) {
            double ginv = 1.0 / ge[k];
            // d_k w_{kI}
            std::vector<int> kI{k};
            for (int q = 0; q < r - 1; ++q) kI.push_back(I[q]);
            // derivative of the sign-resolved component
            unsigned m = 0;
            int sgn = 1;
            {
              std::vector<int> v = kI;
              for (size_t i2 = 1; i2 < v.size(); ++i2)
                for (size_t j2 = i2; j2 > 0 && v[j2] < v[j2 - 1]; --j2) {
                  std::swap(v[j2], v[j2 - 1]);
                  sgn = -sgn;
                }
              bool rep = false;
              for (size_t i2 = 0; i2 + 1 < v.size(); ++i2) rep |= (v[i2] == v[i2 + 1]);
              if (rep) sgn = 0;
              for (int a : v) m |= (1u << a);
            }
            double term = 0;
            if (sgn != 0) term += sgn * dcomp[comboRank(n, m)][k].values[cell];
            // - Gamma^s_{kk} w_{sI}
            for (int s = 0; s < n; ++s) {
              double gam = chris.gamma(s, k, k, cell);
              if (gam != 0.0) {
                std::vector<int> sI{s};
                for (int q = 0; q < r - 1; ++q) sI.push_back(I[q]);
                term -= gam * w.compAt(sI, cell);
              }
            }
            // - sum_j Gamma^s_{I_j k} w_{k, I with I_j -> s}
            for (int q = 0; q < r - 1; ++q) {
              for (int s = 0; s < n; ++s) {
                double gam = chris.gamma(s, I[q], k, cell);
                if (gam != 0.0) {
                  std::vector<int> rep{k};
                  for (int q2 = 0; q2 < r - 1; ++q2) rep.push_back(q2 == q ? s : I[q2]);
                  term -= gam * w.compAt(rep, cell);
                }
              }
            }
            acc += ginv * term;
          }
          out.comps[oc][cell] = -acc;
        }
  }
  return out;
}

SampledForm whitneySample(const CubicalComplex& cx, const Cochain& c) {
  const Grid& g = cx.cellGrid();
  int n = cx.dim(), r = c.degree;
  SampledForm out(g, r);
  auto combos = axisCombos(n, r);
  double hr = std::pow(g.h, r);
  for (int ci = 0; ci < int(combos.size()); ++ci) {
    unsigned A = combos[ci];
    for (int kk = 0; kk < g.dims[2]; ++kk)
      for (int jj = 0; jj < g.dims[1]; ++jj)
        for (int ii = 0; ii < g.dims[0]; ++ii) {
          if (!g.active(ii, jj, kk)) continue;
          double sum = 0;
          int cnt = 0;
          // adjacent r-cells with axes A: corner offsets 0/1 on the non-A axes
          int freeAxes[3], nf = 0;
          for (int a = 0; a < n; ++a)
            if (!(A & (1u << a))) freeAxes[nf++] = a;
          for (int bits = 0; bits < (1 << nf); ++bits) {
            std::array<int, 3> corner{ii, jj, kk};
            for (int q = 0; q < nf; ++q)
              if (bits & (1 << q)) corner[freeAxes[q]] += 1;
            int idx = cx.cellIndex(r, corner, A);
            if (idx >= 0) {
              sum += c.values[idx];
              ++cnt;
            }
          }
          if (cnt > 0) out.comps[ci][g.rawIndex(ii, jj, kk)] = sum / cnt / hr;
        }
  }
  return out;
}

Cochain deRhamMap(const CubicalComplex& cx, const SampledForm& s) {
  int r = s.degree;
  Cochain c = Cochain::zero(cx, r);
  const Grid& g = cx.cellGrid();
  double hr = std::pow(g.h, r);
  for (int i = 0; i < cx.numCells(r); ++i) {
    const auto& cell = cx.cell(r, i);
    // interpolate the component to the r-cell center: average the 2^(n-r)
    // adjacent cell centers (offsets -1/0 on non-spanned axes)
    double sum = 0;
    int cnt = 0;
    int freeAxes[3], nf = 0;
    for (int a = 0; a < g.n; ++a)
      if (!(cell.axes & (1u << a))) freeAxes[nf++] = a;
    for (int bits = 0; bits < (1 << nf); ++bits) {
      std::array<int, 3> cc = cell.corner;
      for (int q = 0; q < nf; ++q)
        if (bits & (1 << q)) cc[freeAxes[q]] -= 1;
      if (g.active(cc[0], cc[1], cc[2])) {
        sum += s.comps[comboRank(g.n, cell.axes)][g.rawIndex(cc[0], cc[1], cc[2])];
        ++cnt;
      }
    }
    if (cnt > 0) c.values[i] = sum / cnt * hr;
  }
  return c;
}

static BoundaryValues boundarySplit(const CubicalComplex& cx, const SampledForm& w, bool keepNormal) {
  BoundaryValues bv;
  bv.degree = w.degree;
  auto combos = axisCombos(cx.dim(), w.degree);
  const Grid& g = cx.cellGrid();
  for (const auto& bf : cx.boundaryFaces()) {
    std::vector<double> vals(combos.size(), 0.0);
    // sample at the active cell adjacent to the face
    const auto& f = cx.cell(cx.dim() - 1, bf.cellIdx);
    std::array<int, 3> cc = f.corner;
    if (bf.side > 0) cc[bf.axis] -= 1;
    if (g.active(cc[0], cc[1], cc[2])) {
      int cell = g.rawIndex(cc[0], cc[1], cc[2]);
      for (size_t c = 0; c < combos.size(); ++c) {
        bool hasConormal = (combos[c] >> bf.axis) & 1u;
        if (hasConormal == keepNormal) vals[c] = w.comps[c][cell];
      }
    }
    bv.perFace.push_back(vals);
  }
  return bv;
}

BoundaryValues tangentialPart(const CubicalComplex& cx, const SampledForm& w) {
  return boundarySplit(cx, w, false);
}
BoundaryValues normalPart(const CubicalComplex& cx, const SampledForm& w) {
  return boundarySplit(cx, w, true);
}

double boundaryPairing(const CubicalComplex& cx, const MetricField& g,
                       const std::function<double(unsigned, const Vec3&)>& f, int degF,
                       const std::function<double(unsigned, const Vec3&)>& v) {
  int n = cx.dim();
  double total = 0;
  auto vCombos = axisCombos(n, degF + 1);
  auto fCombos = axisCombos(n, degF);
  double faceMeasure = std::pow(cx.h(), n - 1);
  for (const auto& bf : cx.boundaryFaces()) {
    Vec3 x = cx.cellCenter(n - 1, bf.cellIdx);
    auto ge = g.entries(x);
    // dsigma = sqrt(g) sqrt(g^mm) * face measure
    double dsig = g.sqrtDet(x) * std::sqrt(1.0 / ge[bf.axis]) * faceMeasure;
    // <nu ^ f, v> with nu = side * dx^m (outward unit conormal up to metric scaling:
    // the unit covector is dx^m / sqrt(g^mm)^{-1}... with diagonal g, |dx^m| = sqrt(g^mm),
    // so nu = side * dx^m / sqrt(g_mm)^{-1/2}; combine: nu = side * sqrt(g^mm)^{-1} dx^m?
    // Use nu = side * dx^m * sqrt(g_mm): then <nu,nu> = g^mm g_mm = 1.
    double nuScale = bf.side * std::sqrt(ge[bf.axis]);
    double acc = 0;
    for (unsigned Vc : vCombos) {
      if (!((Vc >> bf.axis) & 1u)) continue;  // nu ^ f only has components containing m
      unsigned A = Vc & ~(1u << bf.axis);
      int s = mergeSign(1u << bf.axis, A);
      double fv = f(A, x);
      double gInv = g.ginvProduct(Vc, x);
      acc += gInv * (nuScale * s * fv) * v(Vc, x);
    }
    total += acc * dsig;
  }
  return total;
}

double boundaryPairing(const CubicalComplex& cx, const MetricField& g, const SampledForm& f,
                       const SampledForm& v) {
  // Face centers lie on the boundary plane; sample both forms at the adjacent
  // interior cell center (first-order one-sided trace).
  int n = cx.dim();
  double total = 0;
  auto vCombos = axisCombos(n, f.degree + 1);
  double faceMeasure = std::pow(cx.h(), n - 1);
  const Grid& gr = cx.cellGrid();
  for (const auto& bf : cx.boundaryFaces()) {
    Vec3 x = cx.cellCenter(n - 1, bf.cellIdx);
    const auto& fc = cx.cell(n - 1, bf.cellIdx);
    std::array<int, 3> cc = fc.corner;
    if (bf.side > 0) cc[bf.axis] -= 1;
    if (!gr.active(cc[0], cc[1], cc[2])) continue;
    int cell = gr.rawIndex(cc[0], cc[1], cc[2]);
    auto ge = g.entries(x);
    double dsig = g.sqrtDet(x) * std::sqrt(1.0 / ge[bf.axis]) * faceMeasure;
    double nuScale = bf.side * std::sqrt(ge[bf.axis]);
    double acc = 0;
    for (unsigned Vc : vCombos) {
      if (!((Vc >> bf.axis) & 1u)) continue;
      unsigned A = Vc & ~(1u << bf.axis);
      int s = mergeSign(1u << bf.axis, A);
      acc += g.ginvProduct(Vc, x) * nuScale * s * f.comps[comboRank(n, A)][cell] *
             v.comps[comboRank(n, Vc)][cell];
    }
    total += acc * dsig;
  }
  return total;
}

}  // namespace dform
