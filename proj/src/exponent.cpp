#include "dform/exponent.hpp"

#include <cmath>
#include <stdexcept>

#include "dform/sampled.hpp"

namespace dform {

namespace {

// Iterate active cells, calling fn(rawIndex, center).
template <class F>
void forActive(const Grid& g, F&& fn) {
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i)
        if (g.active(i, j, k)) fn(g.rawIndex(i, j, k), g.center(i, j, k));
}

double dist(const Vec3& a, const Vec3& b, int n) {
  double s = 0;
  for (int q = 0; q < n; ++q) s += (a[q] - b[q]) * (a[q] - b[q]);
  return std::sqrt(s);
}

}  // namespace

ExponentField::ExponentField(const Grid& g, Eigen::VectorXd v) : grid(g), values(std::move(v)) {
  pMinus = 1e300;
  pPlus = 0;
  forActive(grid, [&](int idx, const Vec3&) {
    pMinus = std::min(pMinus, values[idx]);
    pPlus = std::max(pPlus, values[idx]);
  });
  if (!(pMinus > 1.0) || !std::isfinite(pPlus))
    throw std::invalid_argument("exponent field requires 1 < p_- <= p_+ < inf");
}

ExponentField ExponentField::constant(const Grid& g, double p) {
  return ExponentField(g, Eigen::VectorXd::Constant(g.cellCount(), p));
}

ExponentField ExponentField::conjugate() const {
  Eigen::VectorXd v = values;
  forActive(grid, [&](int idx, const Vec3&) { v[idx] = values[idx] / (values[idx] - 1.0); });
  return ExponentField(grid, v);
}

double logHolderConstant(const ExponentField& p) {
  std::vector<std::pair<int, Vec3>> pts;
  forActive(p.grid, [&](int idx, const Vec3& x) { pts.emplace_back(idx, x); });
  if (pts.size() < 2) throw std::invalid_argument("degenerate domain");
  double best = 0;
  for (size_t a = 0; a < pts.size(); ++a)
    for (size_t b = a + 1; b < pts.size(); ++b) {
      double d = dist(pts[a].second, pts[b].second, p.grid.n);
      double v = std::abs(p.values[pts[a].first] - p.values[pts[b].first]) *
                 std::log(std::exp(1.0) + 1.0 / d);
      best = std::max(best, v);
    }
  return best;
}

double modular(const ScalarField& f, const ExponentField& p) {
  requireSameGrid(f.grid, p.grid);
  double vol = f.grid.cellVolume();
  double s = 0;
  forActive(f.grid, [&](int idx, const Vec3&) {
    s += std::pow(std::abs(f.values[idx]), p.values[idx]) * vol;
  });
  return s;
}

double modular(const std::vector<ScalarField>& comps, const ExponentField& p) {
  ScalarField mag(p.grid);
  forActive(p.grid, [&](int idx, const Vec3&) {
    double s2 = 0;
    for (const auto& c : comps) s2 += c.values[idx] * c.values[idx];
    mag.values[idx] = std::sqrt(s2);
  });
  return modular(mag, p);
}

static double luxemburgOfMagnitude(const ScalarField& mag, const ExponentField& p) {
  double maxAbs = 0, l1 = 0;
  forActive(mag.grid, [&](int idx, const Vec3&) {
    maxAbs = std::max(maxAbs, std::abs(mag.values[idx]));
    l1 += std::abs(mag.values[idx]);
  });
  l1 *= mag.grid.cellVolume();
  if (maxAbs == 0.0) return 0.0;
  double lo = 1e-14;
  double hi = std::max(maxAbs, l1) + 1.0;
  // grow the bracket if needed (modular is monotone decreasing in lambda)
  auto modAt = [&](double lam) {
    double s = 0;
    double vol = mag.grid.cellVolume();
    forActive(mag.grid, [&](int idx, const Vec3&) {
      s += std::pow(std::abs(mag.values[idx]) / lam, p.values[idx]) * vol;
    });
    return s;
  };
  int guard = 0;
  while (modAt(hi) > 1.0 && guard++ < 200) hi *= 2;
  for (int it = 0; it < 200 && (hi - lo) > 1e-12 * hi; ++it) {
    double mid = 0.5 * (lo + hi);
    (modAt(mid) > 1.0 ? lo : hi) = mid;
  }
  return hi;
}

double luxemburgNorm(const ScalarField& f, const ExponentField& p) {
  requireSameGrid(f.grid, p.grid);
  return luxemburgOfMagnitude(f, p);
}

double luxemburgNorm(const std::vector<ScalarField>& comps, const ExponentField& p) {
  ScalarField mag(p.grid);
  forActive(p.grid, [&](int idx, const Vec3&) {
    double s2 = 0;
    for (const auto& c : comps) s2 += c.values[idx] * c.values[idx];
    mag.values[idx] = std::sqrt(s2);
  });
  return luxemburgOfMagnitude(mag, p);
}

double sobolevNorm(const ScalarField& f, int k, const ExponentField& p) {
  if (k < 0 || k > 2) throw std::invalid_argument("unsupported Sobolev order");
  double total = luxemburgNorm(f, p);
  if (k >= 1) {
    auto g1 = gradient(f);
    total += luxemburgNorm(g1, p);
    if (k == 2) {
      std::vector<ScalarField> g2;
      for (const auto& gi : g1)
        for (auto& gij : gradient(gi)) g2.push_back(gij);
      total += luxemburgNorm(g2, p);
    }
  }
  return total;
}

ScalarField maximalFunction(const ScalarField& f) {
  const Grid& g = f.grid;
  // prefix sums of |f| and of the activity mask over the raw box
  int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
  std::vector<double> pf((nx + 1) * (ny + 1) * (nz + 1), 0.0);
  std::vector<double> pm((nx + 1) * (ny + 1) * (nz + 1), 0.0);
  auto P = [&](std::vector<double>& a, int i, int j, int k) -> double& {
    return a[(k * (ny + 1) + j) * (nx + 1) + i];
  };
  for (int k = 1; k <= nz; ++k)
    for (int j = 1; j <= ny; ++j)
      for (int i = 1; i <= nx; ++i) {
        double v = g.active(i - 1, j - 1, k - 1) ? std::abs(f.at(i - 1, j - 1, k - 1)) : 0.0;
        double m = g.active(i - 1, j - 1, k - 1) ? 1.0 : 0.0;
        P(pf, i, j, k) = v + P(pf, i - 1, j, k) + P(pf, i, j - 1, k) + P(pf, i, j, k - 1) -
                         P(pf, i - 1, j - 1, k) - P(pf, i - 1, j, k - 1) - P(pf, i, j - 1, k - 1) +
                         P(pf, i - 1, j - 1, k - 1);
        P(pm, i, j, k) = m + P(pm, i - 1, j, k) + P(pm, i, j - 1, k) + P(pm, i, j, k - 1) -
                         P(pm, i - 1, j - 1, k) - P(pm, i - 1, j, k - 1) - P(pm, i, j - 1, k - 1) +
                         P(pm, i - 1, j - 1, k - 1);
      }
  auto boxSum = [&](std::vector<double>& a, int i0, int j0, int k0, int i1, int j1, int k1) {
    i0 = std::max(i0, 0); j0 = std::max(j0, 0); k0 = std::max(k0, 0);
    i1 = std::min(i1, nx - 1); j1 = std::min(j1, ny - 1); k1 = std::min(k1, nz - 1);
    if (i0 > i1 || j0 > j1 || k0 > k1) return 0.0;
    ++i1; ++j1; ++k1;
    return P(a, i1, j1, k1) - P(a, i0, j1, k1) - P(a, i1, j0, k1) - P(a, i1, j1, k0) +
           P(a, i0, j0, k1) + P(a, i0, j1, k0) + P(a, i1, j0, k0) - P(a, i0, j0, k0);
  };
  int maxW = std::max({nx, ny, nz});
  ScalarField out(g);
  for (int k = 0; k < nz; ++k)
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) {
        if (!g.active(i, j, k)) continue;
        double best = 0;
        // cubes centered at cell (ci,cj,ck) with half-width (m+1/2)h containing x
        for (int m = 0; m < maxW; ++m) {
          int lo = -m, hi = m;
          for (int ck = (g.n > 2 ? k + lo : 0); ck <= (g.n > 2 ? k + hi : 0); ++ck)
            for (int cj = j + lo; cj <= j + hi; ++cj)
              for (int ci = i + lo; ci <= i + hi; ++ci) {
                if (!g.active(ci, cj, ck)) continue;
                double cnt = boxSum(pm, ci - m, cj - m, ck - m, ci + m, cj + m, ck + m);
                if (cnt == 0) continue;
                double s = boxSum(pf, ci - m, cj - m, ck - m, ci + m, cj + m, ck + m);
                best = std::max(best, s / cnt);
              }
        }
        out.at(i, j, k) = best;
      }
  return out;
}

// exact integral of |z|^{alpha-n} over the ball of volume h^n
static double selfCellRiesz(int n, double h, double alpha) {
  double omega = (n == 2) ? 2 * M_PI : 4 * M_PI;  // (n-1)-volume of unit sphere
  double rho = (n == 2) ? h / std::sqrt(M_PI) : h * std::cbrt(3.0 / (4.0 * M_PI));
  return omega * std::pow(rho, alpha) / alpha;
}

ScalarField rieszPotential(const ScalarField& f, double alpha) {
  if (alpha <= 0) throw std::invalid_argument("alpha must be positive");
  const Grid& g = f.grid;
  int n = g.n;
  double vol = g.cellVolume();
  double self = selfCellRiesz(n, g.h, alpha);
  ScalarField out(g);
  std::vector<std::pair<int, Vec3>> pts;
  forActive(g, [&](int idx, const Vec3& x) { pts.emplace_back(idx, x); });
  for (auto& [ti, tx] : pts) {
    double acc = 0;
    for (auto& [si, sx] : pts) {
      if (si == ti) {
        acc += f.values[si] * self;
      } else {
        double r = dist(tx, sx, n);
        acc += f.values[si] * std::pow(r, alpha - n) * vol;
      }
    }
    out.values[ti] = acc;
  }
  return out;
}

ScalarField logPotential(const ScalarField& f, double R) {
  const Grid& g = f.grid;
  if (g.n != 2) throw std::invalid_argument("log potential is 2D only");
  double vol = g.cellVolume();
  double rho = g.h / std::sqrt(M_PI);
  // integral of log|z| over the equal-area disc; then subtract area*log R
  double selfLog = 2 * M_PI * (rho * rho / 2 * std::log(rho) - rho * rho / 4) - vol * std::log(R);
  ScalarField out(g);
  std::vector<std::pair<int, Vec3>> pts;
  forActive(g, [&](int idx, const Vec3& x) { pts.emplace_back(idx, x); });
  for (auto& [ti, tx] : pts) {
    double acc = 0;
    for (auto& [si, sx] : pts) {
      if (si == ti)
        acc += f.values[si] * selfLog;
      else
        acc += f.values[si] * std::log(dist(tx, sx, 2) / R) * vol;
    }
    out.values[ti] = acc;
  }
  return out;
}

PoincareRatios poincareCheck(const ScalarField& f, const ExponentField& p, double R) {
  requireSameGrid(f.grid, p.grid);
  const Grid& g = f.grid;
  // precondition: f vanishes on boundary cells of the mask
  forActive(g, [&](int idx, const Vec3&) { (void)idx; });
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        if (!g.active(i, j, k)) continue;
        bool interior = g.active(i - 1, j, k) && g.active(i + 1, j, k) && g.active(i, j - 1, k) &&
                        g.active(i, j + 1, k) &&
                        (g.n == 2 || (g.active(i, j, k - 1) && g.active(i, j, k + 1)));
        if (!interior && std::abs(f.at(i, j, k)) > 1e-14)
          throw std::invalid_argument("f must vanish on boundary cells");
      }
  auto grad = gradient(f);
  double num = luxemburgNorm(f, p);
  double den = luxemburgNorm(grad, p);
  double kappa = double(g.n) / (g.n - 1.0);
  Eigen::VectorXd kp = p.values * kappa;
  ExponentField pk(p.grid, kp);
  double numSharp = luxemburgNorm(f, pk);
  double pconj = p.pMinus / (p.pMinus - 1.0);
  double scale = std::pow(R, 1.0 / (g.n * pconj));
  return {num / (R * den), numSharp / (scale * den)};
}

ScalarField mollify(const ScalarField& f, double eps) {
  const Grid& g = f.grid;
  if (eps < 2 * g.h) throw std::invalid_argument("mollifier radius below resolution");
  int w = int(std::ceil(eps / g.h));
  // C^2 polynomial bump (1-|z/eps|^2)^3, normalized over the discrete stencil
  std::vector<double> wts;
  std::vector<std::array<int, 3>> offs;
  double tot = 0;
  for (int dk = (g.n > 2 ? -w : 0); dk <= (g.n > 2 ? w : 0); ++dk)
    for (int dj = -w; dj <= w; ++dj)
      for (int di = -w; di <= w; ++di) {
        double r2 = (di * di + dj * dj + dk * dk) * g.h * g.h / (eps * eps);
        if (r2 >= 1.0) continue;
        double wt = std::pow(1.0 - r2, 3);
        wts.push_back(wt);
        offs.push_back({di, dj, dk});
        tot += wt;
      }
  for (auto& wt : wts) wt /= tot;
  ScalarField out(g);
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        if (!g.active(i, j, k)) continue;
        double acc = 0;
        for (size_t q = 0; q < wts.size(); ++q) {
          int ii = i + offs[q][0], jj = j + offs[q][1], kk = k + offs[q][2];
          if (g.active(ii, jj, kk)) acc += wts[q] * f.at(ii, jj, kk);  // zero extension
        }
        out.at(i, j, k) = acc;
      }
  return out;
}

ExponentField mcshaneExtend(const ExponentField& p, const Grid& fullBox) {
  double L = logHolderConstant(p);
  std::vector<std::pair<Vec3, double>> samples;
  forActive(p.grid, [&](int idx, const Vec3& x) { samples.emplace_back(x, p.values[idx]); });
  auto omega = [&](double t) { return L / std::log(std::exp(1.0) + 1.0 / t); };
  Eigen::VectorXd v = Eigen::VectorXd::Constant(fullBox.cellCount(), p.pMinus);
  forActive(fullBox, [&](int idx, const Vec3& x) {
    double best = -1e300;
    for (auto& [y, py] : samples) {
      double d = dist(x, y, fullBox.n);
      best = std::max(best, d == 0.0 ? py : py - omega(d));
    }
    v[idx] = std::max(best, p.pMinus);
  });
  return ExponentField(fullBox, v);
}

}  // namespace dform
