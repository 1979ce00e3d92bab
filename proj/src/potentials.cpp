#include "dform/potentials.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace dform {

namespace {

template <class F>
void forActive(const Grid& g, F&& fn) {
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i)
        if (g.active(i, j, k)) fn(g.rawIndex(i, j, k), g.center(i, j, k));
}

double norm2(const Vec3& z, int n) {
  double s = 0;
  for (int a = 0; a < n; ++a) s += z[a] * z[a];
  return std::sqrt(s);
}

double omegaN(int n) { return n == 2 ? 2 * M_PI : 4 * M_PI; }

// exact integral of K_0 over the ball of volume V centered at the singularity
double selfK0(int n, double V) {
  if (n == 2) {
    double rho = std::sqrt(V / M_PI);
    return rho * rho / 2 * std::log(rho) - rho * rho / 4;
  }
  double rho = std::cbrt(3 * V / (4 * M_PI));
  return -rho * rho / 2;
}

}  // namespace

double kernelK0(int n, const Vec3& z) {
  double r = norm2(z, n);
  if (n == 2) return std::log(r) / (2 * M_PI);
  return std::pow(r, 2 - n) / ((2 - n) * omegaN(n));
}

double kernelK0Rho(int n, const Vec3& z, double rho) {
  Vec3 w = z;
  w[n - 1] /= rho;
  return kernelK0(n, w) / rho;
}

Vec3 kernelK0Grad(int n, const Vec3& z) {
  double r = norm2(z, n);
  Vec3 g{0, 0, 0};
  for (int a = 0; a < n; ++a) g[a] = z[a] / (omegaN(n) * std::pow(r, n));
  return g;
}

ScalarField newtonianPotential(const ScalarField& f) {
  const Grid& g = f.grid;
  int n = g.n;
  double vol = g.cellVolume();
  double self = selfK0(n, vol);
  ScalarField out(g);
  std::vector<std::pair<int, Vec3>> pts;
  forActive(g, [&](int idx, const Vec3& x) { pts.emplace_back(idx, x); });
  for (auto& [ti, tx] : pts) {
    double acc = 0;
    for (auto& [si, sx] : pts) {
      if (si == ti) {
        acc += f.values[si] * self;
      } else {
        Vec3 z{tx[0] - sx[0], tx[1] - sx[1], tx[2] - sx[2]};
        acc += f.values[si] * kernelK0(n, z) * vol;
      }
    }
    out.values[ti] = acc;
  }
  return out;
}

ScalarField derivativePotential(const ScalarField& f, int axis) {
  const Grid& g = f.grid;
  int n = g.n;
  double vol = g.cellVolume();
  ScalarField out(g);
  std::vector<std::pair<int, Vec3>> pts;
  forActive(g, [&](int idx, const Vec3& x) { pts.emplace_back(idx, x); });
  for (auto& [ti, tx] : pts) {
    double acc = 0;
    for (auto& [si, sx] : pts) {
      if (si == ti) continue;  // odd kernel: zero self-cell
      Vec3 z{tx[0] - sx[0], tx[1] - sx[1], tx[2] - sx[2]};
      double r = norm2(z, n);
      acc += f.values[si] * (sx[axis] - tx[axis]) / std::pow(r, n) * vol;
    }
    out.values[ti] = acc / omegaN(n);
  }
  return out;
}

ScalarField halfspacePotential(const ScalarField& f, HalfBC bc, HalfKind kind, int axis,
                               double rho) {
  const Grid& g = f.grid;
  int n = g.n;
  int normal = n - 1;
  if (g.origin[normal] < -1e-12) throw std::invalid_argument("grid must lie in x_n >= 0");
  double vol = g.cellVolume();
  double self = selfK0(n, vol / rho);
  ScalarField out(g);
  std::vector<std::pair<int, Vec3>> pts;
  forActive(g, [&](int idx, const Vec3& x) { pts.emplace_back(idx, x); });
  // image source sign: E^D extends odd (image strength -f), E^N even (+f)
  auto imageSign = [&](int alpha) {
    bool dirichlet = (bc == HalfBC::Dirichlet);
    if (kind == HalfKind::P) return dirichlet ? -1.0 : +1.0;
    // Q: the extension parity flips for alpha = n
    bool odd = dirichlet ? (alpha != normal) : (alpha == normal);
    return odd ? -1.0 : +1.0;
  };
  for (auto& [ti, tx] : pts) {
    double acc = 0;
    for (auto& [si, sx] : pts) {
      Vec3 z{tx[0] - sx[0], tx[1] - sx[1], tx[2] - sx[2]};
      Vec3 sxr = sx;
      sxr[normal] = -sx[normal];
      Vec3 zr{tx[0] - sxr[0], tx[1] - sxr[1], tx[2] - sxr[2]};
      if (kind == HalfKind::P) {
        double direct = (si == ti) ? self : kernelK0Rho(n, z, rho) * vol;
        acc += f.values[si] * (direct + imageSign(0) * kernelK0Rho(n, zr, rho) * vol);
      } else {
        // Q_alpha with the rho-anisotropic kernel gradient in y
        auto gradTerm = [&](const Vec3& zz, const Vec3& src) {
          Vec3 w = zz;
          w[normal] /= rho;
          double r = norm2(w, n);
          double comp = (axis == normal) ? w[normal] / rho : w[axis];
          (void)src;
          return (comp / (omegaN(n) * std::pow(r, n))) / rho;
        };
        double direct = (si == ti) ? 0.0 : -gradTerm(z, sx) * vol;
        double image = -imageSign(axis) * gradTerm(zr, sxr) * vol;
        // sign: Q_alpha[f](x) = omega^{-1} int |x-y|^{-n} (y_alpha - x_alpha) f = -int dK0/dz_alpha(x-y) f
        acc += f.values[si] * (direct + image);
      }
    }
    out.values[ti] = acc;
  }
  return out;
}

std::vector<double> halfspacePotentialAt(const ScalarField& f, HalfBC bc,
                                         const std::vector<Vec3>& targets, double rho) {
  const Grid& g = f.grid;
  int n = g.n;
  int normal = n - 1;
  double vol = g.cellVolume();
  double sign = (bc == HalfBC::Dirichlet) ? -1.0 : 1.0;
  std::vector<double> out(targets.size(), 0.0);
  std::vector<std::pair<int, Vec3>> pts;
  forActive(g, [&](int idx, const Vec3& x) { pts.emplace_back(idx, x); });
  for (size_t t = 0; t < targets.size(); ++t) {
    const Vec3& tx = targets[t];
    if (tx[normal] < -1e-12) throw std::invalid_argument("evaluation point below the trace");
    double acc = 0;
    for (auto& [si, sx] : pts) {
      Vec3 z{tx[0] - sx[0], tx[1] - sx[1], tx[2] - sx[2]};
      Vec3 zr = z;
      zr[normal] = tx[normal] + sx[normal];
      acc += f.values[si] * (kernelK0Rho(n, z, rho) + sign * kernelK0Rho(n, zr, rho)) * vol;
    }
    out[t] = acc;
  }
  return out;
}

ScalarField singleLayer(const ScalarField& fTrace, const Grid& volume, double rho) {
  std::vector<Vec3> targets;
  std::vector<int> idx;
  forActive(volume, [&](int i, const Vec3& x) {
    idx.push_back(i);
    targets.push_back(x);
  });
  auto vals = singleLayerAt(fTrace, targets, volume.n, rho);
  ScalarField out(volume);
  for (size_t q = 0; q < idx.size(); ++q) out.values[idx[q]] = vals[q];
  return out;
}

std::vector<double> singleLayerAt(const ScalarField& fTrace, const std::vector<Vec3>& targets,
                                  int n, double rho) {
  const Grid& tg = fTrace.grid;  // (n-1)-dimensional lattice of trace points
  double area = std::pow(tg.h, n - 1);
  std::vector<std::pair<int, Vec3>> pts;
  forActive(tg, [&](int idx, const Vec3& x) { pts.emplace_back(idx, x); });
  std::vector<double> out(targets.size(), 0.0);
  for (size_t t = 0; t < targets.size(); ++t) {
    const Vec3& tx = targets[t];
    double acc = 0;
    for (auto& [si, sx] : pts) {
      // source at (y', 0): g_N = 2 K_0(x' - y', x_n; rho)
      Vec3 z{tx[0] - sx[0], 0, 0};
      if (n == 3) z[1] = tx[1] - sx[1];
      z[n - 1] = tx[n - 1];
      acc += 2 * kernelK0Rho(n, z, rho) * fTrace.values[si] * area;
    }
    out[t] = acc;
  }
  return out;
}

ScalarField traceExtension(const ScalarField& data, const Grid& volume) {
  ScalarField uHalf = singleLayer(data, volume, 0.5);
  ScalarField uOne = singleLayer(data, volume, 1.0);
  ScalarField out(volume);
  out.values = 0.5 * (uHalf.values - 2.0 * uOne.values);
  return out;
}

double planarConstant(const ScalarField& f, double R) {
  if (f.grid.n != 2) throw std::invalid_argument("planar constant is 2D only");
  return std::log(2 * R) / (2 * M_PI) * f.mass();
}

ScalarField discreteLaplacian(const ScalarField& u) {
  const Grid& g = u.grid;
  ScalarField out(g);
  for (int k = 0; k < g.dims[2]; ++k)
    for (int j = 0; j < g.dims[1]; ++j)
      for (int i = 0; i < g.dims[0]; ++i) {
        if (!g.active(i, j, k)) continue;
        double acc = 0;
        bool full = true;
        std::array<std::array<int, 3>, 3> e{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
        for (int a = 0; a < g.n; ++a) {
          bool up = g.active(i + e[a][0], j + e[a][1], k + e[a][2]);
          bool lo = g.active(i - e[a][0], j - e[a][1], k - e[a][2]);
          if (!up || !lo) {
            full = false;
            break;
          }
          acc += u.at(i + e[a][0], j + e[a][1], k + e[a][2]) +
                 u.at(i - e[a][0], j - e[a][1], k - e[a][2]) - 2 * u.at(i, j, k);
        }
        out.at(i, j, k) = full ? acc / (g.h * g.h) : 0.0;
      }
  return out;
}

}  // namespace dform
