#include <doctest.h>

#include <cmath>

#include "dform/exponent.hpp"
#include "dform/sampled.hpp"
#include "test_util.hpp"

using namespace dform;
using namespace dformtest;

namespace {

Grid unitSquare(int N) { return Grid::box(2, {N, N, 1}, 1.0 / N); }

Grid disc(double R, int N) {
  Grid g = Grid::box(2, {N, N, 1}, 2.2 * R / N, {-1.1 * R, -1.1 * R, 0});
  g.mask.assign(g.cellCount(), 0);
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < N; ++i) {
      Vec3 c = g.center(i, j, 0);
      if (c[0] * c[0] + c[1] * c[1] < R * R) g.mask[g.rawIndex(i, j, 0)] = 1;
    }
  return g;
}

}  // namespace

TEST_CASE("log-Holder constant") {
  // constant exponent
  Grid g = unitSquare(8);
  CHECK(logHolderConstant(ExponentField::constant(g, 2.0)) == 0.0);
  // affine p = 2 + x with two cells at distance 1
  Grid g2 = Grid::box(1, {2, 1, 1}, 1.0);
  auto p2 = ExponentField::sample(g2, [](const Vec3& x) { return 2.0 + x[0]; });
  CHECK(logHolderConstant(p2) == doctest::Approx(std::log(std::exp(1.0) + 1.0)));
  // jump of 1 across one cell of width 1/64
  Grid g3 = Grid::box(1, {4, 1, 1}, 1.0 / 64);
  auto p3 = ExponentField::sample(g3, [](const Vec3& x) { return x[0] < 2.0 / 64 ? 2.0 : 3.0; });
  CHECK(logHolderConstant(p3) == doctest::Approx(std::log(std::exp(1.0) + 64.0)));
  // degenerate domain
  Grid g4 = Grid::box(1, {1, 1, 1}, 1.0);
  CHECK_THROWS_WITH_AS(logHolderConstant(ExponentField::constant(g4, 2.0)),
                       doctest::Contains("degenerate domain"), std::invalid_argument);
}

TEST_CASE("modular oracle values") {
  Grid g = unitSquare(16);
  auto ones = ScalarField::sample(g, [](const Vec3&) { return 1.0; });
  CHECK(modular(ones, ExponentField::constant(g, 2.7)) == doctest::Approx(1.0).epsilon(1e-12));
  auto twos = ScalarField::sample(g, [](const Vec3&) { return 2.0; });
  CHECK(modular(twos, ExponentField::constant(g, 3.0)) == doctest::Approx(8.0).epsilon(1e-12));
  auto pSplit = ExponentField::sample(g, [](const Vec3& x) { return x[0] < 0.5 ? 2.0 : 3.0; });
  CHECK(modular(twos, pSplit) == doctest::Approx(6.0).epsilon(1e-12));
  // grid mismatch
  Grid g2 = unitSquare(8);
  CHECK_THROWS_AS(modular(ScalarField::sample(g2, [](const Vec3&) { return 1.0; }),
                          ExponentField::constant(g, 2.0)),
                  std::invalid_argument);
}

TEST_CASE("luxemburg norm: bisection against a scalar root oracle") {
  Grid g = unitSquare(16);
  auto p2 = ExponentField::constant(g, 2.0);
  auto ones = ScalarField::sample(g, [](const Vec3&) { return 1.0; });
  CHECK(luxemburgNorm(ones, p2) == doctest::Approx(1.0).epsilon(1e-10));
  auto threes = ScalarField::sample(g, [](const Vec3&) { return 3.0; });
  CHECK(luxemburgNorm(threes, p2) == doctest::Approx(3.0).epsilon(1e-10));
  // p = 2/4 split, f = 1: root of (1/2) l^-2 + (1/2) l^-4 = 1
  auto p24 = ExponentField::sample(g, [](const Vec3& x) { return x[0] < 0.5 ? 2.0 : 4.0; });
  auto quartic = [](double l) { return 0.5 / (l * l) + 0.5 / (l * l * l * l); };
  double lo = 0.5, hi = 4.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    (quartic(mid) > 1.0 ? lo : hi) = mid;
  }
  CHECK(luxemburgNorm(ones, p24) == doctest::Approx(hi).epsilon(1e-9));
  // zero input
  auto zero = ScalarField::sample(g, [](const Vec3&) { return 0.0; });
  CHECK(luxemburgNorm(zero, p24) == 0.0);
}

TEST_CASE("luxemburg invariants: homogeneity, modular-at-norm, constant-p reduction, Holder") {
  Grid g = unitSquare(16);
  Xorshift64 rng(42);
  auto p = ExponentField::sample(g, [](const Vec3& x) { return 2.0 + 0.8 * x[0] + 0.3 * x[1]; });
  for (int rep = 0; rep < 5; ++rep) {
    auto f = ScalarField::sample(g, [&](const Vec3&) { return rng.sym() * 3.0; });
    double nf = luxemburgNorm(f, p);
    // homogeneity
    ScalarField cf(g);
    cf.values = -2.5 * f.values;
    CHECK(relErr(luxemburgNorm(cf, p), 2.5 * nf) < 1e-10);
    // modular at the norm
    ScalarField fl(g);
    fl.values = f.values / nf;
    double m = modular(fl, p);
    CHECK(m <= 1.0 + 1e-12);
    CHECK(m >= 1.0 - 1e-9);
    // Holder pairing sum |f g| h^n <= 2 ||f||_p ||g||_p'
    auto gfun = ScalarField::sample(g, [&](const Vec3&) { return rng.sym() * 2.0; });
    double pair = 0;
    for (int i = 0; i < f.values.size(); ++i)
      pair += std::abs(f.values[i] * gfun.values[i]);
    pair *= g.cellVolume();
    CHECK(pair <= 2.0 * nf * luxemburgNorm(gfun, p.conjugate()) + 1e-12);
  }
  // constant p: agreement with the discrete L^p norm
  for (double pc : {1.5, 2.0, 3.0}) {
    auto pf = ExponentField::constant(g, pc);
    auto f = ScalarField::sample(g, [&](const Vec3& x) { return std::sin(5 * x[0]) + 0.3; });
    double lp = 0;
    for (int i = 0; i < f.values.size(); ++i) lp += std::pow(std::abs(f.values[i]), pc);
    lp = std::pow(lp * g.cellVolume(), 1.0 / pc);
    CHECK(relErr(luxemburgNorm(f, pf), lp) < 1e-10);
  }
}

TEST_CASE("sobolev norm") {
  Grid g = unitSquare(16);
  auto p2 = ExponentField::constant(g, 2.0);
  // constant field: gradient contributes nothing
  auto c = ScalarField::sample(g, [](const Vec3&) { return 1.7; });
  CHECK(relErr(sobolevNorm(c, 1, p2), luxemburgNorm(c, p2)) < 1e-12);
  // k=0 is the Luxemburg norm
  auto f = ScalarField::sample(g, [](const Vec3& x) { return x[0] * x[1]; });
  CHECK(sobolevNorm(f, 0, p2) == luxemburgNorm(f, p2));
  // f(x) = x on the unit interval: ||x||_2 + 1
  Grid g1 = Grid::box(1, {256, 1, 1}, 1.0 / 256);
  auto p1 = ExponentField::constant(g1, 2.0);
  auto fx = ScalarField::sample(g1, [](const Vec3& x) { return x[0]; });
  CHECK(sobolevNorm(fx, 1, p1) == doctest::Approx(1.0 / std::sqrt(3.0) + 1.0).epsilon(1e-4));
  CHECK_THROWS_AS(sobolevNorm(fx, 3, p1), std::invalid_argument);
}

TEST_CASE("maximal function: constants, indicator oracle, pointwise bounds") {
  Grid g = unitSquare(16);
  auto ones = ScalarField::sample(g, [](const Vec3&) { return 1.0; });
  auto m1 = maximalFunction(ones);
  for (int i = 0; i < m1.values.size(); ++i) CHECK(m1.values[i] == doctest::Approx(1.0));
  // indicator of a single cell: exhaustive cube enumeration oracle at probes
  ScalarField ind(g);
  ind.at(5, 7, 0) = 1.0;
  auto mi = maximalFunction(ind);
  auto oracle = [&](int xi, int xj) {
    double best = 0;
    for (int m = 0; m < 16; ++m)
      for (int cj = 0; cj < 16; ++cj)
        for (int ci = 0; ci < 16; ++ci) {
          if (std::abs(ci - xi) > m || std::abs(cj - xj) > m) continue;  // cube must contain x
          if (std::abs(ci - 5) > m || std::abs(cj - 7) > m) continue;    // and the support
          int cnt = 0;
          for (int j = std::max(0, cj - m); j <= std::min(15, cj + m); ++j)
            for (int i = std::max(0, ci - m); i <= std::min(15, ci + m); ++i) ++cnt;
          best = std::max(best, 1.0 / cnt);
        }
    return best;
  };
  for (auto [xi, xj] : std::vector<std::pair<int, int>>{{5, 7}, {0, 0}, {12, 3}, {15, 15}})
    CHECK(mi.at(xi, xj, 0) == doctest::Approx(oracle(xi, xj)).epsilon(1e-12));
  // Mf >= |f| and sublinearity
  Xorshift64 rng(9);
  auto f = ScalarField::sample(g, [&](const Vec3&) { return rng.sym(); });
  auto h = ScalarField::sample(g, [&](const Vec3&) { return rng.sym(); });
  auto mf = maximalFunction(f), mh = maximalFunction(h);
  ScalarField fh(g);
  fh.values = f.values + h.values;
  auto mfh = maximalFunction(fh);
  for (int i = 0; i < f.values.size(); ++i) {
    CHECK(mf.values[i] >= std::abs(f.values[i]) - 1e-12);
    CHECK(mfh.values[i] <= mf.values[i] + mh.values[i] + 1e-12);
  }
}

TEST_CASE("maximal function norm ratio bounded over a corpus") {
  Grid g = unitSquare(24);
  auto p = ExponentField::sample(g, [](const Vec3& x) { return 1.5 + 1.5 * x[0]; });
  Xorshift64 rng(123);
  double worst = 0;
  for (int c = 0; c < 10; ++c) {
    double k1 = 1 + 5 * rng.uniform(), k2 = 1 + 5 * rng.uniform();
    double ph = rng.uniform();
    auto f = ScalarField::sample(g, [&](const Vec3& x) {
      return std::sin(k1 * x[0] + ph) * std::cos(k2 * x[1]) + 0.2;
    });
    double ratio = luxemburgNorm(maximalFunction(f), p) / luxemburgNorm(f, p);
    worst = std::max(worst, ratio);
  }
  CHECK(worst < 10.0);  // qualitative boundedness (L:Di1-style)
  CHECK(worst >= 1.0 - 1e-12);
}

TEST_CASE("riesz potential: linearity, brute force, closed forms") {
  Grid g = unitSquare(8);
  Xorshift64 rng(3);
  auto f = ScalarField::sample(g, [&](const Vec3&) { return rng.sym(); });
  auto h = ScalarField::sample(g, [&](const Vec3&) { return rng.sym(); });
  double alpha = 1.0;
  auto If = rieszPotential(f, alpha), Ih = rieszPotential(h, alpha);
  ScalarField fh(g);
  fh.values = f.values + h.values;
  auto Ifh = rieszPotential(fh, alpha);
  CHECK((Ifh.values - If.values - Ih.values).lpNorm<Eigen::Infinity>() < 1e-12);
  CHECK_THROWS_AS(rieszPotential(f, 0.0), std::invalid_argument);

  // independent brute-force double loop (same quadrature, same order)
  {
    double vol = g.cellVolume();
    double omega = 2 * M_PI;
    double rho = g.h / std::sqrt(M_PI);
    double self = omega * std::pow(rho, alpha) / alpha;
    for (int tj = 0; tj < 8; ++tj)
      for (int ti = 0; ti < 8; ++ti) {
        double acc = 0;
        for (int sj = 0; sj < 8; ++sj)
          for (int si = 0; si < 8; ++si) {
            if (si == ti && sj == tj) {
              acc += f.at(si, sj, 0) * self;
            } else {
              double dx = (ti - si) * g.h, dy = (tj - sj) * g.h;
              acc += f.at(si, sj, 0) * std::pow(std::hypot(dx, dy), alpha - 2) * vol;
            }
          }
        CHECK(If.at(ti, tj, 0) == acc);  // bit-identical
      }
  }

  // alpha = n in 2D: kernel is 1 and the self-cell integral is exactly h^2,
  // so I_2 f is the constant h^2 * sum f (rational identity)
  auto I2 = rieszPotential(f, 2.0);
  long double sumf = 0;
  for (int i = 0; i < f.values.size(); ++i) sumf += (long double)f.values[i];
  double want = double(sumf) * g.h * g.h;
  for (int i = 0; i < I2.values.size(); ++i) CHECK(relErr(I2.values[i], want) < 1e-12);

  // ball indicator in 3D, alpha = 2, value at center: 2 pi R^2
  Grid g3 = Grid::box(3, {20, 20, 20}, 2.2 / 20, {-1.1, -1.1, -1.1});
  g3.mask.assign(g3.cellCount(), 0);
  int centerIdx = -1;
  for (int k = 0; k < 20; ++k)
    for (int j = 0; j < 20; ++j)
      for (int i = 0; i < 20; ++i) {
        Vec3 c = g3.center(i, j, k);
        double r2 = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
        if (r2 < 1.0) g3.mask[g3.rawIndex(i, j, k)] = 1;
      }
  auto fball = ScalarField::sample(g3, [](const Vec3&) { return 1.0; });
  auto I3 = rieszPotential(fball, 2.0);
  // nearest active cell to the origin
  double bestd = 1e9;
  for (int k = 0; k < 20; ++k)
    for (int j = 0; j < 20; ++j)
      for (int i = 0; i < 20; ++i)
        if (g3.active(i, j, k)) {
          Vec3 c = g3.center(i, j, k);
          double d = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
          if (d < bestd) {
            bestd = d;
            centerIdx = g3.rawIndex(i, j, k);
          }
        }
  CHECK(std::abs(I3.values[centerIdx] - 2 * M_PI) / (2 * M_PI) < 0.05);
}

TEST_CASE("log potential closed form and norm bound stability") {
  CHECK_THROWS_AS(logPotential(ScalarField(Grid::box(3, {4, 4, 4}, 0.25)), 1.0),
                  std::invalid_argument);
  std::vector<double> consts;
  for (double R : {0.5, 1.0}) {
    Grid g = disc(R, 32);
    auto f = ScalarField::sample(g, [](const Vec3&) { return 1.0; });
    auto I = logPotential(f, R);
    // value at the center: -pi R^2 / 2
    int ci = -1;
    double bd = 1e9;
    for (int j = 0; j < 32; ++j)
      for (int i = 0; i < 32; ++i)
        if (g.active(i, j, 0)) {
          Vec3 c = g.center(i, j, 0);
          double d = c[0] * c[0] + c[1] * c[1];
          if (d < bd) {
            bd = d;
            ci = g.rawIndex(i, j, 0);
          }
        }
    CHECK(std::abs(I.values[ci] - (-M_PI * R * R / 2)) / (M_PI * R * R / 2) < 0.03);
    // zero input stays zero
    auto z = ScalarField::sample(g, [](const Vec3&) { return 0.0; });
    CHECK(logPotential(z, R).values.lpNorm<Eigen::Infinity>() == 0.0);
    auto p = ExponentField::sample(g, [](const Vec3& x) { return 2.0 + 0.5 * (x[0] + 1); });
    auto fr = ScalarField::sample(g, [](const Vec3& x) { return std::cos(3 * x[0]) + 1.5; });
    consts.push_back(luxemburgNorm(logPotential(fr, R), p) /
                     (R * R * luxemburgNorm(fr, p)));
  }
  // measured constant in ||I_log f|| <= C R^2 ||f|| stable across R
  CHECK(consts[0] / consts[1] < 3.0);
  CHECK(consts[1] / consts[0] < 3.0);
}

TEST_CASE("poincare check") {
  Grid g = unitSquare(32);
  auto p = ExponentField::constant(g, 2.0);
  auto bubble = ScalarField::sample(g, [](const Vec3& x) {
    return (1 - std::abs(2 * x[0] - 1)) * (1 - std::abs(2 * x[1] - 1));
  });
  // zero the boundary ring to satisfy the precondition exactly
  for (int j = 0; j < 32; ++j)
    for (int i = 0; i < 32; ++i)
      if (i == 0 || j == 0 || i == 31 || j == 31) bubble.at(i, j, 0) = 0;
  auto r = poincareCheck(bubble, p, 0.5);
  CHECK(r.ratio > 0);
  CHECK(r.ratio <= 1.0);
  CHECK(std::isfinite(r.ratioSharp));
  // homogeneity: invariant under f -> 5f
  ScalarField five(g);
  five.values = 5 * bubble.values;
  auto r5 = poincareCheck(five, p, 0.5);
  CHECK(relErr(r5.ratio, r.ratio) < 1e-12);
  // kappa for n=3, s=1 is 3/2 (dimension bookkeeping)
  CHECK(3.0 / (3 - 1) == doctest::Approx(1.5));
  // precondition enforcement
  auto bad = ScalarField::sample(g, [](const Vec3&) { return 1.0; });
  CHECK_THROWS_AS(poincareCheck(bad, p, 0.5), std::invalid_argument);
}

TEST_CASE("mollification") {
  Grid g = unitSquare(32);
  auto f = ScalarField::sample(g, [](const Vec3& x) { return x[0] < 0.5 ? 1.0 : 0.0; });
  auto p = ExponentField::constant(g, 2.0);
  CHECK_THROWS_AS(mollify(f, 0.5 * g.h), std::invalid_argument);
  double h = g.h;
  std::vector<double> decay;
  for (double eps : {8 * h, 4 * h, 2 * h}) {
    auto fe = mollify(f, eps);
    ScalarField diff(g);
    diff.values = fe.values - f.values;
    decay.push_back(modular(diff, p));
  }
  CHECK(decay[0] > decay[1]);
  CHECK(decay[1] > decay[2]);
  // constant inside: f_eps = f away from a 2 eps collar
  auto cfield = ScalarField::sample(g, [](const Vec3&) { return 2.0; });
  auto ce = mollify(cfield, 4 * h);
  CHECK(std::abs(ce.at(16, 16, 0) - 2.0) < 1e-12);
  // mass preservation for interior-supported f
  auto bump = ScalarField::sample(g, [](const Vec3& x) {
    double r2 = (x[0] - 0.5) * (x[0] - 0.5) + (x[1] - 0.5) * (x[1] - 0.5);
    return r2 < 0.04 ? 1.0 : 0.0;
  });
  auto be = mollify(bump, 2 * h);
  CHECK(relErr(be.mass(), bump.mass()) < 1e-12);
}

TEST_CASE("mcshane extension") {
  // constant field extends to the constant
  Grid sub = unitSquare(8);
  Grid full = Grid::box(2, {16, 16, 1}, 1.0 / 8, {-0.5, -0.5, 0});
  auto pc = ExponentField::constant(sub, 2.5);
  auto ec = mcshaneExtend(pc, full);
  for (int i = 0; i < ec.values.size(); ++i) CHECK(ec.values[i] == doctest::Approx(2.5));
  // two-value exponent: restriction equals input, c_log preserved
  auto p = ExponentField::sample(sub, [](const Vec3& x) { return x[0] < 0.5 ? 2.0 : 2.4; });
  double L = logHolderConstant(p);
  auto ext = mcshaneExtend(p, full);
  for (int j = 0; j < 8; ++j)
    for (int i = 0; i < 8; ++i) {
      Vec3 c = sub.center(i, j, 0);
      int fi = int(std::floor((c[0] - full.origin[0]) / full.h));
      int fj = int(std::floor((c[1] - full.origin[1]) / full.h));
      CHECK(ext.values[full.rawIndex(fi, fj, 0)] ==
            doctest::Approx(p.values[sub.rawIndex(i, j, 0)]).epsilon(1e-12));
    }
  CHECK(logHolderConstant(ext) <= L + 1e-9);
}
