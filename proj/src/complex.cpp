#include "dform/complex.hpp"

#include <stdexcept>

namespace dform {

uint64_t CubicalComplex::packKey(std::array<int, 3> c, unsigned axes) {
  // Lattice coords fit in 16 bits each at desk scale; offset by 1 so that -? never appears.
  uint64_t k = axes;
  for (int a = 0; a < 3; ++a) k = (k << 17) | uint64_t(c[a] + 1);
  return k;
}

CubicalComplex CubicalComplex::box(int n, std::array<int, 3> cells, double h, Vec3 origin) {
  DomainSpec s;
  s.kind = DomainSpec::Kind::Box;
  s.n = n;
  s.cells = cells;
  s.h = h;
  s.origin = origin;
  return make(s);
}

CubicalComplex CubicalComplex::puncturedBox(int n, std::array<int, 3> cells,
                                            std::array<std::array<int, 2>, 3> hole, double h) {
  DomainSpec s;
  s.kind = DomainSpec::Kind::PuncturedBox;
  s.n = n;
  s.cells = cells;
  s.hole = hole;
  s.h = h;
  return make(s);
}

CubicalComplex CubicalComplex::lShape(int n, std::array<int, 3> cells, double h) {
  DomainSpec s;
  s.kind = DomainSpec::Kind::LShape;
  s.n = n;
  s.cells = cells;
  s.h = h;
  return make(s);
}

CubicalComplex CubicalComplex::make(const DomainSpec& spec) {
  if (spec.n != 2 && spec.n != 3) throw std::invalid_argument("dimension must be 2 or 3");
  CubicalComplex cx;
  double h = spec.h > 0 ? spec.h : 1.0 / spec.cells[0];
  cx.grid_ = Grid::box(spec.n, spec.cells, h, spec.origin);
  const Grid& g = cx.grid_;

  if (spec.kind != DomainSpec::Kind::Box && spec.kind != DomainSpec::Kind::HalfBox) {
    cx.grid_.mask.assign(g.cellCount(), 1);
    for (int k = 0; k < g.dims[2]; ++k)
      for (int j = 0; j < g.dims[1]; ++j)
        for (int i = 0; i < g.dims[0]; ++i) {
          bool inHole = true;
          std::array<int, 3> c{i, j, k};
          if (spec.kind == DomainSpec::Kind::PuncturedBox) {
            for (int a = 0; a < spec.n; ++a)
              inHole = inHole && c[a] >= spec.hole[a][0] && c[a] < spec.hole[a][1];
          } else {  // LShape: remove the upper-right quadrant
            for (int a = 0; a < spec.n; ++a) inHole = inHole && c[a] >= spec.cells[a] / 2;
          }
          if (inHole) cx.grid_.mask[g.rawIndex(i, j, k)] = 0;
        }
  }
  cx.build();
  return cx;
}

void CubicalComplex::build() {
  const Grid& g = grid_;
  const int n = g.n;
  cells_.assign(n + 1, {});
  index_.assign(n + 1, {});
  d_.assign(n + 1, SpMat());
  tangential_.assign(n + 1, {});
  normalAdj_.assign(n + 1, {});
  touch_.assign(n + 1, {});
  conormals_.assign(n + 1, {});

  // Enumerate active r-cells: a cell (corner, axes) is active when incident to
  // an active unit cell, i.e. some unit-cell corner c with c_a = corner_a for
  // a in axes and c_a in {corner_a - 1, corner_a} otherwise is active.
  for (int r = 0; r <= n; ++r) {
    auto combos = axisCombos(n, r);
    for (unsigned axes : combos) {
      for (int k = 0; k <= (n > 2 ? g.dims[2] : 0); ++k)
        for (int j = 0; j <= g.dims[1]; ++j)
          for (int i = 0; i <= g.dims[0]; ++i) {
            std::array<int, 3> c{i, j, k};
            bool valid = true;
            for (int a = 0; a < n; ++a)
              if ((axes & (1u << a)) && c[a] >= g.dims[a]) valid = false;
            if (n == 2 && k > 0) valid = false;
            if (!valid) continue;
            bool act = false;
            std::array<int, 3> lo, hi;
            for (int a = 0; a < 3; ++a) {
              if (a < n && !(axes & (1u << a))) {
                lo[a] = c[a] - 1;
                hi[a] = c[a];
              } else {
                lo[a] = hi[a] = (a < n) ? c[a] : 0;
              }
            }
            for (int ck = lo[2]; ck <= hi[2] && !act; ++ck)
              for (int cj = lo[1]; cj <= hi[1] && !act; ++cj)
                for (int ci = lo[0]; ci <= hi[0] && !act; ++ci)
                  act = g.active(ci, cj, ck);
            if (!act) continue;
            index_[r][packKey(c, axes)] = int(cells_[r].size());
            cells_[r].push_back({c, axes});
          }
    }
  }

  // Coboundary matrices.
  for (int r = 0; r < n; ++r) {
    std::vector<Eigen::Triplet<double>> trips;
    for (int row = 0; row < numCells(r + 1); ++row) {
      const Cell& sigma = cells_[r + 1][row];
      auto ax = maskAxes(sigma.axes);
      for (int j = 0; j < r + 1; ++j) {
        int a = ax[j];
        unsigned sub = sigma.axes & ~(1u << a);
        double s = (j % 2 == 0) ? 1.0 : -1.0;
        std::array<int, 3> up = sigma.corner;
        up[a] += 1;
        int cUp = cellIndex(r, up, sub);
        int cLo = cellIndex(r, sigma.corner, sub);
        if (cUp >= 0) trips.emplace_back(row, cUp, s);
        if (cLo >= 0) trips.emplace_back(row, cLo, -s);
      }
    }
    d_[r].resize(numCells(r + 1), numCells(r));
    d_[r].setFromTriplets(trips.begin(), trips.end());
  }

  // Boundary faces: (n-1)-cells with exactly one active incident n-cell.
  std::vector<uint8_t> isFace(numCells(n - 1), 0);
  std::vector<int> faceSide(numCells(n - 1), 0);
  for (int idx = 0; idx < numCells(n - 1); ++idx) {
    const Cell& f = cells_[n - 1][idx];
    int m = 0;
    for (int a = 0; a < n; ++a)
      if (!(f.axes & (1u << a))) m = a;
    std::array<int, 3> upC = f.corner;          // n-cell on the + side
    std::array<int, 3> loC = f.corner;
    loC[m] -= 1;                                // n-cell on the - side
    bool upAct = g.active(upC[0], upC[1], upC[2]);
    bool loAct = g.active(loC[0], loC[1], loC[2]);
    if (upAct != loAct) {
      isFace[idx] = 1;
      faceSide[idx] = upAct ? -1 : +1;  // outward normal points toward the inactive side
      faces_.push_back({idx, m, faceSide[idx]});
    }
  }

  // Tangential-boundary cells: downward closure of boundary faces.
  for (int r = 0; r <= n; ++r) {
    tangential_[r].assign(numCells(r), 0);
    conormals_[r].assign(numCells(r), 0);
  }
  for (const auto& bf : faces_) {
    const Cell& f = cells_[n - 1][bf.cellIdx];
    // every subcell of f: choose a sub-axes subset and a corner offset on dropped axes
    auto subAxesList = [&](unsigned faxes) {
      std::vector<unsigned> subs;
      for (unsigned s = 0;; s = (s - faxes) & faxes) {
        subs.push_back(s);
        if (s == faxes) break;
      }
      return subs;
    };
    for (unsigned sub : subAxesList(f.axes)) {
      unsigned dropped = f.axes & ~sub;
      int r = popcount(sub);
      // corners: offset 0/1 on each dropped axis
      std::vector<std::array<int, 3>> corners{f.corner};
      for (int a = 0; a < n; ++a)
        if (dropped & (1u << a)) {
          size_t cnt = corners.size();
          for (size_t q = 0; q < cnt; ++q) {
            auto c2 = corners[q];
            c2[a] += 1;
            corners.push_back(c2);
          }
        }
      for (auto& c : corners) {
        int idx = cellIndex(r, c, sub);
        if (idx >= 0) {
          tangential_[r][idx] = 1;
          conormals_[r][idx] |= (1u << bf.axis);
        }
      }
    }
  }

  // Normal-adjacent cells: some spanned axis m has a facet lying inside a
  // boundary face with conormal m.
  for (int r = 0; r <= n; ++r) {
    normalAdj_[r].assign(numCells(r), 0);
    if (r == 0) continue;
    for (int idx = 0; idx < numCells(r); ++idx) {
      const Cell& c = cells_[r][idx];
      for (int a = 0; a < n && !normalAdj_[r][idx]; ++a) {
        if (!(c.axes & (1u << a))) continue;
        unsigned sub = c.axes & ~(1u << a);
        for (int side = 0; side <= 1; ++side) {
          auto fc = c.corner;
          fc[a] += side;
          int fidx = cellIndex(r - 1, fc, sub);
          if (fidx >= 0 && (conormals_[r - 1][fidx] & (1u << a))) {
            normalAdj_[r][idx] = 1;
            break;
          }
        }
      }
    }
  }

  // Boundary-touch cells: a corner vertex lies on the boundary.
  for (int r = 0; r <= n; ++r) {
    touch_[r].assign(numCells(r), 0);
    for (int idx = 0; idx < numCells(r); ++idx) {
      const Cell& c = cells_[r][idx];
      std::vector<std::array<int, 3>> corners{c.corner};
      for (int a = 0; a < n; ++a)
        if (c.axes & (1u << a)) {
          size_t cnt = corners.size();
          for (size_t q = 0; q < cnt; ++q) {
            auto c2 = corners[q];
            c2[a] += 1;
            corners.push_back(c2);
          }
        }
      for (auto& v : corners) {
        int vidx = cellIndex(0, v, 0);
        if (vidx >= 0 && tangential_[0][vidx]) {
          touch_[r][idx] = 1;
          break;
        }
      }
    }
  }
}

int CubicalComplex::cellIndex(int r, std::array<int, 3> corner, unsigned axes) const {
  auto it = index_[r].find(packKey(corner, axes));
  return it == index_[r].end() ? -1 : it->second;
}

Vec3 CubicalComplex::cellCenter(int r, int idx) const {
  const Cell& c = cells_[r][idx];
  Vec3 p;
  for (int a = 0; a < 3; ++a) {
    double off = (c.axes & (1u << a)) ? 0.5 : 0.0;
    p[a] = grid_.origin[a] + grid_.h * (c.corner[a] + off);
  }
  return p;
}

uint64_t CubicalComplex::domainHash() const {
  // FNV-1a over the structural data.
  uint64_t hsh = 1469598103934665603ull;
  auto mix = [&](uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      hsh ^= (v >> (8 * b)) & 0xff;
      hsh *= 1099511628211ull;
    }
  };
  mix(uint64_t(grid_.n));
  for (int a = 0; a < 3; ++a) mix(uint64_t(grid_.dims[a]));
  union {
    double d;
    uint64_t u;
  } cv{grid_.h};
  mix(cv.u);
  for (size_t i = 0; i < grid_.mask.size(); ++i)
    if (grid_.mask[i]) mix(i);
  return hsh;
}

}  // namespace dform
