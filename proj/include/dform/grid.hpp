// Cell-centered sample lattices and scalar fields on them.
//
// A Grid describes an axis-aligned arrangement of unit cells of spacing h with
// an optional activity mask. Scalar samples (densities, exponents, potential
// outputs) live at the centers of active cells; midpoint quadrature is used
// throughout, so a cell contributes value * h^n.
#ifndef DFORM_GRID_HPP
#define DFORM_GRID_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace dform {

using Vec3 = std::array<double, 3>;

struct Grid {
  int n = 2;
  std::array<int, 3> dims{1, 1, 1};  // cells per axis; unused axes have 1
  double h = 1.0;
  Vec3 origin{0.0, 0.0, 0.0};        // physical position of lattice point 0
  std::vector<uint8_t> mask;         // per cell, empty = all active

  int cellCount() const { return dims[0] * dims[1] * dims[2]; }

  int rawIndex(int i, int j, int k) const { return (k * dims[1] + j) * dims[0] + i; }

  bool inBounds(int i, int j, int k) const {
    return i >= 0 && i < dims[0] && j >= 0 && j < dims[1] && k >= 0 && k < dims[2];
  }

  bool active(int i, int j, int k) const {
    if (!inBounds(i, j, k)) return false;
    return mask.empty() || mask[rawIndex(i, j, k)] != 0;
  }

  Vec3 center(int i, int j, int k) const {
    return {origin[0] + h * (i + 0.5), origin[1] + h * (j + 0.5), origin[2] + h * (k + 0.5)};
  }

  double cellVolume() const { return std::pow(h, n); }

  int activeCount() const {
    if (mask.empty()) return cellCount();
    int c = 0;
    for (auto m : mask) c += (m != 0);
    return c;
  }

  static Grid box(int n, std::array<int, 3> cells, double h, Vec3 origin = {0, 0, 0}) {
    Grid g;
    g.n = n;
    g.dims = cells;
    for (int a = n; a < 3; ++a) g.dims[a] = 1;
    g.h = h;
    g.origin = origin;
    return g;
  }
};

// Scalar samples over the active cells of a grid, in raw row-major layout
// (inactive cells hold zero and are ignored by all reductions).
struct ScalarField {
  Grid grid;
  Eigen::VectorXd values;  // length = grid.cellCount()

  ScalarField() = default;
  explicit ScalarField(const Grid& g) : grid(g), values(Eigen::VectorXd::Zero(g.cellCount())) {}

  double& at(int i, int j, int k) { return values[grid.rawIndex(i, j, k)]; }
  double at(int i, int j, int k) const { return values[grid.rawIndex(i, j, k)]; }

  template <class F>
  static ScalarField sample(const Grid& g, F&& f) {
    ScalarField s(g);
    for (int k = 0; k < g.dims[2]; ++k)
      for (int j = 0; j < g.dims[1]; ++j)
        for (int i = 0; i < g.dims[0]; ++i)
          if (g.active(i, j, k)) s.at(i, j, k) = f(g.center(i, j, k));
    return s;
  }

  double mass() const {  // sum f h^n over active cells
    double s = 0;
    const Grid& g = grid;
    for (int k = 0; k < g.dims[2]; ++k)
      for (int j = 0; j < g.dims[1]; ++j)
        for (int i = 0; i < g.dims[0]; ++i)
          if (g.active(i, j, k)) s += at(i, j, k);
    return s * g.cellVolume();
  }
};

inline void requireSameGrid(const Grid& a, const Grid& b) {
  if (a.n != b.n || a.dims != b.dims || a.h != b.h || a.mask != b.mask)
    throw std::invalid_argument("mismatched grids");
}

// Componentwise centered differences, first-order one-sided at mask edges.
// Returns one field per axis.
std::vector<ScalarField> gradient(const ScalarField& f);

}  // namespace dform

#endif
