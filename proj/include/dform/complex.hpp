// Cubical cell complexes over axis-aligned masked grids in dimension 2 or 3.
//
// An r-cell is (corner lattice point, set of spanned axes). Cells are active
// when they bound at least one active unit cell. The signed coboundary d is
// assembled once per degree; d∘d = 0 holds exactly by construction.
//
// Boundary bookkeeping:
//  - a boundary face is an (n-1)-cell with exactly one active incident n-cell;
//  - tangential-boundary r-cells lie inside some boundary face (with the set
//    of conormal axes of the faces containing them recorded);
//  - normal-adjacent r-cells span a conormal axis of a face they touch;
//  - boundary-touch r-cells have at least one vertex on the boundary.
#ifndef DFORM_COMPLEX_HPP
#define DFORM_COMPLEX_HPP

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <vector>

#include <Eigen/Sparse>

#include "dform/grid.hpp"
#include "dform/multiindex.hpp"

namespace dform {

using SpMat = Eigen::SparseMatrix<double>;

struct DomainSpec {
  enum class Kind { Box, PuncturedBox, LShape, HalfBox };
  Kind kind = Kind::Box;
  int n = 2;
  std::array<int, 3> cells{16, 16, 1};
  std::array<std::array<int, 2>, 3> hole{};  // per-axis [lo,hi) cell range
  double h = 0.0;                            // 0 = default 1/cells[0]
  Vec3 origin{0, 0, 0};
};

class CubicalComplex {
 public:
  struct Cell {
    std::array<int, 3> corner;
    unsigned axes;
  };

  static CubicalComplex make(const DomainSpec& spec);
  static CubicalComplex box(int n, std::array<int, 3> cells, double h, Vec3 origin = {0, 0, 0});
  static CubicalComplex puncturedBox(int n, std::array<int, 3> cells,
                                     std::array<std::array<int, 2>, 3> hole, double h);
  static CubicalComplex lShape(int n, std::array<int, 3> cells, double h);

  int dim() const { return grid_.n; }
  double h() const { return grid_.h; }
  const Grid& cellGrid() const { return grid_; }

  int numCells(int r) const { return int(cells_[r].size()); }
  const Cell& cell(int r, int idx) const { return cells_[r][idx]; }
  // Index of (corner, axes) among degree-r cells, -1 if absent/inactive.
  int cellIndex(int r, std::array<int, 3> corner, unsigned axes) const;

  Vec3 cellCenter(int r, int idx) const;

  // Signed coboundary r -> r+1 (rows: (r+1)-cells, cols: r-cells).
  const SpMat& d(int r) const { return d_[r]; }

  const std::vector<uint8_t>& tangentialBoundary(int r) const { return tangential_[r]; }
  const std::vector<uint8_t>& normalAdjacent(int r) const { return normalAdj_[r]; }
  const std::vector<uint8_t>& boundaryTouch(int r) const { return touch_[r]; }
  // Bitmask of conormal axes of boundary faces containing this r-cell
  // (nonzero only for tangential-boundary cells).
  const std::vector<unsigned>& containmentConormals(int r) const { return conormals_[r]; }

  struct BoundaryFace {
    int cellIdx;  // index among (n-1)-cells
    int axis;     // conormal axis
    int side;     // +1: outward normal points along +axis
  };
  const std::vector<BoundaryFace>& boundaryFaces() const { return faces_; }

  uint64_t domainHash() const;

 private:
  Grid grid_;
  std::vector<std::vector<Cell>> cells_;           // [r]
  std::vector<std::map<uint64_t, int>> index_;     // packed key -> idx, per degree
  std::vector<SpMat> d_;
  std::vector<std::vector<uint8_t>> tangential_, normalAdj_, touch_;
  std::vector<std::vector<unsigned>> conormals_;
  std::vector<BoundaryFace> faces_;

  void build();
  static uint64_t packKey(std::array<int, 3> c, unsigned axes);
};

}  // namespace dform

#endif
