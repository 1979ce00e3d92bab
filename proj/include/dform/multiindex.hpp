// Ordered multi-index bookkeeping for form components.
//
// A degree-r component index I = (i_1 < ... < i_r) is stored as a bitmask over
// the n coordinate axes. All sign conventions (shuffles, insertions, Hodge
// complements) reduce to inversion counts on these masks.
#ifndef DFORM_MULTIINDEX_HPP
#define DFORM_MULTIINDEX_HPP

#include <cstdint>
#include <vector>
#include <array>

namespace dform {

inline int popcount(unsigned m) { return __builtin_popcount(m); }

// All degree-r index sets over n axes, as bitmasks in increasing numeric order.
inline std::vector<unsigned> axisCombos(int n, int r) {
  std::vector<unsigned> out;
  for (unsigned m = 0; m < (1u << n); ++m)
    if (popcount(m) == r) out.push_back(m);
  return out;
}

inline int comboCount(int n, int r) {
  static const int binom[4][4] = {{1, 0, 0, 0}, {1, 1, 0, 0}, {1, 2, 1, 0}, {1, 3, 3, 1}};
  return binom[n][r];
}

// Position of mask m among degree-popcount(m) combos of n axes.
inline int comboRank(int n, unsigned m) {
  int r = popcount(m), k = 0;
  for (unsigned c = 0; c < m; ++c)
    if (popcount(c) == r) ++k;
  (void)n;
  return k;
}

// Sign of the merge permutation sorting the concatenation (A, B) of two
// disjoint sorted tuples; 0 if they intersect.
inline int mergeSign(unsigned a, unsigned b) {
  if (a & b) return 0;
  int inv = 0;
  for (int i = 0; i < 32 && (a >> i); ++i)
    if (a & (1u << i)) inv += popcount(b & ((1u << i) - 1));
  return (inv & 1) ? -1 : 1;
}

// Sign of inserting axis k in front of sorted tuple I and re-sorting; 0 if k in I.
inline int insertSign(int k, unsigned I) { return mergeSign(1u << k, I); }

// Axes of mask m in increasing order.
inline std::array<int, 3> maskAxes(unsigned m) {
  std::array<int, 3> ax{-1, -1, -1};
  int k = 0;
  for (int i = 0; i < 8; ++i)
    if (m & (1u << i)) ax[k++] = i;
  return ax;
}

}  // namespace dform

#endif
