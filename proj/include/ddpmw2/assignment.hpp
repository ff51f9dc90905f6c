// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "ddpmw2/error.hpp"

namespace ddpmw2 {

/// Dense linear assignment by the Jonker-Volgenant shortest augmenting path
/// method: column reduction, reduction transfer, two rounds of augmenting
/// row reduction, then Dijkstra-style augmentation for the remaining rows.
/// `cost` is row-major n x n. Returns row_to_col.
inline std::vector<int> solve_assignment(const double* cost, int n) {
  require(n >= 1, "assignment: empty cost matrix");
  constexpr double kBig = std::numeric_limits<double>::max();
  auto c = [cost, n](int i, int j) { return cost[static_cast<std::size_t>(i) * n + j]; };

  std::vector<int> x(n, -1), y(n, -1), matches(n, 0), free_rows(n), collist(n), pred(n);
  std::vector<double> v(n), d(n);

  // Column reduction.
  for (int j = n - 1; j >= 0; --j) {
    double best = c(0, j);
    int imin = 0;
    for (int i = 1; i < n; ++i) {
      if (c(i, j) < best) {
        best = c(i, j);
        imin = i;
      }
    }
    v[j] = best;
    if (++matches[imin] == 1) {
      x[imin] = j;
      y[j] = imin;
    } else {
      y[j] = -1;
    }
  }

  // Reduction transfer.
  int numfree = 0;
  for (int i = 0; i < n; ++i) {
    if (matches[i] == 0) {
      free_rows[numfree++] = i;
    } else if (matches[i] == 1) {
      const int j1 = x[i];
      double best = kBig;
      for (int j = 0; j < n; ++j)
        if (j != j1 && c(i, j) - v[j] < best) best = c(i, j) - v[j];
      if (n > 1) v[j1] -= best;
    }
  }

  // Augmenting row reduction. Immediate re-scans of displaced rows are
  // budgeted: with floating-point costs the price decrements can become
  // arbitrarily small. Rows left over go to the augmentation phase.
  for (int pass = 0; pass < 2 && numfree > 0; ++pass) {
    long budget = 16L * n;
    int k = 0;
    const int prvnumfree = numfree;
    numfree = 0;
    while (k < prvnumfree) {
      const int i = free_rows[k++];
      double umin = c(i, 0) - v[0];
      int j1 = 0;
      int j2 = -1;
      double usubmin = kBig;
      for (int j = 1; j < n; ++j) {
        const double h = c(i, j) - v[j];
        if (h < usubmin) {
          if (h >= umin) {
            usubmin = h;
            j2 = j;
          } else {
            usubmin = umin;
            umin = h;
            j2 = j1;
            j1 = j;
          }
        }
      }
      int i0 = y[j1];
      if (umin < usubmin) {
        v[j1] -= usubmin - umin;
      } else if (i0 >= 0 && j2 >= 0) {
        j1 = j2;
        i0 = y[j2];
      }
      x[i] = j1;
      y[j1] = i;
      if (i0 >= 0) {
        x[i0] = -1;
        if (umin < usubmin && budget-- > 0) {
          free_rows[--k] = i0;
        } else {
          free_rows[numfree++] = i0;
        }
      }
    }
  }

  // Augmentation.
  for (int f = 0; f < numfree; ++f) {
    const int freerow = free_rows[f];
    for (int j = 0; j < n; ++j) {
      d[j] = c(freerow, j) - v[j];
      pred[j] = freerow;
      collist[j] = j;
    }
    int low = 0;
    int up = 0;
    int last = 0;
    int endofpath = -1;
    double dmin = 0.0;
    bool found = false;
    do {
      if (up == low) {
        last = low - 1;
        dmin = d[collist[up++]];
        for (int k = up; k < n; ++k) {
          const int j = collist[k];
          const double h = d[j];
          if (h <= dmin) {
            if (h < dmin) {
              up = low;
              dmin = h;
            }
            collist[k] = collist[up];
            collist[up++] = j;
          }
        }
        for (int k = low; k < up; ++k) {
          if (y[collist[k]] < 0) {
            endofpath = collist[k];
            found = true;
            break;
          }
        }
      }
      if (!found) {
        const int j1 = collist[low++];
        const int i = y[j1];
        const double h = c(i, j1) - v[j1] - dmin;
        for (int k = up; k < n; ++k) {
          const int j = collist[k];
          const double v2 = c(i, j) - v[j] - h;
          if (v2 < d[j]) {
            pred[j] = i;
            if (v2 == dmin) {
              if (y[j] < 0) {
                endofpath = j;
                found = true;
                break;
              }
              collist[k] = collist[up];
              collist[up++] = j;
            }
            d[j] = v2;
          }
        }
      }
    } while (!found);

    for (int k = 0; k <= last; ++k) {
      const int j1 = collist[k];
      v[j1] += d[j1] - dmin;
    }
    int i = -1;
    do {
      i = pred[endofpath];
      y[endofpath] = i;
      const int j1 = endofpath;
      endofpath = x[i];
      x[i] = j1;
    } while (i != freerow);
  }
  return x;
}

}  // namespace ddpmw2
