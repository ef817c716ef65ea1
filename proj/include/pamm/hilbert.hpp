#pragma once

// Hilbert-curve serialization of 2D feature maps.
//
// Coordinates are (row, col) with row 0 at the top. The direction-1 curve
// of order 1 visits bottom-left, top-left, top-right, bottom-right; higher
// orders follow the usual U-shaped recursion. Direction d is the
// direction-1 curve rotated (d - 1) times by 90 degrees clockwise. Shapes
// smaller than the curve keep the cells of the bottom-left H x W window.

#include <array>
#include <cstddef>
#include <vector>

#include "pamm/tensor.hpp"

namespace pamm {

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

struct HilbertCurve {
  int order = 0;
  int side = 0;
  std::vector<Cell> cells;
};

inline constexpr int kScanDirections = 4;

struct ScanOrder {
  int direction = 1;
  int height = 0;
  int width = 0;
  std::vector<Cell> visit;

  std::size_t length() const { return visit.size(); }
  // Row-major flat index of visit[k].
  std::vector<std::size_t> flat_indices() const;
  // inverse[flat] = k such that visit[k] is that cell.
  std::vector<std::size_t> inverse_indices() const;
};

HilbertCurve build_curve(int order);
HilbertCurve rotate(const HilbertCurve& curve, int direction);
ScanOrder fit_to_shape(const HilbertCurve& curve, int height, int width,
                       int direction = 1);

// Smallest curve order (>= 1) whose side covers max(height, width).
int curve_order_for(int height, int width);

// The order for one direction, built from the enclosing curve.
ScanOrder make_scan_order(int height, int width, int direction);
// All four directions for a shape; memoized, safe to call concurrently.
const std::array<ScanOrder, kScanDirections>& scan_orders(int height, int width);

// [C x H x W] -> [C x L]; position k holds x[:, visit[k]].
Tensor serialize(const Tensor& x, const ScanOrder& order);
// [C x L] -> [C x H x W]; exact inverse of serialize.
Tensor deserialize(const Tensor& y, const ScanOrder& order);

}  // namespace pamm
