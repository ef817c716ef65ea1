#include "pamm/hilbert.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>

#include "pamm/ops.hpp"

namespace pamm {

namespace {

// Recursive U construction in a (x right, y up) frame; returns (x, y) pairs.
std::vector<std::pair<int, int>> hilbert_xy(int order) {
  if (order == 0) return {{0, 0}};
  auto prev = hilbert_xy(order - 1);
  const int half = 1 << (order - 1);
  std::vector<std::pair<int, int>> out;
  out.reserve(prev.size() * 4);
  // lower-left: transposed
  for (auto [x, y] : prev) out.emplace_back(y, x);
  // upper-left
  for (auto [x, y] : prev) out.emplace_back(x, y + half);
  // upper-right
  for (auto [x, y] : prev) out.emplace_back(x + half, y + half);
  // lower-right: anti-transposed
  for (auto [x, y] : prev) out.emplace_back(2 * half - 1 - y, half - 1 - x);
  return out;
}

}  // namespace

std::vector<std::size_t> ScanOrder::flat_indices() const {
  std::vector<std::size_t> idx(visit.size());
  for (std::size_t k = 0; k < visit.size(); ++k) {
    idx[k] = static_cast<std::size_t>(visit[k].row) * static_cast<std::size_t>(width) +
             static_cast<std::size_t>(visit[k].col);
  }
  return idx;
}

std::vector<std::size_t> ScanOrder::inverse_indices() const {
  auto flat = flat_indices();
  std::vector<std::size_t> inv(flat.size());
  for (std::size_t k = 0; k < flat.size(); ++k) inv[flat[k]] = k;
  return inv;
}

HilbertCurve build_curve(int order) {
  if (order <= 0) {
    throw std::invalid_argument("build_curve: order must be >= 1, got " +
                                std::to_string(order));
  }
  if (order > 15) throw std::invalid_argument("build_curve: order too large");
  HilbertCurve curve;
  curve.order = order;
  curve.side = 1 << order;
  auto xy = hilbert_xy(order);
  curve.cells.reserve(xy.size());
  for (auto [x, y] : xy) curve.cells.push_back({curve.side - 1 - y, x});
  return curve;
}

HilbertCurve rotate(const HilbertCurve& curve, int direction) {
  if (direction < 1 || direction > kScanDirections) {
    throw std::invalid_argument("rotate: direction must be in 1..4, got " +
                                std::to_string(direction));
  }
  HilbertCurve out = curve;
  const int last = curve.side - 1;
  for (int turn = 1; turn < direction; ++turn) {
    for (auto& cell : out.cells) cell = {cell.col, last - cell.row};
  }
  return out;
}

ScanOrder fit_to_shape(const HilbertCurve& curve, int height, int width,
                       int direction) {
  if (height < 1 || width < 1) {
    throw std::invalid_argument("fit_to_shape: extents must be positive");
  }
  if (curve.side < height || curve.side < width) {
    throw std::invalid_argument("fit_to_shape: curve side " +
                                std::to_string(curve.side) + " smaller than " +
                                std::to_string(height) + "x" + std::to_string(width));
  }
  ScanOrder order;
  order.direction = direction;
  order.height = height;
  order.width = width;
  order.visit.reserve(static_cast<std::size_t>(height) * static_cast<std::size_t>(width));
  const int row0 = curve.side - height;
  for (const auto& cell : curve.cells) {
    if (cell.row >= row0 && cell.col < width) {
      order.visit.push_back({cell.row - row0, cell.col});
    }
  }
  return order;
}

int curve_order_for(int height, int width) {
  const int extent = std::max(height, width);
  int order = 1;
  while ((1 << order) < extent) ++order;
  return order;
}

ScanOrder make_scan_order(int height, int width, int direction) {
  auto curve = rotate(build_curve(curve_order_for(height, width)), direction);
  return fit_to_shape(curve, height, width, direction);
}

const std::array<ScanOrder, kScanDirections>& scan_orders(int height, int width) {
  static std::mutex mu;
  static std::map<std::pair<int, int>,
                  std::unique_ptr<std::array<ScanOrder, kScanDirections>>>
      cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[{height, width}];
  if (!slot) {
    auto orders = std::make_unique<std::array<ScanOrder, kScanDirections>>();
    for (int d = 1; d <= kScanDirections; ++d) {
      (*orders)[static_cast<std::size_t>(d - 1)] = make_scan_order(height, width, d);
    }
    slot = std::move(orders);
  }
  return *slot;
}

Tensor serialize(const Tensor& x, const ScanOrder& order) {
  if (x.rank() != 3 || x.dim(1) != static_cast<std::size_t>(order.height) ||
      x.dim(2) != static_cast<std::size_t>(order.width)) {
    throw ShapeError("serialize: map " + shape_str(x.shape()) +
                     " does not match scan order " + std::to_string(order.height) +
                     "x" + std::to_string(order.width));
  }
  const std::size_t channels = x.dim(0);
  auto idx = order.flat_indices();
  return gather_columns(reshape(x, {channels, idx.size()}), idx);
}

Tensor deserialize(const Tensor& y, const ScanOrder& order) {
  if (y.rank() != 2 || y.dim(1) != order.length()) {
    throw ShapeError("deserialize: sequence " + shape_str(y.shape()) +
                     " does not match scan length " + std::to_string(order.length()));
  }
  const std::size_t channels = y.dim(0);
  auto inv = order.inverse_indices();
  return reshape(gather_columns(y, inv),
                 {channels, static_cast<std::size_t>(order.height),
                  static_cast<std::size_t>(order.width)});
}

}  // namespace pamm
