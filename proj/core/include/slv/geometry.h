#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace slv {

// Axis-aligned rectangle in pixel coordinates, half-open on both axes:
// pixel (row i, col j) lies inside when y0 <= i < y1 and x0 <= j < x1.
// Coordinates are signed so that pre-clip intermediates can go negative;
// a box handed to any operation below must satisfy valid().
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  std::int64_t area() const {
    return static_cast<std::int64_t>(width()) * height();
  }
  bool valid() const { return x0 < x1 && y0 < y1; }
  bool inside(int height_px, int width_px) const {
    return x0 >= 0 && y0 >= 0 && x1 <= width_px && y1 <= height_px;
  }
  bool contains(const Box& other) const {
    return x0 <= other.x0 && y0 <= other.y0 && x1 >= other.x1 && y1 >= other.y1;
  }

  friend bool operator==(const Box&, const Box&) = default;
};

double iou(const Box& a, const Box& b);

// Greedy suppression in descending score order (ties: lower index first).
// A candidate is dropped when its IoU with an already kept box exceeds
// iou_threshold. Returns kept indices in the order they were kept.
std::vector<std::size_t> nms(std::span<const Box> boxes,
                             std::span<const double> scores,
                             double iou_threshold);

// Throws InputError when the clamped box has no area.
Box clip_box(const Box& b, int height, int width);

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

class BinaryGrid {
 public:
  BinaryGrid() = default;
  BinaryGrid(int height, int width);

  int height() const { return height_; }
  int width() const { return width_; }

  bool at(int row, int col) const {
    return cells_[static_cast<std::size_t>(row) * width_ + col] != 0;
  }
  void set(int row, int col, bool value) {
    cells_[static_cast<std::size_t>(row) * width_ + col] = value ? 1 : 0;
  }
  std::size_t count() const;

  // Marks every cell of a box (must lie inside the grid).
  void fill(const Box& b);

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> cells_;
};

using Component = std::vector<Cell>;

// Maximal 8-connected regions of true cells. Components are ordered by the
// row-major position of their first cell; cells within a component appear
// in discovery order.
std::vector<Component> connected_components(const BinaryGrid& grid);

// Smallest half-open box containing every cell. Throws InputError on an
// empty component.
Box min_bounding_rect(std::span<const Cell> component);

}  // namespace slv
