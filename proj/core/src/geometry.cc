#include "slv/geometry.h"

#include <algorithm>
#include <numeric>
#include <string>

#include "slv/error.h"

namespace slv {

double iou(const Box& a, const Box& b) {
  const int ix0 = std::max(a.x0, b.x0);
  const int iy0 = std::max(a.y0, b.y0);
  const int ix1 = std::min(a.x1, b.x1);
  const int iy1 = std::min(a.y1, b.y1);
  if (ix1 <= ix0 || iy1 <= iy0) return 0.0;
  const auto inter = static_cast<std::int64_t>(ix1 - ix0) * (iy1 - iy0);
  const auto uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::size_t> nms(std::span<const Box> boxes,
                             std::span<const double> scores,
                             double iou_threshold) {
  if (boxes.size() != scores.size()) {
    throw InputError("nms: " + std::to_string(boxes.size()) + " boxes but " +
                     std::to_string(scores.size()) + " scores");
  }
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  std::vector<std::size_t> keep;
  std::vector<bool> suppressed(boxes.size(), false);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const std::size_t i = order[oi];
    if (suppressed[i]) continue;
    keep.push_back(i);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const std::size_t j = order[oj];
      if (!suppressed[j] && iou(boxes[i], boxes[j]) > iou_threshold) {
        suppressed[j] = true;
      }
    }
  }
  return keep;
}

Box clip_box(const Box& b, int height, int width) {
  if (height <= 0 || width <= 0) {
    throw InputError("clip_box: image size must be positive");
  }
  Box out{std::clamp(b.x0, 0, width), std::clamp(b.y0, 0, height),
          std::clamp(b.x1, 0, width), std::clamp(b.y1, 0, height)};
  if (!out.valid()) {
    throw InputError("clip_box: box (" + std::to_string(b.x0) + "," +
                     std::to_string(b.y0) + "," + std::to_string(b.x1) + "," +
                     std::to_string(b.y1) + ") lies outside the " +
                     std::to_string(height) + "x" + std::to_string(width) +
                     " image");
  }
  return out;
}

BinaryGrid::BinaryGrid(int height, int width)
    : height_(height), width_(width) {
  if (height < 0 || width < 0) throw InputError("BinaryGrid: negative size");
  cells_.assign(static_cast<std::size_t>(height) * width, 0);
}

std::size_t BinaryGrid::count() const {
  return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), 1));
}

void BinaryGrid::fill(const Box& b) {
  for (int i = b.y0; i < b.y1; ++i) {
    for (int j = b.x0; j < b.x1; ++j) set(i, j, true);
  }
}

std::vector<Component> connected_components(const BinaryGrid& grid) {
  const int h = grid.height();
  const int w = grid.width();
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(h) * w, 0);
  std::vector<Component> components;
  std::vector<Cell> stack;

  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const auto idx = static_cast<std::size_t>(r) * w + c;
      if (!grid.at(r, c) || seen[idx]) continue;

      Component comp;
      seen[idx] = 1;
      stack.push_back({r, c});
      while (!stack.empty()) {
        const Cell cur = stack.back();
        stack.pop_back();
        comp.push_back(cur);
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            const int nr = cur.row + dr;
            const int nc = cur.col + dc;
            if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
            const auto nidx = static_cast<std::size_t>(nr) * w + nc;
            if (seen[nidx] || !grid.at(nr, nc)) continue;
            seen[nidx] = 1;
            stack.push_back({nr, nc});
          }
        }
      }
      components.push_back(std::move(comp));
    }
  }
  return components;
}

Box min_bounding_rect(std::span<const Cell> component) {
  if (component.empty()) {
    throw InputError("min_bounding_rect: empty component");
  }
  Box b{component.front().col, component.front().row,
        component.front().col + 1, component.front().row + 1};
  for (const Cell& cell : component) {
    b.x0 = std::min(b.x0, cell.col);
    b.y0 = std::min(b.y0, cell.row);
    b.x1 = std::max(b.x1, cell.col + 1);
    b.y1 = std::max(b.y1, cell.row + 1);
  }
  return b;
}

}  // namespace slv
