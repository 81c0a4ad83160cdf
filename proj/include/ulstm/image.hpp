#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ulstm/errors.hpp"

namespace ulstm {

// Single-channel 2D raster, row-major.
template <typename P>
struct Grid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<P> pixels;

  Grid() = default;
  Grid(std::size_t h, std::size_t w, P fill = P{}) : height(h), width(w), pixels(h * w, fill) {}

  P& operator()(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  const P& operator()(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  std::size_t size() const { return pixels.size(); }
  template <typename Q>
  bool same_dims(const Grid<Q>& o) const {
    return height == o.height && width == o.width;
  }
  bool operator==(const Grid& o) const = default;
};

using Image = Grid<float>;
// 0 = background, each positive value one cell.
using InstanceMap = Grid<std::int32_t>;
using BinaryMap = Grid<std::uint8_t>;

}  // namespace ulstm
