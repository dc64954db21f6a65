#pragma once

#include <cstdint>
#include <vector>

#include "csnicp/mask_io.hpp"

namespace csnicp {

// 3x3 square-element morphology on binary masks. Dilation treats pixels
// outside the grid as background, erosion treats them as foreground, so a
// closing never eats into regions that touch the border.

inline SliceMask dilate(const SliceMask& m) {
  SliceMask out(m.width, m.height, m.z_index);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      bool any = false;
      for (int dy = -1; dy <= 1 && !any; ++dy)
        for (int dx = -1; dx <= 1 && !any; ++dx)
          any = m.in_bounds(x + dx, y + dy) && m.at(x + dx, y + dy);
      if (any) out.set(x, y);
    }
  return out;
}

inline SliceMask erode(const SliceMask& m) {
  SliceMask out(m.width, m.height, m.z_index);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      bool all = true;
      for (int dy = -1; dy <= 1 && all; ++dy)
        for (int dx = -1; dx <= 1 && all; ++dx)
          all = !m.in_bounds(x + dx, y + dy) || m.at(x + dx, y + dy);
      if (all) out.set(x, y);
    }
  return out;
}

/// `iterations` dilations followed by as many erosions.
inline SliceMask close(SliceMask m, int iterations) {
  for (int i = 0; i < iterations; ++i) m = dilate(m);
  for (int i = 0; i < iterations; ++i) m = erode(m);
  return m;
}

/// Sets every background pixel not 4-connected to the grid border.
inline SliceMask fill_holes(const SliceMask& m) {
  const int w = m.width, h = m.height;
  std::vector<std::uint8_t> outside(m.bits.size(), 0);
  std::vector<int> stack;
  auto seed = [&](int x, int y) {
    const auto i = static_cast<std::size_t>(y) * w + x;
    if (!m.bits[i] && !outside[i]) {
      outside[i] = 1;
      stack.push_back(static_cast<int>(i));
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(x, 0);
    seed(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    seed(0, y);
    seed(w - 1, y);
  }
  while (!stack.empty()) {
    const int i = stack.back();
    stack.pop_back();
    const int x = i % w, y = i / w;
    if (x > 0) seed(x - 1, y);
    if (x + 1 < w) seed(x + 1, y);
    if (y > 0) seed(x, y - 1);
    if (y + 1 < h) seed(x, y + 1);
  }
  SliceMask out = m;
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = outside[i] ? 0 : 1;
  return out;
}

struct RegionOptions {
  int closing_iterations = 2;
  bool fill_holes = true;
};

/// Turns sparse rasterized points into a solid region mask.
inline SliceMask form_region(const SliceMask& raster, const RegionOptions& opts = {}) {
  SliceMask m = close(raster, opts.closing_iterations);
  return opts.fill_holes ? fill_holes(m) : m;
}

}  // namespace csnicp
