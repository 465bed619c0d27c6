#pragma once

// Minimal line-chart rasterizer for the curve plots (white background, light
// grid, single polyline). The CSVs remain the source of truth; these PNGs
// are for eyeballing only.

#include <algorithm>
#include <vector>

#include "sodgan/io/png_io.hpp"

namespace sodgan {

inline void write_line_chart_png(const fs::path& path,
                                 const std::vector<std::pair<double, double>>& pts, double x_lo,
                                 double x_hi, double y_lo, double y_hi) {
  const int W = 480, H = 360, margin = 40;
  std::vector<unsigned char> img(static_cast<std::size_t>(W) * H * 3, 255);
  auto put = [&](int x, int y, unsigned char r, unsigned char g, unsigned char b) {
    if (x < 0 || x >= W || y < 0 || y >= H) return;
    auto* p = &img[(static_cast<std::size_t>(y) * W + x) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  };
  auto to_px = [&](double x, double y) {
    const double fx = (x - x_lo) / (x_hi - x_lo + 1e-12);
    const double fy = (y - y_lo) / (y_hi - y_lo + 1e-12);
    return std::pair<int, int>{margin + static_cast<int>(fx * (W - 2 * margin)),
                               H - margin - static_cast<int>(fy * (H - 2 * margin))};
  };
  // grid + axes
  for (int i = 0; i <= 10; ++i) {
    const auto [gx, gy0] = to_px(x_lo + (x_hi - x_lo) * i / 10.0, y_lo);
    const auto [gx1, gy] = to_px(x_lo, y_lo + (y_hi - y_lo) * i / 10.0);
    (void)gx1;
    (void)gy0;
    for (int y = margin; y <= H - margin; ++y) put(gx, y, 225, 225, 225);
    for (int x = margin; x <= W - margin; ++x) put(x, gy, 225, 225, 225);
  }
  for (int x = margin; x <= W - margin; ++x) put(x, H - margin, 0, 0, 0);
  for (int y = margin; y <= H - margin; ++y) put(margin, y, 0, 0, 0);
  // polyline
  for (std::size_t i = 1; i < pts.size(); ++i) {
    auto [x0, y0] = to_px(pts[i - 1].first, pts[i - 1].second);
    auto [x1, y1] = to_px(pts[i].first, pts[i].second);
    const int steps = std::max(std::abs(x1 - x0), std::abs(y1 - y0)) + 1;
    for (int s = 0; s <= steps; ++s) {
      const int x = x0 + (x1 - x0) * s / steps;
      const int y = y0 + (y1 - y0) * s / steps;
      put(x, y, 30, 60, 180);
      put(x, y + 1, 30, 60, 180);
    }
  }
  write_png(path, H, W, 3, img.data());
}

}  // namespace sodgan
