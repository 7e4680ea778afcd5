#include "trackforge/embed.hpp"

#include <algorithm>
#include <cmath>

namespace trackforge {

std::vector<double> sinusoidal_embed(double value, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw ConfigError("sinusoidal_embed: dim must be positive even");
  int half = dim / 2;
  std::vector<double> out(static_cast<size_t>(dim));
  for (int k = 0; k < half; ++k) {
    double exponent = half > 1 ? double(k) / double(half - 1) : 0.0;
    double freq = std::pow(10000.0, exponent);
    out[size_t(2 * k)] = std::sin(freq * value);
    out[size_t(2 * k) + 1] = std::cos(freq * value);
  }
  return out;
}

std::vector<double> bilinear_feature(const FeatureGrid& grid, double x, double y) {
  if (grid.h <= 0 || grid.w <= 0 || grid.c <= 0) throw DataError("bilinear_feature: empty grid");
  x = std::clamp(x, 0.0, 1.0);
  y = std::clamp(y, 0.0, 1.0);
  double gx = x * (grid.w - 1);
  double gy = y * (grid.h - 1);
  int x0 = std::min(grid.w - 1, int(gx));
  int y0 = std::min(grid.h - 1, int(gy));
  int x1 = std::min(grid.w - 1, x0 + 1);
  int y1 = std::min(grid.h - 1, y0 + 1);
  double fx = gx - x0, fy = gy - y0;
  std::vector<double> out(static_cast<size_t>(grid.c));
  for (int ch = 0; ch < grid.c; ++ch) {
    double top = (1 - fx) * grid.at(y0, x0, ch) + fx * grid.at(y0, x1, ch);
    double bot = (1 - fx) * grid.at(y1, x0, ch) + fx * grid.at(y1, x1, ch);
    out[size_t(ch)] = (1 - fy) * top + fy * bot;
  }
  return out;
}

}  // namespace trackforge
