#pragma once

#include <vector>

#include "trackforge/common.hpp"

namespace trackforge {

// Dense per-frame feature map, row-major [h][w][c].
struct FeatureGrid {
  int h = 0, w = 0, c = 0;
  std::vector<float> data;

  float at(int row, int col, int ch) const {
    return data[(size_t(row) * w + col) * c + ch];
  }
};

// Interleaved sin/cos over a geometric frequency ladder from 1 to 10000.
// dim must be even; the embedding has norm sqrt(dim/2) for every input.
std::vector<double> sinusoidal_embed(double value, int dim);

// Bilinear interpolation at a point in normalized [0,1]^2 coordinates;
// out-of-range points are clamped to the grid boundary.
std::vector<double> bilinear_feature(const FeatureGrid& grid, double x, double y);

}  // namespace trackforge
