#include <cmath>

#include "doctest.h"
#include "trackforge/embed.hpp"

using namespace trackforge;

TEST_CASE("sinusoidal embedding interleaves sin/cos over a geometric ladder") {
  const int dim = 8;
  auto e = sinusoidal_embed(0.7, dim);
  REQUIRE(e.size() == size_t(dim));
  const int half = dim / 2;
  for (int k = 0; k < half; ++k) {
    double freq = std::pow(10000.0, double(k) / double(half - 1));
    CHECK(e[2 * k] == doctest::Approx(std::sin(0.7 * freq)).epsilon(1e-12));
    CHECK(e[2 * k + 1] == doctest::Approx(std::cos(0.7 * freq)).epsilon(1e-12));
  }
}

TEST_CASE("sinusoidal embedding has constant norm sqrt(dim/2)") {
  for (double v : {-3.0, 0.0, 0.25, 17.5}) {
    auto e = sinusoidal_embed(v, 16);
    double sq = 0.0;
    for (double x : e) sq += x * x;
    CHECK(std::sqrt(sq) == doctest::Approx(std::sqrt(8.0)).epsilon(1e-12));
  }
}

TEST_CASE("sinusoidal embedding rejects bad dimensions") {
  CHECK_THROWS_AS(sinusoidal_embed(1.0, 7), ConfigError);
  CHECK_THROWS_AS(sinusoidal_embed(1.0, 0), ConfigError);
  CHECK_THROWS_AS(sinusoidal_embed(1.0, -4), ConfigError);
}

namespace {

FeatureGrid make_grid() {
  // 2x2 grid, 2 channels: channel 0 = row index, channel 1 = column index.
  FeatureGrid g;
  g.h = 2;
  g.w = 2;
  g.c = 2;
  g.data = {0, 0, 0, 1, 1, 0, 1, 1};
  return g;
}

}  // namespace

TEST_CASE("bilinear interpolation matches hand values") {
  FeatureGrid g = make_grid();
  // Grid corners map to coordinate extremes.
  auto tl = bilinear_feature(g, 0.0, 0.0);
  CHECK(tl[0] == doctest::Approx(0.0));
  CHECK(tl[1] == doctest::Approx(0.0));
  auto br = bilinear_feature(g, 1.0, 1.0);
  CHECK(br[0] == doctest::Approx(1.0));
  CHECK(br[1] == doctest::Approx(1.0));
  // Centre blends all four corners equally.
  auto mid = bilinear_feature(g, 0.5, 0.5);
  CHECK(mid[0] == doctest::Approx(0.5));
  CHECK(mid[1] == doctest::Approx(0.5));
}

TEST_CASE("bilinear interpolation clamps out-of-range queries") {
  FeatureGrid g = make_grid();
  auto lo = bilinear_feature(g, -2.0, -2.0);
  auto hi = bilinear_feature(g, 3.0, 3.0);
  CHECK(lo[0] == doctest::Approx(0.0));
  CHECK(lo[1] == doctest::Approx(0.0));
  CHECK(hi[0] == doctest::Approx(1.0));
  CHECK(hi[1] == doctest::Approx(1.0));
}
