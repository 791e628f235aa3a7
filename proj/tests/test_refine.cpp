#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "deepproposal/errors.hpp"
#include "deepproposal/refine.hpp"
#include "support/oracles.hpp"

using dp::BoundingBox;
using dp::EdgeMap;
using dp::FeatureMap;
using dp::RefineConfig;

namespace {

// Closed rectangular contour: magnitude 1 on the border cells of [x0,x1) x [y0,y1).
EdgeMap contour_map(int height, int width, double stride, const dp::CellBox& rect,
                    float strength = 1.0f) {
  std::vector<float> mag(static_cast<std::size_t>(height) * width, 0.0f);
  for (int y = rect.y0; y < rect.y1; ++y) {
    for (int x = rect.x0; x < rect.x1; ++x) {
      const bool border =
          y == rect.y0 || y == rect.y1 - 1 || x == rect.x0 || x == rect.x1 - 1;
      if (border) mag[static_cast<std::size_t>(y) * width + x] = strength;
    }
  }
  return EdgeMap(height, width, stride, std::move(mag));
}

FeatureMap step_edge_map(int channels, int height, int width, int step_col) {
  FeatureMap fm;
  fm.channels = channels;
  fm.height = height;
  fm.width = width;
  fm.stride = 2.0;
  fm.data.assign(static_cast<std::size_t>(channels) * height * width, 0.0f);
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = step_col; x < width; ++x) fm.at(c, y, x) = 1.0f;
  return fm;
}

}  // namespace

TEST_CASE("edge map of a constant map is all zero; 1x1 maps are degenerate but valid") {
  FeatureMap fm;
  fm.channels = 2;
  fm.height = 5;
  fm.width = 6;
  fm.stride = 2.0;
  fm.data.assign(2 * 5 * 6, 3.25f);
  const EdgeMap em = dp::edge_map_from_features(fm);
  for (float v : em.magnitudes()) CHECK(v == 0.0f);

  FeatureMap tiny;
  tiny.channels = 1;
  tiny.height = 1;
  tiny.width = 1;
  tiny.stride = 2.0;
  tiny.data = {7.0f};
  const EdgeMap te = dp::edge_map_from_features(tiny);
  CHECK(te.magnitudes().size() == 1);
  CHECK(te.magnitudes()[0] == 0.0f);
}

TEST_CASE("vertical step edge peaks on the step columns") {
  const auto fm = step_edge_map(1, 8, 12, 6);
  const EdgeMap em = dp::edge_map_from_features(fm);
  for (int y = 0; y < 8; ++y) {
    CHECK(em.magnitude(y, 5) == doctest::Approx(1.0f));
    CHECK(em.magnitude(y, 6) == doctest::Approx(1.0f));
    CHECK(em.magnitude(y, 2) == 0.0f);
    CHECK(em.magnitude(y, 9) == 0.0f);
  }
}

TEST_CASE("edge map matches a direct finite-difference oracle") {
  std::mt19937_64 rng(43);
  const auto fm = oracle::random_feature_map(rng, 3, 20, 24, 2.0);
  const EdgeMap em = dp::edge_map_from_features(fm);

  std::vector<double> expect(static_cast<std::size_t>(20) * 24, 0.0);
  double peak = 0.0;
  for (int y = 0; y < 20; ++y) {
    for (int x = 0; x < 24; ++x) {
      double energy = 0.0;
      for (int c = 0; c < 3; ++c) {
        const int xl = std::max(0, x - 1), xr = std::min(23, x + 1);
        const int yu = std::max(0, y - 1), yd = std::min(19, y + 1);
        const double dx = (fm.at(c, y, xr) - fm.at(c, y, xl)) / (xr - xl);
        const double dy = (fm.at(c, yd, x) - fm.at(c, yu, x)) / (yd - yu);
        energy += dx * dx + dy * dy;
      }
      expect[static_cast<std::size_t>(y) * 24 + x] = std::sqrt(energy);
      peak = std::max(peak, expect[static_cast<std::size_t>(y) * 24 + x]);
    }
  }
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 24; ++x)
      CHECK(std::abs(em.magnitude(y, x) - expect[static_cast<std::size_t>(y) * 24 + x] / peak) <
            1e-6);
  for (float v : em.magnitudes()) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f + 1e-6f);
  }
}

TEST_CASE("edge mass via the integral table equals direct summation") {
  std::mt19937_64 rng(47);
  std::vector<float> mag(40 * 50);
  for (auto& v : mag) v = static_cast<float>((rng() >> 11) * 0x1.0p-53);
  const EdgeMap em(40, 50, 2.0, mag);
  for (int i = 0; i < 1000; ++i) {
    const auto r = oracle::random_cell_box(rng, 40, 50);
    double direct = 0.0;
    for (int y = r.y0; y < r.y1; ++y)
      for (int x = r.x0; x < r.x1; ++x)
        direct += mag[static_cast<std::size_t>(y) * 50 + x];
    CHECK(std::abs(em.mass(r) - direct) <= 1e-6 * std::max(1.0, direct));
  }
}

TEST_CASE("edgebox score: zero map scores zero; band arithmetic on aligned boxes") {
  const EdgeMap zero(30, 30, 2.0, std::vector<float>(900, 0.0f));
  RefineConfig cfg;
  CHECK(dp::edgebox_score(zero, {10, 10, 50, 50}, cfg) == 0.0);

  // integer-aligned box: recompute the score from raw masses
  std::mt19937_64 rng(53);
  std::vector<float> mag(30 * 30);
  for (auto& v : mag) v = static_cast<float>((rng() >> 11) * 0x1.0p-53);
  const EdgeMap em(30, 30, 2.0, mag);
  const dp::CellBox cells{4, 6, 24, 26};  // 20x20 cells
  const BoundingBox box{4 * 2.0, 6 * 2.0, 24 * 2.0, 26 * 2.0};
  const int band = 1;  // round(0.5 * 0.1 * 20): half in, half out
  const dp::CellBox core{cells.x0 + band, cells.y0 + band, cells.x1 - band,
                         cells.y1 - band};
  const dp::CellBox outer{cells.x0 - band, cells.y0 - band, cells.x1 + band,
                          cells.y1 + band};
  const double inside = em.mass(core);
  const double band_mass = em.mass(outer) - inside;
  const double band_area = static_cast<double>(outer.area() - core.area());
  const double density = inside / static_cast<double>(core.area());
  const double expect =
      (band_mass - density * band_area) / std::pow(2.0 * (20 + 20), cfg.kappa);
  CHECK(dp::edgebox_score(em, box, cfg) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("a contour-matching box outscores the same box dilated by 4 cells") {
  const auto em = contour_map(60, 60, 2.0, {20, 20, 40, 40});
  RefineConfig cfg;
  const BoundingBox match{20 * 2.0, 20 * 2.0, 40 * 2.0, 40 * 2.0};
  const BoundingBox dilated{16 * 2.0, 16 * 2.0, 44 * 2.0, 44 * 2.0};
  const double s_match = dp::edgebox_score(em, match, cfg);
  const double s_dilated = dp::edgebox_score(em, dilated, cfg);
  CHECK(s_match > s_dilated);
  CHECK(s_match > 0.0);
}

TEST_CASE("edgebox score is invariant to whole-cell translation") {
  RefineConfig cfg;
  const auto em1 = contour_map(60, 60, 2.0, {10, 10, 26, 30});
  const auto em2 = contour_map(60, 60, 2.0, {22, 18, 38, 38});
  const BoundingBox b1{10 * 2.0, 10 * 2.0, 26 * 2.0, 30 * 2.0};
  const BoundingBox b2{22 * 2.0, 18 * 2.0, 38 * 2.0, 38 * 2.0};
  CHECK(dp::edgebox_score(em1, b1, cfg) ==
        doctest::Approx(dp::edgebox_score(em2, b2, cfg)).epsilon(1e-12));
}

TEST_CASE("edgebox score rejects boxes that shrink below one cell") {
  const auto em = contour_map(30, 30, 2.0, {5, 5, 20, 20});
  RefineConfig cfg;
  CHECK_THROWS_AS(dp::edgebox_score(em, {10.0, 10.0, 11.0, 40.0}, cfg),
                  dp::degenerate_error);
  CHECK_THROWS_AS(dp::edgebox_score(em, {200.0, 200.0, 240.0, 240.0}, cfg),
                  dp::degenerate_error);
}

TEST_CASE("greedy refinement never lowers the score and is deterministic") {
  const auto em = contour_map(80, 80, 2.0, {30, 28, 52, 50});
  RefineConfig cfg;
  std::mt19937_64 rng(59);
  for (int i = 0; i < 60; ++i) {
    const auto uni = [&](double lo, double hi) {
      return lo + (hi - lo) * ((rng() >> 11) * 0x1.0p-53);
    };
    BoundingBox b;
    b.x0 = uni(10, 100);
    b.y0 = uni(10, 100);
    b.x1 = b.x0 + uni(16, 70);
    b.y1 = b.y0 + uni(16, 70);
    double input_score = 0.0;
    try {
      input_score = dp::edgebox_score(em, b, cfg);
    } catch (const dp::degenerate_error&) {
      continue;
    }
    const auto r1 = dp::greedy_refine(b, em, cfg);
    CHECK(r1.score >= input_score);
    const auto r2 = dp::greedy_refine(b, em, cfg);
    CHECK(r1.box.x0 == r2.box.x0);
    CHECK(r1.box.y0 == r2.box.y0);
    CHECK(r1.box.x1 == r2.box.x1);
    CHECK(r1.box.y1 == r2.box.y1);
    CHECK(r1.score == r2.score);
  }
}

TEST_CASE("refinement recovers a planted object contour from an offset start") {
  // object rendered the way a fine layer sees it: coverage-graded footprint
  const BoundingBox target{60.0, 56.0, 140.0, 120.0};
  FeatureMap fm;
  fm.channels = 2;
  fm.height = 100;
  fm.width = 110;
  fm.stride = 2.0;
  fm.data.assign(static_cast<std::size_t>(2) * 100 * 110, 0.0f);
  for (int y = 0; y < fm.height; ++y) {
    for (int x = 0; x < fm.width; ++x) {
      const BoundingBox cell{x * 2.0, y * 2.0, (x + 1) * 2.0, (y + 1) * 2.0};
      const float cov = static_cast<float>(dp::intersection_area(cell, target) / 4.0);
      fm.at(0, y, x) += cov;
      fm.at(1, y, x) -= cov;
    }
  }
  const EdgeMap em = dp::edge_map_from_features(fm);
  RefineConfig cfg;

  // initial box offset by 3 cells (6 px) in both axes
  const BoundingBox offset{target.x0 + 6.0, target.y0 + 6.0, target.x1 + 6.0,
                           target.y1 + 6.0};
  const double before = dp::iou(offset, target);
  const auto r = dp::greedy_refine(offset, em, cfg);
  const double after = dp::iou(r.box, target);
  CHECK(after > before);
  CHECK(after > 0.85);

  // score landscape sanity by exhaustive local scan: no 2 px-grid neighbor of
  // the refined box scores higher than the refined box itself
  double best_neighbor = -1e9;
  for (int dx = -1; dx <= 1; ++dx) {
    for (int dy = -1; dy <= 1; ++dy) {
      if (dx == 0 && dy == 0) continue;
      const BoundingBox n{r.box.x0 + 2.0 * dx, r.box.y0 + 2.0 * dy,
                          r.box.x1 + 2.0 * dx, r.box.y1 + 2.0 * dy};
      try {
        best_neighbor = std::max(best_neighbor, dp::edgebox_score(em, n, cfg));
      } catch (const dp::degenerate_error&) {
      }
    }
  }
  CHECK(r.score >= best_neighbor);
}

TEST_CASE("a box at a strict local maximum stays put") {
  const dp::CellBox rect{20, 20, 40, 40};
  const auto em = contour_map(60, 60, 2.0, rect);
  RefineConfig cfg;
  const BoundingBox aligned{rect.x0 * 2.0, rect.y0 * 2.0, rect.x1 * 2.0, rect.y1 * 2.0};
  const auto settled = dp::greedy_refine(aligned, em, cfg);
  // settle once, then refining the result again must be a fixed point
  const auto again = dp::greedy_refine(settled.box, em, cfg);
  CHECK(again.score == settled.score);
  CHECK(again.box.x0 == settled.box.x0);
  CHECK(again.box.y0 == settled.box.y0);
  CHECK(again.box.x1 == settled.box.x1);
  CHECK(again.box.y1 == settled.box.y1);
  CHECK_FALSE(again.moved);
}

TEST_CASE("external edge planes must be single channel and non-negative") {
  FeatureMap plane;
  plane.channels = 1;
  plane.height = 4;
  plane.width = 4;
  plane.stride = 2.0;
  plane.data.assign(16, 0.5f);
  CHECK_NOTHROW(dp::edge_map_from_plane(plane));

  plane.channels = 2;
  plane.data.assign(32, 0.5f);
  CHECK_THROWS_AS(dp::edge_map_from_plane(plane), dp::data_error);

  plane.channels = 1;
  plane.data.assign(16, -0.5f);
  CHECK_THROWS_AS(dp::edge_map_from_plane(plane), dp::data_error);
}
