#pragma once

// Shared fixtures for tests: seeded generators for well-conditioned
// homographies and point sets, independent of the library internals.

#include <vector>

#include "vigil/common.hpp"
#include "vigil/geometry.hpp"

namespace testref {

// Similarity plus a mild perspective row. With image points in [0, 10]^2 the
// homogeneous scale stays in [0.6, 1.4], so the map is well conditioned.
inline vigil::geometry::Homography random_homography(vigil::Rng& rng) {
  const double s = rng.uniform(0.5, 2.0);
  const double th = rng.uniform(0.0, 6.283185307179586);
  const double tx = rng.uniform(-5.0, 5.0);
  const double ty = rng.uniform(-5.0, 5.0);
  const double g = rng.uniform(-0.02, 0.02);
  const double h = rng.uniform(-0.02, 0.02);
  vigil::geometry::Homography out;
  out.h << s * std::cos(th), -s * std::sin(th), tx,
           s * std::sin(th),  s * std::cos(th), ty,
           g, h, 1.0;
  return out;
}

inline std::vector<Eigen::Vector2d> random_image_points(vigil::Rng& rng, int n) {
  std::vector<Eigen::Vector2d> pts;
  pts.reserve(n);
  for (int i = 0; i < n; ++i) {
    pts.emplace_back(rng.uniform(0.0, 10.0), rng.uniform(0.0, 10.0));
  }
  return pts;
}

inline std::vector<vigil::geometry::Correspondence> exact_pairs(
    const vigil::geometry::Homography& h, const std::vector<Eigen::Vector2d>& image_pts) {
  std::vector<vigil::geometry::Correspondence> out;
  out.reserve(image_pts.size());
  for (const auto& p : image_pts) {
    out.push_back({p, vigil::geometry::project(h, p)});
  }
  return out;
}

}  // namespace testref
