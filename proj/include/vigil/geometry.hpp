#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace vigil::geometry {

using Eigen::Matrix3d;
using Eigen::Vector2d;

// One calibration pair: a pixel location and the ground-plane point (meters)
// it corresponds to.
struct Correspondence {
  Vector2d image_point;
  Vector2d world_point;
};

// Plane-to-plane projective map, row major. Normalized so h(2,2) == 1 when
// that entry is nonzero, otherwise to unit Frobenius norm.
struct Homography {
  Matrix3d h = Matrix3d::Identity();

  Homography normalized() const;
};

enum class PolygonKind { kSecuredArea, kCameraFov };

// Closed polygon on the ground plane. Vertices are in order (either winding);
// the closing edge last->first is implicit.
struct PerimeterPolygon {
  std::vector<Vector2d> vertices;
  PolygonKind kind = PolygonKind::kSecuredArea;
};

struct TooFewPoints : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateConfiguration : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PointAtInfinity : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FileFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
struct DltOptions {
  bool three_rows = false;       // stack 3 cross-product rows per pair instead of 2
  bool hartley_normalize = true; // condition the linear system before the solve
};
Homography estimate_homography(const std::vector<Correspondence>& pairs, const DltOptions& opts);
}  // namespace detail

// Direct linear transform estimate from >= 4 correspondences, least squares
// via SVD for overdetermined systems. Throws TooFewPoints or
// DegenerateConfiguration (duplicate points, collinear minimal set, rank
// deficiency).
Homography estimate_homography(const std::vector<Correspondence>& pairs);

// Applies the homography to a point. Throws PointAtInfinity when the
// homogeneous scale |w| < 1e-12.
Vector2d project(const Homography& h, const Vector2d& p);

// Even-odd (ray crossing) containment; points on the boundary count as inside.
bool contains(const PerimeterPolygon& poly, const Vector2d& p);

// true when the polygon has >= 3 vertices and no two non-adjacent edges cross.
bool is_simple_polygon(const PerimeterPolygon& poly);

// Root mean square of |project(image_point) - world_point| over all pairs.
double reprojection_rmse(const Homography& h, const std::vector<Correspondence>& pairs);

// Text file with one pair per line: "img_x img_y world_x world_y".
// '#' starts a comment; blank lines are skipped; any other field count is an
// error (FileFormatError with the line number).
std::vector<Correspondence> load_correspondences(const std::string& path);

// Homography file: 9 decimals, row major, single line, h33 normalized to 1.
Homography load_homography(const std::string& path);
void save_homography(const std::string& path, const Homography& h);

}  // namespace vigil::geometry
