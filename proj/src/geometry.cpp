#include "vigil/geometry.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace vigil::geometry {

namespace {

constexpr double kWEps = 1e-12;

bool nearly_same(const Vector2d& a, const Vector2d& b) {
  return (a - b).squaredNorm() < 1e-18;
}

// Twice the signed triangle area; zero means collinear.
double cross2(const Vector2d& a, const Vector2d& b, const Vector2d& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

// Similarity that moves the centroid to the origin and scales the mean
// distance from it to sqrt(2).
Matrix3d conditioning_transform(const std::vector<Vector2d>& pts) {
  Vector2d centroid = Vector2d::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
  Matrix3d t;
  t << s, 0, -s * centroid.x(), 0, s, -s * centroid.y(), 0, 0, 1;
  return t;
}

Vector2d apply(const Matrix3d& m, const Vector2d& p) {
  const Eigen::Vector3d q = m * Eigen::Vector3d(p.x(), p.y(), 1.0);
  return Vector2d(q.x() / q.z(), q.y() / q.z());
}

}  // namespace

Homography Homography::normalized() const {
  Homography out;
  const double h22 = h(2, 2);
  if (std::abs(h22) > kWEps) {
    out.h = h / h22;
  } else {
    out.h = h / h.norm();
  }
  return out;
}

namespace detail {

Homography estimate_homography(const std::vector<Correspondence>& pairs, const DltOptions& opts) {
  if (pairs.size() < 4) {
    throw TooFewPoints("homography estimation needs at least 4 correspondences, got " +
                       std::to_string(pairs.size()));
  }
  for (size_t i = 0; i < pairs.size(); ++i) {
    for (size_t j = i + 1; j < pairs.size(); ++j) {
      if (nearly_same(pairs[i].image_point, pairs[j].image_point) ||
          nearly_same(pairs[i].world_point, pairs[j].world_point)) {
        throw DegenerateConfiguration("duplicate point in correspondence set");
      }
    }
  }
  if (pairs.size() == 4) {
    // A minimal set cannot tolerate three collinear points on either plane.
    for (int a = 0; a < 4; ++a) {
      for (int b = a + 1; b < 4; ++b) {
        for (int c = b + 1; c < 4; ++c) {
          if (std::abs(cross2(pairs[a].world_point, pairs[b].world_point,
                              pairs[c].world_point)) < 1e-12 ||
              std::abs(cross2(pairs[a].image_point, pairs[b].image_point,
                              pairs[c].image_point)) < 1e-12) {
            throw DegenerateConfiguration("three collinear points in a minimal set");
          }
        }
      }
    }
  }

  Matrix3d t_img = Matrix3d::Identity();
  Matrix3d t_wld = Matrix3d::Identity();
  if (opts.hartley_normalize) {
    std::vector<Vector2d> img, wld;
    img.reserve(pairs.size());
    wld.reserve(pairs.size());
    for (const auto& c : pairs) {
      img.push_back(c.image_point);
      wld.push_back(c.world_point);
    }
    t_img = conditioning_transform(img);
    t_wld = conditioning_transform(wld);
  }

  const int rows_per_pair = opts.three_rows ? 3 : 2;
  Eigen::MatrixXd a(rows_per_pair * static_cast<int>(pairs.size()), 9);
  int r = 0;
  for (const auto& c : pairs) {
    const Vector2d p = apply(t_img, c.image_point);
    const Vector2d q = apply(t_wld, c.world_point);
    const double x = p.x(), y = p.y();
    const double u = q.x(), v = q.y();
    // Cross-product rows of q x (H p~) = 0 with w' = 1:
    //   [  0   -p~   v p~ ]
    //   [ p~    0   -u p~ ]
    //   [ -v p~ u p~   0  ]
    a.row(r++) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
    a.row(r++) << x, y, 1, 0, 0, 0, -u * x, -u * y, -u;
    if (opts.three_rows) {
      a.row(r++) << -v * x, -v * y, -v, u * x, u * y, u, 0, 0, 0;
    }
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd hvec = svd.matrixV().col(8);
  Matrix3d hn;
  hn << hvec(0), hvec(1), hvec(2), hvec(3), hvec(4), hvec(5), hvec(6), hvec(7), hvec(8);

  Homography out;
  out.h = t_wld.inverse() * hn * t_img;
  out = out.normalized();
  if (std::abs(out.h.determinant()) < 1e-12) {
    throw DegenerateConfiguration("estimated homography is rank deficient");
  }
  return out;
}

}  // namespace detail

Homography estimate_homography(const std::vector<Correspondence>& pairs) {
  return detail::estimate_homography(pairs, detail::DltOptions{});
}

Vector2d project(const Homography& h, const Vector2d& p) {
  const Eigen::Vector3d q = h.h * Eigen::Vector3d(p.x(), p.y(), 1.0);
  if (std::abs(q.z()) < kWEps) {
    throw PointAtInfinity("projected point maps to infinity");
  }
  return Vector2d(q.x() / q.z(), q.y() / q.z());
}

bool contains(const PerimeterPolygon& poly, const Vector2d& p) {
  const auto& v = poly.vertices;
  const size_t n = v.size();
  if (n < 3) return false;

  // Boundary points count as inside regardless of winding.
  for (size_t i = 0; i < n; ++i) {
    const Vector2d& a = v[i];
    const Vector2d& b = v[(i + 1) % n];
    const Vector2d ab = b - a;
    const double len2 = ab.squaredNorm();
    if (len2 == 0.0) {
      if (nearly_same(a, p)) return true;
      continue;
    }
    const double t = (p - a).dot(ab) / len2;
    if (t < 0.0 || t > 1.0) continue;
    const Vector2d foot = a + t * ab;
    if ((p - foot).squaredNorm() < 1e-18) return true;
  }

  // Even-odd ray crossing, half-open edge rule.
  bool inside = false;
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const bool crosses = (v[i].y() > p.y()) != (v[j].y() > p.y());
    if (!crosses) continue;
    const double x_at =
        v[i].x() + (p.y() - v[i].y()) / (v[j].y() - v[i].y()) * (v[j].x() - v[i].x());
    if (p.x() < x_at) inside = !inside;
  }
  return inside;
}

bool is_simple_polygon(const PerimeterPolygon& poly) {
  const auto& v = poly.vertices;
  const size_t n = v.size();
  if (n < 3) return false;
  auto seg_intersect = [](const Vector2d& a, const Vector2d& b, const Vector2d& c,
                          const Vector2d& d) {
    const double d1 = cross2(c, d, a);
    const double d2 = cross2(c, d, b);
    const double d3 = cross2(a, b, c);
    const double d4 = cross2(a, b, d);
    return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
  };
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      // Skip adjacent edges (they share an endpoint).
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      if (seg_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n])) return false;
    }
  }
  return true;
}

double reprojection_rmse(const Homography& h, const std::vector<Correspondence>& pairs) {
  if (pairs.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& c : pairs) {
    sum += (project(h, c.image_point) - c.world_point).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(pairs.size()));
}

std::vector<Correspondence> load_correspondences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileFormatError("cannot open correspondence file: " + path);
  std::vector<Correspondence> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::vector<double> fields;
    double value = 0.0;
    while (ls >> value) fields.push_back(value);
    if (fields.empty()) {
      // Blank or comment-only line.
      if (ls.eof()) continue;
    }
    if (!ls.eof() || fields.size() != 4) {
      throw FileFormatError(path + ":" + std::to_string(lineno) +
                            ": expected 4 numeric fields (img_x img_y world_x world_y)");
    }
    out.push_back({Vector2d(fields[0], fields[1]), Vector2d(fields[2], fields[3])});
  }
  return out;
}

Homography load_homography(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileFormatError("cannot open homography file: " + path);
  std::vector<double> vals;
  double v = 0.0;
  while (in >> v) vals.push_back(v);
  if (vals.size() != 9) {
    throw FileFormatError(path + ": expected 9 values, got " + std::to_string(vals.size()));
  }
  Homography h;
  h.h << vals[0], vals[1], vals[2], vals[3], vals[4], vals[5], vals[6], vals[7], vals[8];
  return h.normalized();
}

void save_homography(const std::string& path, const Homography& h) {
  const Homography n = h.normalized();
  if (std::abs(n.h(2, 2) - 1.0) > 1e-9) {
    throw FileFormatError("homography cannot be written with h33 == 1");
  }
  std::ofstream out(path);
  if (!out) throw FileFormatError("cannot write homography file: " + path);
  char buf[64];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", n.h(r, c));
      out << buf << ((r == 2 && c == 2) ? "\n" : " ");
    }
  }
}

}  // namespace vigil::geometry
