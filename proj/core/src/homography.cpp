#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "flowedit/video.hpp"

namespace flowedit {

Point2 Homography::apply(Point2 p) const {
  const double w = m[6] * p.x + m[7] * p.y + m[8];
  return {(m[0] * p.x + m[1] * p.y + m[2]) / w, (m[3] * p.x + m[4] * p.y + m[5]) / w};
}

double Homography::determinant() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) + m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Homography Homography::inverse() const {
  const double det = determinant();
  if (std::abs(det) <= 1e-9) throw std::domain_error("homography is singular");
  Homography r;
  r.m = {(m[4] * m[8] - m[5] * m[7]) / det, (m[2] * m[7] - m[1] * m[8]) / det, (m[1] * m[5] - m[2] * m[4]) / det,
         (m[5] * m[6] - m[3] * m[8]) / det, (m[0] * m[8] - m[2] * m[6]) / det, (m[2] * m[3] - m[0] * m[5]) / det,
         (m[3] * m[7] - m[4] * m[6]) / det, (m[1] * m[6] - m[0] * m[7]) / det, (m[0] * m[4] - m[1] * m[3]) / det};
  for (double& v : r.m) v /= r.m[8];
  return r;
}

std::array<double, 4> Homography::jacobian(Point2 p) const {
  const double w = m[6] * p.x + m[7] * p.y + m[8];
  const Point2 q = apply(p);
  return {(m[0] - q.x * m[6]) / w, (m[1] - q.x * m[7]) / w, (m[3] - q.y * m[6]) / w, (m[4] - q.y * m[7]) / w};
}

Homography operator*(const Homography& a, const Homography& b) {
  Homography r;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a.m[3 * i + k] * b.m[3 * k + j];
      r.m[3 * i + j] = s;
    }
  }
  for (double& v : r.m) v /= r.m[8];
  return r;
}

namespace {

// Similarity taking the points to zero centroid and mean distance sqrt(2).
Eigen::Matrix3d normalizer(const std::vector<Point2>& pts) {
  double cx = 0.0, cy = 0.0;
  for (const Point2& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= static_cast<double>(pts.size());
  cy /= static_cast<double>(pts.size());
  double dist = 0.0;
  for (const Point2& p : pts) dist += std::hypot(p.x - cx, p.y - cy);
  dist /= static_cast<double>(pts.size());
  if (dist < 1e-12) throw std::domain_error("estimate_homography: all points coincide");
  const double s = std::sqrt(2.0) / dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

}  // namespace

Homography estimate_homography(const std::vector<Point2>& src, const std::vector<Point2>& dst) {
  if (src.size() != dst.size()) throw std::invalid_argument("estimate_homography: point counts differ");
  if (src.size() < 4) {
    throw std::invalid_argument("estimate_homography: need at least 4 correspondences, got " +
                                std::to_string(src.size()));
  }
  const Eigen::Matrix3d ts = normalizer(src);
  const Eigen::Matrix3d td = normalizer(dst);
  const int n = static_cast<int>(src.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(2 * n, 9);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d p = ts * Eigen::Vector3d(src[i].x, src[i].y, 1.0);
    const Eigen::Vector3d q = td * Eigen::Vector3d(dst[i].x, dst[i].y, 1.0);
    const double x = p.x() / p.z(), y = p.y() / p.z();
    const double u = q.x() / q.z(), v = q.y() / q.z();
    a.row(2 * i) << -x, -y, -1, 0, 0, 0, u * x, u * y, u;
    a.row(2 * i + 1) << 0, 0, 0, -x, -y, -1, v * x, v * y, v;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A solvable configuration leaves exactly one null direction among 9.
  if (sv.size() < 8 || sv(7) <= 1e-10 * sv(0)) {
    throw std::domain_error("estimate_homography: degenerate point configuration");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Eigen::Matrix3d full = td.inverse() * hn * ts;
  if (std::abs(full(2, 2)) < 1e-15) throw std::domain_error("estimate_homography: h33 vanishes");
  Homography out;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) out.m[3 * i + j] = full(i, j) / full(2, 2);
  }
  if (std::abs(out.determinant()) <= 1e-9) throw std::domain_error("estimate_homography: result is singular");
  return out;
}

}  // namespace flowedit
