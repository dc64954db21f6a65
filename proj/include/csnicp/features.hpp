#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "csnicp/error.hpp"
#include "csnicp/kdtree.hpp"
#include "csnicp/parallel.hpp"
#include "csnicp/point_cloud.hpp"

namespace csnicp {

using Matrix3 = Eigen::Matrix3d;

struct SymmetricEigen3 {
  Point3 values;   // descending
  Matrix3 vectors;  // column i pairs with values[i]
};

/// Cyclic Jacobi eigendecomposition of a symmetric 3x3 matrix.
///
/// Sweeps until every off-diagonal entry is below 1e-12 of the trace (or of
/// the Frobenius norm when the trace vanishes).
inline SymmetricEigen3 jacobi_eigen(const Matrix3& m) {
  Matrix3 a = 0.5 * (m + m.transpose());
  Matrix3 v = Matrix3::Identity();
  const double scale = std::max(std::abs(a.trace()), a.norm());
  const double tol = 1e-12 * scale;

  for (int sweep = 0; sweep < 64 && scale > 0.0; ++sweep) {
    const double off = std::max({std::abs(a(0, 1)), std::abs(a(0, 2)), std::abs(a(1, 2))});
    if (off < tol) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (int k = 0; k < 3; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < 3; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::array<int, 3> idx{0, 1, 2};
  std::stable_sort(idx.begin(), idx.end(), [&](int i, int j) { return a(i, i) > a(j, j); });
  SymmetricEigen3 out;
  for (int i = 0; i < 3; ++i) {
    out.values[i] = a(idx[i], idx[i]);
    out.vectors.col(i) = v.col(idx[i]).normalized();
  }
  return out;
}

struct NeighborhoodStats {
  Point3 centroid = Point3::Zero();
  Matrix3 covariance = Matrix3::Zero();  // unnormalized scatter sum
  Point3 eigenvalues = Point3::Zero();   // descending, clamped at 0
  Matrix3 eigenvectors = Matrix3::Identity();
};

inline NeighborhoodStats neighborhood_stats(const std::vector<Point3>& points,
                                            const std::vector<std::size_t>& neighbors) {
  NeighborhoodStats st;
  for (auto j : neighbors) st.centroid += points[j];
  st.centroid /= static_cast<double>(neighbors.size());
  for (auto j : neighbors) {
    const Point3 d = points[j] - st.centroid;
    st.covariance += d * d.transpose();
  }
  const auto eig = jacobi_eigen(st.covariance);
  st.eigenvalues = eig.values.cwiseMax(0.0);
  st.eigenvectors = eig.vectors;
  return st;
}

/// Orients n away from `reference` (the cloud centroid); when n is orthogonal to
/// the offset, falls back to n_z >= 0, then n_y >= 0, then n_x >= 0.
inline Point3 canonicalize_normal(Point3 n, const Point3& point, const Point3& reference) {
  const Point3 offset = point - reference;
  const double dot = n.dot(offset);
  if (std::abs(dot) > 1e-12 * offset.norm()) {
    return dot < 0.0 ? Point3(-n) : n;
  }
  for (int axis : {2, 1, 0}) {
    if (n[axis] > 0.0) return n;
    if (n[axis] < 0.0) return -n;
  }
  return n;
}

/// Spherical descriptor of a unit normal with curvature as the radial term.
inline LocalFeatures spherical_features(const Point3& normal, double curvature) {
  LocalFeatures f;
  f.normal = normal;
  f.curvature = curvature;
  f.r = curvature;
  if (normal.x() == 0.0 && normal.y() == 0.0) {
    f.phi = 0.0;
  } else {
    f.phi = std::atan2(normal.y(), normal.x());
    if (f.phi <= -std::numbers::pi) f.phi = std::numbers::pi;
  }
  f.theta = std::acos(std::clamp(normal.z(), -1.0, 1.0));
  return f;
}

/// Normals, curvature and spherical coordinates from each point's k-neighborhood
/// (the point itself included).
inline PointCloud estimate_features(const PointCloud& cloud, std::size_t k) {
  if (k < 3) throw InvalidInputError("estimate_features: k must be at least 3");
  if (k > cloud.size()) throw InvalidInputError("estimate_features: k exceeds cloud size");
  const SpatialIndex index(cloud);
  const Point3 reference = cloud.centroid();
  const auto& pts = cloud.points();
  std::vector<LocalFeatures> features(pts.size());
  parallel_for(pts.size(), [&](std::size_t i) {
    const auto st = neighborhood_stats(pts, index.knn(pts[i], k));
    const double trace = st.eigenvalues.sum();
    const double curvature = trace > 0.0 ? st.eigenvalues[2] / trace : 0.0;
    const Point3 normal = canonicalize_normal(st.eigenvectors.col(2), pts[i], reference);
    features[i] = spherical_features(normal, curvature);
  });
  return PointCloud(pts, std::move(features));
}

/// Weights on the (r, phi, theta) terms of the feature distance.
struct FeatureWeights {
  double r = 1.0;
  double phi = 1.0;
  double theta = 1.0;
};

/// Smaller of the two arcs between angles that differ by |a - b|.
inline double wrapped_angle_difference(double a, double b) {
  const double d = std::abs(a - b);
  return std::min(d, 2.0 * std::numbers::pi - d);
}

/// L1 distance in spherical-feature space with a wrapped azimuth term.
inline double feature_distance(const LocalFeatures& a, const LocalFeatures& b, const FeatureWeights& w = {}) {
  return w.r * std::abs(a.r - b.r) + w.phi * wrapped_angle_difference(a.phi, b.phi) +
         w.theta * std::abs(a.theta - b.theta);
}

inline double cartesian_distance(const Point3& a, const Point3& b) { return (a - b).norm(); }

}  // namespace csnicp
