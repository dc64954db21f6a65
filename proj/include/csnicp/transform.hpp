#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "csnicp/error.hpp"
#include "csnicp/point_cloud.hpp"

namespace csnicp {

/// x -> rotation * x + translation.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Point3 translation = Point3::Zero();

  static RigidTransform identity() { return {}; }

  static RigidTransform from_axis_angle(const Point3& axis, double angle, const Point3& translation = Point3::Zero()) {
    RigidTransform t;
    if (angle != 0.0) t.rotation = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
    t.translation = translation;
    return t;
  }

  [[nodiscard]] Point3 operator()(const Point3& p) const { return rotation * p + translation; }

  /// (*this) after `first`: x -> this(first(x)).
  [[nodiscard]] RigidTransform compose(const RigidTransform& first) const {
    return {rotation * first.rotation, rotation * first.translation + translation};
  }

  [[nodiscard]] RigidTransform inverse() const {
    const Eigen::Matrix3d rt = rotation.transpose();
    return {rt, -(rt * translation)};
  }
};

/// Angle of the relative rotation between two rotation matrices, radians.
inline double rotation_angle_between(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

/// Maps every point; features are dropped because normals must be re-estimated.
inline PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& t) {
  std::vector<Point3> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud.points()) out.push_back(t(p));
  return PointCloud(std::move(out));
}

/// Least-squares rigid transform taking `source[i]` onto `target[i]` (Kabsch).
///
/// Throws DegenerateGeometryError for fewer than three pairs or when the
/// centered source set has rank below two (all points collinear).
inline RigidTransform solve_rigid(std::span<const Point3> source, std::span<const Point3> target) {
  if (source.size() != target.size()) throw InvalidInputError("solve_rigid: point lists differ in length");
  if (source.size() < 3) throw DegenerateGeometryError("solve_rigid: fewer than 3 point pairs");

  const double n = static_cast<double>(source.size());
  Point3 src_mean = Point3::Zero(), dst_mean = Point3::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    src_mean += source[i];
    dst_mean += target[i];
  }
  src_mean /= n;
  dst_mean /= n;

  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d src_scatter = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Point3 s = source[i] - src_mean;
    h += s * (target[i] - dst_mean).transpose();
    src_scatter += s * s.transpose();
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> shape(src_scatter);
  const auto sv = shape.singularValues();
  if (sv[0] <= 0.0 || sv[1] <= 1e-20 * sv[0] || sv[1] <= 1e-300)
    throw DegenerateGeometryError("solve_rigid: degenerate (collinear) point configuration");

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  Eigen::Vector3d d(1.0, 1.0, (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0);

  RigidTransform t;
  t.rotation = v * d.asDiagonal() * u.transpose();
  t.translation = dst_mean - t.rotation * src_mean;
  return t;
}

inline RigidTransform solve_rigid(const std::vector<Point3>& source, const std::vector<Point3>& target) {
  return solve_rigid(std::span<const Point3>(source), std::span<const Point3>(target));
}

}  // namespace csnicp
