#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "csnicp/error.hpp"

namespace csnicp {

using Point3 = Eigen::Vector3d;

/// Per-point local descriptor: unit normal, curvature and the local spherical
/// coordinates (r, phi, theta) derived from them. r always equals curvature.
struct LocalFeatures {
  Point3 normal = Point3::UnitZ();
  double curvature = 0.0;
  double r = 0.0;
  double phi = 0.0;    // azimuth in (-pi, pi]
  double theta = 0.0;  // elevation in [0, pi]
};

/// Ordered, duplicate-free set of 3D points with optional parallel features.
///
/// Exact duplicates are dropped at construction, keeping the first
/// occurrence, so emission order is otherwise preserved.
class PointCloud {
 public:
  PointCloud() = default;

  explicit PointCloud(std::vector<Point3> points) : points_(dedupe(std::move(points))) {
    for (const auto& p : points_)
      if (!p.allFinite()) throw InvalidInputError("point cloud contains a non-finite coordinate");
  }

  PointCloud(std::vector<Point3> points, std::vector<LocalFeatures> features)
      : points_(std::move(points)), features_(std::move(features)) {
    if (features_->size() != points_.size())
      throw InvalidInputError("feature count does not match point count");
    if (dedupe(points_).size() != points_.size())
      throw InvalidInputError("point cloud with features must not contain duplicates");
  }

  [[nodiscard]] std::size_t size() const { return points_.size(); }
  [[nodiscard]] bool empty() const { return points_.empty(); }
  [[nodiscard]] const std::vector<Point3>& points() const { return points_; }
  [[nodiscard]] const Point3& operator[](std::size_t i) const { return points_[i]; }

  [[nodiscard]] bool has_features() const { return features_.has_value(); }
  [[nodiscard]] const std::vector<LocalFeatures>& features() const {
    if (!features_) throw InvalidInputError("point cloud carries no features");
    return *features_;
  }

  [[nodiscard]] Point3 centroid() const {
    Point3 c = Point3::Zero();
    for (const auto& p : points_) c += p;
    return points_.empty() ? c : Point3(c / static_cast<double>(points_.size()));
  }

  [[nodiscard]] std::pair<Point3, Point3> bounds() const {
    if (points_.empty()) return {Point3::Zero(), Point3::Zero()};
    Point3 lo = points_.front(), hi = points_.front();
    for (const auto& p : points_) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    return {lo, hi};
  }

  [[nodiscard]] double bounding_diagonal() const {
    auto [lo, hi] = bounds();
    return (hi - lo).norm();
  }

  [[nodiscard]] PointCloud subset(const std::vector<std::size_t>& indices) const {
    std::vector<Point3> pts;
    pts.reserve(indices.size());
    for (auto i : indices) pts.push_back(points_.at(i));
    return PointCloud(std::move(pts));
  }

  friend bool operator==(const PointCloud& a, const PointCloud& b) { return a.points_ == b.points_; }

 private:
  struct BitsHash {
    std::size_t operator()(const std::array<std::uint64_t, 3>& k) const {
      std::size_t h = 1469598103934665603ull;
      for (auto v : k) h = (h ^ v) * 1099511628211ull;
      return h;
    }
  };

  static std::array<std::uint64_t, 3> key(const Point3& p) {
    std::array<std::uint64_t, 3> k{};
    for (int i = 0; i < 3; ++i) {
      double v = p[i] == 0.0 ? 0.0 : p[i];  // fold -0 into +0
      std::memcpy(&k[i], &v, sizeof v);
    }
    return k;
  }

  static std::vector<Point3> dedupe(std::vector<Point3> pts) {
    std::unordered_set<std::array<std::uint64_t, 3>, BitsHash> seen;
    seen.reserve(pts.size() * 2);
    std::vector<Point3> out;
    out.reserve(pts.size());
    for (auto& p : pts)
      if (seen.insert(key(p)).second) out.push_back(p);
    return out;
  }

  std::vector<Point3> points_;
  std::optional<std::vector<LocalFeatures>> features_;
};

// ASCII cloud files: one "x y z" line per point, %.9g. With features the line
// is "x y z nx ny nz delta phi theta".

inline std::string format_cloud(const PointCloud& cloud, bool with_features = false) {
  std::string out;
  out.reserve(cloud.size() * 48);
  char buf[256];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud[i];
    int n = std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g", p.x(), p.y(), p.z());
    out.append(buf, n);
    if (with_features) {
      const auto& f = cloud.features()[i];
      n = std::snprintf(buf, sizeof buf, " %.9g %.9g %.9g %.9g %.9g %.9g", f.normal.x(), f.normal.y(),
                        f.normal.z(), f.curvature, f.phi, f.theta);
      out.append(buf, n);
    }
    out.push_back('\n');
  }
  return out;
}

inline void write_cloud(const std::filesystem::path& path, const PointCloud& cloud, bool with_features = false) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << format_cloud(cloud, with_features);
  if (!os) throw IoError("write failed: " + path.string());
}

/// Parses "x y z" lines; extra columns are ignored, blank and '#' lines skipped.
inline PointCloud parse_cloud(std::istream& is, const std::string& origin = "<stream>") {
  std::vector<Point3> pts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z))
      throw IoError(origin + ":" + std::to_string(lineno) + ": expected three coordinates");
    pts.emplace_back(x, y, z);
  }
  return PointCloud(std::move(pts));
}

inline PointCloud read_cloud(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open cloud file: " + path.string());
  return parse_cloud(is, path.string());
}

}  // namespace csnicp
