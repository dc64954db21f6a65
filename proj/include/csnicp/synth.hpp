#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "csnicp/error.hpp"
#include "csnicp/mask_io.hpp"
#include "csnicp/point_cloud.hpp"
#include "csnicp/raster.hpp"
#include "csnicp/transform.hpp"

namespace csnicp {

/// SplitMix64 stream. Each draw:
///   state += 0x9E3779B97F4A7C15
///   z = state
///   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
///   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
///   return z ^ (z >> 31)
/// uniform() = (next() >> 11) * 2^-53, in [0, 1).
/// normal() is Box-Muller on (u1, u2) = (1 - uniform(), uniform()): the first
/// call yields sqrt(-2 ln u1) cos(2 pi u2), the second the matching sin term.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double normal() {
    if (spare_) {
      const double v = *spare_;
      spare_.reset();
      return v;
    }
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    return radius * std::cos(angle);
  }

  Point3 unit_vector() {
    for (;;) {
      Point3 v(normal(), normal(), normal());
      const double n = v.norm();
      if (n > 1e-12) return v / n;
    }
  }

 private:
  std::uint64_t state_;
  std::optional<double> spare_;
};

enum class PhantomShape { Ellipsoid, TwoLobePelvis };

struct PhantomSpec {
  PhantomShape shape = PhantomShape::Ellipsoid;
  std::size_t point_count = 1000;
  std::uint64_t seed = 0;
  /// Ellipsoid semi-axes; for the two-lobe phantom, the semi-axes of each lobe.
  Point3 semi_axes = Point3::Ones();
  /// Lobe centers sit at +lobe_offset and -lobe_offset.
  Point3 lobe_offset = Point3(0.6, 0.0, 0.0);
  /// Half extents of the central block joining the lobes.
  Point3 bridge_half_extents = Point3(0.3, 0.2, 0.15);

  void validate() const {
    if (point_count < 100) throw InvalidInputError("phantom: point_count must be at least 100");
    if (!(semi_axes.minCoeff() > 0.0)) throw InvalidInputError("phantom: semi-axes must be positive");
    if (shape == PhantomShape::TwoLobePelvis && !(bridge_half_extents.minCoeff() > 0.0))
      throw InvalidInputError("phantom: bridge extents must be positive");
  }
};

/// Default lobe shape for the two-lobe phantom.
inline PhantomSpec two_lobe_spec(std::size_t points, std::uint64_t seed) {
  PhantomSpec s;
  s.shape = PhantomShape::TwoLobePelvis;
  s.point_count = points;
  s.seed = seed;
  s.semi_axes = Point3(0.4, 0.6, 0.35);
  return s;
}

enum class Subsample { Random, Slab };

struct PerturbationSpec {
  Point3 rotation_axis = Point3::UnitZ();
  double rotation_angle = 0.0;
  Point3 translation = Point3::Zero();
  double noise_sigma = 0.0;
  double keep_fraction = 1.0;
  std::uint64_t seed = 0;
  /// Random drops points uniformly; Slab removes the points furthest along a
  /// seeded random direction, leaving a partial-overlap cloud.
  Subsample subsample = Subsample::Random;
  /// Removal direction for Slab; seeded random when unset. +z mimics a scan
  /// whose slice range stops short of the other modality's.
  std::optional<Point3> slab_direction;

  void validate() const {
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw InvalidInputError("perturbation: keep_fraction must be in (0, 1]");
    if (!(noise_sigma >= 0.0)) throw InvalidInputError("perturbation: noise_sigma must be non-negative");
    if (slab_direction && !(slab_direction->norm() > 0.0))
      throw InvalidInputError("perturbation: slab_direction must be non-zero");
    if (rotation_angle != 0.0 && !(rotation_axis.norm() > 0.0))
      throw InvalidInputError("perturbation: rotation_axis must be non-zero");
  }

  [[nodiscard]] RigidTransform transform() const {
    return RigidTransform::from_axis_angle(rotation_axis, rotation_angle, translation);
  }
};

namespace detail {

inline bool inside_ellipsoid(const Point3& p, const Point3& center, const Point3& axes) {
  return (p - center).cwiseQuotient(axes).squaredNorm() < 1.0;
}

inline bool inside_box(const Point3& p, const Point3& half) {
  return (p.cwiseAbs() - half).maxCoeff() < 0.0;
}

// Area-uniform ellipsoid surface sample (scaled direction plus rejection on
// the area element).
inline Point3 sample_ellipsoid(SplitMix64& rng, const Point3& center, const Point3& axes) {
  const double min_axis = axes.minCoeff();
  for (;;) {
    const Point3 u = rng.unit_vector();
    const double g = min_axis * u.cwiseQuotient(axes).norm();
    if (rng.uniform() < g) return center + u.cwiseProduct(axes);
  }
}

inline Point3 sample_box_surface(SplitMix64& rng, const Point3& half) {
  const double ayz = half.y() * half.z(), axz = half.x() * half.z(), axy = half.x() * half.y();
  const double pick = rng.uniform() * (ayz + axz + axy);
  const int fixed = pick < ayz ? 0 : (pick < ayz + axz ? 1 : 2);
  Point3 p;
  for (int a = 0; a < 3; ++a) p[a] = (2.0 * rng.uniform() - 1.0) * half[a];
  p[fixed] = rng.uniform() < 0.5 ? -half[fixed] : half[fixed];
  return p;
}

}  // namespace detail

/// Deterministic surface samples for the given shape.
///
/// The two-lobe phantom puts 42% of the points on each ellipsoidal lobe and
/// 16% on the bridging block; samples buried inside another part are redrawn.
inline PointCloud make_phantom(const PhantomSpec& spec) {
  spec.validate();
  SplitMix64 rng(spec.seed);
  std::vector<Point3> pts;
  pts.reserve(spec.point_count);
  if (spec.shape == PhantomShape::Ellipsoid) {
    while (pts.size() < spec.point_count) pts.push_back(detail::sample_ellipsoid(rng, Point3::Zero(), spec.semi_axes));
    return PointCloud(std::move(pts));
  }

  const Point3 left = -spec.lobe_offset, right = spec.lobe_offset;
  const auto lobe_count = static_cast<std::size_t>(std::llround(0.42 * static_cast<double>(spec.point_count)));
  auto add = [&](std::size_t count, auto&& sample, auto&& buried) {
    const std::size_t goal = pts.size() + count;
    while (pts.size() < goal) {
      const Point3 p = sample();
      if (!buried(p)) pts.push_back(p);
    }
  };
  auto in_bridge = [&](const Point3& p) { return detail::inside_box(p, spec.bridge_half_extents); };
  add(lobe_count, [&] { return detail::sample_ellipsoid(rng, left, spec.semi_axes); }, in_bridge);
  add(lobe_count, [&] { return detail::sample_ellipsoid(rng, right, spec.semi_axes); }, in_bridge);
  add(spec.point_count - 2 * lobe_count, [&] { return detail::sample_box_surface(rng, spec.bridge_half_extents); },
      [&](const Point3& p) {
        return detail::inside_ellipsoid(p, left, spec.semi_axes) || detail::inside_ellipsoid(p, right, spec.semi_axes);
      });
  return PointCloud(std::move(pts));
}

/// Quasi-uniform Fibonacci lattice on the unit sphere.
inline PointCloud fibonacci_sphere(std::size_t n) {
  std::vector<Point3> pts;
  pts.reserve(n);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double a = golden * static_cast<double>(i);
    pts.emplace_back(r * std::cos(a), r * std::sin(a), z);
  }
  return PointCloud(std::move(pts));
}

struct Perturbed {
  PointCloud cloud;
  RigidTransform ground_truth;
};

/// Subsample, then apply the rigid transform, then add isotropic Gaussian noise.
inline Perturbed perturb(const PointCloud& cloud, const PerturbationSpec& spec) {
  spec.validate();
  SplitMix64 rng(spec.seed);
  const std::size_t n = cloud.size();
  const auto keep = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(spec.keep_fraction * static_cast<double>(n))), n == 0 ? 0 : 1, n);

  std::vector<std::size_t> kept(n);
  std::iota(kept.begin(), kept.end(), std::size_t{0});
  if (keep < n) {
    if (spec.subsample == Subsample::Random) {
      for (std::size_t i = 0; i < keep; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.uniform() * static_cast<double>(n - i));
        std::swap(kept[i], kept[std::min(j, n - 1)]);
      }
    } else {
      const Point3 dir = spec.slab_direction ? spec.slab_direction->normalized() : rng.unit_vector();
      std::stable_sort(kept.begin(), kept.end(),
                       [&](std::size_t a, std::size_t b) { return cloud[a].dot(dir) < cloud[b].dot(dir); });
    }
    kept.resize(keep);
    std::sort(kept.begin(), kept.end());
  }

  const auto gt = spec.transform();
  std::vector<Point3> pts;
  pts.reserve(kept.size());
  for (auto i : kept) {
    Point3 p = gt(cloud[i]);
    if (spec.noise_sigma > 0.0) {
      const double nx = rng.normal(), ny = rng.normal(), nz = rng.normal();
      p += spec.noise_sigma * Point3(nx, ny, nz);
    }
    pts.push_back(p);
  }
  return {PointCloud(std::move(pts)), gt};
}

struct VoxelizeOptions {
  Modality modality = Modality::CT;
  /// Points within +-band/2 of a slice's center plane land in that slice.
  /// Defaults to min(slice_spacing, 2 * pixel_pitch) so each slice is a thin
  /// cross-section rather than the projection of a whole inter-slice gap.
  std::optional<double> band_thickness;
  RegionOptions region;
  /// Empty pixels kept around the cloud's footprint; defaults to closing
  /// iterations + 1 so closing is never clipped by the border.
  std::optional<int> margin;
};

/// Bins a cloud into a slice stack. Pixel (col, row) of slice s covers
/// x in [ox + col * pitch, ox + (col + 1) * pitch), likewise y. The slice
/// planes are slice_spacing apart and centered on the cloud's z midpoint. Each
/// slice is turned into a solid region with closing plus hole filling.
inline SliceStack voxelize_to_stack(const PointCloud& cloud, double pixel_pitch, double slice_spacing,
                                    const VoxelizeOptions& opts = {}) {
  if (cloud.empty()) throw InvalidInputError("voxelize_to_stack: empty cloud");
  if (!(pixel_pitch > 0.0) || !(slice_spacing > 0.0)) throw InvalidInputError("voxelize_to_stack: pitches must be positive");
  const int margin = opts.margin.value_or(opts.region.closing_iterations + 1);
  const double band = opts.band_thickness.value_or(std::min(slice_spacing, 2.0 * pixel_pitch));
  const auto [lo, hi] = cloud.bounds();
  auto cells = [](double extent, double step) { return std::max(1, static_cast<int>(std::ceil(extent / step - 1e-9))); };
  const int core_w = cells(hi.x() - lo.x(), pixel_pitch);
  const int core_h = cells(hi.y() - lo.y(), pixel_pitch);
  const int nz = cells(hi.z() - lo.z(), slice_spacing);
  const int w = core_w + 2 * margin, h = core_h + 2 * margin;

  SliceStack stack;
  stack.manifest.modality = opts.modality;
  stack.manifest.pixel_spacing_mm = pixel_pitch;
  stack.manifest.slice_spacing_mm = slice_spacing;
  const double z_first = 0.5 * (lo.z() + hi.z()) - 0.5 * (nz - 1) * slice_spacing;
  std::vector<SliceMask> raw;
  for (int s = 0; s < nz; ++s) raw.emplace_back(w, h, s);
  for (const auto& p : cloud.points()) {
    const int col = std::clamp(static_cast<int>(std::floor((p.x() - lo.x()) / pixel_pitch)), 0, core_w - 1) + margin;
    const int row = std::clamp(static_cast<int>(std::floor((p.y() - lo.y()) / pixel_pitch)), 0, core_h - 1) + margin;
    const double rel = (p.z() - z_first) / slice_spacing;
    const double half = band / (2.0 * slice_spacing);
    const int first = std::max(0, static_cast<int>(std::floor(rel - half)));
    const int last = std::min(nz - 1, static_cast<int>(std::ceil(rel + half)));
    for (int s = first; s <= last; ++s) {
      const double center = z_first + s * slice_spacing;
      if (std::abs(p.z() - center) <= band / 2.0) raw[s].set(col, row);
    }
  }
  for (int s = 0; s < nz; ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "slice_%04d.pgm", s);
    stack.manifest.slice_files.emplace_back(name);
    stack.slices.push_back(form_region(raw[s], opts.region));
  }
  return stack;
}

}  // namespace csnicp
