#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "csnicp/error.hpp"
#include "csnicp/mask_io.hpp"
#include "csnicp/parallel.hpp"
#include "csnicp/point_cloud.hpp"

namespace csnicp {

/// Binary voxel grid; bits are z-major: index = (z * ny + y) * nx + x.
struct MaskVolume {
  int nx = 0, ny = 0, nz = 0;
  Point3 pitch = Point3::Ones();
  std::vector<std::uint8_t> bits;

  MaskVolume() = default;
  MaskVolume(int x, int y, int z, Point3 p)
      : nx(x), ny(y), nz(z), pitch(std::move(p)), bits(static_cast<std::size_t>(x) * y * z, 0) {}

  [[nodiscard]] std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * ny + y) * nx + x;
  }
  [[nodiscard]] bool in_bounds(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < nx && y < ny && z < nz;
  }
  [[nodiscard]] std::uint8_t at(int x, int y, int z) const { return in_bounds(x, y, z) ? bits[index(x, y, z)] : 0; }
  void set(int x, int y, int z, std::uint8_t v = 1) { bits[index(x, y, z)] = v ? 1 : 0; }
};

/// Largest per-slice bone row span (max_row - min_row + 1) times pixel spacing.
inline double max_bone_extent_y(const SliceStack& stack) {
  int best = 0;
  for (const auto& s : stack.slices) {
    int lo = s.height, hi = -1;
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x)
        if (s.at(x, y)) {
          lo = std::min(lo, y);
          hi = std::max(hi, y);
          break;
        }
    if (hi >= lo) best = std::max(best, hi - lo + 1);
  }
  if (best == 0) throw InvalidInputError("no bone content in stack");
  return best * stack.manifest.pixel_spacing_mm;
}

/// In-plane factor that brings CT onto the MR scale; MR stays fixed.
inline double scale_factor(const SliceStack& ct, const SliceStack& mr) {
  const double ct_extent = max_bone_extent_y(ct);
  const double mr_extent = max_bone_extent_y(mr);
  return mr_extent / ct_extent;
}

/// Catmull-Rom segment between p1 (t = 0) and p2 (t = 1).
inline double catmull_rom(double p0, double p1, double p2, double p3, double t) {
  const double t2 = t * t, t3 = t2 * t;
  return 0.5 * (2.0 * p1 + (-p0 + p2) * t + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3);
}

/// Resamples the stack along z to `pitch` (default: the pixel spacing) with
/// Catmull-Rom per (x, y) column and replicated edge slices; values >= 0.5 are
/// bone. The output grid is isotropic with the given pitch.
inline MaskVolume interpolate_z(const SliceStack& stack, std::optional<double> pitch = std::nullopt) {
  stack.validate();
  const auto n = static_cast<int>(stack.slices.size());
  if (n < 2) throw InvalidInputError("interpolate_z: need at least 2 slices");
  const double p = pitch.value_or(stack.manifest.pixel_spacing_mm);
  if (!(p > 0.0)) throw InvalidInputError("interpolate_z: pitch must be positive");
  const double spacing = stack.manifest.slice_spacing_mm;
  const double span = (n - 1) * spacing;
  const int out_slices = static_cast<int>(std::floor(span / p + 1e-9)) + 1;
  const int w = stack.slices.front().width, h = stack.slices.front().height;

  MaskVolume vol(w, h, out_slices, Point3::Constant(p));
  parallel_for(static_cast<std::size_t>(out_slices), [&](std::size_t j) {
    double u = static_cast<double>(j) * p / spacing;
    if (std::abs(u - std::round(u)) < 1e-9) u = std::round(u);
    int i = std::min(static_cast<int>(std::floor(u)), n - 2);
    const double t = u - i;
    const auto& s0 = stack.slices[std::max(i - 1, 0)];
    const auto& s1 = stack.slices[i];
    const auto& s2 = stack.slices[i + 1];
    const auto& s3 = stack.slices[std::min(i + 2, n - 1)];
    const auto zj = static_cast<int>(j);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double v = catmull_rom(s0.at(x, y), s1.at(x, y), s2.at(x, y), s3.at(x, y), t);
        if (v >= 0.5) vol.set(x, y, zj);
      }
  });
  return vol;
}

enum class SurfaceMode { Surface, FullVoxel };

/// Bone voxel centers (x * pitch.x, y * pitch.y, z * pitch.z) in (z, y, x)
/// order. Surface mode keeps voxels with at least one empty 6-neighbor, where
/// out-of-bounds counts as empty.
inline PointCloud extract_surface(const MaskVolume& vol, SurfaceMode mode = SurfaceMode::Surface) {
  static constexpr std::array<std::array<int, 3>, 6> kNeighbors{
      {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
  std::vector<Point3> pts;
  for (int z = 0; z < vol.nz; ++z)
    for (int y = 0; y < vol.ny; ++y)
      for (int x = 0; x < vol.nx; ++x) {
        if (!vol.bits[vol.index(x, y, z)]) continue;
        bool keep = mode == SurfaceMode::FullVoxel;
        for (const auto& d : kNeighbors) {
          if (keep) break;
          keep = !vol.at(x + d[0], y + d[1], z + d[2]);
        }
        if (keep) pts.emplace_back(x * vol.pitch.x(), y * vol.pitch.y(), z * vol.pitch.z());
      }
  return PointCloud(std::move(pts));
}

struct BuildOptions {
  SurfaceMode mode = SurfaceMode::Surface;
  /// Divisor applied to every coordinate. Defaults to in_plane_scale times the
  /// stack's own max Y extent, which equals the MR extent once CT is scaled.
  std::optional<double> normalizer;
};

/// Mask stack -> normalized point cloud: in-plane scaling, z interpolation to
/// the scaled pixel pitch, voxel extraction, then division by the normalizer.
inline PointCloud build_point_cloud(const SliceStack& stack, double in_plane_scale, const BuildOptions& opts = {}) {
  if (!(in_plane_scale > 0.0)) throw InvalidInputError("build_point_cloud: scale must be positive");
  const double extent = max_bone_extent_y(stack);
  const double pitch = in_plane_scale * stack.manifest.pixel_spacing_mm;
  const double normalizer = opts.normalizer.value_or(in_plane_scale * extent);
  if (!(normalizer > 0.0)) throw InvalidInputError("build_point_cloud: normalizer must be positive");
  const auto raw = extract_surface(interpolate_z(stack, pitch), opts.mode);
  std::vector<Point3> pts;
  pts.reserve(raw.size());
  for (const auto& p : raw.points()) pts.push_back(p / normalizer);
  return PointCloud(std::move(pts));
}

}  // namespace csnicp
