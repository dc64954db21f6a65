#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <cstdint>
#include <vector>

#include "csnicp/error.hpp"
#include "csnicp/kdtree.hpp"
#include "csnicp/mask_io.hpp"
#include "csnicp/parallel.hpp"
#include "csnicp/point_cloud.hpp"
#include "csnicp/raster.hpp"

namespace csnicp {

/// Pixel counts with `pred` as the predicted mask and `truth` as ground truth.
struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;

  [[nodiscard]] std::uint64_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

inline void require_same_shape(const SliceMask& a, const SliceMask& b) {
  if (a.width != b.width || a.height != b.height) throw InvalidInputError("mask dimension mismatch");
}

inline ConfusionCounts confusion(const SliceMask& pred, const SliceMask& truth) {
  require_same_shape(pred, truth);
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.bits.size(); ++i) {
    const bool p = pred.bits[i] != 0, t = truth.bits[i] != 0;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline double iou(const ConfusionCounts& c) {
  const auto denom = c.tp + c.fn + c.fp;
  if (denom == 0) throw InvalidInputError("iou: both masks are empty");
  return static_cast<double>(c.tp) / static_cast<double>(denom);
}

inline double dice(const ConfusionCounts& c) {
  const auto denom = (c.tp + c.fn) + (c.tp + c.fp);
  if (denom == 0) throw InvalidInputError("dice: both masks are empty");
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

/// Root mean squared distance from each moving point to its nearest target
/// point. The mean runs over moving points only.
inline double rmse(const PointCloud& moving, const SpatialIndex& target_index) {
  if (moving.empty() || target_index.size() == 0) throw InvalidInputError("rmse: empty cloud");
  std::vector<double> sq(moving.size());
  parallel_for(moving.size(), [&](std::size_t i) {
    const auto j = target_index.nearest(moving[i]);
    sq[i] = (moving[i] - target_index.point(j)).squaredNorm();
  });
  double sum = 0.0;
  for (double v : sq) sum += v;
  return std::sqrt(sum / static_cast<double>(moving.size()));
}

inline double rmse(const PointCloud& moving, const PointCloud& target) {
  return rmse(moving, SpatialIndex(target));
}

/// Raster placement for reslicing: pixel (col, row) covers the point
/// (origin_x + col * pitch, origin_y + row * pitch).
struct ResliceGrid {
  int width = 0;
  int height = 0;
  double pitch = 1.0;
  double origin_x = 0.0;
  double origin_y = 0.0;
};

/// Rasterizes points with |z - z_center| <= thickness / 2 to their nearest
/// pixel, then forms a solid region (closing plus hole filling).
inline SliceMask reslice(const PointCloud& cloud, double z_center, double thickness, const ResliceGrid& grid,
                         const RegionOptions& region = {}) {
  if (!(thickness > 0.0)) throw InvalidInputError("reslice: thickness must be positive");
  if (grid.width <= 0 || grid.height <= 0 || !(grid.pitch > 0.0)) throw InvalidInputError("reslice: invalid grid");
  SliceMask m(grid.width, grid.height);
  for (const auto& p : cloud.points()) {
    if (std::abs(p.z() - z_center) > thickness / 2.0) continue;
    const auto col = static_cast<long>(std::lround((p.x() - grid.origin_x) / grid.pitch));
    const auto row = static_cast<long>(std::lround((p.y() - grid.origin_y) / grid.pitch));
    if (col >= 0 && row >= 0 && col < grid.width && row < grid.height) m.set(static_cast<int>(col), static_cast<int>(row));
  }
  return form_region(m, region);
}

struct SliceDisagreement {
  double d_mr = 0.0;  // fraction of MR area outside the common region
  double d_ct = 0.0;  // fraction of CT area outside the common region
};

inline SliceDisagreement d_mr_d_ct(const SliceMask& mr, const SliceMask& ct) {
  require_same_shape(mr, ct);
  std::uint64_t a_mr = 0, a_ct = 0, both = 0;
  for (std::size_t i = 0; i < mr.bits.size(); ++i) {
    a_mr += mr.bits[i] != 0;
    a_ct += ct.bits[i] != 0;
    both += (mr.bits[i] != 0) && (ct.bits[i] != 0);
  }
  if (a_mr == 0 || a_ct == 0) throw InvalidInputError("d_mr_d_ct: zero-area mask");
  return {1.0 - static_cast<double>(both) / static_cast<double>(a_mr),
          1.0 - static_cast<double>(both) / static_cast<double>(a_ct)};
}

struct OverlapReport {
  double iou = 0.0;
  double dice = 0.0;
  double d_mr = 0.0;
  double d_ct = 0.0;
  double rmse = 0.0;
};

/// Median distance from each point to its nearest other point.
inline double median_spacing(const PointCloud& cloud) {
  if (cloud.size() < 2) throw InvalidInputError("median_spacing: need at least 2 points");
  const SpatialIndex index(cloud);
  std::vector<double> d(cloud.size());
  parallel_for(cloud.size(), [&](std::size_t i) {
    const auto nn = index.knn(cloud[i], 2);
    d[i] = (cloud[nn[1]] - cloud[i]).norm();
  });
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  return d[d.size() / 2];
}

struct EvaluateOptions {
  /// Raster pitch; defaults to the target's median point spacing.
  std::optional<double> pitch;
  /// Slab thickness and slice step; defaults to twice the pitch.
  std::optional<double> thickness;
  RegionOptions region;
};

struct SliceEvaluation {
  double z = 0.0;
  std::size_t area_mr = 0;
  std::size_t area_ct = 0;
  double d_mr = 0.0;
  double d_ct = 0.0;
  double iou = 0.0;
  double dice = 0.0;
};

struct Evaluation {
  OverlapReport mean;  // slice metrics averaged over slices where both masks are non-empty
  std::vector<SliceEvaluation> slices;
  std::size_t skipped_slices = 0;
  double pitch = 0.0;
  double thickness = 0.0;
};

/// RMSE of the registered (MR) cloud against the target (CT) cloud, plus
/// per-slice D_MR, D_CT, IOU and Dice of masks resliced from both clouds.
/// Slices step through the shared z range; the CT mask is the reference.
inline Evaluation evaluate_overlap(const PointCloud& registered, const PointCloud& target, const EvaluateOptions& opts = {}) {
  if (registered.empty() || target.empty()) throw InvalidInputError("evaluate: empty cloud");
  Evaluation ev;
  ev.pitch = opts.pitch.value_or(median_spacing(target));
  ev.thickness = opts.thickness.value_or(2.0 * ev.pitch);
  if (!(ev.pitch > 0.0) || !(ev.thickness > 0.0)) throw InvalidInputError("evaluate: pitch and thickness must be positive");
  ev.mean.rmse = rmse(registered, target);

  const auto [rlo, rhi] = registered.bounds();
  const auto [tlo, thi] = target.bounds();
  const Point3 lo = rlo.cwiseMin(tlo), hi = rhi.cwiseMax(thi);
  const int margin = opts.region.closing_iterations + 2;
  ResliceGrid grid;
  grid.pitch = ev.pitch;
  grid.origin_x = lo.x() - margin * ev.pitch;
  grid.origin_y = lo.y() - margin * ev.pitch;
  grid.width = static_cast<int>(std::ceil((hi.x() - lo.x()) / ev.pitch)) + 1 + 2 * margin;
  grid.height = static_cast<int>(std::ceil((hi.y() - lo.y()) / ev.pitch)) + 1 + 2 * margin;

  const double z0 = std::max(rlo.z(), tlo.z()), z1 = std::min(rhi.z(), thi.z());
  std::size_t used = 0;
  for (double z = z0 + ev.thickness / 2.0; z <= z1 - ev.thickness / 2.0 + 1e-12; z += ev.thickness) {
    const auto mr = reslice(registered, z, ev.thickness, grid, opts.region);
    const auto ct = reslice(target, z, ev.thickness, grid, opts.region);
    SliceEvaluation se;
    se.z = z;
    se.area_mr = mr.area();
    se.area_ct = ct.area();
    if (se.area_mr == 0 || se.area_ct == 0) {
      ++ev.skipped_slices;
      continue;
    }
    const auto d = d_mr_d_ct(mr, ct);
    const auto c = confusion(mr, ct);
    se.d_mr = d.d_mr;
    se.d_ct = d.d_ct;
    se.iou = csnicp::iou(c);
    se.dice = csnicp::dice(c);
    ev.slices.push_back(se);
    ++used;
    ev.mean.d_mr += se.d_mr;
    ev.mean.d_ct += se.d_ct;
    ev.mean.iou += se.iou;
    ev.mean.dice += se.dice;
  }
  if (used == 0) {
    // Nothing overlaps in any slice: treat as total disagreement.
    ev.mean.d_mr = ev.mean.d_ct = 1.0;
    ev.mean.iou = ev.mean.dice = 0.0;
  } else {
    const double n = static_cast<double>(used);
    ev.mean.d_mr /= n;
    ev.mean.d_ct /= n;
    ev.mean.iou /= n;
    ev.mean.dice /= n;
  }
  return ev;
}

}  // namespace csnicp
