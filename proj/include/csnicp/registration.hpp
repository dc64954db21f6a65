#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "csnicp/error.hpp"
#include "csnicp/features.hpp"
#include "csnicp/kdtree.hpp"
#include "csnicp/metrics.hpp"
#include "csnicp/parallel.hpp"
#include "csnicp/point_cloud.hpp"
#include "csnicp/transform.hpp"

namespace csnicp {

struct CsnIcpConfig {
  std::size_t k = 20;
  /// Refinement ball radius; defaults to 2% of the target bounding-box diagonal.
  std::optional<double> r_th;
  /// Pairs are kept while d_c <= multiplier * median(d_c) (same for d_s).
  /// An infinite multiplier disables that test.
  double dc_reject_multiplier = 3.0;
  double ds_reject_multiplier = 3.0;
  /// Absolute cutoffs replace the median-relative ones when set.
  std::optional<double> dc_reject_absolute;
  std::optional<double> ds_reject_absolute;
  int max_iterations = 100;
  double rmse_tolerance = 1e-6;
  std::size_t partitions = 2;
  FeatureWeights feature_weights;
  /// Translate the source centroid onto the target centroid before iterating.
  bool centroid_prealign = true;
  /// Keep the accepted (source, target) index pairs of every iteration.
  bool record_correspondences = false;

  void validate() const {
    auto positive = [](double v) { return v > 0.0; };
    if (k < 3) throw InvalidInputError("config: k must be at least 3");
    if (r_th && !positive(*r_th)) throw InvalidInputError("config: r_th must be positive");
    if (!positive(dc_reject_multiplier) || !positive(ds_reject_multiplier))
      throw InvalidInputError("config: rejection multipliers must be positive");
    if ((dc_reject_absolute && !positive(*dc_reject_absolute)) || (ds_reject_absolute && !positive(*ds_reject_absolute)))
      throw InvalidInputError("config: absolute rejection thresholds must be positive");
    if (max_iterations < 1) throw InvalidInputError("config: max_iterations must be positive");
    if (!positive(rmse_tolerance)) throw InvalidInputError("config: rmse_tolerance must be positive");
    if (partitions < 1) throw InvalidInputError("config: partitions must be at least 1");
    if (feature_weights.r < 0 || feature_weights.phi < 0 || feature_weights.theta < 0)
      throw InvalidInputError("config: feature weights must be non-negative");
  }
};

struct Correspondence {
  std::size_t source_index = 0;
  std::size_t target_index = 0;
  double cartesian_distance = 0.0;
  double feature_distance = 0.0;
};

using CorrespondenceSet = std::vector<std::pair<std::size_t, std::size_t>>;

struct RegistrationReport {
  std::string algorithm;
  double initial_rmse = 0.0;
  /// RMSE of the whole source after each iteration.
  std::vector<double> per_iteration_rmse;
  /// One transform per partition, applied to partition_members[i].
  std::vector<RigidTransform> final_transforms;
  std::vector<std::vector<std::size_t>> partition_members;
  std::size_t accepted_pairs = 0;
  std::size_t rejected_pairs = 0;
  bool converged = false;
  int iterations_used = 0;
  double final_rmse = 0.0;
  std::vector<CorrespondenceSet> correspondence_trace;

  [[nodiscard]] const RigidTransform& transform() const { return final_transforms.front(); }
};

/// Two-stage matching: Cartesian nearest neighbor p', then the candidate in
/// the r_th-ball around p' with the smallest weighted feature distance. Ties
/// keep p', then the lowest index.
inline std::vector<Correspondence> find_correspondences(const PointCloud& source, const PointCloud& target,
                                                        const SpatialIndex& target_index, double r_th,
                                                        const FeatureWeights& weights = {}) {
  if (target.empty() || target_index.size() == 0) throw InvalidInputError("find_correspondences: empty target");
  if (!(r_th > 0.0)) throw InvalidInputError("find_correspondences: r_th must be positive");
  const auto& sf = source.features();
  const auto& tf = target.features();
  const bool refine = weights.r != 0.0 || weights.phi != 0.0 || weights.theta != 0.0;
  std::vector<Correspondence> out(source.size());
  parallel_for(source.size(), [&](std::size_t i) {
    const std::size_t primary = target_index.nearest(source[i]);
    std::size_t best = primary;
    double best_ds = feature_distance(sf[i], tf[primary], weights);
    if (refine) {
      for (auto c : target_index.radius_neighbors(target[primary], r_th)) {
        const double ds = feature_distance(sf[i], tf[c], weights);
        if (ds < best_ds) {
          best = c;
          best_ds = ds;
        }
      }
    }
    out[i] = {i, best, cartesian_distance(source[i], target[best]), best_ds};
  });
  return out;
}

namespace detail {

inline double median(std::vector<double> v) {
  const auto mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lo + hi);
}

// +inf when the test is disabled (infinite multiplier or all-zero median).
inline double cutoff(const std::vector<double>& values, double multiplier, const std::optional<double>& absolute) {
  if (absolute) return *absolute;
  if (std::isinf(multiplier)) return std::numeric_limits<double>::infinity();
  const double med = median(values);
  return med > 0.0 ? multiplier * med : std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Drops pairs whose d_c or d_s exceeds its threshold. Throws DivergenceError
/// when fewer than 3 pairs survive.
inline std::vector<Correspondence> reject_pairs(const std::vector<Correspondence>& pairs, const CsnIcpConfig& config) {
  if (pairs.empty()) throw InvalidInputError("reject_pairs: no pairs");
  std::vector<double> dc, ds;
  dc.reserve(pairs.size());
  ds.reserve(pairs.size());
  for (const auto& p : pairs) {
    dc.push_back(p.cartesian_distance);
    ds.push_back(p.feature_distance);
  }
  const double dc_cut = detail::cutoff(dc, config.dc_reject_multiplier, config.dc_reject_absolute);
  const double ds_cut = detail::cutoff(ds, config.ds_reject_multiplier, config.ds_reject_absolute);
  std::vector<Correspondence> kept;
  kept.reserve(pairs.size());
  for (const auto& p : pairs)
    if (p.cartesian_distance <= dc_cut && p.feature_distance <= ds_cut) kept.push_back(p);
  if (kept.size() < 3)
    throw DivergenceError("reject_pairs: only " + std::to_string(kept.size()) + " pairs survived rejection");
  return kept;
}

namespace detail {

enum class Matcher { CsnIcp, Classic };

struct Run {
  RegistrationReport report;
  std::vector<RigidTransform> history;  // total transform after each iteration
  RigidTransform best;
};

struct TargetModel {
  const PointCloud& cloud;  // with features for CSN-ICP
  const SpatialIndex& index;
  double r_th;
};

inline Run iterate(const PointCloud& source, const TargetModel& target, const CsnIcpConfig& config,
                   RigidTransform total, Matcher matcher) {
  Run run;
  auto& rep = run.report;
  rep.algorithm = matcher == Matcher::CsnIcp ? "csn_icp" : "icp";
  rep.partition_members.emplace_back(source.size());
  std::iota(rep.partition_members.front().begin(), rep.partition_members.front().end(), std::size_t{0});

  const auto& tpts = target.cloud.points();
  std::vector<Point3> moved(source.size());
  auto move_all = [&](const RigidTransform& t) {
    for (std::size_t i = 0; i < source.size(); ++i) moved[i] = t(source[i]);
  };
  auto current_rmse = [&]() {
    std::vector<double> sq(moved.size());
    parallel_for(moved.size(), [&](std::size_t i) {
      sq[i] = (moved[i] - tpts[target.index.nearest(moved[i])]).squaredNorm();
    });
    double s = 0.0;
    for (double v : sq) s += v;
    return std::sqrt(s / static_cast<double>(moved.size()));
  };

  move_all(total);
  double prev = current_rmse();
  rep.initial_rmse = prev;
  double best_rmse = prev;
  run.best = total;

  for (int it = 0; it < config.max_iterations; ++it) {
    std::vector<Correspondence> accepted;
    if (matcher == Matcher::CsnIcp) {
      const auto with_features = estimate_features(PointCloud(moved), config.k);
      if (with_features.size() != moved.size())
        throw DegenerateGeometryError("registration: source points collapsed onto each other");
      const auto pairs = find_correspondences(with_features, target.cloud, target.index, target.r_th,
                                              config.feature_weights);
      accepted = reject_pairs(pairs, config);
      rep.rejected_pairs = pairs.size() - accepted.size();
    } else {
      accepted.resize(moved.size());
      parallel_for(moved.size(), [&](std::size_t i) {
        const auto j = target.index.nearest(moved[i]);
        accepted[i] = {i, j, cartesian_distance(moved[i], tpts[j]), 0.0};
      });
      rep.rejected_pairs = 0;
    }
    rep.accepted_pairs = accepted.size();

    std::vector<Point3> src, dst;
    src.reserve(accepted.size());
    dst.reserve(accepted.size());
    for (const auto& c : accepted) {
      src.push_back(moved[c.source_index]);
      dst.push_back(tpts[c.target_index]);
    }
    if (config.record_correspondences) {
      CorrespondenceSet set;
      set.reserve(accepted.size());
      for (const auto& c : accepted) set.emplace_back(c.source_index, c.target_index);
      rep.correspondence_trace.push_back(std::move(set));
    }

    total = solve_rigid(src, dst).compose(total);
    move_all(total);
    const double now = current_rmse();
    rep.per_iteration_rmse.push_back(now);
    run.history.push_back(total);
    rep.iterations_used = it + 1;
    if (now < best_rmse) {
      best_rmse = now;
      run.best = total;
    }
    if (std::abs(now - prev) < config.rmse_tolerance) {
      rep.converged = true;
      break;
    }
    prev = now;
  }
  rep.final_transforms = {run.best};
  rep.final_rmse = best_rmse;
  return run;
}

inline RigidTransform centroid_alignment(const PointCloud& source, const PointCloud& target) {
  RigidTransform t;
  t.translation = target.centroid() - source.centroid();
  return t;
}

inline double default_r_th(const PointCloud& target, const CsnIcpConfig& config) {
  if (config.r_th) return *config.r_th;
  const double diag = target.bounding_diagonal();
  return diag > 0.0 ? 0.02 * diag : 1.0;
}

inline void check_inputs(const PointCloud& source, const PointCloud& target, std::size_t min_points) {
  if (source.empty() || target.empty()) throw InvalidInputError("registration: empty cloud");
  if (source.size() < min_points || target.size() < min_points)
    throw DegenerateGeometryError("registration: clouds need at least " + std::to_string(min_points) + " points");
}

}  // namespace detail

/// CSN-ICP: feature-refined correspondences, median-relative rejection and a
/// Kabsch solve per iteration. Target features are estimated once; source
/// features are re-estimated on the moved cloud every iteration.
///
/// The reported transform is the iterate with the lowest RMSE (the initial
/// pose included), so final_rmse never exceeds initial_rmse.
inline RegistrationReport csn_icp(const PointCloud& source, const PointCloud& target, const CsnIcpConfig& config) {
  config.validate();
  detail::check_inputs(source, target, std::max<std::size_t>(config.k, 3));
  const auto target_features = estimate_features(target, config.k);
  const SpatialIndex index(target);
  const detail::TargetModel model{target_features, index, detail::default_r_th(target, config)};
  const auto initial = config.centroid_prealign ? detail::centroid_alignment(source, target) : RigidTransform{};
  return detail::iterate(source, model, config, initial, detail::Matcher::CsnIcp).report;
}

/// Point-to-point ICP: nearest-neighbor pairs, no refinement, no rejection.
inline RegistrationReport icp_classic(const PointCloud& source, const PointCloud& target, const CsnIcpConfig& config) {
  config.validate();
  detail::check_inputs(source, target, 3);
  const SpatialIndex index(target);
  const detail::TargetModel model{target, index, 1.0};
  const auto initial = config.centroid_prealign ? detail::centroid_alignment(source, target) : RigidTransform{};
  return detail::iterate(source, model, config, initial, detail::Matcher::Classic).report;
}

/// Source mapped through the report's per-partition transforms, in source order.
inline PointCloud transformed_source(const PointCloud& source, const RegistrationReport& report) {
  std::vector<Point3> out(source.points());
  for (std::size_t b = 0; b < report.partition_members.size(); ++b)
    for (auto i : report.partition_members[b]) out[i] = report.final_transforms[b](source[i]);
  return PointCloud(std::move(out));
}

/// Source sorted by x (then index) into `partitions` contiguous equal-count
/// bins, each registered against the full target with CSN-ICP from a shared
/// initial pose.
inline RegistrationReport partition_register(const PointCloud& source, const PointCloud& target,
                                             const CsnIcpConfig& config) {
  config.validate();
  if (config.partitions == 1) return csn_icp(source, target, config);
  detail::check_inputs(source, target, std::max<std::size_t>(config.k, 3));

  const std::size_t n = source.size(), parts = config.partitions;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return source[a].x() < source[b].x(); });

  std::vector<std::vector<std::size_t>> bins(parts);
  for (std::size_t b = 0; b < parts; ++b) {
    bins[b].assign(order.begin() + static_cast<std::ptrdiff_t>(b * n / parts),
                   order.begin() + static_cast<std::ptrdiff_t>((b + 1) * n / parts));
    if (bins[b].size() < config.k)
      throw InvalidInputError("partition_register: partition " + std::to_string(b) + " has fewer than k points");
  }

  const auto target_features = estimate_features(target, config.k);
  const SpatialIndex index(target);
  const detail::TargetModel model{target_features, index, detail::default_r_th(target, config)};
  const auto initial = config.centroid_prealign ? detail::centroid_alignment(source, target) : RigidTransform{};

  std::vector<detail::Run> runs;
  runs.reserve(parts);
  for (const auto& bin : bins) runs.push_back(detail::iterate(source.subset(bin), model, config, initial, detail::Matcher::CsnIcp));

  RegistrationReport rep;
  rep.algorithm = "csn_icp";
  rep.partition_members = bins;
  rep.converged = true;
  for (const auto& run : runs) {
    rep.final_transforms.push_back(run.best);
    rep.accepted_pairs += run.report.accepted_pairs;
    rep.rejected_pairs += run.report.rejected_pairs;
    rep.converged = rep.converged && run.report.converged;
    rep.iterations_used = std::max(rep.iterations_used, run.report.iterations_used);
  }

  auto union_rmse = [&](auto&& transform_of_bin) {
    std::vector<Point3> pts(source.points());
    for (std::size_t b = 0; b < parts; ++b) {
      const RigidTransform t = transform_of_bin(b);
      for (auto i : bins[b]) pts[i] = t(source[i]);
    }
    return rmse(PointCloud(std::move(pts)), index);
  };
  rep.initial_rmse = union_rmse([&](std::size_t) { return initial; });
  for (int it = 0; it < rep.iterations_used; ++it) {
    rep.per_iteration_rmse.push_back(union_rmse([&](std::size_t b) {
      const auto& h = runs[b].history;
      return h[std::min<std::size_t>(static_cast<std::size_t>(it), h.size() - 1)];
    }));
  }
  rep.final_rmse = union_rmse([&](std::size_t b) { return runs[b].best; });
  return rep;
}

}  // namespace csnicp
