#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

#include "csnicp/error.hpp"
#include "csnicp/point_cloud.hpp"

namespace csnicp {

/// Immutable k-d tree over a snapshot of a cloud's points.
///
/// Answers are exactly those of a brute-force scan: knn orders candidates by
/// (squared distance, index), and radius queries return every index with
/// Euclidean distance <= radius, ascending.
class SpatialIndex {
 public:
  explicit SpatialIndex(const PointCloud& cloud) : SpatialIndex(cloud.points()) {}

  explicit SpatialIndex(std::vector<Point3> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::uint32_t{0});
    if (!points_.empty()) {
      nodes_.reserve(2 * points_.size() / kLeafSize + 2);
      build(0, static_cast<std::uint32_t>(points_.size()));
    }
  }

  [[nodiscard]] std::size_t size() const { return points_.size(); }
  [[nodiscard]] const Point3& point(std::size_t i) const { return points_[i]; }

  [[nodiscard]] std::vector<std::size_t> knn(const Point3& query, std::size_t k) const {
    if (k == 0) throw InvalidInputError("knn: k must be positive");
    if (k > points_.size()) throw InvalidInputError("knn: k exceeds cloud size");
    Heap heap;
    search_knn(0, query, k, heap);
    std::vector<std::size_t> out(heap.size());
    for (std::size_t i = heap.size(); i-- > 0;) {
      out[i] = heap.top().second;
      heap.pop();
    }
    return out;
  }

  [[nodiscard]] std::size_t nearest(const Point3& query) const { return knn(query, 1).front(); }

  [[nodiscard]] std::vector<std::size_t> radius_neighbors(const Point3& center, double radius) const {
    if (!(radius > 0.0)) throw InvalidInputError("radius_neighbors: radius must be positive");
    std::vector<std::size_t> out;
    if (!points_.empty()) search_radius(0, center, radius, out);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  static constexpr std::uint32_t kLeafSize = 12;

  struct Node {
    std::uint32_t begin, end;
    std::int32_t left = -1, right = -1;  // -1 for leaves
    int axis = 0;
    double split = 0.0;
  };

  // Max-heap on (squared distance, index): top is the current worst candidate.
  using Entry = std::pair<double, std::size_t>;
  using Heap = std::priority_queue<Entry>;

  std::int32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= kLeafSize) return id;

    Point3 lo = points_[order_[begin]], hi = lo;
    for (auto i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] == lo[axis]) return id;  // all points coincide along every axis

    const auto mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) { return points_[a][axis] < points_[b][axis]; });
    const double split = points_[order_[mid]][axis];
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    const auto l = build(begin, mid);
    const auto r = build(mid, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  void search_knn(std::int32_t id, const Point3& q, std::size_t k, Heap& heap) const {
    const Node& node = nodes_[id];
    if (node.left < 0) {
      for (auto i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        const Entry e{(points_[idx] - q).squaredNorm(), idx};
        if (heap.size() < k) {
          heap.push(e);
        } else if (e < heap.top()) {
          heap.pop();
          heap.push(e);
        }
      }
      return;
    }
    // Left holds coordinates <= split, right holds coordinates >= split.
    const double diff = q[node.axis] - node.split;
    const auto near = diff < 0.0 ? node.left : node.right;
    const auto far = diff < 0.0 ? node.right : node.left;
    search_knn(near, q, k, heap);
    // Equality must still descend: an equidistant point with a lower index may hide there.
    if (heap.size() < k || diff * diff <= heap.top().first) search_knn(far, q, k, heap);
  }

  void search_radius(std::int32_t id, const Point3& c, double radius, std::vector<std::size_t>& out) const {
    const Node& node = nodes_[id];
    if (node.left < 0) {
      for (auto i = node.begin; i < node.end; ++i)
        if ((points_[order_[i]] - c).norm() <= radius) out.push_back(order_[i]);
      return;
    }
    // Slack covers sqrt rounding in the leaf test; leaves still apply the exact criterion.
    const double diff = c[node.axis] - node.split;
    const double reach = radius * (1.0 + 1e-12);
    if (diff <= reach) search_radius(node.left, c, radius, out);
    if (-diff <= reach) search_radius(node.right, c, radius, out);
  }

  std::vector<Point3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace csnicp
