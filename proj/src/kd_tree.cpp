#include "sceneflow/kd_tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "sceneflow/errors.hpp"

namespace sceneflow {

KdTree::KdTree(const PointCloud& cloud, int leaf_size)
    : points_(cloud.points), leaf_size_(std::max(1, leaf_size)) {
  if (points_.empty()) {
    throw InvalidArgumentError("KdTree: cannot index an empty cloud");
  }
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  nodes_.reserve(2 * points_.size() / static_cast<std::size_t>(leaf_size_) + 2);
  root_ = build(0, points_.size());
}

int KdTree::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();

  if (end - begin <= static_cast<std::size_t>(leaf_size_)) {
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    return id;
  }

  Vec3 lo = points_[order_[begin]];
  Vec3 hi = lo;
  for (std::size_t i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  const Vec3 spread = hi - lo;
  int axis = 0;
  if (spread.y() > spread[axis]) axis = 1;
  if (spread.z() > spread[axis]) axis = 2;

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) {
                     const double ca = points_[a][axis];
                     const double cb = points_[b][axis];
                     if (ca != cb) return ca < cb;
                     return a < b;  // deterministic layout on ties
                   });

  nodes_[id].axis = axis;
  nodes_[id].split = points_[order_[mid]][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

NearestResult KdTree::nearest(const Vec3& query) const {
  NearestResult best;
  best.index = std::numeric_limits<std::size_t>::max();
  best.distance = std::numeric_limits<double>::infinity();  // squared here
  nearest_impl(root_, query, best);
  best.distance = std::sqrt(best.distance);
  return best;
}

void KdTree::nearest_impl(int node, const Vec3& query,
                          NearestResult& best) const {
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  if (n.axis < 0) {
    for (std::size_t i = n.begin; i < n.end; ++i) {
      const std::size_t idx = order_[i];
      const double d2 = (points_[idx] - query).squaredNorm();
      if (d2 < best.distance ||
          (d2 == best.distance && idx < best.index)) {
        best.distance = d2;
        best.index = idx;
      }
    }
    return;
  }
  const double diff = query[n.axis] - n.split;
  const int near = diff < 0.0 ? n.left : n.right;
  const int far = diff < 0.0 ? n.right : n.left;
  nearest_impl(near, query, best);
  // <= so an equidistant lower-index point across the plane is still found.
  if (diff * diff <= best.distance) nearest_impl(far, query, best);
}

std::vector<std::size_t> KdTree::radius_query(const Vec3& query,
                                              double r) const {
  if (r <= 0.0) {
    throw InvalidArgumentError("KdTree::radius_query: r must be > 0");
  }
  std::vector<std::size_t> hits;
  radius_impl(root_, query, r * r, hits);
  std::sort(hits.begin(), hits.end());
  return hits;
}

void KdTree::radius_impl(int node, const Vec3& query, double r2,
                         std::vector<std::size_t>& hits) const {
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  if (n.axis < 0) {
    for (std::size_t i = n.begin; i < n.end; ++i) {
      const std::size_t idx = order_[i];
      if ((points_[idx] - query).squaredNorm() <= r2) hits.push_back(idx);
    }
    return;
  }
  const double diff = query[n.axis] - n.split;
  const int near = diff < 0.0 ? n.left : n.right;
  const int far = diff < 0.0 ? n.right : n.left;
  radius_impl(near, query, r2, hits);
  if (diff * diff <= r2) radius_impl(far, query, r2, hits);
}

}  // namespace sceneflow
