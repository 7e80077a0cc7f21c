#pragma once

#include <cstddef>
#include <vector>

#include "sceneflow/types.hpp"

namespace sceneflow {

struct NearestResult {
  std::size_t index = 0;
  double distance = 0.0;
};

// Exact 3-d KD-tree over a PointCloud. Queries return the same results as a
// brute-force scan: nearest-neighbor ties are broken by the lowest point
// index and radius queries use a closed bound (d <= r). The tree keeps a
// copy of the points and is immutable after construction, so concurrent
// read queries are safe.
class KdTree {
 public:
  explicit KdTree(const PointCloud& cloud, int leaf_size = 16);

  std::size_t size() const { return points_.size(); }

  NearestResult nearest(const Vec3& query) const;

  // Indices with distance <= r, ascending.
  std::vector<std::size_t> radius_query(const Vec3& query, double r) const;

 private:
  struct Node {
    int axis = -1;          // -1 marks a leaf
    double split = 0.0;
    std::size_t begin = 0;  // leaf range into order_
    std::size_t end = 0;
    int left = -1;
    int right = -1;
  };

  int build(std::size_t begin, std::size_t end);
  void nearest_impl(int node, const Vec3& query, NearestResult& best) const;
  void radius_impl(int node, const Vec3& query, double r2,
                   std::vector<std::size_t>& hits) const;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
  int leaf_size_;
};

}  // namespace sceneflow
