#pragma once

#include <cstdint>
#include <vector>

#include "sceneflow/types.hpp"

namespace sceneflow {

struct ClusterSet {
  // Per-point label: -1 = noise, 0..cluster_count-1 = cluster id.
  std::vector<std::int32_t> labels;
  std::int32_t cluster_count = 0;

  // Indices of every point carrying the given label, ascending.
  std::vector<std::size_t> members(std::int32_t label) const;
};

// Classic DBSCAN. The neighbor count includes the query point itself, so a
// point is core iff |{q : d(p,q) <= epsilon}| >= min_points. Expansion
// order is ascending point index, which makes border-point assignment (and
// therefore the whole labeling) deterministic.
ClusterSet dbscan(const PointCloud& cloud, double epsilon, int min_points);

}  // namespace sceneflow
