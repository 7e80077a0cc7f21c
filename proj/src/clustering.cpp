#include "sceneflow/clustering.hpp"

#include <deque>

#include "sceneflow/errors.hpp"
#include "sceneflow/kd_tree.hpp"

namespace sceneflow {

std::vector<std::size_t> ClusterSet::members(std::int32_t label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) out.push_back(i);
  }
  return out;
}

ClusterSet dbscan(const PointCloud& cloud, double epsilon, int min_points) {
  if (epsilon <= 0.0) {
    throw InvalidArgumentError("dbscan: epsilon must be > 0");
  }
  if (min_points < 1) {
    throw InvalidArgumentError("dbscan: min_points must be >= 1");
  }

  constexpr std::int32_t kUnvisited = -2;
  constexpr std::int32_t kNoise = -1;

  ClusterSet out;
  out.labels.assign(cloud.size(), kUnvisited);
  if (cloud.empty()) {
    out.labels.clear();
    return out;
  }

  const KdTree tree(cloud);
  const auto neighbors = [&](std::size_t i) {
    return tree.radius_query(cloud.points[i], epsilon);
  };
  const std::size_t core_threshold = static_cast<std::size_t>(min_points);

  for (std::size_t seed = 0; seed < cloud.size(); ++seed) {
    if (out.labels[seed] != kUnvisited) continue;
    auto seed_neighbors = neighbors(seed);
    if (seed_neighbors.size() < core_threshold) {
      out.labels[seed] = kNoise;
      continue;
    }

    const std::int32_t cluster = out.cluster_count++;
    out.labels[seed] = cluster;
    std::deque<std::size_t> frontier(seed_neighbors.begin(),
                                     seed_neighbors.end());
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop_front();
      if (out.labels[p] == kNoise) {
        out.labels[p] = cluster;  // border point, reached by a core point
        continue;
      }
      if (out.labels[p] != kUnvisited) continue;
      out.labels[p] = cluster;
      auto nbrs = neighbors(p);
      if (nbrs.size() >= core_threshold) {
        frontier.insert(frontier.end(), nbrs.begin(), nbrs.end());
      }
    }
  }

  for (auto& l : out.labels) {
    if (l == kUnvisited) l = kNoise;
  }
  return out;
}

}  // namespace sceneflow
