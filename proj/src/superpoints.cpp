#include "uniseg/errors.hpp"
#include "uniseg/rng.hpp"
#include "uniseg/scene.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <queue>

namespace uniseg {

NeighborTable knn(const Points& points, int k) {
  const auto n = static_cast<int>(points.rows());
  if (k < 1 || k > n - 1) {
    throw ContractError("knn: k = " + std::to_string(k) + " needs at least k + 1 points, got " +
                        std::to_string(n));
  }
  NeighborTable table(n, k);
  std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(n - 1));
  for (int i = 0; i < n; ++i) {
    std::size_t w = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      dist[w++] = {(points.row(i) - points.row(j)).squaredNorm(), j};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    for (int c = 0; c < k; ++c) table(i, c) = dist[static_cast<std::size_t>(c)].second;
  }
  return table;
}

namespace {

using Adjacency = std::vector<std::vector<int>>;

Adjacency symmetric_graph(const NeighborTable& nb, const std::vector<int>* segment) {
  Adjacency adj(static_cast<std::size_t>(nb.rows()));
  for (Index i = 0; i < nb.rows(); ++i) {
    for (Index c = 0; c < nb.cols(); ++c) {
      const int j = nb(i, c);
      if (segment && (*segment)[static_cast<std::size_t>(i)] != (*segment)[static_cast<std::size_t>(j)]) {
        continue;
      }
      adj[static_cast<std::size_t>(i)].push_back(j);
      adj[static_cast<std::size_t>(j)].push_back(static_cast<int>(i));
    }
  }
  for (auto& list : adj) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return adj;
}

// Quotas proportional to segment size, each >= 1 and <= size, summing to
// max(target, #segments) where sizes permit (largest remainder).
std::vector<int> allocate(const std::vector<int>& sizes, int target, int total) {
  std::vector<int> quota(sizes.size());
  std::vector<std::pair<double, std::size_t>> remainder;
  int used = 0;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    const double exact = static_cast<double>(target) * sizes[s] / total;
    quota[s] = std::clamp(static_cast<int>(std::floor(exact)), 1, sizes[s]);
    remainder.emplace_back(-(exact - std::floor(exact)), s);
    used += quota[s];
  }
  std::sort(remainder.begin(), remainder.end());
  for (std::size_t r = 0; used < target && r < remainder.size(); ++r) {
    const std::size_t s = remainder[r].second;
    if (quota[s] < sizes[s]) {
      ++quota[s];
      ++used;
    }
  }
  return quota;
}

}  // namespace

std::vector<int> compute_superpoints(const Scene& scene, int target, std::uint64_t seed) {
  const int n = scene.num_points();
  if (target < 1) throw ContractError("compute_superpoints: target must be >= 1");
  if (target > n) {
    throw ContractError("compute_superpoints: target " + std::to_string(target) + " exceeds " +
                        std::to_string(n) + " points");
  }
  if (n == 1) return {0};

  // Segments never share a superpoint.
  std::map<std::pair<int, int>, int> key_to_segment;
  std::vector<int> segment(static_cast<std::size_t>(n));
  std::vector<std::vector<int>> members;
  for (int i = 0; i < n; ++i) {
    const auto key = std::make_pair(scene.instance_id[static_cast<std::size_t>(i)],
                                    scene.semantic_id[static_cast<std::size_t>(i)]);
    auto [it, inserted] = key_to_segment.emplace(key, static_cast<int>(members.size()));
    if (inserted) members.emplace_back();
    segment[static_cast<std::size_t>(i)] = it->second;
    members[static_cast<std::size_t>(it->second)].push_back(i);
  }
  if (static_cast<int>(members.size()) > 2 * target) {
    throw ContractError("compute_superpoints: target " + std::to_string(target) +
                        " too small for " + std::to_string(members.size()) +
                        " instance-pure segments");
  }

  const NeighborTable nb = knn(scene.points, std::min(8, n - 1));
  const Adjacency adj = symmetric_graph(nb, &segment);
  std::vector<int> sizes;
  for (const auto& m : members) sizes.push_back(static_cast<int>(m.size()));
  const std::vector<int> quota = allocate(sizes, target, n);

  auto weight = [&](int a, int b) {
    return (scene.points.row(a) - scene.points.row(b)).norm() +
           (scene.colors.row(a) - scene.colors.row(b)).norm();
  };

  std::vector<int> label(static_cast<std::size_t>(n), -1);
  int next_id = 0;
  Rng rng(seed);
  for (std::size_t s = 0; s < members.size(); ++s) {
    const std::vector<int>& pts = members[s];
    Rng seg_rng = rng.split(s);

    // Farthest-point seeds.
    std::vector<int> seeds{pts[seg_rng.index(pts.size())]};
    std::vector<double> nearest(pts.size(), std::numeric_limits<double>::infinity());
    while (static_cast<int>(seeds.size()) < quota[s]) {
      double best = -1.0;
      int pick = -1;
      for (std::size_t k = 0; k < pts.size(); ++k) {
        nearest[k] = std::min(nearest[k], (scene.points.row(pts[k]) - scene.points.row(seeds.back())).norm());
        if (nearest[k] > best) {
          best = nearest[k];
          pick = pts[k];
        }
      }
      if (best <= 0.0) break;
      seeds.push_back(pick);
    }

    // Multi-source Dijkstra over the segment's graph.
    using Item = std::pair<double, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> frontier;
    std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
    for (int sp : seeds) {
      label[static_cast<std::size_t>(sp)] = next_id++;
      dist[static_cast<std::size_t>(sp)] = 0.0;
      frontier.emplace(0.0, sp);
    }
    while (!frontier.empty()) {
      const auto [d, p] = frontier.top();
      frontier.pop();
      if (d > dist[static_cast<std::size_t>(p)]) continue;
      for (int q : adj[static_cast<std::size_t>(p)]) {
        const double nd = d + weight(p, q);
        if (nd < dist[static_cast<std::size_t>(q)]) {
          dist[static_cast<std::size_t>(q)] = nd;
          label[static_cast<std::size_t>(q)] = label[static_cast<std::size_t>(p)];
          frontier.emplace(nd, q);
        }
      }
    }

    // Points the seeds cannot reach form their own connected superpoints.
    for (int p : pts) {
      if (label[static_cast<std::size_t>(p)] >= 0) continue;
      const int id = next_id++;
      std::deque<int> queue{p};
      label[static_cast<std::size_t>(p)] = id;
      while (!queue.empty()) {
        const int u = queue.front();
        queue.pop_front();
        for (int q : adj[static_cast<std::size_t>(u)]) {
          if (label[static_cast<std::size_t>(q)] < 0) {
            label[static_cast<std::size_t>(q)] = id;
            queue.push_back(q);
          }
        }
      }
    }
  }
  return label;
}

PseudoMaskSet generate_pseudo_masks(const Scene& scene, std::uint64_t seed,
                                    const PseudoMaskOptions& options) {
  const int n = scene.num_points();
  PseudoMaskSet out;
  if (n < 2) return out;
  const int k = std::min(8, n - 1);
  const NeighborTable nb = knn(scene.points, k);
  const Adjacency adj = symmetric_graph(nb, nullptr);

  std::vector<double> radius;
  radius.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    radius.push_back((scene.points.row(i) - scene.points.row(nb(i, k - 1))).norm());
  }
  std::nth_element(radius.begin(), radius.begin() + n / 2, radius.end());
  const double max_edge = options.spatial_factor * radius[static_cast<std::size_t>(n / 2)];

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<int> label(static_cast<std::size_t>(n), -1);
  int regions = 0;
  for (int start : order) {
    if (label[static_cast<std::size_t>(start)] >= 0) continue;
    const int id = regions++;
    std::vector<int> region{start};
    label[static_cast<std::size_t>(start)] = id;
    Eigen::RowVector3d color_sum = scene.colors.row(start);
    std::deque<int> queue{start};
    while (!queue.empty()) {
      const int p = queue.front();
      queue.pop_front();
      for (int q : adj[static_cast<std::size_t>(p)]) {
        if (label[static_cast<std::size_t>(q)] >= 0) continue;
        if ((scene.points.row(p) - scene.points.row(q)).norm() > max_edge) continue;
        const Eigen::RowVector3d mean = color_sum / static_cast<double>(region.size());
        if ((scene.colors.row(q) - mean).norm() > options.color_threshold) continue;
        label[static_cast<std::size_t>(q)] = id;
        region.push_back(q);
        color_sum += scene.colors.row(q);
        queue.push_back(q);
      }
    }
    if (static_cast<int>(region.size()) >= options.min_points) {
      std::sort(region.begin(), region.end());
      out.masks.push_back(std::move(region));
    }
  }
  std::sort(out.masks.begin(), out.masks.end());
  return out;
}

}  // namespace uniseg
