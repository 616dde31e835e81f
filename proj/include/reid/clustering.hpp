#pragma once

#include <algorithm>
#include <cstddef>
#include <deque>
#include <vector>

#include "reid/embedding_set.hpp"
#include "reid/parallel.hpp"

namespace reid {

inline constexpr Label kNoise = -1;
inline constexpr double kDefaultEps = 0.6;
inline constexpr std::size_t kDefaultMinPts = 4;

/// Dense N x N cosine distances, exactly symmetric with a zero diagonal.
/// Memory is N^2 doubles, which bounds the practical N to a few tens of
/// thousands.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n) : n_(n), values_(n * n, 0.0) {}

  [[nodiscard]] std::size_t size() const noexcept { return n_; }
  [[nodiscard]] double operator()(std::size_t i, std::size_t j) const noexcept { return values_[i * n_ + j]; }
  [[nodiscard]] std::span<const double> row(std::size_t i) const noexcept {
    return std::span<const double>(values_).subspan(i * n_, n_);
  }

  void set(std::size_t i, std::size_t j, double d) noexcept {
    values_[i * n_ + j] = d;
    values_[j * n_ + i] = d;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> values_;
};

struct DbscanParams {
  double eps = kDefaultEps;
  std::size_t min_pts = kDefaultMinPts;
};

struct ClusterAssignment {
  LabelVector labels;  // 0..K-1, or kNoise
  std::size_t n_clusters = 0;
  DbscanParams params;
};

namespace detail {

inline std::vector<double> row_norms(const EmbeddingSet& set) {
  std::vector<double> norms(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    norms[i] = l2_norm(set.row(i));
    if (norms[i] == 0.0) fail(ErrorKind::ZeroNormRow, "row " + std::to_string(i));
  }
  return norms;
}

inline double cosine_distance(std::span<const float> a, std::span<const float> b, double norm_a, double norm_b) {
  return std::clamp(1.0 - dot(a, b) / (norm_a * norm_b), 0.0, 2.0);
}

}  // namespace detail

/// d(i,j) = 1 - cos(f_i, f_j), clamped to [0, 2]; the upper triangle is
/// computed row-parallel and mirrored.
[[nodiscard]] inline DistanceMatrix cosine_distance_matrix(const EmbeddingSet& set) {
  const auto norms = detail::row_norms(set);
  const std::size_t n = set.size();
  DistanceMatrix dist(n);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = i + 1; j < n; ++j)
      dist.set(i, j, detail::cosine_distance(set.row(i), set.row(j), norms[i], norms[j]));
  });
  return dist;
}

/// Relabels non-noise ids to 0..K-1 in first-appearance order.
[[nodiscard]] inline ClusterAssignment canonicalize(LabelVector labels, DbscanParams params) {
  std::vector<Label> map;
  Label next = 0;
  Label max_id = -1;
  for (Label l : labels) max_id = std::max(max_id, l);
  map.assign(static_cast<std::size_t>(max_id + 1), kNoise);
  for (auto& l : labels) {
    if (l == kNoise) continue;
    auto& m = map[static_cast<std::size_t>(l)];
    if (m == kNoise) m = next++;
    l = m;
  }
  return {std::move(labels), static_cast<std::size_t>(next), params};
}

/// DBSCAN over a precomputed distance matrix.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps` (d <= eps). Clusters are seeded from unassigned core points in
/// ascending index order and grown breadth-first; a border point joins the
/// first cluster that reaches it. Points reached by no core point are noise.
[[nodiscard]] inline ClusterAssignment dbscan(const DistanceMatrix& dist, double eps = kDefaultEps,
                                              std::size_t min_pts = kDefaultMinPts) {
  if (!(eps > 0.0) || min_pts < 1) fail(ErrorKind::InvalidParams, "dbscan requires eps > 0 and min_pts >= 1");
  const std::size_t n = dist.size();
  std::vector<std::vector<std::size_t>> neighbors(n);
  parallel_for(n, [&](std::size_t i) {
    auto r = dist.row(i);
    for (std::size_t j = 0; j < n; ++j)
      if (r[j] <= eps) neighbors[i].push_back(j);
  });

  LabelVector labels(n, kNoise);
  Label cluster = 0;
  std::deque<std::size_t> frontier;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (labels[seed] != kNoise || neighbors[seed].size() < min_pts) continue;
    labels[seed] = cluster;
    frontier.push_back(seed);
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop_front();
      if (neighbors[p].size() < min_pts) continue;  // border: does not expand
      for (std::size_t q : neighbors[p]) {
        if (labels[q] != kNoise) continue;
        labels[q] = cluster;
        frontier.push_back(q);
      }
    }
    ++cluster;
  }
  return canonicalize(std::move(labels), {eps, min_pts});
}

/// L2-normalize, build cosine distances, run DBSCAN.
[[nodiscard]] inline ClusterAssignment cluster_embeddings(const EmbeddingSet& set, double eps = kDefaultEps,
                                                          std::size_t min_pts = kDefaultMinPts) {
  return dbscan(cosine_distance_matrix(row_l2_normalize(set)), eps, min_pts);
}

}  // namespace reid
