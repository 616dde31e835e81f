#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "reid/embedding_set.hpp"
#include "reid/io.hpp"
#include "reid/metrics.hpp"
#include "reid/parallel.hpp"

namespace reid {

struct RerankParams {
  std::size_t k1 = 20;
  std::size_t k2 = 6;
  double lambda = 0.3;

  void validate() const {
    if (k2 < 1 || k1 < k2) fail(ErrorKind::InvalidParams, "re-ranking requires k1 >= k2 >= 1");
    if (!(lambda >= 0.0 && lambda <= 1.0)) fail(ErrorKind::InvalidParams, "lambda must lie in [0, 1]");
  }
};

namespace detail {

/// Indices of the `k` largest entries of `scores`, ties by ascending index,
/// skipping `exclude` when given.
inline std::vector<std::size_t> top_k_similar(std::span<const double> scores, std::size_t k,
                                              std::optional<std::size_t> exclude = std::nullopt) {
  std::vector<std::size_t> idx;
  idx.reserve(scores.size());
  for (std::size_t j = 0; j < scores.size(); ++j)
    if (!exclude || j != *exclude) idx.push_back(j);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  idx.resize(k);
  return idx;
}

/// Unit-norm copy of the set as doubles.
inline std::vector<double> unit_rows(const EmbeddingSet& set) {
  const auto norms = row_norms(set);
  std::vector<double> out(set.size() * set.dim());
  for (std::size_t i = 0; i < set.size(); ++i)
    for (std::size_t d = 0; d < set.dim(); ++d) out[i * set.dim() + d] = set.at(i, d) / norms[i];
  return out;
}

inline double dot_rows(const std::vector<double>& a, std::size_t i, const std::vector<double>& b, std::size_t j,
                       std::size_t dim) {
  double acc = 0.0;
  for (std::size_t d = 0; d < dim; ++d) acc += a[i * dim + d] * b[j * dim + d];
  return acc;
}

/// row_i <- normalize(row_i + sum_j max(sim_ij, 0)^alpha * neighbor_j).
inline std::vector<float> expand_rows(const std::vector<double>& self, const std::vector<double>& pool,
                                      std::size_t n_self, std::size_t n_pool, std::size_t dim, std::size_t k,
                                      double alpha, bool exclude_self) {
  std::vector<float> out(n_self * dim);
  parallel_for(n_self, [&](std::size_t i) {
    std::vector<double> sims(n_pool);
    for (std::size_t j = 0; j < n_pool; ++j) sims[j] = dot_rows(self, i, pool, j, dim);
    const auto nn = top_k_similar(sims, k, exclude_self ? std::optional<std::size_t>(i) : std::nullopt);
    std::vector<double> acc(self.begin() + static_cast<std::ptrdiff_t>(i * dim),
                            self.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
    for (std::size_t j : nn) {
      const double w = std::pow(std::max(sims[j], 0.0), alpha);
      for (std::size_t d = 0; d < dim; ++d) acc[d] += w * pool[j * dim + d];
    }
    double norm = 0.0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) fail(ErrorKind::ZeroNormRow, "expanded row " + std::to_string(i));
    for (std::size_t d = 0; d < dim; ++d) out[i * dim + d] = static_cast<float>(acc[d] / norm);
  });
  return out;
}

}  // namespace detail

/// Alpha query expansion: each query becomes the L2-normalized sum of itself
/// and its top-k gallery neighbours weighted by max(sim, 0)^alpha. All
/// features are L2-normalized first.
[[nodiscard]] inline EmbeddingSet aqe(const EmbeddingSet& query, const EmbeddingSet& gallery, std::size_t k,
                                      double alpha) {
  if (k < 1 || !(alpha >= 0.0)) fail(ErrorKind::InvalidParams, "aqe requires k >= 1 and alpha >= 0");
  if (gallery.empty()) fail(ErrorKind::EmptyGallery, "aqe needs at least one gallery row");
  if (query.dim() != gallery.dim()) fail(ErrorKind::DimensionMismatch, "query vs gallery dimension");
  const auto q = detail::unit_rows(query);
  const auto g = detail::unit_rows(gallery);
  return query.with_features(detail::expand_rows(q, g, query.size(), gallery.size(), query.dim(), k, alpha, false));
}

/// Database-side augmentation: the same expansion applied to every gallery
/// row using its top-k neighbours among the other gallery rows.
[[nodiscard]] inline EmbeddingSet dba(const EmbeddingSet& gallery, std::size_t k, double alpha) {
  if (k < 1 || !(alpha >= 0.0)) fail(ErrorKind::InvalidParams, "dba requires k >= 1 and alpha >= 0");
  if (gallery.size() <= k)
    fail(ErrorKind::GalleryTooSmall, std::to_string(gallery.size()) + " rows for k = " + std::to_string(k));
  const auto g = detail::unit_rows(gallery);
  return gallery.with_features(
      detail::expand_rows(g, g, gallery.size(), gallery.size(), gallery.dim(), k, alpha, true));
}

/// k-reciprocal re-ranking over the concatenated query+gallery set.
///
/// Steps: k1-reciprocal neighbour sets, expanded by candidates whose
/// round(k1/2)-reciprocal sets overlap by more than 2/3; membership vectors
/// weighted by exp(-d) and normalized; local query expansion averaging the
/// vectors of the k2 nearest rows; Jaccard distance from the min-overlap of
/// membership vectors. Returns lambda * d + (1 - lambda) * jaccard for every
/// (query, gallery) pair, where d is the cosine distance.
[[nodiscard]] inline DenseMatrix k_reciprocal_rerank(const EmbeddingSet& query, const EmbeddingSet& gallery,
                                                     const RerankParams& params = {}) {
  params.validate();
  if (gallery.size() <= params.k1)
    fail(ErrorKind::GalleryTooSmall,
         std::to_string(gallery.size()) + " gallery rows for k1 = " + std::to_string(params.k1));
  if (query.dim() != gallery.dim()) fail(ErrorKind::DimensionMismatch, "query vs gallery dimension");

  const std::size_t nq = query.size();
  const std::size_t ng = gallery.size();
  const std::size_t n = nq + ng;
  const std::size_t dim = query.dim();
  const auto qu = detail::unit_rows(query);
  const auto gu = detail::unit_rows(gallery);
  std::vector<double> all(qu);
  all.insert(all.end(), gu.begin(), gu.end());

  std::vector<double> dist(n * n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    for (std::size_t j = 0; j < n; ++j)
      dist[i * n + j] = std::clamp(1.0 - detail::dot_rows(all, i, all, j, dim), 0.0, 2.0);
  });

  // full orderings: neighbourhoods include every item tied with the k-th distance
  std::vector<std::vector<std::size_t>> rank(n);
  parallel_for(n, [&](std::size_t i) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const double* row = dist.data() + i * n;
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return row[a] < row[b] || (row[a] == row[b] && a < b); });
    rank[i] = std::move(idx);
  });
  auto kth = [&](std::size_t i, std::size_t k) { return dist[i * n + rank[i][std::min(k, n - 1)]]; };

  auto reciprocal = [&](std::size_t i, std::size_t k) {
    std::vector<std::size_t> out;
    const double radius = kth(i, k);
    for (std::size_t a = 0; a < n && dist[i * n + rank[i][a]] <= radius; ++a) {
      const std::size_t cand = rank[i][a];
      if (dist[cand * n + i] <= kth(cand, k)) out.push_back(cand);
    }
    return out;
  };

  // ties-to-even, as numpy.around
  const std::size_t half_k1 = static_cast<std::size_t>(std::nearbyint(static_cast<double>(params.k1) / 2.0));

  std::vector<double> membership(n * n, 0.0);
  parallel_for(n, [&](std::size_t i) {
    const auto base = reciprocal(i, params.k1);
    std::vector<std::size_t> expansion = base;
    std::vector<std::size_t> base_sorted = base;
    std::sort(base_sorted.begin(), base_sorted.end());
    for (std::size_t cand : base) {
      auto cand_set = reciprocal(cand, half_k1);
      std::vector<std::size_t> cand_sorted = cand_set;
      std::sort(cand_sorted.begin(), cand_sorted.end());
      std::vector<std::size_t> common;
      std::set_intersection(cand_sorted.begin(), cand_sorted.end(), base_sorted.begin(), base_sorted.end(),
                            std::back_inserter(common));
      if (static_cast<double>(common.size()) > 2.0 / 3.0 * static_cast<double>(cand_set.size()))
        expansion.insert(expansion.end(), cand_set.begin(), cand_set.end());
    }
    std::sort(expansion.begin(), expansion.end());
    expansion.erase(std::unique(expansion.begin(), expansion.end()), expansion.end());
    double total = 0.0;
    for (std::size_t j : expansion) total += std::exp(-dist[i * n + j]);
    for (std::size_t j : expansion) membership[i * n + j] = std::exp(-dist[i * n + j]) / total;
  });

  if (params.k2 > 1) {
    std::vector<double> expanded(n * n, 0.0);
    const std::size_t k2 = std::min(params.k2, n);
    parallel_for(n, [&](std::size_t i) {
      for (std::size_t a = 0; a < k2; ++a) {
        const std::size_t r = rank[i][a];
        for (std::size_t j = 0; j < n; ++j) expanded[i * n + j] += membership[r * n + j];
      }
      for (std::size_t j = 0; j < n; ++j) expanded[i * n + j] /= static_cast<double>(k2);
    });
    membership = std::move(expanded);
  }

  DenseMatrix out{nq, ng, std::vector<double>(nq * ng)};
  parallel_for(nq, [&](std::size_t q) {
    std::vector<std::size_t> support;
    for (std::size_t j = 0; j < n; ++j)
      if (membership[q * n + j] != 0.0) support.push_back(j);
    for (std::size_t g = 0; g < ng; ++g) {
      const std::size_t row = nq + g;
      double overlap = 0.0;
      for (std::size_t j : support) overlap += std::min(membership[q * n + j], membership[row * n + j]);
      const double jaccard = 1.0 - overlap / (2.0 - overlap);
      const double original = dist[q * n + row];
      out(q, g) = params.lambda == 1.0 ? original : params.lambda * original + (1.0 - params.lambda) * jaccard;
    }
  });
  return out;
}

}  // namespace reid
