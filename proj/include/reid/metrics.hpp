#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "reid/clustering.hpp"
#include "reid/embedding_set.hpp"
#include "reid/normalize.hpp"
#include "reid/parallel.hpp"

namespace reid {

enum class NmiNormalization { Arithmetic, Geometric };

namespace detail {

/// Noise (-1) becomes a fresh singleton label per occurrence.
inline LabelVector expand_noise(std::span<const Label> labels) {
  Label next = 0;
  for (Label l : labels) next = std::max(next, static_cast<Label>(l + 1));
  LabelVector out(labels.begin(), labels.end());
  for (auto& l : out)
    if (l < 0) l = next++;
  return out;
}

inline double entropy_of_counts(const std::map<Label, std::size_t>& counts, double total) {
  double h = 0.0;
  for (const auto& [_, c] : counts) {
    const double p = static_cast<double>(c) / total;
    h -= p * std::log(p);
  }
  return h;
}

}  // namespace detail

/// Normalized mutual information with natural logs. Negative labels are
/// treated as singletons. Both entropies zero gives 1; zero mutual
/// information gives 0.
[[nodiscard]] inline double nmi(std::span<const Label> a, std::span<const Label> b,
                                NmiNormalization norm = NmiNormalization::Arithmetic) {
  if (a.size() != b.size()) fail(ErrorKind::LengthMismatch, std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  if (a.empty()) return 1.0;
  const auto la = detail::expand_noise(a);
  const auto lb = detail::expand_noise(b);
  std::map<Label, std::size_t> ca, cb;
  std::map<std::pair<Label, Label>, std::size_t> joint;
  for (std::size_t i = 0; i < la.size(); ++i) {
    ++ca[la[i]];
    ++cb[lb[i]];
    ++joint[{la[i], lb[i]}];
  }
  const auto n = static_cast<double>(la.size());
  const double ha = detail::entropy_of_counts(ca, n);
  const double hb = detail::entropy_of_counts(cb, n);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  // terms summed in sorted order so that nmi(a, b) == nmi(b, a) bit for bit
  std::vector<double> terms;
  terms.reserve(joint.size());
  for (const auto& [key, c] : joint) {
    const double nij = static_cast<double>(c);
    terms.push_back(nij / n * std::log(n * nij / (static_cast<double>(ca[key.first]) * static_cast<double>(cb[key.second]))));
  }
  std::sort(terms.begin(), terms.end());
  double mi = 0.0;
  for (double t : terms) mi += t;
  if (mi <= 0.0) return 0.0;
  const double denom = norm == NmiNormalization::Arithmetic ? 0.5 * (ha + hb) : std::sqrt(ha * hb);
  if (denom == 0.0) return 0.0;
  return std::clamp(mi / denom, 0.0, 1.0);
}

/// Unweighted mean, over non-noise clusters, of the Shannon entropy (nats) of
/// each cluster's camera distribution. No clusters gives 0.
[[nodiscard]] inline double mean_camera_entropy(std::span<const Label> clusters, std::span<const Label> cameras) {
  if (clusters.size() != cameras.size())
    fail(ErrorKind::LengthMismatch, std::to_string(clusters.size()) + " vs " + std::to_string(cameras.size()));
  std::map<Label, std::map<Label, std::size_t>> per_cluster;
  for (std::size_t i = 0; i < clusters.size(); ++i)
    if (clusters[i] >= 0) ++per_cluster[clusters[i]][cameras[i]];
  if (per_cluster.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [_, counts] : per_cluster) {
    std::size_t total = 0;
    for (const auto& [__, c] : counts) total += c;
    sum += detail::entropy_of_counts(counts, static_cast<double>(total));
  }
  return sum / static_cast<double>(per_cluster.size());
}

/// Fraction of non-noise clusters whose members all share one camera.
[[nodiscard]] inline double single_camera_cluster_fraction(std::span<const Label> clusters,
                                                           std::span<const Label> cameras) {
  if (clusters.size() != cameras.size()) fail(ErrorKind::LengthMismatch, "clusters vs cameras");
  std::map<Label, std::set<Label>> cams;
  for (std::size_t i = 0; i < clusters.size(); ++i)
    if (clusters[i] >= 0) cams[clusters[i]].insert(cameras[i]);
  if (cams.empty()) return 0.0;
  const auto single = std::count_if(cams.begin(), cams.end(), [](const auto& kv) { return kv.second.size() == 1; });
  return static_cast<double>(single) / static_cast<double>(cams.size());
}

// ---- retrieval ----------------------------------------------------------------

inline const std::vector<std::size_t> kDefaultRanks = {1, 5, 10};

struct EvalReport {
  double map = 0.0;
  std::map<std::size_t, double> cmc;
  std::size_t n_queries_evaluated = 0;
  std::size_t n_queries_skipped = 0;
};

/// Labels needed to score a ranking: identity and camera per row.
struct RetrievalLabels {
  std::span<const Label> identities;
  std::span<const Label> cameras;
};

/// Scores an N_q x N_g distance matrix (row-major, smaller = closer).
///
/// Per query, gallery rows sharing both identity and camera with the query,
/// and rows with junk identity, are dropped. Ties in distance rank by
/// ascending gallery index. Queries without any remaining positive are
/// skipped and counted.
[[nodiscard]] inline EvalReport evaluate_distances(std::span<const double> distances, RetrievalLabels query,
                                                   RetrievalLabels gallery,
                                                   std::span<const std::size_t> ranks = kDefaultRanks) {
  const std::size_t nq = query.identities.size();
  const std::size_t ng = gallery.identities.size();
  if (distances.size() != nq * ng) fail(ErrorKind::DimensionMismatch, "distance matrix shape");
  for (std::size_t r : ranks)
    if (r == 0) fail(ErrorKind::InvalidParams, "CMC ranks start at 1");

  std::vector<double> ap(nq, 0.0);
  std::vector<std::size_t> first_hit(nq, 0);  // 1-based; 0 = skipped
  parallel_for(nq, [&](std::size_t q) {
    std::vector<std::size_t> order(ng);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto row = distances.subspan(q * ng, ng);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return row[a] < row[b]; });
    const Label qid = query.identities[q];
    const Label qcam = query.cameras[q];
    std::size_t rank = 0, hits = 0;
    double precision_sum = 0.0;
    for (std::size_t g : order) {
      const Label gid = gallery.identities[g];
      if (gid == kJunkIdentity) continue;
      if (gid == qid && gallery.cameras[g] == qcam) continue;
      ++rank;
      if (gid != qid) continue;
      ++hits;
      if (hits == 1) first_hit[q] = rank;
      precision_sum += static_cast<double>(hits) / static_cast<double>(rank);
    }
    if (hits > 0) ap[q] = precision_sum / static_cast<double>(hits);
  });

  EvalReport report;
  for (std::size_t r : ranks) report.cmc[r] = 0.0;
  double ap_sum = 0.0;
  for (std::size_t q = 0; q < nq; ++q) {
    if (first_hit[q] == 0) {
      ++report.n_queries_skipped;
      continue;
    }
    ++report.n_queries_evaluated;
    ap_sum += ap[q];
    for (auto& [r, v] : report.cmc)
      if (first_hit[q] <= r) v += 1.0;
  }
  if (report.n_queries_evaluated > 0) {
    const auto n = static_cast<double>(report.n_queries_evaluated);
    report.map = ap_sum / n;
    for (auto& [_, v] : report.cmc) v /= n;
  }
  return report;
}

/// Query x gallery cosine distances (1 - cos), row-major.
[[nodiscard]] inline std::vector<double> cross_cosine_distances(const EmbeddingSet& query,
                                                                const EmbeddingSet& gallery) {
  if (query.dim() != gallery.dim())
    fail(ErrorKind::DimensionMismatch, std::to_string(query.dim()) + " vs " + std::to_string(gallery.dim()));
  const auto qn = detail::row_norms(query);
  const auto gn = detail::row_norms(gallery);
  std::vector<double> dist(query.size() * gallery.size());
  parallel_for(query.size(), [&](std::size_t q) {
    for (std::size_t g = 0; g < gallery.size(); ++g)
      dist[q * gallery.size() + g] = 1.0 - dot(query.row(q), gallery.row(g)) / (qn[q] * gn[g]);
  });
  return dist;
}

/// mAP and CMC of cosine retrieval from `query` into `gallery`.
[[nodiscard]] inline EvalReport evaluate_retrieval(const EmbeddingSet& query, const EmbeddingSet& gallery,
                                                   std::span<const std::size_t> ranks = kDefaultRanks) {
  const auto& qid = query.require_identities();
  const auto& gid = gallery.require_identities();
  return evaluate_distances(cross_cosine_distances(query, gallery), {qid, query.cameras()}, {gid, gallery.cameras()},
                            ranks);
}

// ---- camera bias of a clustering ----------------------------------------------

struct BiasReport {
  double bias_nmi = 0.0;
  std::optional<double> accuracy_nmi;
  double mean_camera_entropy = 0.0;
  std::size_t n_clusters = 0;
  double single_camera_cluster_fraction = 0.0;
};

/// Bias metrics of a given labelling against the set's cameras (and
/// identities when present).
[[nodiscard]] inline BiasReport bias_of_labels(std::span<const Label> clusters, const EmbeddingSet& set,
                                               NmiNormalization norm = NmiNormalization::Arithmetic) {
  BiasReport r;
  r.bias_nmi = nmi(clusters, set.cameras(), norm);
  if (set.has_identities()) r.accuracy_nmi = nmi(clusters, *set.identities(), norm);
  r.mean_camera_entropy = mean_camera_entropy(clusters, set.cameras());
  std::set<Label> ids;
  for (Label l : clusters)
    if (l >= 0) ids.insert(l);
  r.n_clusters = ids.size();
  r.single_camera_cluster_fraction = single_camera_cluster_fraction(clusters, set.cameras());
  return r;
}

/// Clusters the set (optionally after camera-specific z-scoring) and reports
/// how strongly the clusters follow cameras versus identities.
[[nodiscard]] inline BiasReport bias_report(const EmbeddingSet& set, double eps = kDefaultEps,
                                            std::size_t min_pts = kDefaultMinPts, bool debias_first = false,
                                            NmiNormalization norm = NmiNormalization::Arithmetic) {
  const EmbeddingSet features =
      debias_first ? apply_normalization(set, compute_group_stats(set, "camera"), NormalizationMode::CenterScale) : set;
  const auto assignment = cluster_embeddings(features, eps, min_pts);
  return bias_of_labels(assignment.labels, set, norm);
}

}  // namespace reid
