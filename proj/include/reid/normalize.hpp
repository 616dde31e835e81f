#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "reid/embedding_set.hpp"
#include "reid/rng.hpp"

namespace reid {

/// Standard deviations below this are clamped before division.
inline constexpr double kSigmaFloor = 1e-12;
inline constexpr double kDefaultWhiteningEps = 1e-5;

enum class NormalizationMode { Center, Scale, CenterScale };

/// What SCALE-only divides: the raw feature (f / sigma) or the deviation from
/// the group mean with the mean added back (m + (f - m) / sigma).
enum class ScaleAnchor { Origin, GroupMean };

struct GroupStats {
  std::size_t count = 0;
  std::vector<double> mean;
  std::vector<double> std;  // population std (divisor = count)
};

/// Per-group mean and population standard deviation of the features, keyed by
/// the group id taken from the label array `group_name`.
struct NormalizationStats {
  std::string group_name;
  std::map<Label, GroupStats> groups;

  [[nodiscard]] const GroupStats& at(Label id) const {
    auto it = groups.find(id);
    if (it == groups.end()) fail(ErrorKind::MissingGroupStats, "group " + std::to_string(id));
    return it->second;
  }
};

namespace detail {

inline std::map<Label, std::vector<std::size_t>> members_by_group(std::span<const Label> labels) {
  std::map<Label, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  return members;
}

inline GroupStats moments(const EmbeddingSet& set, std::span<const std::size_t> rows) {
  const std::size_t dim = set.dim();
  GroupStats g{rows.size(), std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
  if (rows.empty()) return g;
  for (std::size_t i : rows)
    for (std::size_t d = 0; d < dim; ++d) g.mean[d] += set.at(i, d);
  for (auto& m : g.mean) m /= static_cast<double>(rows.size());
  for (std::size_t i : rows)
    for (std::size_t d = 0; d < dim; ++d) {
      const double c = set.at(i, d) - g.mean[d];
      g.std[d] += c * c;
    }
  for (auto& s : g.std) s = std::sqrt(s / static_cast<double>(rows.size()));
  return g;
}

inline NormalizationStats stats_for_labels(const EmbeddingSet& set, std::span<const Label> labels,
                                           std::string name) {
  NormalizationStats stats{std::move(name), {}};
  for (const auto& [id, rows] : members_by_group(labels)) stats.groups.emplace(id, moments(set, rows));
  return stats;
}

inline EmbeddingSet normalize_with_labels(const EmbeddingSet& set, std::span<const Label> labels,
                                          const NormalizationStats& stats, NormalizationMode mode,
                                          ScaleAnchor anchor) {
  const std::size_t dim = set.dim();
  std::vector<float> out(set.size() * dim);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const GroupStats& g = stats.at(labels[i]);
    if (g.mean.size() != dim) fail(ErrorKind::DimensionMismatch, "stats dimension differs from features");
    for (std::size_t d = 0; d < dim; ++d) {
      const double f = set.at(i, d);
      const double sigma = std::max(g.std[d], kSigmaFloor);
      double v = f;
      switch (mode) {
        case NormalizationMode::Center: v = f - g.mean[d]; break;
        case NormalizationMode::CenterScale: v = (f - g.mean[d]) / sigma; break;
        case NormalizationMode::Scale:
          v = anchor == ScaleAnchor::Origin ? f / sigma : g.mean[d] + (f - g.mean[d]) / sigma;
          break;
      }
      out[i * dim + d] = static_cast<float>(v);
    }
  }
  return set.with_features(std::move(out));
}

}  // namespace detail

[[nodiscard]] inline NormalizationStats compute_group_stats(const EmbeddingSet& set,
                                                            const std::string& group_name = "camera") {
  return detail::stats_for_labels(set, set.labels(group_name), group_name);
}

/// Group-specific normalization: (f - m_g) / max(sigma_g, floor) for
/// CenterScale, f - m_g for Center, f / max(sigma_g, floor) for Scale.
[[nodiscard]] inline EmbeddingSet apply_normalization(const EmbeddingSet& set, const NormalizationStats& stats,
                                                      NormalizationMode mode,
                                                      ScaleAnchor anchor = ScaleAnchor::Origin) {
  return detail::normalize_with_labels(set, set.labels(stats.group_name), stats, mode, anchor);
}

/// Whole-set normalization: every sample in a single group.
[[nodiscard]] inline EmbeddingSet global_normalize(const EmbeddingSet& set, NormalizationMode mode,
                                                   ScaleAnchor anchor = ScaleAnchor::Origin) {
  const LabelVector single(set.size(), 0);
  const auto stats = detail::stats_for_labels(set, single, "<all>");
  return detail::normalize_with_labels(set, single, stats, mode, anchor);
}

// ---- ZCA whitening ----------------------------------------------------------

struct GroupWhitening {
  std::size_t count = 0;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  Eigen::VectorXd eigenvalues;  // ascending, before clamping
  Eigen::MatrixXd eigenvectors;
  Eigen::MatrixXd whitening;    // U (max(lambda,0) + eps)^(-1/2) U^T
};

struct WhiteningStats {
  std::string group_name;
  double eps = kDefaultWhiteningEps;
  std::map<Label, GroupWhitening> groups;
};

[[nodiscard]] inline WhiteningStats compute_whitening_stats(const EmbeddingSet& set, const std::string& group_name,
                                                            double eps_w = kDefaultWhiteningEps) {
  if (!(eps_w > 0.0)) fail(ErrorKind::InvalidParams, "whitening eps must be > 0");
  const auto& labels = set.labels(group_name);
  const auto dim = static_cast<Eigen::Index>(set.dim());
  WhiteningStats out{group_name, eps_w, {}};
  for (const auto& [id, rows] : detail::members_by_group(labels)) {
    if (rows.size() < 2) fail(ErrorKind::GroupTooSmall, "group " + std::to_string(id) + " has 1 sample");
    GroupWhitening w;
    w.count = rows.size();
    w.mean = Eigen::VectorXd::Zero(dim);
    for (std::size_t i : rows)
      for (Eigen::Index d = 0; d < dim; ++d) w.mean[d] += set.at(i, static_cast<std::size_t>(d));
    w.mean /= static_cast<double>(rows.size());
    Eigen::MatrixXd centered(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (Eigen::Index d = 0; d < dim; ++d)
        centered(static_cast<Eigen::Index>(r), d) = set.at(rows[r], static_cast<std::size_t>(d)) - w.mean[d];
    w.covariance = centered.transpose() * centered / static_cast<double>(rows.size());
    w.covariance = 0.5 * (w.covariance + w.covariance.transpose());

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(w.covariance);
    w.eigenvalues = solver.eigenvalues();
    w.eigenvectors = solver.eigenvectors();
    const Eigen::VectorXd inv_sqrt =
        (w.eigenvalues.array().max(0.0) + eps_w).rsqrt().matrix();
    w.whitening = w.eigenvectors * inv_sqrt.asDiagonal() * w.eigenvectors.transpose();
    w.whitening = 0.5 * (w.whitening + w.whitening.transpose());
    out.groups.emplace(id, std::move(w));
  }
  return out;
}

[[nodiscard]] inline EmbeddingSet apply_whitening(const EmbeddingSet& set, const WhiteningStats& stats) {
  const auto& labels = set.labels(stats.group_name);
  const auto dim = static_cast<Eigen::Index>(set.dim());
  std::vector<float> out(set.size() * set.dim());
  Eigen::VectorXd x(dim);
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto it = stats.groups.find(labels[i]);
    if (it == stats.groups.end()) fail(ErrorKind::MissingGroupStats, "group " + std::to_string(labels[i]));
    for (Eigen::Index d = 0; d < dim; ++d) x[d] = set.at(i, static_cast<std::size_t>(d)) - it->second.mean[d];
    const Eigen::VectorXd y = it->second.whitening * x;
    for (Eigen::Index d = 0; d < dim; ++d) out[i * set.dim() + static_cast<std::size_t>(d)] = static_cast<float>(y[d]);
  }
  return set.with_features(std::move(out));
}

/// Group-specific ZCA whitening: x -> W_g (x - m_g).
[[nodiscard]] inline EmbeddingSet zca_whiten(const EmbeddingSet& set, const std::string& group_name = "camera",
                                             double eps_w = kDefaultWhiteningEps) {
  return apply_whitening(set, compute_whitening_stats(set, group_name, eps_w));
}

// ---- camera-sensitive dimensions ----------------------------------------------

/// Population variance, per dimension, of the M camera-mean vectors.
[[nodiscard]] inline std::vector<double> camera_mean_dim_variance(const EmbeddingSet& set) {
  const auto stats = compute_group_stats(set, "camera");
  if (stats.groups.size() < 2) fail(ErrorKind::SingleCamera, "need at least 2 cameras");
  std::vector<double> mean(set.dim(), 0.0), var(set.dim(), 0.0);
  const auto m = static_cast<double>(stats.groups.size());
  for (const auto& [_, g] : stats.groups)
    for (std::size_t d = 0; d < set.dim(); ++d) mean[d] += g.mean[d];
  for (auto& v : mean) v /= m;
  for (const auto& [_, g] : stats.groups)
    for (std::size_t d = 0; d < set.dim(); ++d) var[d] += (g.mean[d] - mean[d]) * (g.mean[d] - mean[d]);
  for (auto& v : var) v /= m;
  return var;
}

/// Dimension indices by descending camera-mean variance, ties by index.
[[nodiscard]] inline std::vector<std::size_t> rank_dims_by_camera_variance(const EmbeddingSet& set) {
  const auto var = camera_mean_dim_variance(set);
  std::vector<std::size_t> order(var.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return var[a] > var[b]; });
  return order;
}

/// Subtracts the group mean on `dims` only; other dimensions pass through.
[[nodiscard]] inline EmbeddingSet selective_center(const EmbeddingSet& set, const NormalizationStats& stats,
                                                   std::span<const std::size_t> dims) {
  std::vector<bool> seen(set.dim(), false);
  for (std::size_t d : dims) {
    if (d >= set.dim()) fail(ErrorKind::DimOutOfRange, "dim " + std::to_string(d));
    if (seen[d]) fail(ErrorKind::DuplicateDim, "dim " + std::to_string(d));
    seen[d] = true;
  }
  const auto& labels = set.labels(stats.group_name);
  std::vector<float> out(set.features().begin(), set.features().end());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const GroupStats& g = stats.at(labels[i]);
    for (std::size_t d : dims)
      out[i * set.dim() + d] = static_cast<float>(static_cast<double>(set.at(i, d)) - g.mean[d]);
  }
  return set.with_features(std::move(out));
}

// ---- group construction -------------------------------------------------------

/// Equal-size groups by rank of `values` (ties by original index); block
/// sizes differ by at most one, larger blocks first.
[[nodiscard]] inline LabelVector assign_quantile_groups(std::span<const double> values, std::size_t n_groups) {
  if (n_groups < 2) fail(ErrorKind::InvalidParams, "n_groups must be >= 2");
  if (values.size() < n_groups)
    fail(ErrorKind::TooFewSamples, std::to_string(values.size()) + " values for " + std::to_string(n_groups) + " groups");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  const std::size_t base = values.size() / n_groups;
  const std::size_t extra = values.size() % n_groups;
  LabelVector labels(values.size());
  std::size_t pos = 0;
  for (std::size_t g = 0; g < n_groups; ++g) {
    const std::size_t size = base + (g < extra ? 1 : 0);
    for (std::size_t k = 0; k < size; ++k) labels[order[pos++]] = static_cast<Label>(g);
  }
  return labels;
}

/// Dense labels for the pairs (a_i, b_i), first-appearance order.
[[nodiscard]] inline LabelVector compose_labels(std::span<const Label> a, std::span<const Label> b) {
  if (a.size() != b.size())
    fail(ErrorKind::LengthMismatch, std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  std::map<std::pair<Label, Label>, Label> ids;
  LabelVector out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto [it, _] = ids.try_emplace({a[i], b[i]}, static_cast<Label>(ids.size()));
    out.push_back(it->second);
  }
  return out;
}

/// Group statistics from `m_per_group` samples per group drawn uniformly
/// without replacement. Groups are visited in ascending id order on one
/// seeded stream; the draw is sorted back to row order before accumulation.
[[nodiscard]] inline NormalizationStats subsample_stats(const EmbeddingSet& set, const std::string& group_name,
                                                        std::size_t m_per_group, std::uint64_t seed) {
  if (m_per_group < 2) fail(ErrorKind::InvalidParams, "m_per_group must be >= 2");
  const auto& labels = set.labels(group_name);
  rng::Stream stream(seed, 0);
  NormalizationStats stats{group_name, {}};
  for (const auto& [id, rows] : detail::members_by_group(labels)) {
    if (rows.size() < m_per_group)
      fail(ErrorKind::GroupTooSmall,
           "group " + std::to_string(id) + " has " + std::to_string(rows.size()) + " < " + std::to_string(m_per_group));
    auto picks = rng::sample_without_replacement(rows.size(), m_per_group, stream);
    std::sort(picks.begin(), picks.end());
    std::vector<std::size_t> chosen;
    chosen.reserve(picks.size());
    for (auto p : picks) chosen.push_back(rows[p]);
    stats.groups.emplace(id, detail::moments(set, chosen));
  }
  return stats;
}

}  // namespace reid
