#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "reid/embedding_set.hpp"
#include "reid/normalize.hpp"

namespace reid {

using Vec = std::vector<double>;

struct PairMean {
  std::size_t count = 0;
  Vec mean;
};

/// s^(i,j): mean feature of identity i under camera j, for observed pairs.
struct IdentityCameraMeans {
  std::size_t dim = 0;
  std::map<std::pair<Label, Label>, PairMean> pairs;  // (identity, camera)

  [[nodiscard]] std::set<Label> cameras() const {
    std::set<Label> out;
    for (const auto& [key, _] : pairs) out.insert(key.second);
    return out;
  }
};

/// Result of an averaged cosine similarity where degenerate (zero-norm)
/// vectors are skipped instead of raising.
struct SimilarityResult {
  std::optional<double> value;  // empty when nothing was measurable
  std::size_t n_skipped = 0;
  std::size_t n_terms = 0;
};

namespace detail {

inline double norm_on(const Vec& v, std::span<const std::size_t> dims) {
  double s = 0.0;
  for (std::size_t d : dims) s += v[d] * v[d];
  return std::sqrt(s);
}

inline double cosine_on(const Vec& a, const Vec& b, std::span<const std::size_t> dims, double na, double nb) {
  double s = 0.0;
  for (std::size_t d : dims) s += a[d] * b[d];
  return std::clamp(s / (na * nb), -1.0, 1.0);
}

inline std::vector<std::size_t> all_dims(std::size_t dim) {
  std::vector<std::size_t> d(dim);
  for (std::size_t i = 0; i < dim; ++i) d[i] = i;
  return d;
}

inline void check_dims(std::span<const std::size_t> dims, std::size_t dim) {
  std::vector<bool> seen(dim, false);
  for (std::size_t d : dims) {
    if (d >= dim) fail(ErrorKind::DimOutOfRange, "dim " + std::to_string(d));
    if (seen[d]) fail(ErrorKind::DuplicateDim, "dim " + std::to_string(d));
    seen[d] = true;
  }
}

}  // namespace detail

[[nodiscard]] inline IdentityCameraMeans identity_camera_means(const EmbeddingSet& set) {
  const auto& ids = set.require_identities();
  IdentityCameraMeans out{set.dim(), {}};
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (ids[i] == kJunkIdentity) continue;
    auto& pm = out.pairs[{ids[i], set.cameras()[i]}];
    if (pm.mean.empty()) pm.mean.assign(set.dim(), 0.0);
    ++pm.count;
    for (std::size_t d = 0; d < set.dim(); ++d) pm.mean[d] += set.at(i, d);
  }
  for (auto& [_, pm] : out.pairs)
    for (auto& v : pm.mean) v /= static_cast<double>(pm.count);
  return out;
}

/// d_i^{from->to} = s^(i,to) - s^(i,from) for identities seen by both cameras.
[[nodiscard]] inline std::map<Label, Vec> displacement_vectors(const IdentityCameraMeans& means, Label cam_from,
                                                               Label cam_to) {
  const auto cams = means.cameras();
  if (!cams.contains(cam_from)) fail(ErrorKind::UnknownCamera, "camera " + std::to_string(cam_from));
  if (!cams.contains(cam_to)) fail(ErrorKind::UnknownCamera, "camera " + std::to_string(cam_to));
  std::map<Label, Vec> out;
  for (const auto& [key, from] : means.pairs) {
    if (key.second != cam_from) continue;
    auto it = means.pairs.find({key.first, cam_to});
    if (it == means.pairs.end()) continue;
    Vec d(means.dim);
    for (std::size_t k = 0; k < means.dim; ++k) d[k] = it->second.mean[k] - from.mean[k];
    out.emplace(key.first, std::move(d));
  }
  return out;
}

/// Average cosine similarity between displacement vectors of different
/// identities under the same camera change: mean over ordered camera pairs
/// (p, q), each the mean over unordered identity pairs present in both
/// cameras. `dims` restricts the vectors to a subset of dimensions.
///
/// Identity pairs involving a zero-norm (restricted) displacement are skipped
/// and counted; camera pairs with nothing measurable are left out of the
/// outer mean.
[[nodiscard]] inline SimilarityResult mean_displacement_similarity(
    const EmbeddingSet& set, std::optional<std::span<const std::size_t>> dims = std::nullopt) {
  const auto means = identity_camera_means(set);
  const auto cams = means.cameras();
  if (cams.size() < 2) fail(ErrorKind::SingleCamera, "need at least 2 cameras");
  const std::vector<std::size_t> dim_list =
      dims ? std::vector<std::size_t>(dims->begin(), dims->end()) : detail::all_dims(set.dim());
  detail::check_dims(dim_list, set.dim());

  SimilarityResult result;
  double outer_sum = 0.0;
  std::size_t outer_terms = 0;
  bool any_overlap = false;
  for (Label p : cams) {
    for (Label q : cams) {
      if (p == q) continue;
      const auto disp = displacement_vectors(means, p, q);
      if (disp.size() < 2) continue;
      any_overlap = true;
      std::vector<const Vec*> vecs;
      std::vector<double> norms;
      for (const auto& [_, v] : disp) {
        vecs.push_back(&v);
        norms.push_back(detail::norm_on(v, dim_list));
      }
      double inner = 0.0;
      std::size_t terms = 0;
      for (std::size_t m = 0; m < vecs.size(); ++m)
        for (std::size_t n = m + 1; n < vecs.size(); ++n) {
          if (norms[m] == 0.0 || norms[n] == 0.0) {
            ++result.n_skipped;
            continue;
          }
          inner += detail::cosine_on(*vecs[m], *vecs[n], dim_list, norms[m], norms[n]);
          ++terms;
        }
      if (terms == 0) continue;
      outer_sum += inner / static_cast<double>(terms);
      ++outer_terms;
    }
  }
  if (!any_overlap) fail(ErrorKind::InsufficientOverlap, "no camera pair shares two identities");
  result.n_terms = outer_terms;
  if (outer_terms > 0) result.value = outer_sum / static_cast<double>(outer_terms);
  return result;
}

// ---- transformation-level displacements --------------------------------------

/// Features of the same samples at increasing transformation levels; level 0
/// is the untransformed input. Rows are aligned by position.
class LevelFeatureSeries {
 public:
  explicit LevelFeatureSeries(std::vector<EmbeddingSet> levels) : levels_(std::move(levels)) {
    for (const auto& l : levels_) {
      if (l.size() != levels_.front().size())
        fail(ErrorKind::LengthMismatch, "levels disagree on sample count");
      if (l.dim() != levels_.front().dim()) fail(ErrorKind::DimensionMismatch, "levels disagree on dimension");
    }
  }

  [[nodiscard]] std::size_t levels() const noexcept { return levels_.size(); }
  [[nodiscard]] const EmbeddingSet& level(std::size_t k) const { return levels_.at(k); }

 private:
  std::vector<EmbeddingSet> levels_;
};

/// (a) mean over i != j of Sim(d_i, d_j); (b) mean over i of Sim(d_i, m);
/// (c) mean over i of Sim(d_i^(k), d_i^(k+1)); (d) Sim(m^(k), m^(k+1)).
enum class LevelMetric { PairwiseConsistency, AgreementWithMean, PerSampleContinuity, MeanContinuity };

/// One entry per level k = 1..K for (a)/(b), per k = 1..K-1 for (c)/(d),
/// with d_i^(k) = f_i^(k) - f_i^(k-1) and m^(k) = mean_i d_i^(k). Zero-norm
/// vectors are excluded and counted in `n_skipped`.
[[nodiscard]] inline std::vector<SimilarityResult> level_displacement_metric(const LevelFeatureSeries& series,
                                                                             LevelMetric variant) {
  const bool needs_pairs_of_levels =
      variant == LevelMetric::PerSampleContinuity || variant == LevelMetric::MeanContinuity;
  if (series.levels() < 2 || (needs_pairs_of_levels && series.levels() < 3))
    fail(ErrorKind::TooFewLevels, std::to_string(series.levels()) + " levels");

  const std::size_t n = series.level(0).size();
  const std::size_t dim = series.level(0).dim();
  const auto dims = detail::all_dims(dim);
  const std::size_t k_max = series.levels() - 1;

  // disp[k-1][i], mean_disp[k-1]
  std::vector<std::vector<Vec>> disp(k_max, std::vector<Vec>(n, Vec(dim)));
  std::vector<Vec> mean_disp(k_max, Vec(dim, 0.0));
  for (std::size_t k = 1; k <= k_max; ++k) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < dim; ++d) {
        const double v = static_cast<double>(series.level(k).at(i, d)) - series.level(k - 1).at(i, d);
        disp[k - 1][i][d] = v;
        mean_disp[k - 1][d] += v;
      }
    if (n > 0)
      for (auto& v : mean_disp[k - 1]) v /= static_cast<double>(n);
  }
  auto norm = [&](const Vec& v) { return detail::norm_on(v, dims); };

  std::vector<SimilarityResult> out;
  const std::size_t count = needs_pairs_of_levels ? k_max - 1 : k_max;
  for (std::size_t k = 0; k < count; ++k) {
    SimilarityResult r;
    double sum = 0.0;
    switch (variant) {
      case LevelMetric::PairwiseConsistency: {
        std::vector<std::size_t> live;
        std::vector<double> norms(n);
        for (std::size_t i = 0; i < n; ++i) {
          norms[i] = norm(disp[k][i]);
          if (norms[i] == 0.0)
            ++r.n_skipped;
          else
            live.push_back(i);
        }
        for (std::size_t a = 0; a < live.size(); ++a)
          for (std::size_t b = a + 1; b < live.size(); ++b) {
            sum += detail::cosine_on(disp[k][live[a]], disp[k][live[b]], dims, norms[live[a]], norms[live[b]]);
            ++r.n_terms;
          }
        break;
      }
      case LevelMetric::AgreementWithMean: {
        const double nm = norm(mean_disp[k]);
        if (nm == 0.0) {
          r.n_skipped = n;
          break;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double ni = norm(disp[k][i]);
          if (ni == 0.0) {
            ++r.n_skipped;
            continue;
          }
          sum += detail::cosine_on(disp[k][i], mean_disp[k], dims, ni, nm);
          ++r.n_terms;
        }
        break;
      }
      case LevelMetric::PerSampleContinuity: {
        for (std::size_t i = 0; i < n; ++i) {
          const double a = norm(disp[k][i]);
          const double b = norm(disp[k + 1][i]);
          if (a == 0.0 || b == 0.0) {
            ++r.n_skipped;
            continue;
          }
          sum += detail::cosine_on(disp[k][i], disp[k + 1][i], dims, a, b);
          ++r.n_terms;
        }
        break;
      }
      case LevelMetric::MeanContinuity: {
        const double a = norm(mean_disp[k]);
        const double b = norm(mean_disp[k + 1]);
        if (a == 0.0 || b == 0.0) {
          r.n_skipped = 1;
          break;
        }
        sum = detail::cosine_on(mean_disp[k], mean_disp[k + 1], dims, a, b);
        r.n_terms = 1;
        break;
      }
    }
    if (r.n_terms > 0) r.value = sum / static_cast<double>(r.n_terms);
    out.push_back(r);
  }
  return out;
}

}  // namespace reid
