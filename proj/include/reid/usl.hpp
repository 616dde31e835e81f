#pragma once

// Debiased pseudo labelling for unsupervised re-identification, plus the
// label-corruption and camera-capping constructions used to study how camera
// bias in pseudo labels affects training.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "reid/clustering.hpp"
#include "reid/embedding_set.hpp"
#include "reid/metrics.hpp"
#include "reid/normalize.hpp"
#include "reid/rng.hpp"

namespace reid {

struct PseudoLabelProvenance {
  bool debias = false;
  bool discard_single_camera = false;
  double eps = kDefaultEps;
  std::size_t min_pts = kDefaultMinPts;
  std::optional<std::uint64_t> seed;
};

struct PseudoLabelBatch {
  ClusterAssignment assignment;
  std::vector<bool> kept;  // false for noise and for discarded clusters
  std::optional<NormalizationStats> stats_used;
  PseudoLabelProvenance provenance;

  /// Cluster labels with every non-kept sample turned into noise.
  [[nodiscard]] LabelVector effective_labels() const {
    LabelVector out = assignment.labels;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (!kept[i]) out[i] = kNoise;
    return out;
  }
};

/// Step (1): cluster camera-normalized features (debias) or raw features.
/// Either way the features are L2-normalized and clustered with DBSCAN over
/// cosine distance.
[[nodiscard]] inline PseudoLabelBatch generate_pseudo_labels(const EmbeddingSet& set, double eps = kDefaultEps,
                                                             std::size_t min_pts = kDefaultMinPts,
                                                             bool debias = true,
                                                             std::optional<std::uint64_t> seed = std::nullopt) {
  PseudoLabelBatch batch;
  EmbeddingSet features = set;
  if (debias) {
    batch.stats_used = compute_group_stats(set, "camera");
    features = apply_normalization(set, *batch.stats_used, NormalizationMode::CenterScale);
  }
  batch.assignment = cluster_embeddings(features, eps, min_pts);
  batch.kept.resize(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) batch.kept[i] = batch.assignment.labels[i] != kNoise;
  batch.provenance = {debias, false, eps, min_pts, seed};
  return batch;
}

/// Step (2): drops every cluster whose members come from a single camera and
/// renumbers the survivors 0..K'-1 in first-appearance order.
[[nodiscard]] inline PseudoLabelBatch discard_single_camera_clusters(const PseudoLabelBatch& batch,
                                                                     std::span<const Label> cameras) {
  const auto& labels = batch.assignment.labels;
  if (labels.size() != cameras.size() || batch.kept.size() != cameras.size())
    fail(ErrorKind::LengthMismatch, "batch and camera labels differ in length");
  std::map<Label, std::set<Label>> cams;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] != kNoise && batch.kept[i]) cams[labels[i]].insert(cameras[i]);

  PseudoLabelBatch out = batch;
  LabelVector relabelled(labels.size(), kNoise);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool keep = labels[i] != kNoise && batch.kept[i] && cams[labels[i]].size() >= 2;
    out.kept[i] = keep;
    if (keep) relabelled[i] = labels[i];
  }
  out.assignment = canonicalize(std::move(relabelled), batch.assignment.params);
  out.provenance.discard_single_camera = true;
  return out;
}

// ---- toy constructions ---------------------------------------------------------

enum class SplitMode { Camera, Random };

struct CorruptionResult {
  LabelVector labels;  // dense, first-appearance order; junk-identity rows are noise
  double mean_camera_entropy = 0.0;
  std::size_t n_identities_split = 0;
  std::size_t n_identities_skipped = 0;  // Camera mode, fewer than 3 cameras
};

/// Splits floor(split_ratio * #identities) identities, chosen by a seeded
/// shuffle, into three clusters each; the other identities stay whole.
///
/// Random: the identity's rows are shuffled and cut into three parts whose
/// sizes differ by at most one (larger parts first). Camera: the identity's
/// cameras are shuffled and dealt round-robin into three buckets, so with
/// exactly three cameras each cluster is one camera. Identities seen by
/// fewer than three cameras are left whole in Camera mode and counted.
[[nodiscard]] inline CorruptionResult corrupt_labels(const EmbeddingSet& set, double split_ratio, SplitMode mode,
                                                     std::uint64_t seed) {
  if (!(split_ratio >= 0.0 && split_ratio <= 1.0)) fail(ErrorKind::InvalidParams, "split_ratio must lie in [0, 1]");
  const auto& ids = set.require_identities();
  std::map<Label, std::vector<std::size_t>> rows_of;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] != kJunkIdentity) rows_of[ids[i]].push_back(i);

  std::vector<Label> order;
  for (const auto& [id, _] : rows_of) order.push_back(id);
  rng::Stream pick_stream(seed, 0);
  rng::shuffle(std::span(order), pick_stream);
  const auto n_split = static_cast<std::size_t>(std::floor(split_ratio * static_cast<double>(order.size())));
  const std::set<Label> selected(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_split));

  CorruptionResult result;
  LabelVector raw(set.size(), kNoise);
  Label next = 0;
  rng::Stream part_stream(seed, 1);
  for (const auto& [id, rows] : rows_of) {
    bool split = selected.contains(id);
    if (split && mode == SplitMode::Camera) {
      std::vector<Label> cams;
      for (std::size_t r : rows) cams.push_back(set.cameras()[r]);
      std::sort(cams.begin(), cams.end());
      cams.erase(std::unique(cams.begin(), cams.end()), cams.end());
      if (cams.size() < 3) {
        ++result.n_identities_skipped;
        split = false;
      } else {
        rng::shuffle(std::span(cams), part_stream);
        std::map<Label, Label> bucket;
        for (std::size_t t = 0; t < cams.size(); ++t) bucket[cams[t]] = static_cast<Label>(t % 3);
        for (std::size_t r : rows) raw[r] = next + bucket[set.cameras()[r]];
      }
    } else if (split) {
      std::vector<std::size_t> shuffled = rows;
      rng::shuffle(std::span(shuffled), part_stream);
      const std::size_t base = shuffled.size() / 3, extra = shuffled.size() % 3;
      std::size_t pos = 0;
      for (Label p = 0; p < 3; ++p) {
        const std::size_t size = base + (static_cast<std::size_t>(p) < extra ? 1 : 0);
        for (std::size_t k = 0; k < size; ++k) raw[shuffled[pos++]] = next + p;
      }
    }
    if (split) {
      ++result.n_identities_split;
      next += 3;
    } else {
      for (std::size_t r : rows) raw[r] = next;
      next += 1;
    }
  }
  result.labels = canonicalize(std::move(raw), {}).labels;
  result.mean_camera_entropy = mean_camera_entropy(result.labels, set.cameras());
  return result;
}

/// Keeps, per identity, a seeded choice of at most `max_cams` of its cameras
/// and drops the other rows; then optionally downsamples the survivors
/// uniformly to exactly `target_size` rows. Junk-identity rows are kept.
[[nodiscard]] inline EmbeddingSet cap_cameras_per_identity(const EmbeddingSet& set, std::size_t max_cams,
                                                           std::optional<std::size_t> target_size,
                                                           std::uint64_t seed) {
  if (max_cams < 1) fail(ErrorKind::InvalidParams, "max_cams must be >= 1");
  const auto& ids = set.require_identities();
  std::map<Label, std::set<Label>> cams_of;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] != kJunkIdentity) cams_of[ids[i]].insert(set.cameras()[i]);

  rng::Stream cam_stream(seed, 0);
  std::map<Label, std::set<Label>> allowed;
  for (const auto& [id, cams] : cams_of) {
    std::vector<Label> list(cams.begin(), cams.end());
    rng::shuffle(std::span(list), cam_stream);
    list.resize(std::min(max_cams, list.size()));
    allowed[id] = std::set<Label>(list.begin(), list.end());
  }
  std::vector<bool> mask(set.size());
  std::size_t survivors = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    mask[i] = ids[i] == kJunkIdentity || allowed[ids[i]].contains(set.cameras()[i]);
    survivors += mask[i] ? 1 : 0;
  }
  if (!target_size) return subset(set, mask);
  if (*target_size > survivors)
    fail(ErrorKind::TargetTooLarge,
         std::to_string(*target_size) + " requested, " + std::to_string(survivors) + " rows survive the cap");
  std::vector<std::size_t> kept_rows;
  for (std::size_t i = 0; i < set.size(); ++i)
    if (mask[i]) kept_rows.push_back(i);
  rng::Stream down_stream(seed, 1);
  const auto picks = rng::sample_without_replacement(kept_rows.size(), *target_size, down_stream);
  std::vector<bool> final_mask(set.size(), false);
  for (auto p : picks) final_mask[kept_rows[p]] = true;
  return subset(set, final_mask);
}

}  // namespace reid
