#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "reid/error.hpp"

namespace reid {

using Label = std::int32_t;
using LabelVector = std::vector<Label>;

/// Identity label for samples whose identity is unknown (distractors, junk).
inline constexpr Label kJunkIdentity = -1;

inline constexpr std::string_view kCameraBlock = "camera";
inline constexpr std::string_view kIdentityBlock = "identity";

/// N x D float embeddings plus row-aligned camera, identity and group labels.
///
/// Instances are validated on construction and immutable afterwards; every
/// transform returns a new set. Features are stored as f32 (row-major) and
/// all statistics over them accumulate in double.
class EmbeddingSet {
 public:
  EmbeddingSet() = default;

  EmbeddingSet(std::size_t n, std::size_t dim, std::vector<float> features, LabelVector cameras,
               std::optional<LabelVector> identities = std::nullopt,
               std::map<std::string, LabelVector> groups = {})
      : n_(n),
        dim_(dim),
        features_(std::move(features)),
        cameras_(std::move(cameras)),
        identities_(std::move(identities)),
        groups_(std::move(groups)) {
    validate();
  }

  [[nodiscard]] std::size_t size() const noexcept { return n_; }
  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] bool empty() const noexcept { return n_ == 0; }

  [[nodiscard]] std::span<const float> features() const noexcept { return features_; }
  [[nodiscard]] std::span<const float> row(std::size_t i) const noexcept {
    return std::span<const float>(features_).subspan(i * dim_, dim_);
  }
  [[nodiscard]] float at(std::size_t i, std::size_t d) const noexcept { return features_[i * dim_ + d]; }

  [[nodiscard]] const LabelVector& cameras() const noexcept { return cameras_; }
  [[nodiscard]] bool has_identities() const noexcept { return identities_.has_value(); }
  [[nodiscard]] const std::optional<LabelVector>& identities() const noexcept { return identities_; }
  [[nodiscard]] const std::map<std::string, LabelVector>& groups() const noexcept { return groups_; }

  /// Identity labels; throws MissingIdentityLabels when the set has none.
  [[nodiscard]] const LabelVector& require_identities() const {
    if (!identities_) fail(ErrorKind::MissingIdentityLabels, "embedding set carries no identity labels");
    return *identities_;
  }

  /// Resolves "camera", "identity" or any group name to its label array.
  [[nodiscard]] const LabelVector& labels(std::string_view name) const {
    if (name == kCameraBlock) return cameras_;
    if (name == kIdentityBlock) {
      if (identities_) return *identities_;
      fail(ErrorKind::UnknownGroupName, "identity");
    }
    auto it = groups_.find(std::string(name));
    if (it == groups_.end()) fail(ErrorKind::UnknownGroupName, std::string(name));
    return it->second;
  }

  [[nodiscard]] std::size_t camera_count() const { return std::set<Label>(cameras_.begin(), cameras_.end()).size(); }

  /// Same labels, new features. The replacement must have the same shape.
  [[nodiscard]] EmbeddingSet with_features(std::vector<float> features) const {
    return EmbeddingSet(n_, dim_, std::move(features), cameras_, identities_, groups_);
  }

  [[nodiscard]] EmbeddingSet with_group(const std::string& name, LabelVector labels) const {
    auto groups = groups_;
    groups[name] = std::move(labels);
    return EmbeddingSet(n_, dim_, features_, cameras_, identities_, std::move(groups));
  }

  friend bool operator==(const EmbeddingSet&, const EmbeddingSet&) = default;

 private:
  void validate() const {
    if (features_.size() != n_ * dim_)
      fail(ErrorKind::LabelLengthMismatch,
           "feature buffer holds " + std::to_string(features_.size()) + " values, expected " +
               std::to_string(n_ * dim_));
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t d = 0; d < dim_; ++d)
        if (!std::isfinite(features_[i * dim_ + d]))
          fail(ErrorKind::NonFiniteFeature, "row " + std::to_string(i) + ", col " + std::to_string(d));
    check_labels("camera", cameras_, 0);
    if (identities_) check_labels("identity", *identities_, kJunkIdentity);
    for (const auto& [name, labels] : groups_) {
      if (name == kCameraBlock || name == kIdentityBlock || name.empty() || name.size() > 255)
        fail(ErrorKind::InvalidLabel, "illegal group name '" + name + "'");
      check_labels(name, labels, 0);
    }
  }

  void check_labels(const std::string& name, const LabelVector& labels, Label min_value) const {
    if (labels.size() != n_)
      fail(ErrorKind::LabelLengthMismatch,
           name + " has " + std::to_string(labels.size()) + " labels for " + std::to_string(n_) + " rows");
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] < min_value)
        fail(ErrorKind::InvalidLabel, name + " label " + std::to_string(labels[i]) + " at row " + std::to_string(i));
  }

  std::size_t n_ = 0;
  std::size_t dim_ = 0;
  std::vector<float> features_;
  LabelVector cameras_;
  std::optional<LabelVector> identities_;
  std::map<std::string, LabelVector> groups_;
};

/// Dense re-indexing in first-appearance order, e.g. [5,9,5] -> [0,1,0].
[[nodiscard]] inline LabelVector remap_first_appearance(const LabelVector& labels) {
  std::map<Label, Label> ids;
  LabelVector out;
  out.reserve(labels.size());
  for (Label l : labels) {
    auto [it, inserted] = ids.try_emplace(l, static_cast<Label>(ids.size()));
    out.push_back(it->second);
  }
  return out;
}

[[nodiscard]] inline double dot(std::span<const float> a, std::span<const float> b) noexcept {
  double acc = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) acc += static_cast<double>(a[d]) * static_cast<double>(b[d]);
  return acc;
}

[[nodiscard]] inline double l2_norm(std::span<const float> a) noexcept { return std::sqrt(dot(a, a)); }

/// Scales every row to unit Euclidean norm.
[[nodiscard]] inline EmbeddingSet row_l2_normalize(const EmbeddingSet& set) {
  std::vector<float> out(set.features().begin(), set.features().end());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double norm = l2_norm(set.row(i));
    if (norm == 0.0) fail(ErrorKind::ZeroNormRow, "row " + std::to_string(i));
    for (std::size_t d = 0; d < set.dim(); ++d)
      out[i * set.dim() + d] = static_cast<float>(static_cast<double>(set.at(i, d)) / norm);
  }
  return set.with_features(std::move(out));
}

/// Keeps the rows where `mask` is true. Camera labels are carried over as-is
/// (no remapping), so statistics on the subset still refer to the original
/// cameras.
[[nodiscard]] inline EmbeddingSet subset(const EmbeddingSet& set, const std::vector<bool>& mask) {
  if (mask.size() != set.size())
    fail(ErrorKind::MaskLengthMismatch,
         "mask has " + std::to_string(mask.size()) + " entries for " + std::to_string(set.size()) + " rows");
  std::vector<float> features;
  LabelVector cameras;
  std::optional<LabelVector> identities;
  if (set.has_identities()) identities.emplace();
  std::map<std::string, LabelVector> groups;
  for (const auto& [name, _] : set.groups()) groups[name];

  std::size_t kept = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (!mask[i]) continue;
    ++kept;
    auto r = set.row(i);
    features.insert(features.end(), r.begin(), r.end());
    cameras.push_back(set.cameras()[i]);
    if (identities) identities->push_back((*set.identities())[i]);
    for (const auto& [name, labels] : set.groups()) groups[name].push_back(labels[i]);
  }
  return EmbeddingSet(kept, set.dim(), std::move(features), std::move(cameras), std::move(identities),
                      std::move(groups));
}

/// Row-wise concatenation. Both sets must agree on dimension and on which
/// label blocks they carry.
[[nodiscard]] inline EmbeddingSet concat(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.dim() != b.dim() && !a.empty() && !b.empty())
    fail(ErrorKind::DimensionMismatch, std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  if (a.has_identities() != b.has_identities())
    fail(ErrorKind::LabelLengthMismatch, "only one side carries identity labels");
  std::vector<float> features(a.features().begin(), a.features().end());
  features.insert(features.end(), b.features().begin(), b.features().end());
  LabelVector cameras = a.cameras();
  cameras.insert(cameras.end(), b.cameras().begin(), b.cameras().end());
  std::optional<LabelVector> identities;
  if (a.has_identities()) {
    identities = *a.identities();
    identities->insert(identities->end(), b.identities()->begin(), b.identities()->end());
  }
  std::map<std::string, LabelVector> groups;
  for (const auto& [name, labels] : a.groups()) {
    auto it = b.groups().find(name);
    if (it == b.groups().end()) fail(ErrorKind::LabelLengthMismatch, "group '" + name + "' missing on one side");
    groups[name] = labels;
    groups[name].insert(groups[name].end(), it->second.begin(), it->second.end());
  }
  if (groups.size() != b.groups().size()) fail(ErrorKind::LabelLengthMismatch, "group blocks differ");
  const std::size_t dim = a.empty() ? b.dim() : a.dim();
  return EmbeddingSet(a.size() + b.size(), dim, std::move(features), std::move(cameras), std::move(identities),
                      std::move(groups));
}

/// Query/gallery partition of a labelled set: the first sample (in row order)
/// of every (identity, camera) pair becomes a query, everything else stays in
/// the gallery. Junk-identity rows always go to the gallery.
struct QueryGallerySplit {
  EmbeddingSet query;
  EmbeddingSet gallery;
  std::vector<bool> query_mask;
};

[[nodiscard]] inline QueryGallerySplit split_query_gallery(const EmbeddingSet& set) {
  const auto& ids = set.require_identities();
  std::set<std::pair<Label, Label>> seen;
  std::vector<bool> is_query(set.size(), false);
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (ids[i] == kJunkIdentity) continue;
    is_query[i] = seen.emplace(ids[i], set.cameras()[i]).second;
  }
  std::vector<bool> is_gallery(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) is_gallery[i] = !is_query[i];
  return {subset(set, is_query), subset(set, is_gallery), is_query};
}

}  // namespace reid
