#pragma once

#include <cstdio>
#include <string>

#include <json.hpp>

#include "reid/analysis.hpp"
#include "reid/clustering.hpp"
#include "reid/io.hpp"
#include "reid/metrics.hpp"
#include "reid/normalize.hpp"
#include "reid/synthetic.hpp"
#include "reid/usl.hpp"

namespace reid {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

[[nodiscard]] inline std::string hex64(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

[[nodiscard]] inline Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

[[nodiscard]] inline Json to_json(const DatasetManifest& m) {
  return {{"n_samples", m.n_samples},
          {"dim", m.dim},
          {"label_block_names", m.label_block_names},
          {"source_path", m.source_path},
          {"checksum", hex64(m.checksum)}};
}

[[nodiscard]] inline Json to_json(const NormalizationStats& s) {
  Json groups = Json::array();
  for (const auto& [id, g] : s.groups) groups.push_back({{"id", id}, {"count", g.count}, {"mean", g.mean}, {"std", g.std}});
  return {{"group_name", s.group_name}, {"groups", groups}};
}

[[nodiscard]] inline NormalizationStats stats_from_json(const Json& j) {
  try {
    NormalizationStats s;
    s.group_name = j.at("group_name").get<std::string>();
    for (const auto& g : j.at("groups")) {
      GroupStats gs;
      gs.count = g.at("count").get<std::size_t>();
      gs.mean = g.at("mean").get<std::vector<double>>();
      gs.std = g.at("std").get<std::vector<double>>();
      if (gs.mean.size() != gs.std.size()) fail(ErrorKind::ParseError, "mean/std length differ");
      s.groups.emplace(g.at("id").get<Label>(), std::move(gs));
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("normalization stats: ") + e.what());
  }
}

[[nodiscard]] inline Json to_json(const ClusterAssignment& a) {
  return {{"eps", a.params.eps}, {"min_pts", a.params.min_pts}, {"n_clusters", a.n_clusters}, {"labels", a.labels}};
}

[[nodiscard]] inline Json to_json(const EvalReport& r) {
  Json cmc = Json::object();
  for (const auto& [rank, v] : r.cmc) cmc[std::to_string(rank)] = v;
  return {{"map", r.map},
          {"cmc", cmc},
          {"n_queries_evaluated", r.n_queries_evaluated},
          {"n_queries_skipped", r.n_queries_skipped}};
}

[[nodiscard]] inline Json to_json(const BiasReport& r) {
  return {{"bias_nmi", r.bias_nmi},
          {"accuracy_nmi", optional_number(r.accuracy_nmi)},
          {"mean_camera_entropy", r.mean_camera_entropy},
          {"n_clusters", r.n_clusters},
          {"single_camera_cluster_fraction", r.single_camera_cluster_fraction}};
}

[[nodiscard]] inline Json to_json(const PseudoLabelBatch& b) {
  std::vector<int> kept(b.kept.begin(), b.kept.end());
  Json prov = {{"debias", b.provenance.debias},
               {"discard_single_camera", b.provenance.discard_single_camera},
               {"eps", b.provenance.eps},
               {"min_pts", b.provenance.min_pts},
               {"seed", b.provenance.seed ? Json(*b.provenance.seed) : Json(nullptr)}};
  return {{"labels", b.assignment.labels},
          {"kept", kept},
          {"n_clusters", b.assignment.n_clusters},
          {"provenance", prov}};
}

/// One "index cluster_id" line per kept sample.
[[nodiscard]] inline std::string training_list(const PseudoLabelBatch& b) {
  std::string out;
  for (std::size_t i = 0; i < b.kept.size(); ++i)
    if (b.kept[i]) out += std::to_string(i) + ' ' + std::to_string(b.assignment.labels[i]) + '\n';
  return out;
}

[[nodiscard]] inline Json to_json(const SimilarityResult& r) {
  return {{"value", optional_number(r.value)}, {"n_skipped", r.n_skipped}, {"n_terms", r.n_terms}};
}

[[nodiscard]] inline Json to_json(const SyntheticConfig& c) {
  return {{"n_identities", c.n_identities}, {"n_cameras", c.n_cameras},
          {"samples_per_id_cam", c.samples_per_id_cam}, {"dim", c.dim},
          {"sensitive_dims", c.sensitive_dims}, {"offset_scale", c.offset_scale},
          {"noise_scale", c.noise_scale}, {"seed", c.seed}};
}

[[nodiscard]] inline Json to_json(const SyntheticGroundTruth& t) {
  return {{"sensitive_dims", t.sensitive_dims}, {"camera_offsets", t.offsets}, {"identity_centroids", t.centroids}};
}

}  // namespace reid
