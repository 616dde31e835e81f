#pragma once

// `reid-debias` command-line front end. Every subcommand reads the binary
// (.redb) or CSV embedding formats, calls the library and prints a JSON
// report on stdout. Exit codes: 0 ok, 1 data/validation error (one
// "error: <Kind>: detail" line on stderr), 2 usage error.

#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "reid/analysis.hpp"
#include "reid/clustering.hpp"
#include "reid/io.hpp"
#include "reid/metrics.hpp"
#include "reid/normalize.hpp"
#include "reid/postprocess.hpp"
#include "reid/serialize.hpp"
#include "reid/synthetic.hpp"
#include "reid/usl.hpp"

namespace reid::cli {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  // io
  std::string in;
  std::vector<std::string> inputs;  // repeated --in (pseudo-labels, analyze-levels)
  std::string query, gallery, out;
  std::string stats_in, stats_out, dims_file, dist_file, truth_out, train_list;
  // normalization
  std::string group = "camera";
  std::string mode = "center-scale";
  std::string scale_anchor = "origin";
  std::string normalize;  // eval/rerank: optional camera-specific normalization over query+gallery
  bool global = false;
  std::size_t subsample = 0;
  double eps_w = kDefaultWhiteningEps;
  // clustering
  double eps = kDefaultEps;
  std::size_t min_pts = kDefaultMinPts;
  bool debias = false;
  bool discard_single_camera = false;
  bool ground_truth = false;
  std::string nmi_norm = "arithmetic";
  // postprocessing
  std::size_t k = 1;
  double alpha = 0.0;
  bool use_aqe = false, use_dba = false;
  RerankParams rerank;
  std::string ranks = "1,5,10";
  // toy constructions
  double split_ratio = 0.5;
  std::string split_mode = "camera";
  std::size_t max_cams = 1;
  std::optional<std::size_t> target_size;
  // analysis
  std::optional<std::size_t> top, bottom;
  std::string variant = "all";
  // synth
  SyntheticConfig synth;
  // common
  std::optional<std::uint64_t> seed;
  bool no_timestamp = false;
};

namespace detail {

inline NormalizationMode parse_mode(const std::string& s) {
  if (s == "center") return NormalizationMode::Center;
  if (s == "scale") return NormalizationMode::Scale;
  if (s == "center-scale") return NormalizationMode::CenterScale;
  throw UsageError("--mode must be center|scale|center-scale, got '" + s + "'");
}

inline std::vector<std::size_t> read_dims_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path);
  std::vector<std::size_t> dims;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc() || ptr != line.data() + line.size())
      fail(ErrorKind::ParseError, path + " line " + std::to_string(line_no));
    dims.push_back(v);
  }
  return dims;
}

inline std::vector<std::size_t> parse_ranks(const std::string& s) {
  std::vector<std::size_t> ranks;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || v == 0)
      throw UsageError("--ranks expects positive integers separated by commas");
    ranks.push_back(v);
  }
  if (ranks.empty()) throw UsageError("--ranks is empty");
  return ranks;
}

inline void write_text(const std::string& path, const std::string& text) {
  reid::detail::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct QueryGallery {
  EmbeddingSet query;
  EmbeddingSet gallery;
};

inline QueryGallery load_query_gallery(const RunConfig& c) {
  if (!c.in.empty()) {
    if (!c.query.empty() || !c.gallery.empty()) throw UsageError("use either --in or --query/--gallery");
    auto split = split_query_gallery(load_any(c.in));
    return {std::move(split.query), std::move(split.gallery)};
  }
  if (c.query.empty() || c.gallery.empty()) throw UsageError("need --in, or both --query and --gallery");
  auto [q, g] = reid::load_query_gallery(c.query, c.gallery);
  return {std::move(q), std::move(g)};
}

/// Camera-specific normalization with statistics over query and gallery
/// together.
inline QueryGallery normalize_jointly(const QueryGallery& qg, NormalizationMode mode, const std::string& group) {
  const auto all = concat(qg.query, qg.gallery);
  const auto normalized = apply_normalization(all, compute_group_stats(all, group), mode);
  std::vector<bool> is_query(all.size(), false);
  std::fill(is_query.begin(), is_query.begin() + static_cast<std::ptrdiff_t>(qg.query.size()), true);
  std::vector<bool> is_gallery(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) is_gallery[i] = !is_query[i];
  return {subset(normalized, is_query), subset(normalized, is_gallery)};
}

inline NmiNormalization parse_nmi(const std::string& s) {
  if (s == "arithmetic") return NmiNormalization::Arithmetic;
  if (s == "geometric") return NmiNormalization::Geometric;
  throw UsageError("--nmi must be arithmetic|geometric");
}

inline Json merge(Json base, const Json& extra) {
  for (const auto& [k, v] : extra.items()) base[k] = v;
  return base;
}

}  // namespace detail

// ---- subcommands ---------------------------------------------------------------

namespace commands {

inline Json synth(const RunConfig& c) {
  SyntheticConfig cfg = c.synth;
  if (c.seed) cfg.seed = *c.seed;
  const auto data = generate(cfg);
  const auto manifest = save_any(data.set, c.out);
  const std::string truth_path = c.truth_out.empty() ? c.out + ".truth.json" : c.truth_out;
  const Json truth = {{"schema_version", kSchemaVersion}, {"config", to_json(cfg)}, {"ground_truth", to_json(data.truth)}};
  detail::write_text(truth_path, truth.dump(2) + "\n");
  return {{"manifest", to_json(manifest)}, {"ground_truth_path", truth_path}, {"sensitive_dims", data.truth.sensitive_dims},
          {"config", to_json(cfg)}};
}

inline Json convert(const RunConfig& c) {
  const auto set = load_any(c.in);
  return {{"manifest", to_json(save_any(set, c.out))}, {"config", {{"in", c.in}, {"out", c.out}}}};
}

inline Json normalize(const RunConfig& c) {
  const auto set = load_any(c.in);
  const auto mode = detail::parse_mode(c.mode);
  const auto anchor = c.scale_anchor == "mean" ? ScaleAnchor::GroupMean : ScaleAnchor::Origin;
  Json config = {{"in", c.in}, {"out", c.out}, {"group", c.group}, {"mode", c.mode}, {"global", c.global}};
  EmbeddingSet result;
  Json stats_json = nullptr;
  if (c.global) {
    result = global_normalize(set, mode, anchor);
  } else {
    NormalizationStats stats;
    if (!c.stats_in.empty()) {
      const auto bytes = reid::detail::read_file(c.stats_in);
      Json j;
      try {
        j = Json::parse(bytes.begin(), bytes.end());
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::ParseError, c.stats_in + ": " + e.what());
      }
      stats = stats_from_json(j);
      config["stats_in"] = c.stats_in;
    } else if (c.subsample > 0) {
      stats = subsample_stats(set, c.group, c.subsample, c.seed.value_or(0));
      config["subsample"] = c.subsample;
      config["seed"] = c.seed.value_or(0);
    } else {
      stats = compute_group_stats(set, c.group);
    }
    if (!c.dims_file.empty()) {
      const auto dims = detail::read_dims_file(c.dims_file);
      result = selective_center(set, stats, dims);
      config["dims"] = dims;
      config["mode"] = "center";
    } else {
      result = apply_normalization(set, stats, mode, anchor);
    }
    if (!c.stats_out.empty()) detail::write_text(c.stats_out, to_json(stats).dump(2) + "\n");
    stats_json = to_json(stats);
  }
  const auto manifest = save_any(result, c.out);
  Json report = {{"manifest", to_json(manifest)}, {"config", config}};
  if (!stats_json.is_null()) report["stats"] = stats_json;
  return report;
}

inline Json whiten(const RunConfig& c) {
  const auto set = load_any(c.in);
  const auto stats = compute_whitening_stats(set, c.group, c.eps_w);
  const auto manifest = save_any(apply_whitening(set, stats), c.out);
  Json groups = Json::array();
  for (const auto& [id, g] : stats.groups)
    groups.push_back({{"id", id}, {"count", g.count}, {"min_eigenvalue", g.eigenvalues.minCoeff()},
                      {"max_eigenvalue", g.eigenvalues.maxCoeff()}});
  return {{"manifest", to_json(manifest)}, {"groups", groups},
          {"config", {{"in", c.in}, {"out", c.out}, {"group", c.group}, {"eps_w", c.eps_w}}}};
}

inline Json cluster(const RunConfig& c) {
  const auto set = load_any(c.in);
  const auto batch = generate_pseudo_labels(set, c.eps, c.min_pts, c.debias);
  Json report = to_json(batch.assignment);
  if (!c.out.empty()) detail::write_text(c.out, report.dump() + "\n");
  report["config"] = {{"in", c.in}, {"eps", c.eps}, {"min_pts", c.min_pts}, {"debias", c.debias}};
  return report;
}

inline Json eval(const RunConfig& c) {
  auto qg = detail::load_query_gallery(c);
  const auto ranks = detail::parse_ranks(c.ranks);
  Json config = {{"ranks", ranks}};
  if (!c.in.empty()) config["in"] = c.in;
  else config["query"] = c.query, config["gallery"] = c.gallery;
  if (!c.normalize.empty()) {
    qg = detail::normalize_jointly(qg, detail::parse_mode(c.normalize), c.group);
    config["normalize"] = c.normalize;
  }
  if (!c.dist_file.empty()) {
    if (c.use_aqe || c.use_dba) throw UsageError("--dist cannot be combined with --aqe/--dba");
    const auto m = load_matrix(c.dist_file);
    if (m.rows != qg.query.size() || m.cols != qg.gallery.size())
      fail(ErrorKind::DimensionMismatch, "distance matrix is " + std::to_string(m.rows) + "x" + std::to_string(m.cols));
    config["dist"] = c.dist_file;
    return detail::merge(
        to_json(evaluate_distances(m.values, {qg.query.require_identities(), qg.query.cameras()},
                                   {qg.gallery.require_identities(), qg.gallery.cameras()}, ranks)),
        {{"config", config}});
  }
  if (c.use_dba) {
    qg.gallery = dba(qg.gallery, c.k, c.alpha);
    config["dba"] = {{"k", c.k}, {"alpha", c.alpha}};
  }
  if (c.use_aqe) {
    qg.query = aqe(qg.query, qg.gallery, c.k, c.alpha);
    config["aqe"] = {{"k", c.k}, {"alpha", c.alpha}};
  }
  return detail::merge(to_json(evaluate_retrieval(qg.query, qg.gallery, ranks)), {{"config", config}});
}

inline Json bias(const RunConfig& c) {
  const auto set = load_any(c.in);
  const auto norm = detail::parse_nmi(c.nmi_norm);
  Json config = {{"in", c.in}, {"eps", c.eps}, {"min_pts", c.min_pts}, {"debias", c.debias}, {"nmi", c.nmi_norm}};
  Json report = to_json(bias_report(set, c.eps, c.min_pts, c.debias, norm));
  if (c.ground_truth) report["ground_truth_bias_nmi"] = nmi(set.require_identities(), set.cameras(), norm);
  report["config"] = config;
  return report;
}

inline Json rerank(const RunConfig& c) {
  auto qg = detail::load_query_gallery(c);
  Json config = {{"k1", c.rerank.k1}, {"k2", c.rerank.k2}, {"lambda", c.rerank.lambda}};
  if (!c.normalize.empty()) {
    qg = detail::normalize_jointly(qg, detail::parse_mode(c.normalize), c.group);
    config["normalize"] = c.normalize;
  }
  const auto dist = k_reciprocal_rerank(qg.query, qg.gallery, c.rerank);
  if (!c.out.empty()) save_matrix(dist, c.out);
  Json report = {{"rows", dist.rows}, {"cols", dist.cols}};
  if (qg.query.has_identities() && qg.gallery.has_identities())
    report["eval"] = to_json(evaluate_distances(dist.values, {*qg.query.identities(), qg.query.cameras()},
                                                {*qg.gallery.identities(), qg.gallery.cameras()},
                                                detail::parse_ranks(c.ranks)));
  report["config"] = config;
  return report;
}

inline Json pseudo_labels(const RunConfig& c) {
  if (c.inputs.empty()) throw UsageError("pseudo-labels needs at least one --in");
  Json epochs = Json::array();
  Json batches = Json::array();
  std::string train_list;
  for (const auto& path : c.inputs) {
    const auto set = load_any(path);
    auto batch = generate_pseudo_labels(set, c.eps, c.min_pts, c.debias, c.seed);
    if (c.discard_single_camera) batch = discard_single_camera_clusters(batch, set.cameras());
    const auto kept = static_cast<std::size_t>(std::count(batch.kept.begin(), batch.kept.end(), true));
    epochs.push_back(detail::merge({{"in", path}, {"n_kept", kept}}, to_json(bias_of_labels(batch.effective_labels(), set))));
    batches.push_back(to_json(batch));
    train_list = training_list(batch);
  }
  if (!c.out.empty()) detail::write_text(c.out, (batches.size() == 1 ? batches[0] : batches).dump() + "\n");
  if (!c.train_list.empty()) detail::write_text(c.train_list, train_list);
  return {{"epochs", epochs},
          {"config",
           {{"eps", c.eps}, {"min_pts", c.min_pts}, {"debias", c.debias},
            {"discard_single_camera", c.discard_single_camera}, {"seed", c.seed ? Json(*c.seed) : Json(nullptr)}}}};
}

inline Json corrupt(const RunConfig& c) {
  const auto set = load_any(c.in);
  SplitMode mode;
  if (c.split_mode == "camera") mode = SplitMode::Camera;
  else if (c.split_mode == "random") mode = SplitMode::Random;
  else throw UsageError("--mode must be camera|random for corrupt");
  const std::uint64_t seed = c.seed.value_or(0);
  const auto r = corrupt_labels(set, c.split_ratio, mode, seed);
  Json report = {{"nmi_identity", nmi(r.labels, set.require_identities())},
                 {"mean_camera_entropy", r.mean_camera_entropy},
                 {"n_identities_split", r.n_identities_split},
                 {"n_identities_skipped", r.n_identities_skipped},
                 {"labels", r.labels},
                 {"config", {{"in", c.in}, {"split_ratio", c.split_ratio}, {"mode", c.split_mode}, {"seed", seed}}}};
  if (!c.out.empty()) detail::write_text(c.out, Json{{"labels", r.labels}}.dump() + "\n");
  return report;
}

inline Json cap(const RunConfig& c) {
  const auto set = load_any(c.in);
  const std::uint64_t seed = c.seed.value_or(0);
  const auto capped = cap_cameras_per_identity(set, c.max_cams, c.target_size, seed);
  Json config = {{"in", c.in}, {"out", c.out}, {"max_cams", c.max_cams}, {"seed", seed}};
  config["target_size"] = c.target_size ? Json(*c.target_size) : Json(nullptr);
  return {{"manifest", to_json(save_any(capped, c.out))}, {"config", config}};
}

inline Json analyze_dims(const RunConfig& c) {
  const auto set = load_any(c.in);
  const auto var = camera_mean_dim_variance(set);
  const auto order = rank_dims_by_camera_variance(set);
  if (!c.out.empty()) {
    std::ostringstream csv;
    csv.precision(17);
    csv << "dim,variance\n";
    for (std::size_t d = 0; d < var.size(); ++d) csv << d << ',' << var[d] << '\n';
    detail::write_text(c.out, csv.str());
  }
  return {{"variance", var}, {"order", order}, {"config", {{"in", c.in}}}};
}

inline Json analyze_displacement(const RunConfig& c) {
  const auto set = load_any(c.in);
  Json config = {{"in", c.in}};
  std::optional<std::vector<std::size_t>> dims;
  const int selectors = (!c.dims_file.empty()) + c.top.has_value() + c.bottom.has_value();
  if (selectors > 1) throw UsageError("use at most one of --dims/--top/--bottom");
  if (!c.dims_file.empty()) {
    dims = detail::read_dims_file(c.dims_file);
  } else if (c.top || c.bottom) {
    auto order = rank_dims_by_camera_variance(set);
    const std::size_t k = std::min(c.top ? *c.top : *c.bottom, order.size());
    if (c.bottom) std::reverse(order.begin(), order.end());
    order.resize(k);
    dims = order;
  }
  if (dims) config["dims"] = *dims;
  const auto r = dims ? mean_displacement_similarity(set, std::span<const std::size_t>(*dims))
                      : mean_displacement_similarity(set);
  return detail::merge(to_json(r), {{"config", config}});
}

inline Json analyze_levels(const RunConfig& c) {
  if (c.inputs.size() < 2) throw UsageError("analyze-levels needs at least two --in files (level 0 first)");
  std::vector<EmbeddingSet> levels;
  for (const auto& p : c.inputs) levels.push_back(load_any(p));
  const LevelFeatureSeries series(std::move(levels));
  const std::vector<std::pair<std::string, LevelMetric>> all = {
      {"a", LevelMetric::PairwiseConsistency},
      {"b", LevelMetric::AgreementWithMean},
      {"c", LevelMetric::PerSampleContinuity},
      {"d", LevelMetric::MeanContinuity}};
  Json report = Json::object();
  bool matched = false;
  for (const auto& [name, metric] : all) {
    if (c.variant != "all" && c.variant != name) continue;
    matched = true;
    if (c.variant == "all" && series.levels() < 3 && (name == "c" || name == "d")) continue;
    Json values = Json::array();
    for (const auto& r : level_displacement_metric(series, metric)) values.push_back(to_json(r));
    report[name] = values;
  }
  if (!matched) throw UsageError("--variant must be a|b|c|d|all");
  report["config"] = {{"levels", c.inputs}, {"variant", c.variant}};
  return report;
}

}  // namespace commands

/// Parses argv-style arguments (program name excluded) and runs one
/// subcommand. The JSON report goes to `out`, diagnostics to `err`.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Camera-bias measurement and removal for re-identification embeddings", "reid-debias"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("--no-timestamp", c.no_timestamp, "Omit the timestamp field from reports");

  const auto pos = CLI::NonNegativeNumber;
  auto add_seed = [&](CLI::App* s) { s->add_option("--seed", c.seed, "Random seed"); };
  auto add_in = [&](CLI::App* s) { s->add_option("--in", c.in, "Embedding file (.redb or .csv)")->required(); };
  auto add_out = [&](CLI::App* s, bool required) {
    auto* o = s->add_option("--out", c.out, "Output file");
    if (required) o->required();
  };
  auto add_dbscan = [&](CLI::App* s) {
    s->add_option("--eps", c.eps, "DBSCAN radius in cosine distance")->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--min-pts", c.min_pts, "DBSCAN core threshold (self included)")->capture_default_str()->check(CLI::Range(1, 1 << 30));
    s->add_flag("--debias", c.debias, "Cluster camera-normalized features");
  };
  auto add_qg = [&](CLI::App* s) {
    s->add_option("--in", c.in, "Single labelled set, split into query/gallery");
    s->add_option("--query", c.query, "Query set");
    s->add_option("--gallery", c.gallery, "Gallery set");
    s->add_option("--normalize", c.normalize, "Camera-specific normalization over query+gallery: center|scale|center-scale");
    s->add_option("--group", c.group, "Label block used for normalization")->capture_default_str();
    s->add_option("--ranks", c.ranks, "CMC ranks")->capture_default_str();
  };

  auto* synth = app.add_subcommand("synth", "Generate a camera-biased synthetic set");
  add_out(synth, true);
  add_seed(synth);
  synth->add_option("--ids", c.synth.n_identities)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--cams", c.synth.n_cameras)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--samples", c.synth.samples_per_id_cam)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--dim", c.synth.dim)->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--sensitive", c.synth.sensitive_dims)->capture_default_str()->check(pos);
  synth->add_option("--offset", c.synth.offset_scale)->capture_default_str()->check(pos);
  synth->add_option("--noise", c.synth.noise_scale)->capture_default_str()->check(pos);
  synth->add_option("--truth", c.truth_out, "Ground-truth JSON path (default <out>.truth.json)");

  auto* convert = app.add_subcommand("convert", "Convert between .redb and .csv");
  add_in(convert);
  add_out(convert, true);

  auto* normalize = app.add_subcommand("normalize", "Group-specific (or global) feature normalization");
  add_in(normalize);
  add_out(normalize, true);
  add_seed(normalize);
  normalize->add_option("--group", c.group)->capture_default_str();
  normalize->add_option("--mode", c.mode)->capture_default_str()->check(CLI::IsMember({"center", "scale", "center-scale"}));
  normalize->add_option("--scale-anchor", c.scale_anchor, "Scale-only reference: origin (f/s) or mean (m+(f-m)/s)")
      ->capture_default_str()->check(CLI::IsMember({"origin", "mean"}));
  normalize->add_flag("--global", c.global, "Treat the whole set as one group");
  normalize->add_option("--dims", c.dims_file, "Center only these dimensions (one index per line)");
  normalize->add_option("--stats-in", c.stats_in, "Reuse statistics from a JSON file");
  normalize->add_option("--stats-out", c.stats_out, "Write statistics as JSON");
  normalize->add_option("--subsample", c.subsample, "Estimate statistics from this many samples per group")->check(CLI::Range(2, 1 << 30));

  auto* whiten = app.add_subcommand("whiten", "Group-specific ZCA whitening");
  add_in(whiten);
  add_out(whiten, true);
  whiten->add_option("--group", c.group)->capture_default_str();
  whiten->add_option("--eps-w", c.eps_w, "Eigenvalue regularizer")->capture_default_str()->check(CLI::PositiveNumber);

  auto* cluster = app.add_subcommand("cluster", "DBSCAN pseudo labels");
  add_in(cluster);
  add_out(cluster, false);
  add_dbscan(cluster);

  auto* eval = app.add_subcommand("eval", "mAP / CMC retrieval evaluation");
  add_qg(eval);
  eval->add_option("--dist", c.dist_file, "Precomputed query x gallery distance matrix (.rmtx)");
  eval->add_flag("--aqe", c.use_aqe, "Alpha query expansion");
  eval->add_flag("--dba", c.use_dba, "Database-side augmentation");
  eval->add_option("--k", c.k, "Neighbours for AQE/DBA")->capture_default_str()->check(CLI::Range(1, 1 << 30));
  eval->add_option("--alpha", c.alpha, "Similarity exponent for AQE/DBA")->capture_default_str()->check(pos);

  auto* bias = app.add_subcommand("bias", "Camera bias of a clustering (NMI, camera entropy)");
  add_in(bias);
  add_dbscan(bias);
  bias->add_option("--nmi", c.nmi_norm, "NMI normalization")->capture_default_str()->check(CLI::IsMember({"arithmetic", "geometric"}));
  bias->add_flag("--ground-truth", c.ground_truth, "Also report NMI(identity, camera)");

  auto* rerank = app.add_subcommand("rerank", "k-reciprocal re-ranking");
  add_qg(rerank);
  add_out(rerank, false);
  rerank->add_option("--k1", c.rerank.k1)->capture_default_str()->check(CLI::Range(1, 1 << 30));
  rerank->add_option("--k2", c.rerank.k2)->capture_default_str()->check(CLI::Range(1, 1 << 30));
  rerank->add_option("--lambda", c.rerank.lambda)->capture_default_str()->check(CLI::Range(0.0, 1.0));

  auto* pseudo = app.add_subcommand("pseudo-labels", "Debiased pseudo labelling, one --in per epoch");
  pseudo->add_option("--in", c.inputs, "Feature file(s), one per epoch")->required();
  add_out(pseudo, false);
  add_seed(pseudo);
  add_dbscan(pseudo);
  pseudo->add_flag("--discard-single-camera", c.discard_single_camera, "Drop clusters spanning one camera");
  pseudo->add_option("--train-list", c.train_list, "Write 'index cluster' lines for the last epoch");

  auto* corrupt = app.add_subcommand("corrupt", "Split identities into three clusters by camera or at random");
  add_in(corrupt);
  add_out(corrupt, false);
  add_seed(corrupt);
  corrupt->add_option("--split-ratio", c.split_ratio)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  corrupt->add_option("--mode", c.split_mode)->capture_default_str()->check(CLI::IsMember({"camera", "random"}));

  auto* cap = app.add_subcommand("cap", "Limit cameras per identity");
  add_in(cap);
  add_out(cap, true);
  add_seed(cap);
  cap->add_option("--max-cams", c.max_cams)->capture_default_str()->check(CLI::Range(1, 1 << 30));
  cap->add_option("--target-size", c.target_size, "Downsample survivors to exactly this many rows");

  auto* dims = app.add_subcommand("analyze-dims", "Per-dimension variance of camera means");
  add_in(dims);
  add_out(dims, false);

  auto* disp = app.add_subcommand("analyze-displacement", "Cosine similarity of identity displacement vectors");
  add_in(disp);
  disp->add_option("--dims", c.dims_file, "Restrict to these dimensions (one index per line)");
  disp->add_option("--top", c.top, "Restrict to the K most camera-sensitive dimensions");
  disp->add_option("--bottom", c.bottom, "Restrict to the K least camera-sensitive dimensions");

  auto* levels = app.add_subcommand("analyze-levels", "Displacement metrics across transformation levels");
  levels->add_option("--in", c.inputs, "Feature file per level, level 0 first")->required();
  levels->add_option("--variant", c.variant)->capture_default_str()->check(CLI::IsMember({"a", "b", "c", "d", "all"}));

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  try {
    Json report;
    if (name == "synth") report = commands::synth(c);
    else if (name == "convert") report = commands::convert(c);
    else if (name == "normalize") report = commands::normalize(c);
    else if (name == "whiten") report = commands::whiten(c);
    else if (name == "cluster") report = commands::cluster(c);
    else if (name == "eval") report = commands::eval(c);
    else if (name == "bias") report = commands::bias(c);
    else if (name == "rerank") report = commands::rerank(c);
    else if (name == "pseudo-labels") report = commands::pseudo_labels(c);
    else if (name == "corrupt") report = commands::corrupt(c);
    else if (name == "cap") report = commands::cap(c);
    else if (name == "analyze-dims") report = commands::analyze_dims(c);
    else if (name == "analyze-displacement") report = commands::analyze_displacement(c);
    else report = commands::analyze_levels(c);

    Json envelope = {{"schema_version", kSchemaVersion}, {"command", name}};
    if (!c.no_timestamp) envelope["timestamp"] = detail::utc_timestamp();
    out << detail::merge(envelope, report).dump(2) << "\n";
    return 0;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace reid::cli
