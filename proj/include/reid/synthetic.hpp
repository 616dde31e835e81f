#pragma once

// Camera-biased embedding generator with known ground truth:
//
//   f = u_id + b_cam + e,  u ~ N(0, I_D),  e ~ N(0, noise^2 I_D)
//
// b_cam is nonzero only on k "sensitive" dimensions, drawn as offset*N(0,1)
// and then centered across cameras so the offsets sum to zero.
//
// Draw order (all from rng::Stream(seed, s)):
//   s=0  sensitive dims: sample_without_replacement(D, k), then sorted
//   s=1  centroids, identity-major, D normals each
//   s=2  offsets, camera-major over the sorted sensitive dims
//   s=3  noise, per sample in (identity, camera, repeat) order, D normals each
// Rows are emitted in that same (identity, camera, repeat) order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "reid/embedding_set.hpp"
#include "reid/rng.hpp"

namespace reid {

struct SyntheticConfig {
  std::size_t n_identities = 50;
  std::size_t n_cameras = 3;
  std::size_t samples_per_id_cam = 4;
  std::size_t dim = 64;
  std::size_t sensitive_dims = 8;
  double offset_scale = 2.0;
  double noise_scale = 1.0;
  std::uint64_t seed = 7;

  void validate() const {
    if (n_identities < 1 || n_cameras < 1 || samples_per_id_cam < 1 || dim < 1)
      fail(ErrorKind::InvalidConfig, "all counts must be >= 1");
    if (sensitive_dims > dim) fail(ErrorKind::InvalidConfig, "sensitive_dims exceeds dim");
    if (!(offset_scale >= 0.0) || !(noise_scale >= 0.0) || !std::isfinite(offset_scale) ||
        !std::isfinite(noise_scale))
      fail(ErrorKind::InvalidConfig, "scales must be finite and >= 0");
    const double n = static_cast<double>(n_identities) * static_cast<double>(n_cameras) *
                     static_cast<double>(samples_per_id_cam);
    if (n * static_cast<double>(dim) > 4.0e9) fail(ErrorKind::InvalidConfig, "requested set too large");
  }
};

struct SyntheticGroundTruth {
  std::vector<std::vector<double>> centroids;  // [identity][dim]
  std::vector<std::vector<double>> offsets;    // [camera][dim], zero off the sensitive dims
  std::vector<std::size_t> sensitive_dims;     // ascending
};

struct SyntheticData {
  EmbeddingSet set;
  SyntheticGroundTruth truth;
};

[[nodiscard]] inline SyntheticData generate(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticGroundTruth truth;

  rng::Stream dim_stream(cfg.seed, 0);
  truth.sensitive_dims = rng::sample_without_replacement(cfg.dim, cfg.sensitive_dims, dim_stream);
  std::sort(truth.sensitive_dims.begin(), truth.sensitive_dims.end());

  rng::Stream centroid_stream(cfg.seed, 1);
  truth.centroids.assign(cfg.n_identities, std::vector<double>(cfg.dim));
  for (auto& u : truth.centroids)
    for (auto& v : u) v = centroid_stream.next_normal();

  rng::Stream offset_stream(cfg.seed, 2);
  truth.offsets.assign(cfg.n_cameras, std::vector<double>(cfg.dim, 0.0));
  for (auto& b : truth.offsets)
    for (std::size_t d : truth.sensitive_dims) b[d] = cfg.offset_scale * offset_stream.next_normal();
  for (std::size_t d : truth.sensitive_dims) {
    double mean = 0.0;
    for (const auto& b : truth.offsets) mean += b[d];
    mean /= static_cast<double>(cfg.n_cameras);
    for (auto& b : truth.offsets) b[d] -= mean;
  }

  rng::Stream noise_stream(cfg.seed, 3);
  const std::size_t n = cfg.n_identities * cfg.n_cameras * cfg.samples_per_id_cam;
  std::vector<float> features;
  features.reserve(n * cfg.dim);
  LabelVector cameras, identities;
  cameras.reserve(n);
  identities.reserve(n);
  for (std::size_t id = 0; id < cfg.n_identities; ++id)
    for (std::size_t cam = 0; cam < cfg.n_cameras; ++cam)
      for (std::size_t s = 0; s < cfg.samples_per_id_cam; ++s) {
        for (std::size_t d = 0; d < cfg.dim; ++d) {
          const double e = cfg.noise_scale * noise_stream.next_normal();
          features.push_back(static_cast<float>(truth.centroids[id][d] + truth.offsets[cam][d] + e));
        }
        cameras.push_back(static_cast<Label>(cam));
        identities.push_back(static_cast<Label>(id));
      }
  return {EmbeddingSet(n, cfg.dim, std::move(features), std::move(cameras), std::move(identities)), std::move(truth)};
}

}  // namespace reid
