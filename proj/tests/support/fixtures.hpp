#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "reid/embedding_set.hpp"

namespace fixture {

// Random set with labelled identities; every camera label in [0, cams) and
// identities in [0, ids). Rows are drawn i.i.d. so tests can shape them.
inline reid::EmbeddingSet random_set(std::mt19937_64& gen, std::size_t n, std::size_t dim, int cams, int ids,
                                     double camera_shift = 0.0) {
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> cam(0, cams - 1), id(0, ids - 1);
  std::vector<float> f(n * dim);
  reid::LabelVector c(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    c[i] = cam(gen);
    y[i] = id(gen);
  }
  // every camera present so labels stay dense after any remap
  for (int k = 0; k < cams && static_cast<std::size_t>(k) < n; ++k) c[static_cast<std::size_t>(k)] = k;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < dim; ++d)
      f[i * dim + d] = static_cast<float>(normal(gen) * (1.0 + 0.3 * c[i]) + camera_shift * c[i] * (d % 3 == 0));
  return reid::EmbeddingSet(n, dim, std::move(f), std::move(c), std::move(y));
}

inline reid::EmbeddingSet from_rows(const std::vector<std::vector<float>>& rows, reid::LabelVector cameras,
                                    std::optional<reid::LabelVector> ids = std::nullopt) {
  std::vector<float> f;
  for (const auto& r : rows) f.insert(f.end(), r.begin(), r.end());
  const std::size_t dim = rows.empty() ? 0 : rows[0].size();
  return reid::EmbeddingSet(rows.size(), dim, std::move(f), std::move(cameras), std::move(ids));
}

inline std::vector<std::vector<double>> rows_of(const reid::EmbeddingSet& s) {
  std::vector<std::vector<double>> out(s.size(), std::vector<double>(s.dim()));
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t d = 0; d < s.dim(); ++d) out[i][d] = s.at(i, d);
  return out;
}

// Scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("reid_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace fixture
