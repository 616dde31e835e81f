#pragma once

// On-disk formats.
//
// Embedding file (.redb), little-endian:
//   "REDB" | u16 version=1 | u8 dtype=1 (f32) | u8 reserved=0 | u32 N | u32 D
//   N*D f32 row-major
//   u32 block_count, then per block: u8 name_len | name bytes | N i32 labels
// Block "camera" is mandatory, "identity" optional, anything else is a group.
//
// Matrix file (.rmtx): "RMTX" | u32 rows | u32 cols | rows*cols f32 row-major.

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "reid/embedding_set.hpp"

namespace reid {

inline constexpr std::array<std::uint8_t, 4> kEmbeddingMagic = {0x52, 0x45, 0x44, 0x42};
inline constexpr std::array<std::uint8_t, 4> kMatrixMagic = {0x52, 0x4D, 0x54, 0x58};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 1;

struct DatasetManifest {
  std::size_t n_samples = 0;
  std::size_t dim = 0;
  std::vector<std::string> label_block_names;
  std::string source_path;
  std::uint64_t checksum = 0;
};

/// 64-bit FNV-1a.
[[nodiscard]] inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void i32(std::int32_t v) { le(static_cast<std::uint32_t>(v), 4); }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v), 4); }
  void raw(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }
  [[nodiscard]] const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

 private:
  void le(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::int32_t i32() { return static_cast<std::int32_t>(static_cast<std::uint32_t>(le(4))); }
  float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(le(4))); }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  [[nodiscard]] std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      fail(ErrorKind::TruncatedFile,
           "need " + std::to_string(n) + " bytes at offset " + std::to_string(pos_) + ", file has " +
               std::to_string(bytes_.size()));
  }
  std::uint64_t le(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

inline std::vector<std::uint8_t> feature_bytes(const EmbeddingSet& set) {
  ByteWriter w;
  for (float v : set.features()) w.f32(v);
  return w.bytes();
}

}  // namespace detail

/// Checksum over the serialized (little-endian f32) feature payload.
[[nodiscard]] inline std::uint64_t feature_checksum(const EmbeddingSet& set) {
  return fnv1a64(detail::feature_bytes(set));
}

/// Block names in serialization order: camera, identity (if any), then groups
/// in lexicographic order.
[[nodiscard]] inline std::vector<std::string> label_block_names(const EmbeddingSet& set) {
  std::vector<std::string> names{std::string(kCameraBlock)};
  if (set.has_identities()) names.emplace_back(kIdentityBlock);
  for (const auto& [name, _] : set.groups()) names.push_back(name);
  return names;
}

[[nodiscard]] inline DatasetManifest make_manifest(const EmbeddingSet& set, const std::string& source) {
  return {set.size(), set.dim(), label_block_names(set), source, feature_checksum(set)};
}

[[nodiscard]] inline std::vector<std::uint8_t> encode_binary(const EmbeddingSet& set) {
  detail::ByteWriter w;
  w.raw(kEmbeddingMagic);
  w.u16(kFormatVersion);
  w.u8(kDtypeF32);
  w.u8(0);
  w.u32(static_cast<std::uint32_t>(set.size()));
  w.u32(static_cast<std::uint32_t>(set.dim()));
  for (float v : set.features()) w.f32(v);
  const auto names = label_block_names(set);
  w.u32(static_cast<std::uint32_t>(names.size()));
  for (const auto& name : names) {
    w.u8(static_cast<std::uint8_t>(name.size()));
    w.raw(std::span(reinterpret_cast<const std::uint8_t*>(name.data()), name.size()));
    for (Label l : set.labels(name)) w.i32(l);
  }
  return w.bytes();
}

/// Parses a .redb payload. Cameras are remapped to 0..M-1 in order of first
/// appearance unless remap_cameras is false.
[[nodiscard]] inline EmbeddingSet decode_binary(std::span<const std::uint8_t> bytes, bool remap_cameras = true) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || !std::equal(kEmbeddingMagic.begin(), kEmbeddingMagic.end(), bytes.begin()))
    fail(ErrorKind::BadMagic, "expected 'REDB'");
  r.take(4);
  const auto version = r.u16();
  if (version != kFormatVersion) fail(ErrorKind::UnsupportedVersion, "version " + std::to_string(version));
  const auto dtype = r.u8();
  if (dtype != kDtypeF32) fail(ErrorKind::UnsupportedVersion, "dtype " + std::to_string(dtype));
  r.u8();
  const std::size_t n = r.u32();
  const std::size_t dim = r.u32();
  if (r.remaining() / 4 < n * dim) fail(ErrorKind::TruncatedFile, "feature payload shorter than N*D");
  std::vector<float> features(n * dim);
  for (auto& v : features) v = r.f32();
  for (std::size_t k = 0; k < features.size(); ++k)
    if (!std::isfinite(features[k]))
      fail(ErrorKind::NonFiniteFeature, "row " + std::to_string(k / dim) + ", col " + std::to_string(k % dim));

  const std::uint32_t blocks = r.u32();
  std::optional<LabelVector> cameras;
  std::optional<LabelVector> identities;
  std::map<std::string, LabelVector> groups;
  for (std::uint32_t b = 0; b < blocks; ++b) {
    const auto len = r.u8();
    auto name_bytes = r.take(len);
    std::string name(name_bytes.begin(), name_bytes.end());
    if (r.remaining() / 4 < n) fail(ErrorKind::TruncatedFile, "label block '" + name + "'");
    LabelVector labels(n);
    for (auto& l : labels) l = r.i32();
    if (name == kCameraBlock)
      cameras = std::move(labels);
    else if (name == kIdentityBlock)
      identities = std::move(labels);
    else
      groups[name] = std::move(labels);
  }
  if (r.remaining() != 0) fail(ErrorKind::TrailingData, std::to_string(r.remaining()) + " unread bytes");
  if (!cameras) fail(ErrorKind::HeaderMismatch, "mandatory 'camera' block missing");
  return EmbeddingSet(n, dim, std::move(features), remap_cameras ? remap_first_appearance(*cameras) : *cameras,
                      std::move(identities),
                      std::move(groups));
}

[[nodiscard]] inline EmbeddingSet load_binary(const std::filesystem::path& path, bool remap_cameras = true) {
  return decode_binary(detail::read_file(path), remap_cameras);
}

inline DatasetManifest save_binary(const EmbeddingSet& set, const std::filesystem::path& path) {
  detail::write_file(path, encode_binary(set));
  return make_manifest(set, path.string());
}

// ---- CSV ------------------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    cells.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

template <typename T>
T parse_cell(std::string_view cell, std::size_t line_no) {
  while (!cell.empty() && (cell.front() == ' ')) cell.remove_prefix(1);
  while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\r')) cell.remove_suffix(1);
  T value{};
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size())
    fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": bad value '" + std::string(cell) + "'");
  return value;
}

inline std::string shortest(float v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace detail

/// Parses `dim_0,...,dim_{D-1},camera[,identity][,group_<name>...]`.
[[nodiscard]] inline EmbeddingSet parse_csv(std::string_view text, bool remap_cameras = true) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) fail(ErrorKind::HeaderMismatch, "empty CSV");

  const auto header = detail::split_commas(lines.front());
  std::size_t dim = 0;
  while (dim < header.size() && header[dim] == "dim_" + std::to_string(dim)) ++dim;
  std::size_t col = dim;
  if (col >= header.size() || header[col] != kCameraBlock)
    fail(ErrorKind::HeaderMismatch, "expected 'camera' column after dim_0..dim_" + std::to_string(dim));
  ++col;
  bool with_identity = false;
  if (col < header.size() && header[col] == kIdentityBlock) {
    with_identity = true;
    ++col;
  }
  std::vector<std::string> group_names;
  for (; col < header.size(); ++col) {
    if (!header[col].starts_with("group_") || header[col].size() == 6)
      fail(ErrorKind::HeaderMismatch, "unexpected column '" + std::string(header[col]) + "'");
    group_names.emplace_back(header[col].substr(6));
  }

  const std::size_t n = lines.size() - 1;
  std::vector<float> features;
  features.reserve(n * dim);
  LabelVector cameras;
  std::optional<LabelVector> identities;
  if (with_identity) identities.emplace();
  std::map<std::string, LabelVector> groups;
  for (const auto& g : group_names) groups[g];

  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t line_no = r + 2;
    const auto cells = detail::split_commas(lines[r + 1]);
    if (cells.size() != header.size())
      fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                      std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
    std::size_t c = 0;
    for (; c < dim; ++c) {
      const float v = detail::parse_cell<float>(cells[c], line_no);
      if (!std::isfinite(v)) fail(ErrorKind::NonFiniteFeature, "row " + std::to_string(r) + ", col " + std::to_string(c));
      features.push_back(v);
    }
    cameras.push_back(detail::parse_cell<Label>(cells[c++], line_no));
    if (identities) identities->push_back(detail::parse_cell<Label>(cells[c++], line_no));
    for (const auto& g : group_names) groups[g].push_back(detail::parse_cell<Label>(cells[c++], line_no));
  }
  return EmbeddingSet(n, dim, std::move(features), remap_cameras ? remap_first_appearance(cameras) : cameras,
                      std::move(identities),
                      std::move(groups));
}

[[nodiscard]] inline EmbeddingSet load_csv(const std::filesystem::path& path, bool remap_cameras = true) {
  const auto bytes = detail::read_file(path);
  return parse_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), remap_cameras);
}

/// Writes floats in shortest round-trip form, so CSV and binary encodings of
/// a set load to identical values.
[[nodiscard]] inline std::string format_csv(const EmbeddingSet& set) {
  std::ostringstream out;
  for (std::size_t d = 0; d < set.dim(); ++d) out << "dim_" << d << ',';
  out << kCameraBlock;
  if (set.has_identities()) out << ',' << kIdentityBlock;
  for (const auto& [name, _] : set.groups()) out << ",group_" << name;
  out << '\n';
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (std::size_t d = 0; d < set.dim(); ++d) out << detail::shortest(set.at(i, d)) << ',';
    out << set.cameras()[i];
    if (set.has_identities()) out << ',' << (*set.identities())[i];
    for (const auto& [_, labels] : set.groups()) out << ',' << labels[i];
    out << '\n';
  }
  return out.str();
}

inline DatasetManifest save_csv(const EmbeddingSet& set, const std::filesystem::path& path) {
  const auto text = format_csv(set);
  detail::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return make_manifest(set, path.string());
}

/// Dispatches on extension: ".csv" is CSV, anything else is the binary format.
[[nodiscard]] inline EmbeddingSet load_any(const std::filesystem::path& path, bool remap_cameras = true) {
  return path.extension() == ".csv" ? load_csv(path, remap_cameras) : load_binary(path, remap_cameras);
}

/// Loads a query file and a gallery file that share camera ids. Cameras are
/// remapped over the two files together, query rows first, so camera k means
/// the same camera on both sides.
[[nodiscard]] inline std::pair<EmbeddingSet, EmbeddingSet> load_query_gallery(const std::filesystem::path& query,
                                                                              const std::filesystem::path& gallery) {
  const auto q = load_any(query, false);
  const auto g = load_any(gallery, false);
  LabelVector joint(q.cameras().begin(), q.cameras().end());
  joint.insert(joint.end(), g.cameras().begin(), g.cameras().end());
  joint = remap_first_appearance(joint);
  auto rebuild = [](const EmbeddingSet& s, LabelVector cams) {
    return EmbeddingSet(s.size(), s.dim(), std::vector<float>(s.features().begin(), s.features().end()),
                        std::move(cams), s.identities(), s.groups());
  };
  const auto split = joint.begin() + static_cast<std::ptrdiff_t>(q.size());
  return {rebuild(q, LabelVector(joint.begin(), split)), rebuild(g, LabelVector(split, joint.end()))};
}

inline DatasetManifest save_any(const EmbeddingSet& set, const std::filesystem::path& path) {
  return path.extension() == ".csv" ? save_csv(set, path) : save_binary(set, path);
}

// ---- dense matrix ---------------------------------------------------------

struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major

  [[nodiscard]] double operator()(std::size_t r, std::size_t c) const noexcept { return values[r * cols + c]; }
  [[nodiscard]] double& operator()(std::size_t r, std::size_t c) noexcept { return values[r * cols + c]; }
};

[[nodiscard]] inline std::vector<std::uint8_t> encode_matrix(const DenseMatrix& m) {
  detail::ByteWriter w;
  w.raw(kMatrixMagic);
  w.u32(static_cast<std::uint32_t>(m.rows));
  w.u32(static_cast<std::uint32_t>(m.cols));
  for (double v : m.values) w.f32(static_cast<float>(v));
  return w.bytes();
}

[[nodiscard]] inline DenseMatrix decode_matrix(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(kMatrixMagic.begin(), kMatrixMagic.end(), bytes.begin()))
    fail(ErrorKind::BadMagic, "expected 'RMTX'");
  detail::ByteReader r(bytes);
  r.take(4);
  DenseMatrix m;
  m.rows = r.u32();
  m.cols = r.u32();
  if (r.remaining() / 4 < m.rows * m.cols) fail(ErrorKind::TruncatedFile, "matrix payload shorter than rows*cols");
  m.values.resize(m.rows * m.cols);
  for (auto& v : m.values) v = r.f32();
  if (r.remaining() != 0) fail(ErrorKind::TrailingData, std::to_string(r.remaining()) + " unread bytes");
  return m;
}

inline void save_matrix(const DenseMatrix& m, const std::filesystem::path& path) {
  detail::write_file(path, encode_matrix(m));
}

[[nodiscard]] inline DenseMatrix load_matrix(const std::filesystem::path& path) {
  return decode_matrix(detail::read_file(path));
}

}  // namespace reid
