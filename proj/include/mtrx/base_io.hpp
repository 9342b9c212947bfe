#pragma once

// Experience base persistence and JSON Lines ingestion.
//
// Binary layout (all integers little-endian):
//   "MTRX" | u32 format_version
//   | u32 len, encoder_id | u32 len, encoder_version | u64 dims | u64 doc_count
//   | u32 crc32
//   | doc_count x ( u32 record_len | record )
// record = u32 json_len | json (document without embedding) | u64 dims | dims x f64
// The CRC covers every byte after the version field except the CRC itself.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "mtrx/error.hpp"
#include "mtrx/experience_base.hpp"
#include "mtrx/reasoning.hpp"
#include "mtrx/semantic_encoding.hpp"

namespace mtrx {

inline constexpr std::uint32_t kBaseFormatVersion = 1;
inline constexpr std::string_view kBaseMagic = "MTRX";

// ---------------------------------------------------------------------------
// Document JSON (shared by ingestion and the persisted record body)
// ---------------------------------------------------------------------------

inline Json document_to_json(const ScenarioDocument& doc) {
  Json steps = Json::array();
  for (const auto& s : doc.reasoning_process) steps.push_back(step_to_json(s));
  return Json{{"id", doc.doc_id},
              {"sd", doc.scenario_description},
              {"p", std::move(steps)},
              {"h", meta_action_to_json(doc.high_level_decision)},
              {"t", doc.tools_used},
              {"m", doc.metadata}};
}

/// Fills every field except embedding and encoder.
inline ScenarioDocument document_from_json(const Json& j, std::string fallback_id) {
  if (!j.is_object()) fail(ErrorCode::InvariantViolation, "document record must be a JSON object");
  ScenarioDocument doc;
  doc.doc_id = j.contains("id") ? detail::require_string(j, "id", "document") : std::move(fallback_id);
  doc.scenario_description = detail::require_string(j, "sd", "document");
  const Json& steps = detail::require(j, "p", "document");
  if (!steps.is_array()) fail(ErrorCode::InvariantViolation, "document: 'p' must be an array");
  for (std::size_t i = 0; i < steps.size(); ++i) doc.reasoning_process.push_back(step_from_json(steps[i], i));
  doc.high_level_decision = meta_action_from_json(detail::require(j, "h", "document"));
  const Json& tools = detail::require(j, "t", "document");
  if (!tools.is_array()) fail(ErrorCode::InvariantViolation, "document: 't' must be an array");
  for (const auto& t : tools) {
    if (!t.is_string()) fail(ErrorCode::InvariantViolation, "document: tool names must be strings");
    doc.tools_used.push_back(t.get<std::string>());
  }
  doc.metadata = detail::require(j, "m", "document");
  return doc;
}

/// One document per non-blank line; embeddings are computed from `sd` with `encoder`.
/// Records without "id" get "doc-<line number>".
inline std::vector<ScenarioDocument> ingest_jsonl(std::istream& in, const Encoder& encoder) {
  std::vector<ScenarioDocument> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      fail(ErrorCode::InvariantViolation, "line " + std::to_string(line_no) + ": " + e.what());
    }
    auto doc = document_from_json(j, "doc-" + std::to_string(line_no));
    doc.embedding = encoder.encode({doc.scenario_description, std::nullopt});
    doc.encoder = encoder.descriptor();
    validate_document(doc);
    docs.push_back(std::move(doc));
  }
  return docs;
}

inline std::vector<ScenarioDocument> ingest_jsonl_file(const std::filesystem::path& path,
                                                       const Encoder& encoder) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
  return ingest_jsonl(in, encoder);
}

// ---------------------------------------------------------------------------
// Binary persistence
// ---------------------------------------------------------------------------

namespace detail {

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(std::string_view s) { bytes_.append(s); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s);
  }
  std::string& bytes() noexcept { return bytes_; }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view raw(std::size_t n) {
    need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::string str() { return std::string(raw(u32())); }
  std::size_t position() const noexcept { return pos_; }
  bool at_end() const noexcept { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail(ErrorCode::CorruptFile, "unexpected end of data");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::string_view a, std::string_view b) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(a.data()), static_cast<uInt>(a.size()));
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(b.data()), static_cast<uInt>(b.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace detail

/// Serializes a snapshot to the binary format.
inline std::string serialize_base(const BaseSnapshot& base) {
  detail::ByteWriter header;
  header.str(base.encoder().encoder_id);
  header.str(base.encoder().version);
  header.u64(base.encoder().dims);
  header.u64(base.size());

  detail::ByteWriter body;
  for (const auto& doc : base.documents()) {
    detail::ByteWriter rec;
    rec.str(document_to_json(doc).dump());
    rec.u64(doc.embedding.dims());
    for (double v : doc.embedding.values()) rec.f64(v);
    body.str(rec.bytes());
  }

  detail::ByteWriter out;
  out.raw(kBaseMagic);
  out.u32(kBaseFormatVersion);
  out.raw(header.bytes());
  out.u32(detail::crc32_of(header.bytes(), body.bytes()));
  out.raw(body.bytes());
  return std::move(out.bytes());
}

inline BaseSnapshot deserialize_base(std::string_view bytes) {
  detail::ByteReader in(bytes);
  if (bytes.size() < 8 || in.raw(4) != kBaseMagic) fail(ErrorCode::CorruptFile, "missing MTRX magic");
  const std::uint32_t version = in.u32();
  if (version != kBaseFormatVersion)
    fail(ErrorCode::VersionUnsupported, "format version " + std::to_string(version) +
                                            " (supported: " + std::to_string(kBaseFormatVersion) + ")");
  const std::size_t header_begin = in.position();
  EncoderDescriptor encoder;
  encoder.encoder_id = in.str();
  encoder.version = in.str();
  encoder.dims = in.u64();
  const std::uint64_t count = in.u64();
  const auto header = bytes.substr(header_begin, in.position() - header_begin);
  const std::uint32_t stored_crc = in.u32();
  const auto body = bytes.substr(in.position());
  if (detail::crc32_of(header, body) != stored_crc) fail(ErrorCode::ChecksumMismatch, "base checksum mismatch");

  std::vector<ScenarioDocument> docs;
  docs.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(count, 1u << 20)));
  for (std::uint64_t i = 0; i < count; ++i) {
    detail::ByteReader rec(in.raw(in.u32()));
    auto doc = document_from_json(Json::parse(rec.str()), "");
    std::vector<double> values(rec.u64());
    for (double& v : values) v = rec.f64();
    if (!rec.at_end()) fail(ErrorCode::CorruptFile, "trailing bytes in record " + std::to_string(i));
    doc.embedding = EmbeddingVector(std::move(values));
    doc.encoder = encoder;
    docs.push_back(std::move(doc));
  }
  if (!in.at_end()) fail(ErrorCode::CorruptFile, "trailing bytes after last record");
  return BaseSnapshot(std::move(encoder), std::move(docs));
}

/// Writes to a temporary sibling and renames, so a crash never leaves a torn file.
inline void save_base(const BaseSnapshot& base, const std::filesystem::path& path) {
  const std::string bytes = serialize_base(base);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoFailure, "cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorCode::IoFailure, "short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::IoFailure, "cannot rename to '" + path.string() + "': " + ec.message());
}

inline void save_base(const ExperienceBase& base, const std::filesystem::path& path) {
  save_base(*base.snapshot(), path);
}

inline ExperienceBase load_base(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return ExperienceBase(deserialize_base(bytes));
}

}  // namespace mtrx
