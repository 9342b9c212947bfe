#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mtrx/error.hpp"
#include "mtrx/reasoning.hpp"
#include "mtrx/semantic_encoding.hpp"

namespace mtrx {

enum class ParamType { number, integer, string };

constexpr std::string_view to_string(ParamType t) noexcept {
  switch (t) {
    case ParamType::number: return "number";
    case ParamType::integer: return "integer";
    case ParamType::string: return "string";
  }
  return "?";
}

struct ParamSpec {
  std::string name;
  ParamType type = ParamType::string;
  bool required = true;
};

struct ToolSpec {
  std::string name;
  std::vector<ParamSpec> params;  // may be explicitly empty
  std::string description;
};

namespace tools {
inline constexpr std::string_view kDetectObjects = "detect_objects";
inline constexpr std::string_view kDetectOpenVocab = "detect_open_vocab";
inline constexpr std::string_view kCropImage = "crop_image";
}  // namespace tools

/// The three built-in perception tools.
inline std::vector<ToolSpec> builtin_tool_specs() {
  return {
      {std::string(tools::kDetectObjects),
       {{"image_ref", ParamType::string, true}, {"range", ParamType::number, true}},
       "Detect common traffic agents (cars, pedestrians, cyclists) within range_m meters."},
      {std::string(tools::kDetectOpenVocab),
       {{"image_ref", ParamType::string, true}, {"query", ParamType::string, true}},
       "Find objects matching a free-text query."},
      {std::string(tools::kCropImage),
       {{"image_ref", ParamType::string, true},
        {"x", ParamType::integer, true},
        {"y", ParamType::integer, true},
        {"w", ParamType::integer, true},
        {"h", ParamType::integer, true},
        {"out_ref", ParamType::string, true}},
       "Crop the pixel rectangle (x, y, w, h) of image_ref into out_ref."},
  };
}

/// Throws ArgsInvalid naming the first offending parameter.
inline void validate_args(const ToolSpec& spec, const Json& args) {
  if (!args.is_object()) fail(ErrorCode::ArgsInvalid, spec.name + ": args must be a JSON object");
  for (const auto& p : spec.params) {
    if (!args.contains(p.name)) {
      if (p.required) fail(ErrorCode::ArgsInvalid, spec.name + ": missing required param '" + p.name + "'");
      continue;
    }
    const Json& v = args.at(p.name);
    const bool ok = (p.type == ParamType::string && v.is_string()) ||
                    (p.type == ParamType::number && v.is_number()) ||
                    (p.type == ParamType::integer && v.is_number_integer());
    if (!ok)
      fail(ErrorCode::ArgsInvalid,
           spec.name + ": param '" + p.name + "' must be " + std::string(to_string(p.type)));
  }
  for (const auto& [key, _] : args.items()) {
    const bool known = std::any_of(spec.params.begin(), spec.params.end(),
                                   [&key](const ParamSpec& p) { return p.name == key; });
    if (!known) fail(ErrorCode::ArgsInvalid, spec.name + ": unknown param '" + key + "'");
  }
}

/// Executes validated invocations. Domain failures throw mtrx::Error; the registry turns
/// everything except BackendUnavailable into an error ToolResult.
class ToolBackend {
 public:
  virtual ~ToolBackend() = default;
  virtual ToolResult run(const ToolInvocation& inv) const = 0;
};

class ToolRegistry {
 public:
  void register_tool(ToolSpec spec, std::shared_ptr<const ToolBackend> backend) {
    if (!backend) fail(ErrorCode::InvariantViolation, "tool '" + spec.name + "' has no backend");
    if (spec.name.empty()) fail(ErrorCode::InvariantViolation, "tool name must be non-empty");
    if (entries_.count(spec.name)) fail(ErrorCode::DuplicateTool, "tool '" + spec.name + "' already registered");
    std::string name = spec.name;
    entries_.emplace(std::move(name), Entry{std::move(spec), std::move(backend)});
  }

  /// Registered names in ascending order.
  std::vector<std::string> list() const {
    std::vector<std::string> names;
    for (const auto& [name, _] : entries_) names.push_back(name);
    return names;
  }

  const ToolSpec* spec(std::string_view name) const {
    auto it = entries_.find(std::string(name));
    return it == entries_.end() ? nullptr : &it->second.spec;
  }

  ToolResult invoke(const ToolInvocation& inv) const {
    auto it = entries_.find(inv.tool_name);
    if (it == entries_.end()) fail(ErrorCode::UnknownTool, "no tool named '" + inv.tool_name + "'");
    validate_args(it->second.spec, inv.args);
    ToolResult result;
    try {
      result = it->second.backend->run(inv);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BackendUnavailable) throw;
      return ToolResult::failure(inv.invocation_id, e.what());
    }
    result.invocation_id = inv.invocation_id;
    if (const auto* dets = std::get_if<std::vector<Detection>>(&result.payload))
      for (const auto& d : *dets)
        if (!(d.confidence >= 0.0 && d.confidence <= 1.0))
          return ToolResult::failure(inv.invocation_id, "backend returned confidence outside [0, 1]");
    return result;
  }

 private:
  struct Entry {
    ToolSpec spec;
    std::shared_ptr<const ToolBackend> backend;
  };
  std::map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------------------
// Images (binary or ASCII PGM/PPM)
// ---------------------------------------------------------------------------

struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;  // row-major, interleaved

  friend bool operator==(const Image&, const Image&) = default;
};

struct Region {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
};

namespace detail {

inline std::string next_pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

inline int parse_pnm_int(std::istream& in, const std::string& path) {
  const std::string tok = next_pnm_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used == tok.size() && v >= 0) return v;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::IoFailure, "'" + path + "': malformed PNM header");
}

}  // namespace detail

inline Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoFailure, "cannot open image '" + path.string() + "'");
  const std::string magic = detail::next_pnm_token(in);
  Image img;
  bool ascii = false;
  if (magic == "P6") img.channels = 3;
  else if (magic == "P5") img.channels = 1;
  else if (magic == "P3") img.channels = 3, ascii = true;
  else if (magic == "P2") img.channels = 1, ascii = true;
  else fail(ErrorCode::IoFailure, "'" + path.string() + "' is not a PGM/PPM image");
  img.width = detail::parse_pnm_int(in, path.string());
  img.height = detail::parse_pnm_int(in, path.string());
  const int maxval = detail::parse_pnm_int(in, path.string());
  if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 255)
    fail(ErrorCode::IoFailure, "'" + path.string() + "': unsupported dimensions or depth");
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  if (ascii) {
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(detail::parse_pnm_int(in, path.string()));
  } else {
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
      fail(ErrorCode::IoFailure, "'" + path.string() + "': truncated pixel data");
  }
  return img;
}

/// Always writes the binary variant (P5/P6).
inline void write_pnm(const Image& img, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::IoFailure, "cannot write image '" + path.string() + "'");
  out << (img.channels == 1 ? "P5" : "P6") << '\n' << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) fail(ErrorCode::IoFailure, "short write to '" + path.string() + "'");
}

/// Out-of-bounds regions are rejected, never clamped.
inline Image crop(const Image& src, const Region& r) {
  if (r.w <= 0 || r.h <= 0 || r.x < 0 || r.y < 0 || r.x > src.width - r.w || r.y > src.height - r.h)
    fail(ErrorCode::RegionOutOfBounds, "region (" + std::to_string(r.x) + "," + std::to_string(r.y) + "," +
                                           std::to_string(r.w) + "," + std::to_string(r.h) +
                                           ") outside " + std::to_string(src.width) + "x" +
                                           std::to_string(src.height) + " image");
  Image out{r.w, r.h, src.channels, {}};
  out.pixels.reserve(static_cast<std::size_t>(r.w) * r.h * src.channels);
  const std::size_t row_bytes = static_cast<std::size_t>(r.w) * src.channels;
  for (int row = 0; row < r.h; ++row) {
    const auto begin = src.pixels.begin() +
                       (static_cast<std::ptrdiff_t>(r.y + row) * src.width + r.x) * src.channels;
    out.pixels.insert(out.pixels.end(), begin, begin + static_cast<std::ptrdiff_t>(row_bytes));
  }
  return out;
}

inline ToolResult crop_image(const std::filesystem::path& image_ref, const Region& region,
                             const std::filesystem::path& out_ref) {
  const Image cropped = crop(read_pnm(image_ref), region);
  write_pnm(cropped, out_ref);
  ToolResult r;
  r.payload = CropOutput{out_ref.string(), cropped.width, cropped.height};
  return r;
}

// ---------------------------------------------------------------------------
// Fixture backend
// ---------------------------------------------------------------------------

/// Ground-truth annotation for one scenario image.
struct SceneAnnotation {
  int image_width = 0;
  int image_height = 0;
  std::vector<Detection> objects;
};

inline bool bbox_within(const std::array<double, 4>& b, int width, int height) noexcept {
  return b[0] >= 0 && b[1] >= 0 && b[2] > 0 && b[3] > 0 && b[0] + b[2] <= width && b[1] + b[3] <= height;
}

inline SceneAnnotation parse_annotation(const Json& j, const std::string& where) {
  SceneAnnotation ann;
  const Json& image = detail::require(j, "image", where.c_str());
  ann.image_width = static_cast<int>(detail::require_number(image, "w", where.c_str()));
  ann.image_height = static_cast<int>(detail::require_number(image, "h", where.c_str()));
  for (const auto& o : detail::require(j, "objects", where.c_str())) {
    Detection d = detection_from_json(o);
    if (!bbox_within(d.bbox, ann.image_width, ann.image_height))
      fail(ErrorCode::InvariantViolation, where + ": bbox of '" + d.label + "' outside image bounds");
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0))
      fail(ErrorCode::InvariantViolation, where + ": confidence of '" + d.label + "' outside [0, 1]");
    ann.objects.push_back(std::move(d));
  }
  return ann;
}

inline SceneAnnotation load_annotation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot open annotation '" + path.string() + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::IoFailure, "annotation '" + path.string() + "': " + e.what());
  }
  return parse_annotation(j, path.string());
}

/// Case-insensitive token-set intersection; '_' and ' ' both separate tokens.
inline bool labels_match(std::string_view label, std::string_view query) {
  const auto q = tokenize(query);
  const std::set<std::string> qs(q.begin(), q.end());
  for (const auto& t : tokenize(label))
    if (qs.count(t)) return true;
  return false;
}

/// Deterministic stand-in for real detectors: answers from the annotation file that sits
/// next to each image (same stem, ".json"). Relative image refs resolve against `root`,
/// relative crop outputs against `output_root` (defaults to `root`).
class FixtureVisionBackend final : public ToolBackend {
 public:
  explicit FixtureVisionBackend(std::filesystem::path root = {}, std::filesystem::path output_root = {})
      : root_(std::move(root)), output_root_(output_root.empty() ? root_ : std::move(output_root)) {}

  std::filesystem::path resolve(const std::string& ref) const { return join(root_, ref); }
  std::filesystem::path resolve_output(const std::string& ref) const { return join(output_root_, ref); }

  std::filesystem::path annotation_path(const std::string& image_ref) const {
    auto p = resolve(image_ref);
    p.replace_extension(".json");
    return p;
  }

  ToolResult run(const ToolInvocation& inv) const override {
    const std::string image_ref = inv.args.at("image_ref").get<std::string>();
    if (inv.tool_name == tools::kDetectObjects) {
      const double range = inv.args.at("range").get<double>();
      if (!(range >= 0.0)) fail(ErrorCode::ArgsInvalid, "detect_objects: param 'range' must be >= 0");
      return detections(image_ref, [range](const Detection& d) {
        return d.distance_m && *d.distance_m <= range;
      });
    }
    if (inv.tool_name == tools::kDetectOpenVocab) {
      const std::string query = inv.args.at("query").get<std::string>();
      return detections(image_ref, [&query](const Detection& d) { return labels_match(d.label, query); });
    }
    if (inv.tool_name == tools::kCropImage) {
      const Region region{inv.args.at("x").get<int>(), inv.args.at("y").get<int>(),
                          inv.args.at("w").get<int>(), inv.args.at("h").get<int>()};
      ToolResult r = crop_image(resolve(image_ref), region, resolve_output(inv.args.at("out_ref").get<std::string>()));
      // Report the reference as given so traces do not depend on the working directory.
      std::get<CropOutput>(r.payload).out_ref = inv.args.at("out_ref").get<std::string>();
      return r;
    }
    fail(ErrorCode::UnknownTool, "fixture backend does not implement '" + inv.tool_name + "'");
  }

 private:
  static std::filesystem::path join(const std::filesystem::path& base, const std::string& ref) {
    std::filesystem::path p(ref);
    return p.is_absolute() || base.empty() ? p : base / p;
  }

  template <typename Keep>
  ToolResult detections(const std::string& image_ref, Keep keep) const {
    const SceneAnnotation ann = load_annotation(annotation_path(image_ref));
    std::vector<Detection> out;
    for (const auto& d : ann.objects)
      if (keep(d)) out.push_back(d);
    ToolResult r;
    r.payload = std::move(out);
    return r;
  }

  std::filesystem::path root_;
  std::filesystem::path output_root_;
};

/// Registry with the three built-in tools backed by one fixture backend.
inline ToolRegistry make_fixture_registry(std::filesystem::path root = {},
                                          std::filesystem::path output_root = {}) {
  ToolRegistry registry;
  auto backend = std::make_shared<const FixtureVisionBackend>(std::move(root), std::move(output_root));
  for (auto& spec : builtin_tool_specs()) registry.register_tool(std::move(spec), backend);
  return registry;
}

}  // namespace mtrx
