#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "mtrx/error.hpp"

namespace mtrx {

// Longitudinal component of a high-level plan.
enum class Speed { accelerate, decelerate, keep, stop };

// Lateral component of a high-level plan.
enum class Path { straight, turn_left, turn_right, change_left, change_right };

inline constexpr std::array<Speed, 4> kAllSpeeds = {Speed::accelerate, Speed::decelerate,
                                                    Speed::keep, Speed::stop};
inline constexpr std::array<Path, 5> kAllPaths = {Path::straight, Path::turn_left,
                                                  Path::turn_right, Path::change_left,
                                                  Path::change_right};

constexpr std::string_view to_string(Speed s) noexcept {
  switch (s) {
    case Speed::accelerate: return "accelerate";
    case Speed::decelerate: return "decelerate";
    case Speed::keep: return "keep";
    case Speed::stop: return "stop";
  }
  return "?";
}

constexpr std::string_view to_string(Path p) noexcept {
  switch (p) {
    case Path::straight: return "straight";
    case Path::turn_left: return "turn_left";
    case Path::turn_right: return "turn_right";
    case Path::change_left: return "change_left";
    case Path::change_right: return "change_right";
  }
  return "?";
}

inline std::optional<Speed> parse_speed(std::string_view token) noexcept {
  for (Speed s : kAllSpeeds)
    if (to_string(s) == token) return s;
  return std::nullopt;
}

inline std::optional<Path> parse_path(std::string_view token) noexcept {
  for (Path p : kAllPaths)
    if (to_string(p) == token) return p;
  return std::nullopt;
}

/// High-level plan: one speed command paired with one path command.
struct MetaAction {
  Speed speed = Speed::keep;
  Path path = Path::straight;

  friend bool operator==(const MetaAction&, const MetaAction&) = default;
};

inline constexpr std::size_t kMetaActionCount = kAllSpeeds.size() * kAllPaths.size();

/// Dense index in [0, 20): speed-major.
constexpr std::size_t index_of(MetaAction a) noexcept {
  return static_cast<std::size_t>(a.speed) * kAllPaths.size() + static_cast<std::size_t>(a.path);
}

constexpr MetaAction meta_action_at(std::size_t index) noexcept {
  return {kAllSpeeds[index / kAllPaths.size()], kAllPaths[index % kAllPaths.size()]};
}

/// "speed/path"
inline std::string to_string(MetaAction a) {
  std::string out(to_string(a.speed));
  out += '/';
  out += to_string(a.path);
  return out;
}

/// Parses "speed/path"; throws InvariantViolation naming the bad component.
inline MetaAction parse_meta_action(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos)
    fail(ErrorCode::InvariantViolation, "meta-action '" + std::string(text) + "' lacks '/'");
  const auto speed = parse_speed(text.substr(0, slash));
  if (!speed)
    fail(ErrorCode::InvariantViolation,
         "unknown speed token '" + std::string(text.substr(0, slash)) + "'");
  const auto path = parse_path(text.substr(slash + 1));
  if (!path)
    fail(ErrorCode::InvariantViolation,
         "unknown path token '" + std::string(text.substr(slash + 1)) + "'");
  return {*speed, *path};
}

}  // namespace mtrx
