#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "mtrx/error.hpp"
#include "mtrx/meta_action.hpp"
#include "mtrx/reasoning.hpp"

namespace mtrx {

struct TrajectorySample {
  double t = 0.0;        // seconds
  double x = 0.0;        // meters, forward in the t=0 ego frame
  double y = 0.0;        // meters, left
  double heading = 0.0;  // radians, counter-clockwise
};

/// Ordered ego poses. Construction enforces >= 3 samples, strictly increasing t, and
/// unwraps headings so consecutive samples never jump by more than pi.
class Trajectory {
 public:
  explicit Trajectory(std::vector<TrajectorySample> samples) : samples_(std::move(samples)) {
    if (samples_.size() < 3)
      fail(ErrorCode::DegenerateTrajectory, "need >= 3 samples, got " + std::to_string(samples_.size()));
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      const auto& s = samples_[i];
      if (!std::isfinite(s.t) || !std::isfinite(s.x) || !std::isfinite(s.y) || !std::isfinite(s.heading))
        fail(ErrorCode::DegenerateTrajectory, "non-finite value at sample " + std::to_string(i));
      if (i > 0 && !(s.t > samples_[i - 1].t))
        fail(ErrorCode::DegenerateTrajectory, "timestamps not strictly increasing at sample " + std::to_string(i));
    }
    for (std::size_t i = 1; i < samples_.size(); ++i) {
      const double d = std::remainder(samples_[i].heading - samples_[i - 1].heading, 2.0 * std::numbers::pi);
      samples_[i].heading = samples_[i - 1].heading + d;
    }
  }

  const std::vector<TrajectorySample>& samples() const noexcept { return samples_; }

 private:
  std::vector<TrajectorySample> samples_;
};

struct DynamicsProfile {
  std::vector<double> speeds;         // per interval, n - 1
  std::vector<double> accelerations;  // per consecutive interval pair, n - 2
  std::vector<double> yaw_rates;      // per interval, n - 1
  double net_heading_change = 0.0;
  double net_lateral_offset = 0.0;    // endpoint y in the t=0 ego frame
};

/// Forward differences on positions and headings; accelerations difference consecutive
/// interval speeds over the distance between interval midpoints.
inline DynamicsProfile derive_dynamics(const Trajectory& traj) {
  const auto& s = traj.samples();
  DynamicsProfile p;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    const double dt = s[i + 1].t - s[i].t;
    p.speeds.push_back(std::hypot(s[i + 1].x - s[i].x, s[i + 1].y - s[i].y) / dt);
    p.yaw_rates.push_back((s[i + 1].heading - s[i].heading) / dt);
  }
  for (std::size_t i = 0; i + 2 < s.size(); ++i) {
    const double span = 0.5 * (s[i + 2].t - s[i].t);
    p.accelerations.push_back((p.speeds[i + 1] - p.speeds[i]) / span);
  }
  const auto& first = s.front();
  const auto& last = s.back();
  p.net_heading_change = last.heading - first.heading;
  const double dx = last.x - first.x;
  const double dy = last.y - first.y;
  p.net_lateral_offset = -std::sin(first.heading) * dx + std::cos(first.heading) * dy;
  return p;
}

struct LabelThresholds {
  double stop_speed = 0.3;                          // m/s, mean over the terminal window
  double accel = 0.4;                               // m/s^2, |mean acceleration|
  double turn = 15.0 * std::numbers::pi / 180.0;    // rad, |net heading change|
  double lane = 1.5;                                // m, |net lateral offset|
  double terminal_fraction = 0.25;                  // share of intervals in the stop window
};

inline Speed classify_speed_plan(const DynamicsProfile& p, const LabelThresholds& th = {}) {
  const std::size_t n = p.speeds.size();
  const auto window = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(th.terminal_fraction * n)));
  double terminal = 0.0;
  for (std::size_t i = n - window; i < n; ++i) terminal += p.speeds[i];
  terminal /= static_cast<double>(window);
  if (terminal < th.stop_speed) return Speed::stop;
  double accel = 0.0;
  for (double a : p.accelerations) accel += a;
  if (!p.accelerations.empty()) accel /= static_cast<double>(p.accelerations.size());
  if (accel > th.accel) return Speed::accelerate;
  if (accel < -th.accel) return Speed::decelerate;
  return Speed::keep;
}

/// Turns take precedence over lane changes; left is positive.
inline Path classify_path_plan(const DynamicsProfile& p, const LabelThresholds& th = {}) {
  if (std::abs(p.net_heading_change) > th.turn) return p.net_heading_change > 0 ? Path::turn_left : Path::turn_right;
  if (std::abs(p.net_lateral_offset) > th.lane) return p.net_lateral_offset > 0 ? Path::change_left : Path::change_right;
  return Path::straight;
}

inline MetaAction label_trajectory(const Trajectory& traj, const LabelThresholds& th = {}) {
  const auto p = derive_dynamics(traj);
  return {classify_speed_plan(p, th), classify_path_plan(p, th)};
}

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

struct LabeledTrajectory {
  std::string scenario_id;
  Trajectory trajectory;
};

/// CSV with a header naming t,x,y,heading and optionally scenario_id. Without a
/// scenario_id column the whole file is one trajectory named `default_id`. Rows of one
/// scenario must be contiguous.
inline std::vector<LabeledTrajectory> read_trajectories_csv(std::istream& in, const std::string& default_id) {
  std::string line;
  std::vector<std::string> header;
  auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::stringstream ss(l);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    return cells;
  };
  while (std::getline(in, line) && line.find_first_not_of(" \t\r") == std::string::npos) {
  }
  header = split(line);
  auto column = [&header](const std::string& name) -> int {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  };
  const int ct = column("t"), cx = column("x"), cy = column("y"), ch = column("heading"), cid = column("scenario_id");
  if (ct < 0 || cx < 0 || cy < 0 || ch < 0)
    fail(ErrorCode::DegenerateTrajectory, "CSV header must name t, x, y, heading");

  std::vector<std::pair<std::string, std::vector<TrajectorySample>>> groups;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split(line);
    auto num = [&](int c) {
      if (c >= static_cast<int>(cells.size()))
        fail(ErrorCode::DegenerateTrajectory, "line " + std::to_string(line_no) + ": missing column");
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[c], &used);
        if (used == cells[c].size()) return v;
      } catch (const std::exception&) {
      }
      fail(ErrorCode::DegenerateTrajectory, "line " + std::to_string(line_no) + ": bad number '" + cells[c] + "'");
    };
    const std::string id = cid >= 0 && cid < static_cast<int>(cells.size()) ? cells[cid] : default_id;
    if (groups.empty() || groups.back().first != id) {
      for (const auto& g : groups)
        if (g.first == id) fail(ErrorCode::DegenerateTrajectory, "rows of '" + id + "' are not contiguous");
      groups.push_back({id, {}});
    }
    groups.back().second.push_back({num(ct), num(cx), num(cy), num(ch)});
  }
  std::vector<LabeledTrajectory> out;
  for (auto& [id, samples] : groups) out.push_back({id, Trajectory(std::move(samples))});
  return out;
}

/// JSON Lines: {"scenario_id": ..., "samples": [[t, x, y, heading], ...]}
inline std::vector<LabeledTrajectory> read_trajectories_jsonl(std::istream& in) {
  std::vector<LabeledTrajectory> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      fail(ErrorCode::DegenerateTrajectory, "line " + std::to_string(line_no) + ": " + e.what());
    }
    std::vector<TrajectorySample> samples;
    for (const auto& row : detail::require(j, "samples", "trajectory")) {
      if (!row.is_array() || row.size() != 4)
        fail(ErrorCode::DegenerateTrajectory, "line " + std::to_string(line_no) + ": samples are [t, x, y, heading]");
      samples.push_back({row[0].get<double>(), row[1].get<double>(), row[2].get<double>(), row[3].get<double>()});
    }
    out.push_back({detail::require_string(j, "scenario_id", "trajectory"), Trajectory(std::move(samples))});
  }
  return out;
}

/// Dispatches on extension: ".csv" or JSON Lines otherwise.
inline std::vector<LabeledTrajectory> read_trajectories(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
  if (path.extension() == ".csv") return read_trajectories_csv(in, path.stem().string());
  return read_trajectories_jsonl(in);
}

inline Json label_to_json(const std::string& scenario_id, MetaAction a) {
  return Json{{"scenario_id", scenario_id},
              {"speed", std::string(to_string(a.speed))},
              {"path", std::string(to_string(a.path))}};
}

}  // namespace mtrx
