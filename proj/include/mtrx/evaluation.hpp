#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mtrx/error.hpp"
#include "mtrx/meta_action.hpp"
#include "mtrx/reasoning.hpp"

namespace mtrx {

struct JudgeScores {
  double risk_assessment = 0.0;
  double commonsense_reasoning = 0.0;
  double scene_awareness = 0.0;

  friend bool operator==(const JudgeScores&, const JudgeScores&) = default;
};

inline constexpr std::array<std::string_view, 3> kJudgeAxes = {"risk_assessment", "commonsense_reasoning",
                                                                "scene_awareness"};

struct PdmsSubscores {
  double nc = 1.0;   // no at-fault collision
  double dac = 1.0;  // drivable area compliance
  double ttc = 1.0;  // time to collision
  double cf = 1.0;   // comfort
  double ep = 1.0;   // ego progress
};

struct EvalRecord {
  std::string scenario_id;
  MetaAction predicted;
  MetaAction gold;
  std::optional<JudgeScores> judge_scores;
  std::optional<std::string> trace_ref;
  std::optional<PdmsSubscores> pdms;
};

struct PlanningAccuracy {
  double path = 0.0;   // percent
  double speed = 0.0;  // percent
  double joint = 0.0;  // percent, both components match
};

inline PlanningAccuracy planning_accuracy(const std::vector<EvalRecord>& records) {
  if (records.empty()) fail(ErrorCode::EmptyEvalSet, "no evaluation records");
  std::size_t path = 0, speed = 0, joint = 0;
  for (const auto& r : records) {
    const bool p = r.predicted.path == r.gold.path;
    const bool s = r.predicted.speed == r.gold.speed;
    path += p;
    speed += s;
    joint += p && s;
  }
  const double n = static_cast<double>(records.size());
  return {100.0 * static_cast<double>(path) / n, 100.0 * static_cast<double>(speed) / n,
          100.0 * static_cast<double>(joint) / n};
}

// ---------------------------------------------------------------------------
// Judging
// ---------------------------------------------------------------------------

/// Parses {"risk_assessment": x, "commonsense_reasoning": y, "scene_awareness": z}, each in [0, 100].
inline JudgeScores parse_judge_response(std::string_view response) {
  Json j;
  try {
    j = Json::parse(response);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::MalformedJudgeResponse, e.what());
  }
  if (!j.is_object()) fail(ErrorCode::MalformedJudgeResponse, "judge response must be a JSON object");
  std::array<double, 3> v{};
  for (std::size_t i = 0; i < kJudgeAxes.size(); ++i) {
    const std::string axis(kJudgeAxes[i]);
    if (!j.contains(axis) || !j[axis].is_number())
      fail(ErrorCode::MalformedJudgeResponse, "missing numeric axis '" + axis + "'");
    v[i] = j[axis].get<double>();
    if (!(v[i] >= 0.0 && v[i] <= 100.0))
      fail(ErrorCode::MalformedJudgeResponse, "axis '" + axis + "' outside [0, 100]");
  }
  return {v[0], v[1], v[2]};
}

/// Scores one record's reasoning text; returns the raw judge response.
class JudgeClient {
 public:
  virtual ~JudgeClient() = default;
  virtual std::string judge(const EvalRecord& record, std::string_view trace_text) const = 0;
};

/// Offline judge: base points per axis plus points for each keyword found in the trace
/// (case-insensitive substring), capped at 100. Axis "all" credits every axis.
class RubricJudge final : public JudgeClient {
 public:
  struct Keyword {
    std::string pattern;
    double points = 0.0;
    std::string axis;
  };

  RubricJudge(double base_points, std::vector<Keyword> keywords)
      : base_points_(base_points), keywords_(std::move(keywords)) {
    for (const auto& k : keywords_) {
      const bool known = k.axis == "all" || std::find(kJudgeAxes.begin(), kJudgeAxes.end(), k.axis) != kJudgeAxes.end();
      if (!known) fail(ErrorCode::ConfigInvalid, "rubric keyword '" + k.pattern + "' has unknown axis '" + k.axis + "'");
    }
  }

  /// {"base_points": b, "keywords": [{"pattern": p, "points": n, "axis": a}]}
  static RubricJudge from_json(const Json& j) {
    std::vector<Keyword> kws;
    if (j.contains("keywords"))
      for (const auto& k : j["keywords"])
        kws.push_back({detail::require_string(k, "pattern", "rubric keyword"),
                       detail::require_number(k, "points", "rubric keyword"), k.value("axis", std::string("all"))});
    return RubricJudge(detail::require_number(j, "base_points", "rubric"), std::move(kws));
  }

  static RubricJudge from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::IoFailure, "cannot open rubric '" + path.string() + "'");
    try {
      return from_json(Json::parse(in));
    } catch (const Json::parse_error& e) {
      fail(ErrorCode::ConfigInvalid, "rubric '" + path.string() + "': " + e.what());
    }
  }

  std::string judge(const EvalRecord&, std::string_view trace_text) const override {
    std::string lowered(trace_text);
    for (char& c : lowered) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    std::array<double, 3> score{base_points_, base_points_, base_points_};
    for (const auto& k : keywords_) {
      std::string pat = k.pattern;
      for (char& c : pat) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (pat.empty() || lowered.find(pat) == std::string::npos) continue;
      for (std::size_t i = 0; i < kJudgeAxes.size(); ++i)
        if (k.axis == "all" || k.axis == kJudgeAxes[i]) score[i] += k.points;
    }
    Json out;
    for (std::size_t i = 0; i < kJudgeAxes.size(); ++i)
      out[std::string(kJudgeAxes[i])] = std::clamp(score[i], 0.0, 100.0);
    return out.dump();
  }

 private:
  double base_points_;
  std::vector<Keyword> keywords_;
};

using TraceLoader = std::function<std::string(const EvalRecord&)>;

/// Loads the file named by trace_ref; records without one are judged on empty text.
inline TraceLoader file_trace_loader(std::filesystem::path root = {}) {
  return [root = std::move(root)](const EvalRecord& r) -> std::string {
    if (!r.trace_ref) return "";
    std::filesystem::path p(*r.trace_ref);
    if (p.is_relative() && !root.empty()) p = root / p;
    std::ifstream in(p);
    if (!in) fail(ErrorCode::IoFailure, "cannot open trace '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
}

inline std::vector<EvalRecord> judge(std::vector<EvalRecord> records, const JudgeClient& client,
                                     const TraceLoader& load_trace) {
  for (auto& r : records) r.judge_scores = parse_judge_response(client.judge(r, load_trace(r)));
  return records;
}

// ---------------------------------------------------------------------------
// PDMS
// ---------------------------------------------------------------------------

/// nc * dac * (5 ttc + 2 cf + 5 ep) / 12
inline double pdms_score(const PdmsSubscores& s) {
  for (auto [name, v] : {std::pair{"nc", s.nc}, {"dac", s.dac}, {"ttc", s.ttc}, {"cf", s.cf}, {"ep", s.ep}})
    if (!(v >= 0.0 && v <= 1.0))
      fail(ErrorCode::SubscoreOutOfRange, std::string(name) + " = " + std::to_string(v) + " outside [0, 1]");
  return s.nc * s.dac * (5.0 * s.ttc + 2.0 * s.cf + 5.0 * s.ep) / 12.0;
}

struct PdmsAggregate {
  std::vector<double> per_scenario;  // in [0, 1]
  double mean = 0.0;                 // percent
};

inline PdmsAggregate pdms_aggregate(const std::vector<PdmsSubscores>& per_scenario) {
  if (per_scenario.empty()) fail(ErrorCode::EmptyEvalSet, "no PDMS subscores");
  PdmsAggregate out;
  double sum = 0.0;
  for (const auto& s : per_scenario) {
    out.per_scenario.push_back(pdms_score(s));
    sum += out.per_scenario.back();
  }
  out.mean = 100.0 * sum / static_cast<double>(per_scenario.size());
  return out;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct EvalReport {
  std::size_t n_records = 0;
  std::optional<JudgeScores> judge;  // mean per axis, percent
  double path_acc = 0.0;
  double speed_acc = 0.0;
  double joint_acc = 0.0;
  std::optional<double> pdms;  // percent

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Judge means appear only when every record is judged; PDMS only when every record has subscores.
inline EvalReport build_report(const std::vector<EvalRecord>& records) {
  const auto acc = planning_accuracy(records);
  EvalReport rep;
  rep.n_records = records.size();
  rep.path_acc = acc.path;
  rep.speed_acc = acc.speed;
  rep.joint_acc = acc.joint;
  if (std::all_of(records.begin(), records.end(), [](const auto& r) { return r.judge_scores.has_value(); })) {
    JudgeScores mean;
    for (const auto& r : records) {
      mean.risk_assessment += r.judge_scores->risk_assessment;
      mean.commonsense_reasoning += r.judge_scores->commonsense_reasoning;
      mean.scene_awareness += r.judge_scores->scene_awareness;
    }
    const double n = static_cast<double>(records.size());
    mean.risk_assessment /= n;
    mean.commonsense_reasoning /= n;
    mean.scene_awareness /= n;
    rep.judge = mean;
  }
  if (std::all_of(records.begin(), records.end(), [](const auto& r) { return r.pdms.has_value(); })) {
    std::vector<PdmsSubscores> subs;
    for (const auto& r : records) subs.push_back(*r.pdms);
    rep.pdms = pdms_aggregate(subs).mean;
  }
  return rep;
}

enum class ReportFormat { csv, text };

namespace detail {

/// Shortest representation that parses back to the same double; integral values keep ".0".
inline std::string shortest(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  if (std::isfinite(v) && s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

inline std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

}  // namespace detail

inline constexpr std::string_view kReportCsvHeader =
    "n_records,risk_assess,reason,scene_aware,path,speed,acc";

/// CSV: fixed header (",pdms" appended only when present), one data row, round-trip exact
/// numbers, empty cells for missing judge scores. Text: aligned table with one decimal.
inline std::string render_report(const EvalReport& rep, ReportFormat format) {
  if (format == ReportFormat::csv) {
    std::string out(kReportCsvHeader);
    if (rep.pdms) out += ",pdms";
    out += "\n" + std::to_string(rep.n_records) + ",";
    if (rep.judge)
      out += detail::shortest(rep.judge->risk_assessment) + "," + detail::shortest(rep.judge->commonsense_reasoning) +
             "," + detail::shortest(rep.judge->scene_awareness);
    else
      out += ",,";
    out += "," + detail::shortest(rep.path_acc) + "," + detail::shortest(rep.speed_acc) + "," +
           detail::shortest(rep.joint_acc);
    if (rep.pdms) out += "," + detail::shortest(*rep.pdms);
    return out + "\n";
  }
  std::vector<std::pair<std::string, std::string>> cols = {
      {"Risk Assess.", rep.judge ? detail::fixed1(rep.judge->risk_assessment) : "-"},
      {"Reason.", rep.judge ? detail::fixed1(rep.judge->commonsense_reasoning) : "-"},
      {"Scene Aware.", rep.judge ? detail::fixed1(rep.judge->scene_awareness) : "-"},
      {"Path.", detail::fixed1(rep.path_acc)},
      {"Speed.", detail::fixed1(rep.speed_acc)},
      {"Acc.", detail::fixed1(rep.joint_acc)},
  };
  if (rep.pdms) cols.push_back({"PDMS", detail::fixed1(*rep.pdms)});
  std::string header, row;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const std::size_t width = std::max(cols[i].first.size(), cols[i].second.size());
    const std::string sep = i + 1 < cols.size() ? "  " : "";
    header += std::string(width - cols[i].first.size(), ' ') + cols[i].first + sep;
    row += std::string(width - cols[i].second.size(), ' ') + cols[i].second + sep;
  }
  return "Driving Metrics (%) / Planning (%)   n=" + std::to_string(rep.n_records) + "\n" + header + "\n" + row + "\n";
}

inline EvalReport parse_report_csv(std::string_view csv) {
  auto bad = [](const std::string& why) { fail(ErrorCode::InvariantViolation, "report CSV: " + why); };
  const auto nl = csv.find('\n');
  if (nl == std::string_view::npos) bad("missing data row");
  const std::string_view header = csv.substr(0, nl);
  bool has_pdms = false;
  if (header == kReportCsvHeader) has_pdms = false;
  else if (header == std::string(kReportCsvHeader) + ",pdms") has_pdms = true;
  else bad("unexpected header");
  std::string_view row = csv.substr(nl + 1);
  if (!row.empty() && row.back() == '\n') row.remove_suffix(1);
  std::vector<std::string_view> cells;
  for (std::size_t start = 0;;) {
    const auto comma = row.find(',', start);
    cells.push_back(row.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (cells.size() != (has_pdms ? 8u : 7u)) bad("wrong number of cells");
  auto num = [&bad](std::string_view s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) bad("bad number '" + std::string(s) + "'");
    return v;
  };
  EvalReport rep;
  std::size_t n = 0;
  const auto res = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), n);
  if (res.ec != std::errc()) bad("bad n_records");
  rep.n_records = n;
  if (!cells[1].empty() || !cells[2].empty() || !cells[3].empty())
    rep.judge = JudgeScores{num(cells[1]), num(cells[2]), num(cells[3])};
  rep.path_acc = num(cells[4]);
  rep.speed_acc = num(cells[5]);
  rep.joint_acc = num(cells[6]);
  if (has_pdms) rep.pdms = num(cells[7]);
  return rep;
}

// ---------------------------------------------------------------------------
// Records ingestion
// ---------------------------------------------------------------------------

/// {"scenario_id", "predicted": {speed, path}, "gold": {speed, path}, "trace_ref"?,
///  "judge_scores"?: {...}, "pdms"?: {nc, dac, ttc, cf, ep}}
inline EvalRecord eval_record_from_json(const Json& j) {
  EvalRecord r;
  r.scenario_id = detail::require_string(j, "scenario_id", "eval record");
  r.predicted = meta_action_from_json(detail::require(j, "predicted", "eval record"));
  r.gold = meta_action_from_json(detail::require(j, "gold", "eval record"));
  if (j.contains("trace_ref") && !j["trace_ref"].is_null()) r.trace_ref = detail::require_string(j, "trace_ref", "eval record");
  if (j.contains("judge_scores") && !j["judge_scores"].is_null())
    r.judge_scores = parse_judge_response(j["judge_scores"].dump());
  if (j.contains("pdms") && !j["pdms"].is_null()) {
    const Json& p = j["pdms"];
    r.pdms = PdmsSubscores{detail::require_number(p, "nc", "pdms"), detail::require_number(p, "dac", "pdms"),
                           detail::require_number(p, "ttc", "pdms"), detail::require_number(p, "cf", "pdms"),
                           detail::require_number(p, "ep", "pdms")};
  }
  return r;
}

inline std::vector<EvalRecord> read_eval_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "'");
  std::vector<EvalRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(eval_record_from_json(Json::parse(line)));
    } catch (const Json::parse_error& e) {
      fail(ErrorCode::InvariantViolation, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace mtrx
