#include "agentrank/trajectory.hpp"

#include <algorithm>
#include <cstdlib>
#include <set>

#include "agentrank/errors.hpp"

namespace agentrank {

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kOk: return "ok";
    case Verdict::kBudgetExceeded: return "budget_exceeded";
    case Verdict::kMalformedRanking: return "malformed_ranking";
    case Verdict::kWrongLength: return "wrong_length";
    case Verdict::kDuplicateIndex: return "duplicate_index";
    case Verdict::kOutOfRange: return "out_of_range";
    case Verdict::kNoRanking: return "no_ranking";
  }
  return "unknown";
}

Verdict verdict_from_name(const std::string& name) {
  for (Verdict v : {Verdict::kOk, Verdict::kBudgetExceeded,
                    Verdict::kMalformedRanking, Verdict::kWrongLength,
                    Verdict::kDuplicateIndex, Verdict::kOutOfRange,
                    Verdict::kNoRanking}) {
    if (name == verdict_name(v)) return v;
  }
  throw FormatError("unknown verdict name: " + name);
}

ParsedRanking parse_boxed_ranking(const std::string& text, int n, int k) {
  ParsedRanking out;
  // The answer is the last boxed list in the text; earlier boxes are
  // treated as scratch work.
  const std::string open = "\\boxed{";
  std::size_t at = text.rfind(open);
  if (at == std::string::npos) {
    out.verdict = Verdict::kNoRanking;
    return out;
  }
  std::size_t close = text.find('}', at + open.size());
  if (close == std::string::npos) {
    out.verdict = Verdict::kMalformedRanking;
    return out;
  }
  std::string body = text.substr(at + open.size(), close - at - open.size());
  std::size_t lb = body.find('[');
  std::size_t rb = body.rfind(']');
  if (lb == std::string::npos || rb == std::string::npos || rb < lb) {
    out.verdict = Verdict::kMalformedRanking;
    return out;
  }
  body = body.substr(lb + 1, rb - lb - 1);

  std::vector<int> values;
  std::size_t pos = 0;
  while (pos <= body.size()) {
    std::size_t comma = body.find(',', pos);
    std::string token = body.substr(
        pos, comma == std::string::npos ? std::string::npos : comma - pos);
    // Trim whitespace around the number.
    std::size_t b = token.find_first_not_of(" \t\r\n");
    std::size_t e = token.find_last_not_of(" \t\r\n");
    if (b == std::string::npos) {
      if (values.empty() && comma == std::string::npos) break;  // empty list
      out.verdict = Verdict::kMalformedRanking;
      return out;
    }
    token = token.substr(b, e - b + 1);
    char* end = nullptr;
    long v = std::strtol(token.c_str(), &end, 10);
    if (end == token.c_str() || *end != '\0') {
      out.verdict = Verdict::kMalformedRanking;
      return out;
    }
    values.push_back(static_cast<int>(v));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }

  if (static_cast<int>(values.size()) != k) {
    out.verdict = Verdict::kWrongLength;
    return out;
  }
  std::set<int> seen(values.begin(), values.end());
  if (static_cast<int>(seen.size()) != k) {
    out.verdict = Verdict::kDuplicateIndex;
    return out;
  }
  for (int v : values) {
    if (v < 1 || v > n) {
      out.verdict = Verdict::kOutOfRange;
      return out;
    }
  }
  out.verdict = Verdict::kOk;
  out.ranking = std::move(values);
  return out;
}

ValidityVerdict validate(const Trajectory& t, int n, int k, int t_max) {
  ValidityVerdict v;
  if (t.n_tool > t_max) {
    v.reason = Verdict::kBudgetExceeded;
    return v;
  }
  if (!t.ranking.has_value()) {
    v.reason = Verdict::kNoRanking;
    return v;
  }
  const std::vector<int>& r = *t.ranking;
  if (static_cast<int>(r.size()) != k) {
    v.reason = Verdict::kWrongLength;
    return v;
  }
  std::set<int> seen(r.begin(), r.end());
  if (static_cast<int>(seen.size()) != k) {
    v.reason = Verdict::kDuplicateIndex;
    return v;
  }
  for (int idx : r) {
    if (idx < 1 || idx > n) {
      v.reason = Verdict::kOutOfRange;
      return v;
    }
  }
  v.is_valid = true;
  v.reason = Verdict::kOk;
  return v;
}

// ---- serialization -----------------------------------------------------------

json Step::to_json() const {
  json j;
  switch (kind) {
    case Kind::kThink:
      j["kind"] = "think";
      j["note"] = think_note;
      break;
    case Kind::kAct:
      j["kind"] = "act";
      j["call"] = call.to_json();
      break;
    case Kind::kObs:
      j["kind"] = "obs";
      j["observation"] = observation.to_json();
      break;
    case Kind::kRank:
      j["kind"] = "rank";
      j["ranking"] = ranking;
      break;
  }
  if (logprob) j["logprob"] = *logprob;
  j["masked"] = masked;
  return j;
}

Step Step::from_json(const json& j) {
  Step s;
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "think") {
    s.kind = Kind::kThink;
    s.think_note = j.value("note", json());
  } else if (kind == "act") {
    s.kind = Kind::kAct;
    s.call = ToolCall::from_json(j.at("call"));
  } else if (kind == "obs") {
    s.kind = Kind::kObs;
    s.observation = Observation::from_json(j.at("observation"));
  } else if (kind == "rank") {
    s.kind = Kind::kRank;
    s.ranking = j.at("ranking").get<std::vector<int>>();
  } else {
    throw FormatError("unknown step kind: " + kind);
  }
  if (j.contains("logprob")) s.logprob = j["logprob"].get<double>();
  s.masked = j.value("masked", s.kind == Kind::kObs);
  return s;
}

json Trajectory::to_json() const {
  json steps_json = json::array();
  for (const Step& s : steps) steps_json.push_back(s.to_json());
  json j{{"request_uid", request_uid},
         {"user_id", user_id},
         {"n_candidates", n_candidates},
         {"k", k},
         {"steps", std::move(steps_json)},
         {"n_tool", n_tool},
         {"total_logprob", total_logprob},
         {"valid", valid.is_valid},
         {"verdict", verdict_name(valid.reason)}};
  if (ranking) j["ranking"] = *ranking;
  return j;
}

Trajectory Trajectory::from_json(const json& j) {
  Trajectory t;
  t.request_uid = j.at("request_uid").get<std::uint64_t>();
  t.user_id = j.value("user_id", "");
  t.n_candidates = j.at("n_candidates").get<int>();
  t.k = j.at("k").get<int>();
  for (const auto& sj : j.at("steps")) t.steps.push_back(Step::from_json(sj));
  t.n_tool = j.at("n_tool").get<int>();
  t.total_logprob = j.at("total_logprob").get<double>();
  t.valid.is_valid = j.at("valid").get<bool>();
  t.valid.reason = verdict_from_name(j.at("verdict").get<std::string>());
  if (j.contains("ranking")) t.ranking = j["ranking"].get<std::vector<int>>();
  return t;
}

}  // namespace agentrank
