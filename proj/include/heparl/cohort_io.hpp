#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "heparl/errors.hpp"
#include "heparl/trajectory.hpp"
#include "heparl/util.hpp"

namespace heparl {

inline constexpr int kCohortFormatVersion = 1;

inline nlohmann::json to_json(const Step& s) {
  return nlohmann::json{{"w", s.window},     {"x", s.vitals.x},
                        {"dose", s.dose},    {"a", s.action},
                        {"terminal", s.terminal}, {"died", s.died_at_end}};
}

inline Step step_from_json(const nlohmann::json& j) {
  Step s;
  s.window = j.at("w").get<int>();
  const auto x = j.at("x").get<std::vector<double>>();
  if (x.size() != static_cast<size_t>(kNumVitals)) {
    throw DataError("cohort step: expected " + std::to_string(kNumVitals) + " vitals, got " +
                    std::to_string(x.size()));
  }
  std::copy(x.begin(), x.end(), s.vitals.x.begin());
  s.dose = j.at("dose").get<double>();
  s.action = j.at("a").get<int>();
  s.terminal = j.at("terminal").get<bool>();
  s.died_at_end = j.at("died").get<bool>();
  return s;
}

inline nlohmann::json to_json(const Episode& ep) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : ep.steps) steps.push_back(to_json(s));
  return nlohmann::json{{"patient_id", ep.patient_id},
                        {"episode_id", ep.episode_id},
                        {"outcome", ep.outcome == Outcome::Died ? "died" : "survived"},
                        {"los_days", ep.los_days},
                        {"steps", std::move(steps)}};
}

inline Episode episode_from_json(const nlohmann::json& j) {
  Episode ep;
  ep.patient_id = j.at("patient_id").get<std::string>();
  ep.episode_id = j.at("episode_id").get<std::string>();
  const std::string outcome = j.at("outcome").get<std::string>();
  if (outcome == "died") {
    ep.outcome = Outcome::Died;
  } else if (outcome == "survived") {
    ep.outcome = Outcome::Survived;
  } else {
    throw DataError("cohort episode " + ep.episode_id + ": unknown outcome '" + outcome + "'");
  }
  ep.los_days = j.at("los_days").get<double>();
  for (const auto& js : j.at("steps")) ep.steps.push_back(step_from_json(js));
  return ep;
}

// JSON-lines cohort file: a header line followed by one episode per line.
inline std::string serialize_cohort(const Cohort& cohort) {
  nlohmann::json header{{"format_version", kCohortFormatVersion},
                        {"kind", "heparl-cohort"},
                        {"provenance",
                         cohort.provenance == Provenance::Synthetic ? "synthetic" : "ingested"},
                        {"episodes", cohort.episodes.size()}};
  if (cohort.seed) {
    header["seed"] = *cohort.seed;
  } else {
    header["seed"] = nullptr;
  }
  std::ostringstream out;
  out << header.dump() << "\n";
  for (const auto& ep : cohort.episodes) out << to_json(ep).dump() << "\n";
  return std::move(out).str();
}

inline void save_cohort(const std::string& path, const Cohort& cohort) {
  validate_cohort(cohort);
  std::ofstream out(path);
  if (!out) throw DataError("cannot open cohort file for writing: " + path);
  out << serialize_cohort(cohort);
  if (!out) throw DataError("failed writing cohort file: " + path);
}

inline Cohort parse_cohort(std::istream& in, const std::string& origin) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("cohort file is empty: " + origin);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& ex) {
    throw DataError("cohort header parse error in " + origin + ": " + ex.what());
  }
  if (header.value("kind", "") != "heparl-cohort") {
    throw DataError(origin + " is not a cohort file (missing kind marker)");
  }
  if (header.value("format_version", -1) != kCohortFormatVersion) {
    throw DataError(origin + ": unsupported cohort format_version");
  }

  Cohort cohort;
  cohort.provenance = header.value("provenance", "ingested") == "synthetic"
                          ? Provenance::Synthetic
                          : Provenance::Ingested;
  if (header.contains("seed") && !header.at("seed").is_null()) {
    cohort.seed = header.at("seed").get<std::uint64_t>();
  }
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      cohort.episodes.push_back(episode_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError("cohort parse error in " + origin + " line " + std::to_string(lineno) +
                      ": " + ex.what());
    }
  }
  validate_cohort(cohort);
  return cohort;
}

inline Cohort load_cohort(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open cohort file: " + path);
  return parse_cohort(in, path);
}

inline std::string cohort_hash(const Cohort& cohort) {
  return hex64(fnv1a(serialize_cohort(cohort)));
}

}  // namespace heparl
