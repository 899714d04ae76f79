#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "heparl/assess.hpp"
#include "heparl/cohort_io.hpp"
#include "heparl/csv.hpp"
#include "heparl/errors.hpp"
#include "heparl/learners.hpp"
#include "heparl/mdp.hpp"
#include "heparl/outcomes.hpp"
#include "heparl/synth.hpp"
#include "heparl/trajectory.hpp"
#include "heparl/util.hpp"

namespace heparl::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// The named model set: the tabular sofa-ql plus {sofa, cxsofa} x {dqn, ddqn,
// bcq, cql}. The tabular learner is defined on the discrete SOFA state only,
// so cxsofa-ql is not a valid model.
// ---------------------------------------------------------------------------

struct ModelSpec {
  std::string name;
  Algo algo = Algo::QL;
  ScoreKind kind = ScoreKind::Sofa;
};

inline ModelSpec model_from_name(const std::string& name) {
  const auto dash = name.find('-');
  if (dash == std::string::npos || dash == 0 || dash + 1 >= name.size()) {
    throw ValidationError("model '" + name +
                          "' is not of the form <score>-<algo> (e.g. cxsofa-cql)");
  }
  ModelSpec spec;
  spec.name = name;
  spec.kind = score_kind_from_string(name.substr(0, dash));
  spec.algo = algo_from_string(name.substr(dash + 1));
  if (spec.algo == Algo::QL && spec.kind != ScoreKind::Sofa) {
    throw ValidationError("model '" + name +
                          "' is not in the model set: ql is tabular and defined on the "
                          "discrete sofa state only");
  }
  return spec;
}

inline std::vector<std::string> default_model_names() {
  return {"sofa-ql",     "sofa-dqn", "cxsofa-dqn", "sofa-ddqn", "cxsofa-ddqn",
          "sofa-bcq",    "cxsofa-bcq", "sofa-cql", "cxsofa-cql"};
}

// ---------------------------------------------------------------------------
// Run configuration. Defaults are the paper-derived ones; a JSON config file
// overrides defaults and command-line flags override the file. The resolved
// config is serialized verbatim into every manifest.
// ---------------------------------------------------------------------------

struct HyperConfig {
  double gamma = 0.99;
  std::optional<double> lr;  // unset: per-algorithm default (0.1 tabular, 1e-3 deep)
  int batch = 256;
  int epochs = 300;
  int sync_every = 500;
  int checkpoint_every = 50;
  double tau_bcq = 0.3;
  double alpha = 1.0;
  int hidden = 64;

  Hyper resolve(Algo algo, std::uint64_t run_seed, const std::string& model_name) const {
    Hyper h = default_hyper(algo);
    h.gamma = gamma;
    if (lr) h.lr = *lr;
    h.batch = batch;
    h.epochs = epochs;
    h.sync_every = sync_every;
    h.checkpoint_every = checkpoint_every;
    h.tau_bcq = tau_bcq;
    h.alpha = alpha;
    h.hidden = hidden;
    h.seed = derive_seed(run_seed, fnv1a(model_name));
    validate(h);
    return h;
  }
};

struct RunConfig {
  std::string out_dir = "run";
  std::uint64_t seed = 1;
  std::string cohort;      // input cohort; empty -> <out_dir>/cohort.jsonl
  std::string csv;         // raw csv for ingest
  std::string csv_schema;  // csv column schema (json) for ingest
  int max_episode_len = 0;  // ingest: segment longer traces; 0 disables
  ScoreKind score = ScoreKind::Cxsofa;  // severity scale used in report summaries
  std::vector<std::string> models = default_model_names();
  HyperConfig hyper;
  double death_penalty = -15.0;
  double train_frac = 0.8;
  SelectionConfig selection;
  std::vector<double> tau_sweep = {0.5, 0.6, 0.65, 0.7, 0.75, 0.8, 0.9};
  SynthParams synth;
  int jobs = 1;
};

inline void validate(const RunConfig& cfg) {
  if (cfg.out_dir.empty()) throw ValidationError("config: out_dir must not be empty");
  if (cfg.models.empty()) throw ValidationError("config: the model list must not be empty");
  std::set<std::string> seen;
  for (const auto& name : cfg.models) {
    model_from_name(name);
    if (!seen.insert(name).second) {
      throw ValidationError("config: model '" + name + "' listed twice");
    }
  }
  for (const auto& name : cfg.models) {
    cfg.hyper.resolve(model_from_name(name).algo, cfg.seed, name);
  }
  if (cfg.death_penalty > 0.0) throw ValidationError("config: death penalty must be <= 0");
  if (!(cfg.train_frac > 0.0 && cfg.train_frac < 1.0)) {
    throw ValidationError("config: train_frac must lie strictly inside (0,1)");
  }
  if (cfg.max_episode_len != 0 && cfg.max_episode_len < 2) {
    throw ValidationError("config: max_episode_len must be 0 (off) or >= 2");
  }
  validate(cfg.selection);
  for (double tau : cfg.tau_sweep) {
    SelectionConfig probe = cfg.selection;
    probe.tau = tau;
    validate(probe);
  }
  validate(cfg.synth);
  if (cfg.jobs < 1) throw ValidationError("config: jobs must be >= 1");
}

namespace detail {

inline void expect_keys(const nlohmann::json& j, std::initializer_list<const char*> keys,
                        const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(keys.begin(), keys.end(),
                     [&](const char* k) { return key == k; }) == keys.end()) {
      throw ValidationError("config: unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace detail

inline nlohmann::json to_json(const HyperConfig& h) {
  nlohmann::json j{{"gamma", h.gamma},
                   {"batch", h.batch},
                   {"epochs", h.epochs},
                   {"sync_every", h.sync_every},
                   {"checkpoint_every", h.checkpoint_every},
                   {"tau_bcq", h.tau_bcq},
                   {"alpha", h.alpha},
                   {"hidden", h.hidden}};
  j["lr"] = h.lr ? nlohmann::json(*h.lr) : nlohmann::json(nullptr);
  return j;
}

inline HyperConfig hyper_config_from_json(const nlohmann::json& j) {
  detail::expect_keys(j,
                      {"gamma", "lr", "batch", "epochs", "sync_every", "checkpoint_every",
                       "tau_bcq", "alpha", "hidden"},
                      "hyper");
  HyperConfig h;
  h.gamma = j.value("gamma", h.gamma);
  if (j.contains("lr") && !j.at("lr").is_null()) h.lr = j.at("lr").get<double>();
  h.batch = j.value("batch", h.batch);
  h.epochs = j.value("epochs", h.epochs);
  h.sync_every = j.value("sync_every", h.sync_every);
  h.checkpoint_every = j.value("checkpoint_every", h.checkpoint_every);
  h.tau_bcq = j.value("tau_bcq", h.tau_bcq);
  h.alpha = j.value("alpha", h.alpha);
  h.hidden = j.value("hidden", h.hidden);
  return h;
}

inline nlohmann::json to_json(const SelectionConfig& s) {
  return nlohmann::json{
      {"tau", s.tau}, {"eta", s.eta}, {"preference", to_string(s.preference)}};
}

inline SelectionConfig selection_from_json(const nlohmann::json& j) {
  detail::expect_keys(j, {"tau", "eta", "preference"}, "selection");
  SelectionConfig s;
  s.tau = j.value("tau", s.tau);
  s.eta = j.value("eta", s.eta);
  if (j.contains("preference")) {
    s.preference = preference_from_string(j.at("preference").get<std::string>());
  }
  return s;
}

inline nlohmann::json to_json(const SynthParams& p) {
  return nlohmann::json{{"patients", p.patients},
                        {"mean_len", p.mean_len},
                        {"dose_response", p.dose_response},
                        {"base_mortality", p.base_mortality}};
}

inline SynthParams synth_from_json(const nlohmann::json& j) {
  detail::expect_keys(j, {"patients", "mean_len", "dose_response", "base_mortality"}, "synth");
  SynthParams p;
  p.patients = j.value("patients", p.patients);
  p.mean_len = j.value("mean_len", p.mean_len);
  p.dose_response = j.value("dose_response", p.dose_response);
  p.base_mortality = j.value("base_mortality", p.base_mortality);
  return p;
}

inline nlohmann::json to_json(const RunConfig& cfg) {
  return nlohmann::json{{"out_dir", cfg.out_dir},
                        {"seed", cfg.seed},
                        {"cohort", cfg.cohort},
                        {"csv", cfg.csv},
                        {"csv_schema", cfg.csv_schema},
                        {"max_episode_len", cfg.max_episode_len},
                        {"score", to_string(cfg.score)},
                        {"models", cfg.models},
                        {"hyper", to_json(cfg.hyper)},
                        {"death_penalty", cfg.death_penalty},
                        {"train_frac", cfg.train_frac},
                        {"selection", to_json(cfg.selection)},
                        {"tau_sweep", cfg.tau_sweep},
                        {"synth", to_json(cfg.synth)},
                        {"jobs", cfg.jobs}};
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config: top level must be a json object");
  detail::expect_keys(j,
                      {"out_dir", "seed", "cohort", "csv", "csv_schema", "max_episode_len",
                       "score", "models", "hyper", "death_penalty", "train_frac", "selection",
                       "tau_sweep", "synth", "jobs"},
                      "the top level");
  RunConfig cfg;
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.cohort = j.value("cohort", cfg.cohort);
  cfg.csv = j.value("csv", cfg.csv);
  cfg.csv_schema = j.value("csv_schema", cfg.csv_schema);
  cfg.max_episode_len = j.value("max_episode_len", cfg.max_episode_len);
  if (j.contains("score")) cfg.score = score_kind_from_string(j.at("score").get<std::string>());
  if (j.contains("models")) cfg.models = j.at("models").get<std::vector<std::string>>();
  if (j.contains("hyper")) cfg.hyper = hyper_config_from_json(j.at("hyper"));
  cfg.death_penalty = j.value("death_penalty", cfg.death_penalty);
  cfg.train_frac = j.value("train_frac", cfg.train_frac);
  if (j.contains("selection")) cfg.selection = selection_from_json(j.at("selection"));
  if (j.contains("tau_sweep")) cfg.tau_sweep = j.at("tau_sweep").get<std::vector<double>>();
  if (j.contains("synth")) cfg.synth = synth_from_json(j.at("synth"));
  cfg.jobs = j.value("jobs", cfg.jobs);
  return cfg;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& ex) {
    throw DataError("config parse error in " + path + ": " + ex.what());
  }
  try {
    return run_config_from_json(j);
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError("config " + path + ": " + ex.what());
  }
}

// Relative output roots can be redirected wholesale via HEPARL_OUT.
inline std::string apply_out_root(std::string out_dir) {
  if (const char* root = std::getenv("HEPARL_OUT")) {
    if (*root != '\0' && fs::path(out_dir).is_relative()) {
      return (fs::path(root) / out_dir).string();
    }
  }
  return out_dir;
}

// ---------------------------------------------------------------------------
// Small file helpers.
// ---------------------------------------------------------------------------

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

inline std::string file_hash(const std::string& path) { return hex64(fnv1a(read_file(path))); }

inline void write_file(const std::string& path, const std::string& content) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot open file for writing: " + path);
  out << content;
  if (!out) throw DataError("failed writing file: " + path);
}

inline std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// Full-precision CSV cell; NaN prints empty, infinities as inf/-inf.
inline std::string num(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

// Short form for console tables.
inline std::string num4(double v) {
  if (std::isnan(v)) return "-";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// Manifests. Every command writes one next to its artifacts: the verbatim run
// config, a focused "effective" view of what actually shapes the outputs,
// input-file hashes, and format versions -- no timestamps, so reruns can be
// detected by content alone. A rerun whose command, effective config, and
// input hashes all match an existing manifest (and whose recorded outputs
// still exist) is a no-op unless forced.
// ---------------------------------------------------------------------------

inline constexpr int kManifestFormatVersion = 1;

struct Manifest {
  nlohmann::json doc;
  std::string path;
};

inline Manifest make_manifest(const std::string& path, const std::string& command,
                              const nlohmann::json& config, const nlohmann::json& effective,
                              const std::vector<std::string>& inputs) {
  nlohmann::json in = nlohmann::json::object();
  for (const auto& p : inputs) in[p] = file_hash(p);
  nlohmann::json doc{{"kind", "heparl-manifest"},
                     {"format_version", kManifestFormatVersion},
                     {"command", command},
                     {"config", config},
                     {"config_hash", hex64(fnv1a(config.dump()))},
                     {"effective", effective},
                     {"inputs", std::move(in)},
                     {"outputs", nlohmann::json::array()},
                     {"versions",
                      {{"manifest", kManifestFormatVersion},
                       {"cohort", kCohortFormatVersion},
                       {"checkpoint", kCheckpointFormatVersion}}}};
  return Manifest{std::move(doc), path};
}

inline bool up_to_date(Manifest& m) {
  std::ifstream in(m.path);
  if (!in) return false;
  nlohmann::json prev;
  try {
    in >> prev;
  } catch (const nlohmann::json::exception&) {
    return false;
  }
  for (const char* key : {"command", "effective", "inputs", "versions"}) {
    if (!prev.contains(key) || prev.at(key) != m.doc.at(key)) return false;
  }
  if (!prev.contains("outputs") || !prev.at("outputs").is_array() || prev.at("outputs").empty()) {
    return false;
  }
  for (const auto& out : prev.at("outputs")) {
    if (!fs::exists(out.get<std::string>())) return false;
  }
  m.doc["outputs"] = prev.at("outputs");  // carry forward what the work produced
  return true;
}

inline void write_manifest(const Manifest& m) { write_file(m.path, m.doc.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// generate: synthesize a cohort (plus its hidden ground-truth policy).
// ---------------------------------------------------------------------------

inline void cmd_generate(const RunConfig& cfg, bool force, std::ostream& out) {
  validate(cfg);
  const std::string cohort_path = join(cfg.out_dir, "cohort.jsonl");
  const std::string gt_path = join(cfg.out_dir, "ground_truth.json");
  const nlohmann::json effective{
      {"synth", to_json(cfg.synth)}, {"seed", cfg.seed}, {"cohort", cohort_path}};
  Manifest m = make_manifest(join(cfg.out_dir, "generate-manifest.json"), "generate",
                             to_json(cfg), effective, {});
  if (!force && up_to_date(m)) {
    write_manifest(m);
    out << "generate: up to date (" << cohort_path << "); use --force to regenerate\n";
    return;
  }

  const SynthResult res = synth_cohort(cfg.synth, cfg.seed);
  fs::create_directories(cfg.out_dir);
  save_cohort(cohort_path, res.cohort);
  write_file(gt_path, heparl::to_json(res.ground_truth).dump(2) + "\n");
  m.doc["outputs"] = {cohort_path, gt_path};
  write_manifest(m);

  size_t deaths = 0;
  for (const auto& ep : res.cohort.episodes) {
    if (ep.outcome == Outcome::Died) ++deaths;
  }
  out << "generate: " << cfg.synth.patients << " patients -> " << res.cohort.episodes.size()
      << " episodes (" << deaths << " deaths) -> " << cohort_path << "\n";
}

// ---------------------------------------------------------------------------
// ingest: csv -> 4h windows -> imputation -> exclusion -> episodes.
// ---------------------------------------------------------------------------

inline void cmd_ingest(const RunConfig& cfg, bool force, std::ostream& out) {
  validate(cfg);
  if (cfg.csv.empty() || cfg.csv_schema.empty()) {
    throw ValidationError("ingest needs --csv and --schema (config keys csv / csv_schema)");
  }
  const std::string cohort_path = join(cfg.out_dir, "cohort.jsonl");
  const std::string log_path = join(cfg.out_dir, "ingest-log.json");
  const nlohmann::json effective{{"csv", cfg.csv},
                                 {"csv_schema", cfg.csv_schema},
                                 {"max_episode_len", cfg.max_episode_len},
                                 {"cohort", cohort_path}};
  Manifest m = make_manifest(join(cfg.out_dir, "ingest-manifest.json"), "ingest", to_json(cfg),
                             effective, {cfg.csv, cfg.csv_schema});
  if (!force && up_to_date(m)) {
    write_manifest(m);
    out << "ingest: up to date (" << cohort_path << "); use --force to re-ingest\n";
    return;
  }

  const CsvSchema schema = load_schema(cfg.csv_schema);
  const IngestResult ingest = ingest_csv(cfg.csv, schema);
  if (ingest.records.empty()) {
    throw DataError("ingest: no usable rows in " + cfg.csv + " (" +
                    std::to_string(ingest.rows_malformed) + " of " +
                    std::to_string(ingest.rows_total) + " rows malformed)");
  }
  const auto wres = windowize(ingest.records);

  Cohort cohort;
  cohort.provenance = Provenance::Ingested;
  int windows_total = 0, windows_excluded = 0, runs_too_short = 0, segments = 0;
  for (const auto& grid : wres.grids) {
    const auto ares = exclude_and_assemble(impute(grid));
    windows_total += ares.windows_total;
    windows_excluded += ares.windows_excluded;
    runs_too_short += ares.runs_too_short;
    for (const auto& ep : ares.episodes) {
      if (cfg.max_episode_len >= 2) {
        auto parts = segment_long(ep, cfg.max_episode_len);
        if (parts.size() > 1) segments += static_cast<int>(parts.size());
        for (auto& part : parts) cohort.episodes.push_back(std::move(part));
      } else {
        cohort.episodes.push_back(ep);
      }
    }
  }
  if (cohort.episodes.empty()) {
    throw DataError("ingest: no episode survives windowing and exclusion");
  }
  fs::create_directories(cfg.out_dir);
  save_cohort(cohort_path, cohort);

  nlohmann::json excluded = nlohmann::json::array();
  for (const auto& [pid, why] : wres.excluded) {
    excluded.push_back({{"patient", pid}, {"reason", why}});
  }
  const nlohmann::json log{{"rows_total", ingest.rows_total},
                           {"rows_malformed", ingest.rows_malformed},
                           {"row_errors", ingest.row_errors},
                           {"patients", wres.grids.size()},
                           {"patients_excluded", std::move(excluded)},
                           {"windows_total", windows_total},
                           {"windows_excluded", windows_excluded},
                           {"runs_too_short", runs_too_short},
                           {"segmented_episodes", segments},
                           {"episodes", cohort.episodes.size()}};
  write_file(log_path, log.dump(2) + "\n");
  m.doc["outputs"] = {cohort_path, log_path};
  write_manifest(m);

  out << "ingest: " << ingest.rows_total << " rows (" << ingest.rows_malformed
      << " malformed) -> " << wres.grids.size() << " patients -> " << cohort.episodes.size()
      << " episodes -> " << cohort_path << "\n";
}

// ---------------------------------------------------------------------------
// train: patient-level split, then one learner per named model.
// ---------------------------------------------------------------------------

inline void cmd_train(const RunConfig& cfg, bool force, std::ostream& out) {
  validate(cfg);
  const std::string cohort_path =
      cfg.cohort.empty() ? join(cfg.out_dir, "cohort.jsonl") : cfg.cohort;
  if (!fs::exists(cohort_path)) {
    throw DataError("cohort file not found: " + cohort_path +
                    " (run generate/ingest first, or pass --cohort)");
  }
  const std::string train_path = join(cfg.out_dir, "train.jsonl");
  const std::string eval_path = join(cfg.out_dir, "eval.jsonl");

  const nlohmann::json cfgj = to_json(cfg);
  const nlohmann::json split_effective{
      {"cohort", cohort_path}, {"train_frac", cfg.train_frac}, {"seed", cfg.seed}};
  Manifest split_m = make_manifest(join(cfg.out_dir, "train-manifest.json"), "train", cfgj,
                                   split_effective, {cohort_path});
  if (force || !up_to_date(split_m)) {
    const Cohort cohort = load_cohort(cohort_path);
    const auto parts = split(cohort, cfg.train_frac, derive_seed(cfg.seed, 0x5417));
    fs::create_directories(cfg.out_dir);
    save_cohort(train_path, parts.first);
    save_cohort(eval_path, parts.second);
    split_m.doc["outputs"] = {train_path, eval_path};
    out << "train: split " << cohort.episodes.size() << " episodes into "
        << parts.first.episodes.size() << " train / " << parts.second.episodes.size()
        << " eval\n";
  }
  write_manifest(split_m);

  const Cohort train_c = load_cohort(train_path);

  std::vector<ModelSpec> specs;
  for (const auto& name : cfg.models) specs.push_back(model_from_name(name));

  // Shared transition datasets, built once up front (the parallel section
  // below only reads them).
  std::vector<Transition<int>> tabular;
  std::map<ScoreKind, std::vector<Transition<StateVec>>> vectors;
  for (const auto& ms : specs) {
    RewardSpec spec;
    spec.kind = ms.kind;
    spec.death_penalty = cfg.death_penalty;
    if (ms.algo == Algo::QL) {
      if (tabular.empty()) tabular = build_transitions_tabular(train_c, spec);
    } else if (!vectors.count(ms.kind)) {
      vectors.emplace(ms.kind, build_transitions_vector(train_c, spec));
    }
  }

  std::vector<std::string> lines(specs.size());
  parallel_for(specs.size(), cfg.jobs, [&](size_t i) {
    const ModelSpec& ms = specs[i];
    const std::string dir = join(join(cfg.out_dir, "models"), ms.name);
    const Hyper h = cfg.hyper.resolve(ms.algo, cfg.seed, ms.name);
    const nlohmann::json effective{{"model", ms.name},
                                   {"algo", to_string(ms.algo)},
                                   {"score", to_string(ms.kind)},
                                   {"hyper",
                                    {{"gamma", h.gamma},
                                     {"lr", h.lr},
                                     {"batch", h.batch},
                                     {"epochs", h.epochs},
                                     {"sync_every", h.sync_every},
                                     {"checkpoint_every", h.checkpoint_every},
                                     {"tau_bcq", h.tau_bcq},
                                     {"alpha", h.alpha},
                                     {"seed", h.seed},
                                     {"hidden", h.hidden}}},
                                   {"death_penalty", cfg.death_penalty}};
    Manifest m = make_manifest(join(dir, "manifest.json"), "train", cfgj, effective,
                               {train_path});
    if (!force && up_to_date(m)) {
      write_manifest(m);
      lines[i] = "train " + ms.name + ": up to date";
      return;
    }

    const TrainResult res = ms.algo == Algo::QL
                                ? train_ql(tabular, h, ms.kind)
                                : train_deep(vectors.at(ms.kind), ms.algo, h, ms.kind);

    fs::create_directories(dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("checkpoint-", 0) == 0 && name.size() > 5 &&
          name.substr(name.size() - 5) == ".json") {
        fs::remove(entry.path());
      }
    }

    std::vector<std::string> outputs;
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& ck : res.checkpoints) {
      const std::string path = join(dir, "checkpoint-" + std::to_string(ck.epoch) + ".json");
      save_checkpoint(path, ck);
      outputs.push_back(path);
      epochs.push_back(ck.epoch);
    }

    const size_t n = ms.algo == Algo::QL ? tabular.size() : vectors.at(ms.kind).size();
    nlohmann::json loss_per_epoch = nlohmann::json::array();
    if (!res.step_losses.empty()) {
      const size_t per_epoch = (n + static_cast<size_t>(h.batch) - 1) /
                               static_cast<size_t>(h.batch);
      for (size_t s = 0; s < res.step_losses.size(); s += per_epoch) {
        const size_t end = std::min(s + per_epoch, res.step_losses.size());
        double sum = 0.0;
        for (size_t k = s; k < end; ++k) sum += res.step_losses[k];
        loss_per_epoch.push_back(sum / static_cast<double>(end - s));
      }
    }
    const nlohmann::json log{{"model", ms.name},
                             {"algo", to_string(ms.algo)},
                             {"score", to_string(ms.kind)},
                             {"transitions", n},
                             {"checkpoint_epochs", std::move(epochs)},
                             {"loss_per_epoch", std::move(loss_per_epoch)},
                             {"warnings", res.warnings}};
    const std::string log_path = join(dir, "log.json");
    write_file(log_path, log.dump(2) + "\n");
    outputs.push_back(log_path);

    m.doc["outputs"] = outputs;
    write_manifest(m);

    std::ostringstream line;
    line << "train " << ms.name << ": " << res.checkpoints.size() << " checkpoints (epochs "
         << res.checkpoints.front().epoch << ".." << res.checkpoints.back().epoch << ")";
    if (!res.step_losses.empty()) {
      line << ", final loss " << num4(res.step_losses.back());
    }
    if (!res.warnings.empty()) {
      line << " [" << res.warnings.size() << " warning" << (res.warnings.size() == 1 ? "" : "s")
           << "]";
    }
    lines[i] = line.str();
  });
  for (const auto& line : lines) out << line << "\n";
}

// ---------------------------------------------------------------------------
// assess: eta-patience checkpoint selection per model under the TECM*
// principle, a cross-model winner, and plot-ready metric files.
// ---------------------------------------------------------------------------

namespace detail {

struct DiscoveredModel {
  std::string name;
  std::vector<std::string> files;     // sorted by checkpoint epoch
  std::vector<Checkpoint> checkpoints;
};

inline std::vector<std::string> checkpoint_files(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.rfind("checkpoint-", 0) == 0 && name.size() > 5 &&
        name.substr(name.size() - 5) == ".json") {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline std::vector<DiscoveredModel> discover_models(const std::string& ckdir) {
  if (!fs::exists(ckdir)) throw DataError("checkpoint directory not found: " + ckdir);
  std::vector<DiscoveredModel> models;
  auto add = [&](const std::string& name, std::vector<std::string> files) {
    DiscoveredModel m;
    m.name = name;
    std::vector<std::pair<Checkpoint, std::string>> loaded;
    for (const auto& f : files) loaded.emplace_back(load_checkpoint(f), f);
    std::stable_sort(loaded.begin(), loaded.end(),
                     [](const auto& a, const auto& b) { return a.first.epoch < b.first.epoch; });
    const Algo algo0 = loaded.front().first.algo;
    const ScoreKind kind0 = loaded.front().first.kind;
    for (auto& [ck, f] : loaded) {
      if (ck.algo != algo0 || ck.kind != kind0) {
        throw DataError("checkpoints under " + name + " mix algorithms or score kinds");
      }
      m.files.push_back(f);
      m.checkpoints.push_back(std::move(ck));
    }
    models.push_back(std::move(m));
  };
  auto direct = checkpoint_files(ckdir);
  if (!direct.empty()) {
    add(fs::path(ckdir).filename().string(), std::move(direct));
  } else {
    std::vector<fs::path> subdirs;
    for (const auto& entry : fs::directory_iterator(ckdir)) {
      if (entry.is_directory()) subdirs.push_back(entry.path());
    }
    std::sort(subdirs.begin(), subdirs.end());
    for (const auto& sub : subdirs) {
      auto files = checkpoint_files(sub);
      if (!files.empty()) add(sub.filename().string(), std::move(files));
    }
  }
  if (models.empty()) {
    throw DataError("no checkpoints (checkpoint-*.json) under " + ckdir);
  }
  return models;
}

inline std::string csv_row(std::initializer_list<std::string> cells) {
  std::string row;
  for (const auto& c : cells) {
    if (!row.empty()) row.push_back(',');
    row += c;
  }
  row.push_back('\n');
  return row;
}

}  // namespace detail

inline void cmd_assess(const RunConfig& cfg, std::string ckdir, std::string cohort_path,
                       bool force, std::ostream& out) {
  validate(cfg);
  if (ckdir.empty()) ckdir = join(cfg.out_dir, "models");
  if (cohort_path.empty()) cohort_path = join(cfg.out_dir, "eval.jsonl");
  if (!fs::exists(cohort_path)) {
    throw DataError("cohort file not found: " + cohort_path +
                    " (run train first, or pass --cohort)");
  }
  const std::string outdir = join(cfg.out_dir, "assess");

  const auto models = detail::discover_models(ckdir);
  std::vector<std::string> inputs{cohort_path};
  for (const auto& m : models) inputs.insert(inputs.end(), m.files.begin(), m.files.end());

  const nlohmann::json effective{{"selection", to_json(cfg.selection)},
                                 {"tau_sweep", cfg.tau_sweep},
                                 {"cohort", cohort_path},
                                 {"checkpoint_dir", ckdir}};
  Manifest manifest = make_manifest(join(outdir, "manifest.json"), "assess", to_json(cfg),
                                    effective, inputs);
  if (!force && up_to_date(manifest)) {
    write_manifest(manifest);
    out << "assess: up to date (" << outdir << "); use --force to re-assess\n";
    return;
  }

  const Cohort cohort = load_cohort(cohort_path);
  std::map<std::pair<int, double>, Partition> partitions;
  auto partition_for = [&](ScoreKind kind, double tau) -> const Partition& {
    const auto key = std::make_pair(static_cast<int>(kind), tau);
    auto it = partitions.find(key);
    if (it == partitions.end()) {
      RewardSpec spec;
      spec.kind = kind;
      spec.death_penalty = cfg.death_penalty;
      it = partitions.emplace(key, classify_episodes(cohort, spec, tau)).first;
    }
    return it->second;
  };

  std::vector<std::string> outputs;
  struct Selected {
    SelectionResult sel;
    const AssessmentReport* best = nullptr;
    const Checkpoint* ck = nullptr;
  };
  std::vector<Selected> selected;
  for (const auto& model : models) {
    const ScoreKind kind = model.checkpoints.front().kind;
    const Partition& part = partition_for(kind, cfg.selection.tau);
    Selected s;
    s.sel = select_checkpoint(model.checkpoints, part, cfg.selection, cfg.jobs);
    selected.push_back(std::move(s));
  }
  for (size_t i = 0; i < models.size(); ++i) {
    selected[i].best = &selected[i].sel.reports[selected[i].sel.best_index];
    selected[i].ck = &models[i].checkpoints[selected[i].sel.best_index];
  }

  size_t win = 0;
  for (size_t i = 1; i < models.size(); ++i) {
    if (compare(*selected[win].best, *selected[i].best, cfg.selection.preference) ==
        Ordering::Second) {
      win = i;
    }
  }

  // Per-model report series and a verbatim copy of the selected checkpoint.
  for (size_t i = 0; i < models.size(); ++i) {
    const auto& model = models[i];
    const auto& s = selected[i];
    nlohmann::json reports = nlohmann::json::array();
    for (const auto& r : s.sel.reports) reports.push_back(heparl::to_json(r));
    const nlohmann::json doc{{"model", model.name},
                             {"algo", to_string(model.checkpoints.front().algo)},
                             {"score", to_string(model.checkpoints.front().kind)},
                             {"best_epoch", s.best->checkpoint_epoch},
                             {"best_index", s.sel.best_index},
                             {"evaluated", s.sel.reports.size()},
                             {"checkpoints", model.checkpoints.size()},
                             {"stopped_early", s.sel.stopped_early},
                             {"reports", reports}};
    const std::string report_path = join(join(outdir, "reports"), model.name + ".json");
    write_file(report_path, doc.dump(2) + "\n");
    outputs.push_back(report_path);

    const std::string sel_path = join(join(outdir, "selected"), model.name + ".json");
    write_file(sel_path, read_file(model.files[s.sel.best_index]));
    outputs.push_back(sel_path);
  }

  // Table-shaped csv: one metric per row, one column per model.
  {
    std::string csv = "metric";
    for (const auto& model : models) csv += "," + model.name;
    csv += "\n";
    auto row = [&](const std::string& label, auto&& get) {
      csv += label;
      for (size_t i = 0; i < models.size(); ++i) csv += "," + get(selected[i]);
      csv += "\n";
    };
    row("OG", [](const Selected& s) { return num(s.best->tecm.og); });
    row("OB", [](const Selected& s) { return num(s.best->tecm.ob); });
    row("WG", [](const Selected& s) { return num(s.best->tecm.wg); });
    row("WB", [](const Selected& s) { return num(s.best->tecm.wb); });
    row("sigma", [](const Selected& s) { return num(s.best->sigma); });
    row("mu", [](const Selected& s) { return num(s.best->mu); });
    row("BE", [](const Selected& s) { return std::to_string(s.best->checkpoint_epoch); });
    const std::string path = join(outdir, "tecm.csv");
    write_file(path, csv);
    outputs.push_back(path);
  }

  // Metric-vs-epoch plot data over every evaluated checkpoint.
  {
    std::string csv = "model,epoch,og,ob,wg,wb,sigma,mu\n";
    for (size_t i = 0; i < models.size(); ++i) {
      for (const auto& r : selected[i].sel.reports) {
        csv += detail::csv_row({models[i].name, std::to_string(r.checkpoint_epoch),
                                num(r.tecm.og), num(r.tecm.ob), num(r.tecm.wg), num(r.tecm.wb),
                                num(r.sigma), num(r.mu)});
      }
    }
    const std::string path = join(outdir, "epochs.csv");
    write_file(path, csv);
    outputs.push_back(path);
  }

  // Metric-vs-tau plot data: the selected checkpoint re-assessed per tau,
  // one file per tau.
  for (double tau : cfg.tau_sweep) {
    std::string csv = "model,epoch,og,ob,wg,wb,sigma,mu,tau\n";
    for (size_t i = 0; i < models.size(); ++i) {
      const ScoreKind kind = models[i].checkpoints.front().kind;
      const AssessmentReport r =
          assess_checkpoint(*selected[i].ck, partition_for(kind, tau), tau, cfg.jobs);
      csv += detail::csv_row({models[i].name, std::to_string(r.checkpoint_epoch), num(r.tecm.og),
                              num(r.tecm.ob), num(r.tecm.wg), num(r.tecm.wb), num(r.sigma),
                              num(r.mu), num(tau)});
    }
    const std::string path = join(join(outdir, "tau"), "tau-" + nlohmann::json(tau).dump() +
                                                           ".csv");
    write_file(path, csv);
    outputs.push_back(path);
  }

  {
    const auto& s = selected[win];
    const nlohmann::json doc{{"model", models[win].name},
                             {"algo", to_string(models[win].checkpoints.front().algo)},
                             {"score", to_string(models[win].checkpoints.front().kind)},
                             {"epoch", s.best->checkpoint_epoch},
                             {"sigma", std::isinf(s.best->sigma) ? nlohmann::json("inf")
                                                                 : nlohmann::json(s.best->sigma)},
                             {"mu", s.best->mu},
                             {"o_gap", s.best->o_gap},
                             {"w_gap", s.best->w_gap},
                             {"preference", to_string(cfg.selection.preference)},
                             {"tau", cfg.selection.tau},
                             {"eta", cfg.selection.eta}};
    const std::string path = join(outdir, "winner.json");
    write_file(path, doc.dump(2) + "\n");
    outputs.push_back(path);
  }

  manifest.doc["outputs"] = outputs;
  write_manifest(manifest);

  out << "assess: " << models.size() << " model" << (models.size() == 1 ? "" : "s") << ", "
      << cohort.episodes.size() << " episodes, tau " << cfg.selection.tau << ", eta "
      << cfg.selection.eta << ", " << to_string(cfg.selection.preference) << " preference\n";
  out << "  model          best  sigma    mu       o-gap    w-gap    evaluated\n";
  for (size_t i = 0; i < models.size(); ++i) {
    const auto& s = selected[i];
    std::ostringstream line;
    line << "  " << std::left << std::setw(13) << models[i].name << std::right << std::setw(6)
         << s.best->checkpoint_epoch << "  " << std::setw(7) << num4(s.best->sigma) << "  "
         << std::setw(7) << num4(s.best->mu) << "  " << std::setw(7) << num4(s.best->o_gap)
         << "  " << std::setw(7) << num4(s.best->w_gap) << "  " << s.sel.reports.size() << "/"
         << models[i].checkpoints.size() << (s.sel.stopped_early ? " (early stop)" : "");
    out << line.str() << "\n";
  }
  out << "winner: " << models[win].name << " (epoch " << selected[win].best->checkpoint_epoch
      << ", sigma " << num4(selected[win].best->sigma) << ") -> " << outdir << "\n";
}

// ---------------------------------------------------------------------------
// outcomes: follower matching of the selected checkpoints against actual
// mortality and stay.
// ---------------------------------------------------------------------------

inline void cmd_outcomes(const RunConfig& cfg, std::string selected_dir,
                         std::string cohort_path, bool force, std::ostream& out) {
  validate(cfg);
  if (selected_dir.empty()) selected_dir = join(join(cfg.out_dir, "assess"), "selected");
  if (cohort_path.empty()) cohort_path = join(cfg.out_dir, "eval.jsonl");
  if (!fs::exists(selected_dir)) {
    throw DataError("selected-checkpoint directory not found: " + selected_dir +
                    " (run assess first, or pass --selected-dir)");
  }
  if (!fs::exists(cohort_path)) {
    throw DataError("cohort file not found: " + cohort_path + " (pass --cohort)");
  }

  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(selected_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no selected checkpoints (*.json) in " + selected_dir);

  const std::string outdir = join(cfg.out_dir, "outcomes");
  std::vector<std::string> inputs{cohort_path};
  inputs.insert(inputs.end(), files.begin(), files.end());
  const nlohmann::json effective{
      {"tau", cfg.selection.tau}, {"cohort", cohort_path}, {"selected_dir", selected_dir}};
  Manifest manifest = make_manifest(join(outdir, "manifest.json"), "outcomes", to_json(cfg),
                                    effective, inputs);
  if (!force && up_to_date(manifest)) {
    write_manifest(manifest);
    out << "outcomes: up to date (" << outdir << "); use --force to recompute\n";
    return;
  }

  std::vector<std::pair<std::string, Checkpoint>> models;
  for (const auto& f : files) {
    models.emplace_back(fs::path(f).stem().string(), load_checkpoint(f));
  }
  const Cohort cohort = load_cohort(cohort_path);
  const OutcomeReport report = outcome_report(cohort, models, cfg.selection.tau, cfg.jobs);

  const std::string csv_path = join(outdir, "outcomes.csv");
  const std::string json_path = join(outdir, "outcomes.json");
  write_file(csv_path, outcome_csv(report));
  write_file(json_path, heparl::to_json(report).dump(2) + "\n");
  manifest.doc["outputs"] = {csv_path, json_path};
  write_manifest(manifest);

  out << "outcomes: " << cohort.episodes.size() << " episodes, tau " << cfg.selection.tau
      << " (baseline mortality " << num4(report.baseline.mortality) << ", stay "
      << num4(report.baseline.stay_days) << " days)\n";
  out << "  model          followers  MoR      AIHS     p_MoR    p_AIHS\n";
  for (const auto& mo : report.models) {
    std::ostringstream line;
    line << "  " << std::left << std::setw(13) << mo.model << std::right << std::setw(9)
         << mo.followers.n_episodes << "  " << std::setw(7) << num4(mo.followers.mortality)
         << "  " << std::setw(7) << num4(mo.followers.stay_days) << "  " << std::setw(7)
         << num4(mo.followers.t_mortality.p) << "  " << std::setw(7)
         << num4(mo.followers.t_stay.p);
    out << line.str() << "\n";
  }
  out << "-> " << outdir << "\n";
}

// ---------------------------------------------------------------------------
// report: collate a run directory into one human-readable markdown file.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string pretty_cell(const std::string& cell) {
  if (cell.empty()) return "";
  try {
    size_t pos = 0;
    const double v = std::stod(cell, &pos);
    if (pos != cell.size()) return cell;
    if (cell.find_first_not_of("0123456789-") == std::string::npos) return cell;  // integer
    std::ostringstream s;
    s << std::setprecision(4) << v;
    return s.str();
  } catch (const std::exception&) {
    return cell;
  }
}

inline std::string csv_to_markdown(const std::string& csv) {
  std::istringstream in(csv);
  std::string line, md;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    md += "|";
    for (const auto& c : cells) md += " " + (header ? c : pretty_cell(c)) + " |";
    md += "\n";
    if (header) {
      md += "|";
      for (size_t i = 0; i < cells.size(); ++i) md += " --- |";
      md += "\n";
      header = false;
    }
  }
  return md;
}

}  // namespace detail

inline void cmd_report(const RunConfig& cfg, bool force, std::ostream& out) {
  const std::string root = cfg.out_dir;
  const std::string cohort_path = join(root, "cohort.jsonl");
  const std::string models_dir = join(root, "models");
  const std::string tecm_path = join(join(root, "assess"), "tecm.csv");
  const std::string winner_path = join(join(root, "assess"), "winner.json");
  const std::string outcomes_path = join(join(root, "outcomes"), "outcomes.csv");

  std::vector<std::string> inputs;
  for (const std::string& p : {cohort_path, tecm_path, winner_path, outcomes_path}) {
    if (fs::exists(p)) inputs.push_back(p);
  }
  std::vector<std::string> logs;
  if (fs::exists(models_dir)) {
    for (const auto& entry : fs::directory_iterator(models_dir)) {
      const std::string log = join(entry.path().string(), "log.json");
      if (entry.is_directory() && fs::exists(log)) logs.push_back(log);
    }
    std::sort(logs.begin(), logs.end());
    inputs.insert(inputs.end(), logs.begin(), logs.end());
  }
  if (inputs.empty()) throw DataError("nothing to report under " + root);

  const std::string report_path = join(root, "report.md");
  Manifest manifest = make_manifest(join(root, "report-manifest.json"), "report", to_json(cfg),
                                    nlohmann::json{{"root", root}}, inputs);
  if (!force && up_to_date(manifest)) {
    write_manifest(manifest);
    out << read_file(report_path);
    return;
  }

  std::ostringstream md;
  md << "# heparl run report\n";

  if (fs::exists(cohort_path)) {
    const Cohort cohort = load_cohort(cohort_path);
    std::set<std::string> patients;
    size_t deaths = 0, steps = 0;
    double los = 0.0, severity = 0.0;
    for (const auto& ep : cohort.episodes) {
      patients.insert(ep.patient_id);
      if (ep.outcome == Outcome::Died) ++deaths;
      steps += ep.steps.size();
      los += ep.los_days;
      severity += state_score(ep.steps.front().vitals, cfg.score, default_config(cfg.score));
    }
    const double n = static_cast<double>(cohort.episodes.size());
    md << "\n## Cohort\n\n"
       << "- file: `" << cohort_path << "` ("
       << (cohort.provenance == Provenance::Synthetic ? "synthetic" : "ingested");
    if (cohort.seed) md << ", seed " << *cohort.seed;
    md << ")\n"
       << "- episodes: " << cohort.episodes.size() << " from " << patients.size()
       << " patients\n"
       << "- deaths: " << deaths << " (mortality " << num4(static_cast<double>(deaths) / n)
       << ")\n"
       << "- mean stay: " << num4(los / n) << " days, mean steps/episode: "
       << num4(static_cast<double>(steps) / n) << "\n"
       << "- mean initial severity (" << to_string(cfg.score) << "): " << num4(severity / n)
       << "\n";
  }

  if (!logs.empty()) {
    md << "\n## Training\n\n| model | transitions | checkpoints | final loss | warnings |\n"
       << "| --- | --- | --- | --- | --- |\n";
    for (const auto& log_path : logs) {
      nlohmann::json log;
      try {
        log = nlohmann::json::parse(read_file(log_path));
      } catch (const nlohmann::json::exception& ex) {
        throw DataError("cannot parse " + log_path + ": " + ex.what());
      }
      const auto losses = log.value("loss_per_epoch", nlohmann::json::array());
      md << "| " << log.value("model", "?") << " | " << log.value("transitions", 0) << " | "
         << log.value("checkpoint_epochs", nlohmann::json::array()).size() << " | "
         << (losses.empty() ? std::string("-") : num4(losses.back().get<double>())) << " | "
         << log.value("warnings", nlohmann::json::array()).size() << " |\n";
    }
  }

  if (fs::exists(tecm_path)) {
    md << "\n## Assessment (TECM*)\n\n";
    if (fs::exists(winner_path)) {
      nlohmann::json winner;
      try {
        winner = nlohmann::json::parse(read_file(winner_path));
      } catch (const nlohmann::json::exception& ex) {
        throw DataError("cannot parse " + winner_path + ": " + ex.what());
      }
      md << "Selected policy: **" << winner.value("model", "?") << "** at epoch "
         << winner.value("epoch", 0) << " (tau " << winner.value("tau", 0.0) << ", eta "
         << winner.value("eta", 0) << ", " << winner.value("preference", "?")
         << " preference).\n\n";
    }
    md << detail::csv_to_markdown(read_file(tecm_path));
  }

  if (fs::exists(outcomes_path)) {
    md << "\n## Outcomes\n\n" << detail::csv_to_markdown(read_file(outcomes_path));
  }

  write_file(report_path, md.str());
  manifest.doc["outputs"] = {report_path};
  write_manifest(manifest);
  out << md.str();
}

inline void cmd_defaults(std::ostream& out) { out << to_json(RunConfig{}).dump(2) << "\n"; }

// ---------------------------------------------------------------------------
// Argument dispatch. Precedence: built-in defaults < --config file < flags.
// `args` excludes the program name. Exit codes: 0 ok, 2 invalid input or
// arguments, 3 missing or corrupt data, 4 internal failure.
// ---------------------------------------------------------------------------

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"offline reinforcement learning for heparin dosing"};
  app.name("heparl");
  app.require_subcommand(1);

  struct Opts {
    std::string config, out_dir;
    std::uint64_t seed = 0;
    int jobs = 0;
    bool force = false;
    int patients = 0;
    double mean_len = 0.0, dose_response = 0.0, base_mortality = 0.0;
    std::string csv, schema;
    int max_len = 0;
    std::string cohort;
    std::vector<std::string> models;
    double train_frac = 0.0, gamma = 0.0, lr = 0.0;
    int batch = 0, epochs = 0, sync_every = 0, checkpoint_every = 0, hidden = 0;
    double tau_bcq = 0.0, alpha = 0.0;
    std::string ckdir, pref, selected_dir;
    double tau = 0.0;
    int eta = 0;
    std::vector<double> tau_sweep;
  } o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "json run-config file")->check(CLI::ExistingFile);
    sub->add_option("--out", o.out_dir, "run directory");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--jobs", o.jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--force", o.force, "redo the work even if up to date");
  };

  app.add_subcommand("defaults", "print the built-in run config as json");

  auto* gen = app.add_subcommand("generate", "synthesize a patient cohort");
  add_common(gen);
  gen->add_option("--patients", o.patients, "number of patients")->check(CLI::PositiveNumber);
  gen->add_option("--mean-len", o.mean_len, "mean decision steps per trace");
  gen->add_option("--dose-response", o.dose_response, "strength of the dosing effect");
  gen->add_option("--base-mortality", o.base_mortality, "baseline death hazard");

  auto* ing = app.add_subcommand("ingest", "build a cohort from a raw vitals csv");
  add_common(ing);
  ing->add_option("--csv", o.csv, "raw csv file")->check(CLI::ExistingFile);
  ing->add_option("--schema", o.schema, "csv column schema (json)")->check(CLI::ExistingFile);
  ing->add_option("--max-len", o.max_len, "segment episodes longer than this (0: off)");

  auto* trn = app.add_subcommand("train", "split the cohort and train the model set");
  add_common(trn);
  trn->add_option("--cohort", o.cohort, "input cohort (default <out>/cohort.jsonl)");
  trn->add_option("--models", o.models, "comma-separated <score>-<algo> names")
      ->delimiter(',');
  trn->add_option("--train-frac", o.train_frac, "training fraction of patients");
  trn->add_option("--gamma", o.gamma, "discount factor");
  trn->add_option("--lr", o.lr, "learning rate");
  trn->add_option("--batch", o.batch, "minibatch size")->check(CLI::PositiveNumber);
  trn->add_option("--epochs", o.epochs, "training epochs")->check(CLI::PositiveNumber);
  trn->add_option("--sync-every", o.sync_every, "target-network sync period (steps)");
  trn->add_option("--checkpoint-every", o.checkpoint_every, "epochs between checkpoints");
  trn->add_option("--tau-bcq", o.tau_bcq, "bcq behavior-support threshold");
  trn->add_option("--alpha", o.alpha, "cql conservatism weight");
  trn->add_option("--hidden", o.hidden, "hidden width of the q network")
      ->check(CLI::PositiveNumber);

  auto* ass = app.add_subcommand("assess", "select checkpoints by the TECM* principle");
  add_common(ass);
  ass->add_option("--checkpoint-dir", o.ckdir, "checkpoint tree (default <out>/models)");
  ass->add_option("--cohort", o.cohort, "assessment cohort (default <out>/eval.jsonl)");
  ass->add_option("--tau", o.tau, "behavior-similarity threshold");
  ass->add_option("--eta", o.eta, "selection patience (checkpoints)")
      ->check(CLI::PositiveNumber);
  ass->add_option("--pref", o.pref, "tie preference")
      ->check(CLI::IsMember({"aggressive", "conservative"}));
  ass->add_option("--tau-sweep", o.tau_sweep, "comma-separated taus for sweep files")
      ->delimiter(',');

  auto* oc = app.add_subcommand("outcomes", "follower-matched mortality and stay statistics");
  add_common(oc);
  oc->add_option("--selected-dir", o.selected_dir,
                 "selected checkpoints (default <out>/assess/selected)");
  oc->add_option("--cohort", o.cohort, "outcome cohort (default <out>/eval.jsonl)");
  oc->add_option("--tau", o.tau, "follower-matching threshold");

  auto* rep = app.add_subcommand("report", "collate a run directory into markdown");
  add_common(rep);

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  }

  try {
    const auto parsed = app.get_subcommands();
    if (parsed.empty()) return 2;  // unreachable with require_subcommand(1)
    CLI::App* sub = parsed.front();
    const std::string name = sub->get_name();

    if (name == "defaults") {
      cmd_defaults(out);
      return 0;
    }

    RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    if (sub->count("--out")) cfg.out_dir = o.out_dir;
    if (sub->count("--seed")) cfg.seed = o.seed;
    if (sub->count("--jobs")) cfg.jobs = o.jobs;
    cfg.out_dir = apply_out_root(cfg.out_dir);

    if (name == "generate") {
      if (sub->count("--patients")) cfg.synth.patients = o.patients;
      if (sub->count("--mean-len")) cfg.synth.mean_len = o.mean_len;
      if (sub->count("--dose-response")) cfg.synth.dose_response = o.dose_response;
      if (sub->count("--base-mortality")) cfg.synth.base_mortality = o.base_mortality;
      cmd_generate(cfg, o.force, out);
    } else if (name == "ingest") {
      if (sub->count("--csv")) cfg.csv = o.csv;
      if (sub->count("--schema")) cfg.csv_schema = o.schema;
      if (sub->count("--max-len")) cfg.max_episode_len = o.max_len;
      cmd_ingest(cfg, o.force, out);
    } else if (name == "train") {
      if (sub->count("--cohort")) cfg.cohort = o.cohort;
      if (sub->count("--models")) cfg.models = o.models;
      if (sub->count("--train-frac")) cfg.train_frac = o.train_frac;
      if (sub->count("--gamma")) cfg.hyper.gamma = o.gamma;
      if (sub->count("--lr")) cfg.hyper.lr = o.lr;
      if (sub->count("--batch")) cfg.hyper.batch = o.batch;
      if (sub->count("--epochs")) cfg.hyper.epochs = o.epochs;
      if (sub->count("--sync-every")) cfg.hyper.sync_every = o.sync_every;
      if (sub->count("--checkpoint-every")) cfg.hyper.checkpoint_every = o.checkpoint_every;
      if (sub->count("--tau-bcq")) cfg.hyper.tau_bcq = o.tau_bcq;
      if (sub->count("--alpha")) cfg.hyper.alpha = o.alpha;
      if (sub->count("--hidden")) cfg.hyper.hidden = o.hidden;
      cmd_train(cfg, o.force, out);
    } else if (name == "assess") {
      if (sub->count("--tau")) cfg.selection.tau = o.tau;
      if (sub->count("--eta")) cfg.selection.eta = o.eta;
      if (sub->count("--pref")) cfg.selection.preference = preference_from_string(o.pref);
      if (sub->count("--tau-sweep")) cfg.tau_sweep = o.tau_sweep;
      cmd_assess(cfg, o.ckdir, o.cohort, o.force, out);
    } else if (name == "outcomes") {
      if (sub->count("--tau")) cfg.selection.tau = o.tau;
      cmd_outcomes(cfg, o.selected_dir, o.cohort, o.force, out);
    } else if (name == "report") {
      cmd_report(cfg, o.force, out);
    } else {
      err << "error: unknown command '" << name << "'\n";
      return 2;
    }
    return 0;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const InternalError& e) {
    err << "internal error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 4;
  }
}

}  // namespace heparl::cli
