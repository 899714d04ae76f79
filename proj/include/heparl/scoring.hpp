#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "heparl/errors.hpp"
#include "heparl/vitals.hpp"

namespace heparl::scoring {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Declarative component expressions.
//
// Severity components are loaded from config rather than hard-coded so that
// corrections to published coefficients never require a rebuild. The grammar
// is small: constants, polynomials, step tables, x>0 gates, and min/max/add
// combinators.
// ---------------------------------------------------------------------------

enum class ExprKind { Const, Poly, Step, Gate, Max, Min, Add };

// One row of a step table: cmp is "lt", "le", "gt" or "ge"; first match wins.
struct StepCut {
  std::string cmp;
  double threshold = 0.0;
  double score = 0.0;
};

struct Expr {
  ExprKind kind = ExprKind::Const;
  double value = 0.0;            // Const
  int vital = -1;                // Poly / Step / Gate
  std::vector<double> coeffs;    // Poly: c0 + c1*x + c2*x^2 + ...
  std::vector<StepCut> cuts;     // Step
  double fallback = 0.0;         // Step: no cut matched
  double scale = 1.0;            // Gate: scale * bool(x > 0)
  std::vector<Expr> args;        // Max / Min / Add
};

inline Expr e_const(double v) {
  Expr e;
  e.kind = ExprKind::Const;
  e.value = v;
  return e;
}

inline Expr e_poly(int vital, std::vector<double> coeffs) {
  Expr e;
  e.kind = ExprKind::Poly;
  e.vital = vital;
  e.coeffs = std::move(coeffs);
  return e;
}

inline Expr e_step(int vital, std::vector<StepCut> cuts, double fallback = 0.0) {
  Expr e;
  e.kind = ExprKind::Step;
  e.vital = vital;
  e.cuts = std::move(cuts);
  e.fallback = fallback;
  return e;
}

inline Expr e_gate(int vital, double scale = 1.0) {
  Expr e;
  e.kind = ExprKind::Gate;
  e.vital = vital;
  e.scale = scale;
  return e;
}

inline Expr e_nary(ExprKind kind, std::vector<Expr> args) {
  Expr e;
  e.kind = kind;
  e.args = std::move(args);
  return e;
}

inline Expr e_max(std::vector<Expr> args) { return e_nary(ExprKind::Max, std::move(args)); }
inline Expr e_min(std::vector<Expr> args) { return e_nary(ExprKind::Min, std::move(args)); }
inline Expr e_add(std::vector<Expr> args) { return e_nary(ExprKind::Add, std::move(args)); }

inline double eval(const Expr& e, const VitalSigns& v) {
  switch (e.kind) {
    case ExprKind::Const:
      return e.value;
    case ExprKind::Poly: {
      const double x = v[e.vital];
      double acc = 0.0;
      for (auto it = e.coeffs.rbegin(); it != e.coeffs.rend(); ++it) {
        acc = acc * x + *it;
      }
      return acc;
    }
    case ExprKind::Step: {
      const double x = v[e.vital];
      for (const auto& c : e.cuts) {
        if ((c.cmp == "lt" && x < c.threshold) || (c.cmp == "le" && x <= c.threshold) ||
            (c.cmp == "gt" && x > c.threshold) || (c.cmp == "ge" && x >= c.threshold)) {
          return c.score;
        }
      }
      return e.fallback;
    }
    case ExprKind::Gate:
      return v[e.vital] > 0.0 ? e.scale : 0.0;
    case ExprKind::Max: {
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& a : e.args) best = std::max(best, eval(a, v));
      return best;
    }
    case ExprKind::Min: {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& a : e.args) best = std::min(best, eval(a, v));
      return best;
    }
    case ExprKind::Add: {
      double sum = 0.0;
      for (const auto& a : e.args) sum += eval(a, v);
      return sum;
    }
  }
  throw InternalError("unreachable expression kind");
}

struct Component {
  std::string name;
  std::vector<int> reads;  // vital indices the expression may touch
  Expr expr;
  double clamp_lo = 0.0;
  double clamp_hi = 4.0;
};

struct ScoreConfig {
  std::string name;
  std::vector<Component> components;  // exactly 6 after validation
  bool discrete = false;              // true when every component is integral
};

// ---------------------------------------------------------------------------
// JSON (de)serialization. The file form is the external interface; round
// trips are lossless for double coefficients.
// ---------------------------------------------------------------------------

inline json to_json(const Expr& e) {
  json j;
  switch (e.kind) {
    case ExprKind::Const:
      j["op"] = "const";
      j["value"] = e.value;
      break;
    case ExprKind::Poly:
      j["op"] = "poly";
      j["vital"] = kVitalNames[static_cast<size_t>(e.vital)];
      j["coeffs"] = e.coeffs;
      break;
    case ExprKind::Step: {
      j["op"] = "step";
      j["vital"] = kVitalNames[static_cast<size_t>(e.vital)];
      json cuts = json::array();
      for (const auto& c : e.cuts) {
        cuts.push_back({{c.cmp, c.threshold}, {"score", c.score}});
      }
      j["cuts"] = cuts;
      j["else"] = e.fallback;
      break;
    }
    case ExprKind::Gate:
      j["op"] = "gate";
      j["vital"] = kVitalNames[static_cast<size_t>(e.vital)];
      j["scale"] = e.scale;
      break;
    case ExprKind::Max:
    case ExprKind::Min:
    case ExprKind::Add: {
      j["op"] = e.kind == ExprKind::Max ? "max" : e.kind == ExprKind::Min ? "min" : "add";
      json args = json::array();
      for (const auto& a : e.args) args.push_back(to_json(a));
      j["args"] = args;
      break;
    }
  }
  return j;
}

inline Expr expr_from_json(const json& j) {
  if (!j.is_object() || !j.contains("op")) {
    throw ValidationError("score config: expression node must be an object with an 'op' key");
  }
  const std::string op = j.at("op").get<std::string>();
  if (op == "const") {
    return e_const(j.at("value").get<double>());
  }
  if (op == "poly") {
    return e_poly(vital_index(j.at("vital").get<std::string>()),
                  j.at("coeffs").get<std::vector<double>>());
  }
  if (op == "step") {
    std::vector<StepCut> cuts;
    for (const auto& jc : j.at("cuts")) {
      StepCut c;
      for (const char* cmp : {"lt", "le", "gt", "ge"}) {
        if (jc.contains(cmp)) {
          c.cmp = cmp;
          c.threshold = jc.at(cmp).get<double>();
        }
      }
      if (c.cmp.empty()) {
        throw ValidationError("score config: step cut needs one of lt/le/gt/ge");
      }
      c.score = jc.at("score").get<double>();
      cuts.push_back(std::move(c));
    }
    return e_step(vital_index(j.at("vital").get<std::string>()), std::move(cuts),
                  j.value("else", 0.0));
  }
  if (op == "gate") {
    return e_gate(vital_index(j.at("vital").get<std::string>()), j.value("scale", 1.0));
  }
  if (op == "max" || op == "min" || op == "add") {
    std::vector<Expr> args;
    for (const auto& ja : j.at("args")) args.push_back(expr_from_json(ja));
    const ExprKind k = op == "max" ? ExprKind::Max : op == "min" ? ExprKind::Min : ExprKind::Add;
    return e_nary(k, std::move(args));
  }
  throw ValidationError("score config: unknown expression op '" + op + "'");
}

inline void collect_vitals(const Expr& e, std::vector<int>& out) {
  if (e.vital >= 0) out.push_back(e.vital);
  for (const auto& a : e.args) collect_vitals(a, out);
}

inline void validate(const ScoreConfig& cfg) {
  if (cfg.components.size() != 6) {
    throw ValidationError("score config '" + cfg.name + "': expected 6 components, got " +
                          std::to_string(cfg.components.size()));
  }
  for (const auto& comp : cfg.components) {
    if (comp.clamp_lo > comp.clamp_hi) {
      throw ValidationError("score config '" + cfg.name + "': component '" + comp.name +
                            "' has inverted clamp bounds");
    }
    std::vector<int> used;
    collect_vitals(comp.expr, used);
    for (int idx : used) {
      if (std::find(comp.reads.begin(), comp.reads.end(), idx) == comp.reads.end()) {
        throw ValidationError("score config '" + cfg.name + "': component '" + comp.name +
                              "' reads undeclared vital " +
                              kVitalNames[static_cast<size_t>(idx)]);
      }
    }
  }
}

inline json to_json(const ScoreConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["discrete"] = cfg.discrete;
  json comps = json::array();
  for (const auto& comp : cfg.components) {
    json jc;
    jc["name"] = comp.name;
    json reads = json::array();
    for (int idx : comp.reads) reads.push_back(kVitalNames[static_cast<size_t>(idx)]);
    jc["reads"] = reads;
    jc["expr"] = to_json(comp.expr);
    jc["clamp"] = {comp.clamp_lo, comp.clamp_hi};
    comps.push_back(jc);
  }
  j["components"] = comps;
  return j;
}

inline ScoreConfig score_config_from_json(const json& j) {
  ScoreConfig cfg;
  cfg.name = j.value("name", "unnamed");
  cfg.discrete = j.value("discrete", false);
  if (!j.contains("components") || !j.at("components").is_array()) {
    throw ValidationError("score config '" + cfg.name + "': missing components array");
  }
  for (const auto& jc : j.at("components")) {
    Component comp;
    comp.name = jc.value("name", "");
    for (const auto& r : jc.at("reads")) comp.reads.push_back(vital_index(r.get<std::string>()));
    comp.expr = expr_from_json(jc.at("expr"));
    if (!jc.contains("clamp") || jc.at("clamp").size() != 2) {
      throw ValidationError("score config '" + cfg.name + "': component '" + comp.name +
                            "' missing clamp bounds");
    }
    comp.clamp_lo = jc.at("clamp")[0].get<double>();
    comp.clamp_hi = jc.at("clamp")[1].get<double>();
    cfg.components.push_back(std::move(comp));
  }
  validate(cfg);
  return cfg;
}

// ---------------------------------------------------------------------------
// Built-in configurations.
// ---------------------------------------------------------------------------

// Continuous severity score: each organ component is a smooth fit, coefficients
// reproduced verbatim from the published displays (including the known-odd MBP
// and renal terms; corrected variants can be supplied as external files).
inline ScoreConfig builtin_cxsofa_paper() {
  ScoreConfig cfg;
  cfg.name = "cxsofa-paper";
  cfg.discrete = false;

  cfg.components.push_back({"respiratory",
                            {0, 1},
                            e_max({e_const(0.0), e_poly(0, {4.0, -1.0 / 100.0}),
                                   e_poly(1, {4.0, -1.0 / 100.0})}),
                            0.0,
                            4.0});
  cfg.components.push_back({"coagulation",
                            {2},
                            e_max({e_const(0.0), e_poly(2, {4.0, -0.0573, 4.075e-4, -1.367e-6})}),
                            0.0,
                            4.0});
  cfg.components.push_back({"liver",
                            {3},
                            e_min({e_const(4.0), e_poly(3, {9.831e-3, 0.0, 2.685e-3, -3.613e-5, 1.137e-7})}),
                            0.0,
                            4.0});
  // Circulatory: MBP term and the duplicated dopamine quadratic monomials are
  // kept exactly as published.
  cfg.components.push_back(
      {"circulatory",
       {4, 5, 6, 7, 8},
       e_max({e_max({e_const(0.0), e_poly(4, {0.0, -1.0 / 5.0})}),
              e_min({e_const(4.0), e_add({e_poly(5, {2.0, 0.208, -3.365e-4}),
                                          e_poly(5, {0.0, 0.0, -6.254e-5})})}),
              e_gate(6, 2.0),
              e_min({e_gate(7, 1.0), e_poly(7, {3.0, 10.0})}),
              e_min({e_gate(8, 1.0), e_poly(8, {3.0, 10.0})})}),
       0.0,
       4.0});
  cfg.components.push_back(
      {"nervous", {9}, e_poly(9, {4.0, -2.363e-2, -4.175e-2, 3.797e-3, -1.404e-4}), 0.0, 4.0});
  cfg.components.push_back(
      {"renal",
       {10, 11},
       e_max({e_min({e_const(4.0),
                     e_max({e_const(0.0),
                            e_poly(10, {0.0, -7.181e-3, 2.336e-4, -48.889e-7, 1.007e-9})})}),
              e_min({e_const(4.0),
                     e_add({e_max({e_const(0.0), e_poly(11, {0.0, 0.0, 3.811e-6, 2.015e-8})}),
                            e_poly(11, {4.696, -8.523e-3})})})}),
       0.0,
       4.0});
  validate(cfg);
  return cfg;
}

// Classic discrete severity score (1996 consensus cutoffs). Drug gates use
// strict dose > 0; a dose of exactly zero means the drug is absent.
inline ScoreConfig builtin_sofa_discrete() {
  ScoreConfig cfg;
  cfg.name = "sofa-discrete";
  cfg.discrete = true;

  cfg.components.push_back(
      {"respiratory",
       {0, 1},
       e_max({e_step(0, {{"lt", 300.0, 2.0}, {"lt", 400.0, 1.0}}),
              e_step(1, {{"lt", 100.0, 4.0}, {"lt", 200.0, 3.0}, {"lt", 300.0, 2.0}, {"lt", 400.0, 1.0}})}),
       0.0,
       4.0});
  cfg.components.push_back(
      {"coagulation",
       {2},
       e_step(2, {{"lt", 20.0, 4.0}, {"lt", 50.0, 3.0}, {"lt", 100.0, 2.0}, {"lt", 150.0, 1.0}}),
       0.0,
       4.0});
  cfg.components.push_back(
      {"liver",
       {3},
       e_step(3, {{"lt", 20.0, 0.0}, {"le", 32.0, 1.0}, {"le", 101.0, 2.0}, {"le", 204.0, 3.0}}, 4.0),
       0.0,
       4.0});
  cfg.components.push_back(
      {"circulatory",
       {4, 5, 6, 7, 8},
       e_max({e_step(4, {{"lt", 70.0, 1.0}}),
              e_step(5, {{"gt", 15.0, 4.0}, {"gt", 5.0, 3.0}, {"gt", 0.0, 2.0}}),
              e_gate(6, 2.0),
              e_step(7, {{"gt", 0.1, 4.0}, {"gt", 0.0, 3.0}}),
              e_step(8, {{"gt", 0.1, 4.0}, {"gt", 0.0, 3.0}})}),
       0.0,
       4.0});
  cfg.components.push_back(
      {"nervous",
       {9},
       e_step(9, {{"lt", 6.0, 4.0}, {"lt", 10.0, 3.0}, {"lt", 13.0, 2.0}, {"lt", 15.0, 1.0}}),
       0.0,
       4.0});
  cfg.components.push_back(
      {"renal",
       {10, 11},
       e_max({e_step(10, {{"gt", 440.0, 4.0}, {"gt", 299.0, 3.0}, {"gt", 170.0, 2.0}, {"gt", 110.0, 1.0}}),
              e_step(11, {{"lt", 200.0, 4.0}, {"lt", 500.0, 3.0}})}),
       0.0,
       4.0});
  validate(cfg);
  return cfg;
}

inline const ScoreConfig& cxsofa_paper_config() {
  static const ScoreConfig cfg = builtin_cxsofa_paper();
  return cfg;
}

inline const ScoreConfig& sofa_discrete_config() {
  static const ScoreConfig cfg = builtin_sofa_discrete();
  return cfg;
}

inline ScoreConfig builtin_score_config(const std::string& name) {
  if (name == "cxsofa-paper") return cxsofa_paper_config();
  if (name == "sofa-discrete") return sofa_discrete_config();
  throw ValidationError("unknown built-in score config '" + name +
                        "' (available: sofa-discrete, cxsofa-paper)");
}

inline ScoreConfig load_score_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open score config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw DataError("score config parse error in " + path + ": " + ex.what());
  }
  return score_config_from_json(j);
}

// ---------------------------------------------------------------------------
// Scoring operations. All pure; ScoreConfig is immutable once built.
// ---------------------------------------------------------------------------

// i is 1-based (components f1..f6).
inline double component_score(const VitalSigns& v, int i, const ScoreConfig& cfg) {
  if (i < 1 || i > 6) {
    throw ValidationError("component index " + std::to_string(i) + " out of range 1..6");
  }
  heparl::validate(v);
  const Component& comp = cfg.components[static_cast<size_t>(i - 1)];
  return std::clamp(eval(comp.expr, v), comp.clamp_lo, comp.clamp_hi);
}

inline std::array<double, 6> component_scores(const VitalSigns& v, const ScoreConfig& cfg) {
  std::array<double, 6> f{};
  for (int i = 1; i <= 6; ++i) f[static_cast<size_t>(i - 1)] = component_score(v, i, cfg);
  return f;
}

inline double cxsofa(const VitalSigns& v, const ScoreConfig& cfg) {
  const auto f = component_scores(v, cfg);
  double total = 0.0;
  for (double c : f) total += c;
  return total;
}

inline int sofa_discrete(const VitalSigns& v) {
  return static_cast<int>(std::llround(cxsofa(v, sofa_discrete_config())));
}

inline double total_score(const VitalSigns& v, const ScoreConfig& cfg) { return cxsofa(v, cfg); }

}  // namespace heparl::scoring
