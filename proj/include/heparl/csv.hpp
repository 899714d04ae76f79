#pragma once

#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "heparl/errors.hpp"
#include "heparl/trajectory.hpp"
#include "heparl/vitals.hpp"

namespace heparl {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Declarative CSV schema: maps column names to record fields with units.
//
//   {"columns": {"pid":  {"field": "patient_id"},
//                "t":    {"field": "timestamp", "unit": "min"},
//                "dis":  {"field": "discharge", "unit": "min"},
//                "died": {"field": "death", "unit": "min"},
//                "hep":  {"field": "dose", "unit": "U/h"},
//                "wt":   {"field": "weight", "unit": "kg"},
//                "plt":  {"field": "platelets", "unit": "10^3/uL"}},
//    "defaults": {"dopamine": 0.0}}
//
// Timestamps accept min (default) or h. The dose accepts U/kg/h (default) or
// U/h, the latter requiring a weight column. Vital units, when declared, must
// match the canonical unit. Defaults fill vitals that a row does not report
// (doses of vasoactive drugs are conventionally absent when not given).
// ---------------------------------------------------------------------------

enum class FieldKind { PatientId, Timestamp, Discharge, Death, Weight, Dose, Vital };

struct ColumnSpec {
  std::string column;
  FieldKind kind = FieldKind::Vital;
  int vital = -1;
  double time_scale = 1.0;    // minutes per declared time unit
  bool dose_per_kg = true;    // false: U/h, divide by weight
};

struct CsvSchema {
  std::vector<ColumnSpec> columns;
  std::map<int, double> defaults;  // vital index -> fill value
  bool has(FieldKind k) const {
    for (const auto& c : columns) {
      if (c.kind == k) return true;
    }
    return false;
  }
};

inline CsvSchema schema_from_json(const json& j) {
  CsvSchema schema;
  if (!j.contains("columns") || !j.at("columns").is_object()) {
    throw ValidationError("csv schema: missing 'columns' object");
  }
  for (const auto& [column, spec] : j.at("columns").items()) {
    ColumnSpec c;
    c.column = column;
    const std::string field =
        spec.is_string() ? spec.get<std::string>() : spec.at("field").get<std::string>();
    const std::string unit = spec.is_object() ? spec.value("unit", "") : "";
    if (field == "patient_id") {
      c.kind = FieldKind::PatientId;
    } else if (field == "timestamp" || field == "discharge" || field == "death") {
      c.kind = field == "timestamp" ? FieldKind::Timestamp
               : field == "discharge" ? FieldKind::Discharge
                                      : FieldKind::Death;
      if (unit.empty() || unit == "min") {
        c.time_scale = 1.0;
      } else if (unit == "h") {
        c.time_scale = 60.0;
      } else {
        throw ValidationError("csv schema: time column '" + column + "' has unknown unit '" +
                              unit + "' (expected min or h)");
      }
    } else if (field == "weight") {
      c.kind = FieldKind::Weight;
      if (!unit.empty() && unit != "kg") {
        throw ValidationError("csv schema: weight unit must be kg");
      }
    } else if (field == "dose") {
      c.kind = FieldKind::Dose;
      if (unit.empty() || unit == "U/kg/h") {
        c.dose_per_kg = true;
      } else if (unit == "U/h") {
        c.dose_per_kg = false;
      } else {
        throw ValidationError("csv schema: dose unit '" + unit +
                              "' not supported (expected U/kg/h or U/h)");
      }
    } else {
      c.kind = FieldKind::Vital;
      c.vital = vital_index(field);
      const char* canon = kVitalUnits[static_cast<size_t>(c.vital)];
      if (!unit.empty() && unit != canon) {
        throw ValidationError("csv schema: column '" + column + "' declares unit '" + unit +
                              "' but " + field + " is in '" + canon + "'");
      }
    }
    schema.columns.push_back(std::move(c));
  }
  for (FieldKind k : {FieldKind::PatientId, FieldKind::Timestamp, FieldKind::Discharge,
                      FieldKind::Dose}) {
    if (!schema.has(k)) {
      static const std::map<FieldKind, std::string> names = {
          {FieldKind::PatientId, "patient_id"},
          {FieldKind::Timestamp, "timestamp"},
          {FieldKind::Discharge, "discharge"},
          {FieldKind::Dose, "dose"}};
      throw ValidationError("csv schema: no column mapped to mandatory field '" +
                            names.at(k) + "'");
    }
  }
  for (const auto& c : schema.columns) {
    if (c.kind == FieldKind::Dose && !c.dose_per_kg && !schema.has(FieldKind::Weight)) {
      throw ValidationError("csv schema: dose in U/h requires a weight column");
    }
  }
  if (j.contains("defaults")) {
    for (const auto& [field, value] : j.at("defaults").items()) {
      schema.defaults[vital_index(field)] = value.get<double>();
    }
  }
  return schema;
}

inline CsvSchema load_schema(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open csv schema: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& ex) {
    throw DataError("csv schema parse error in " + path + ": " + ex.what());
  }
  return schema_from_json(j);
}

// Minimal RFC-style field splitting: quotes guard embedded commas, doubled
// quotes escape themselves.
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(ch);
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

struct IngestResult {
  std::vector<RawRecord> records;
  size_t rows_total = 0;
  size_t rows_malformed = 0;
  std::vector<std::string> row_errors;  // capped; counts stay exact
};

inline constexpr size_t kMaxReportedRowErrors = 100;

inline IngestResult ingest_csv_stream(std::istream& in, const CsvSchema& schema) {
  std::string header;
  if (!std::getline(in, header)) throw DataError("csv input is empty (no header)");
  const auto names = split_csv_line(header);

  // column index in file -> schema spec
  std::vector<const ColumnSpec*> bound(names.size(), nullptr);
  for (const auto& spec : schema.columns) {
    bool found = false;
    for (size_t i = 0; i < names.size(); ++i) {
      if (names[i] == spec.column) {
        bound[i] = &spec;
        found = true;
        break;
      }
    }
    if (!found) {
      throw DataError("csv header lacks mapped column '" + spec.column + "'");
    }
  }

  IngestResult out;
  std::string line;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    ++out.rows_total;
    const auto fields = split_csv_line(line);
    auto fail = [&](const std::string& why) {
      ++out.rows_malformed;
      if (out.row_errors.size() < kMaxReportedRowErrors) {
        out.row_errors.push_back("line " + std::to_string(lineno) + ": " + why);
      }
    };
    if (fields.size() != names.size()) {
      fail("expected " + std::to_string(names.size()) + " fields, got " +
           std::to_string(fields.size()));
      continue;
    }

    RawRecord rec;
    double weight = std::numeric_limits<double>::quiet_NaN();
    double raw_dose = std::numeric_limits<double>::quiet_NaN();
    bool dose_per_kg = true;
    bool ok = true;
    for (size_t i = 0; i < fields.size() && ok; ++i) {
      const ColumnSpec* spec = bound[i];
      if (!spec) continue;
      const std::string& cell = fields[i];
      if (spec->kind == FieldKind::PatientId) {
        if (cell.empty()) {
          fail("empty patient id");
          ok = false;
        } else {
          rec.patient_id = cell;
        }
        continue;
      }
      if (cell.empty()) continue;  // absent value
      double value;
      try {
        size_t pos = 0;
        value = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        fail("column '" + spec->column + "': cannot parse '" + cell + "' as a number");
        ok = false;
        break;
      }
      switch (spec->kind) {
        case FieldKind::Timestamp:
          rec.t_min = value * spec->time_scale;
          break;
        case FieldKind::Discharge:
          rec.discharge_min = value * spec->time_scale;
          break;
        case FieldKind::Death:
          rec.death_min = value * spec->time_scale;
          break;
        case FieldKind::Weight:
          weight = value;
          break;
        case FieldKind::Dose:
          raw_dose = value;
          dose_per_kg = spec->dose_per_kg;
          break;
        case FieldKind::Vital: {
          if (value < 0.0) {
            fail("column '" + spec->column + "': negative " +
                 kVitalNames[static_cast<size_t>(spec->vital)]);
            ok = false;
            break;
          }
          if (spec->vital == 9 && (value < 3.0 || value > 15.0)) {
            fail("column '" + spec->column + "': gcs outside [3, 15]");
            ok = false;
            break;
          }
          rec.vitals[spec->vital] = value;
          break;
        }
        case FieldKind::PatientId:
          break;
      }
    }
    if (!ok) continue;

    if (!std::isnan(raw_dose)) {
      if (raw_dose < 0.0) {
        fail("negative heparin dose");
        continue;
      }
      if (dose_per_kg) {
        rec.dose = raw_dose;
      } else if (std::isnan(weight) || weight <= 0.0) {
        fail("dose given in U/h but the row has no usable weight");
        continue;
      } else {
        rec.dose = raw_dose / weight;
      }
    }
    if (rec.death_min && *rec.death_min > rec.discharge_min && rec.discharge_min > 0.0) {
      fail("death timestamp after discharge");
      continue;
    }
    for (const auto& [vital, value] : schema.defaults) {
      if (std::isnan(rec.vitals[vital])) rec.vitals[vital] = value;
    }
    out.records.push_back(std::move(rec));
  }
  return out;
}

inline IngestResult ingest_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open csv input: " + path);
  return ingest_csv_stream(in, schema);
}

}  // namespace heparl
