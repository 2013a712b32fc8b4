#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pwsp/error.hpp"
#include "pwsp/estimation.hpp"

namespace pwsp {

/// Shortest decimal text that reads back to the same double. Non-finite
/// values are refused so they never leak into an output file.
inline std::string format_number(double v) {
  require(std::isfinite(v), ErrorKind::Io, "refusing to write a non-finite number");
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string cell_text(const nlohmann::json& v) {
  switch (v.type()) {
    case nlohmann::json::value_t::null: return "";
    case nlohmann::json::value_t::boolean: return v.get<bool>() ? "true" : "false";
    case nlohmann::json::value_t::number_integer: return std::to_string(v.get<std::int64_t>());
    case nlohmann::json::value_t::number_unsigned: return std::to_string(v.get<std::uint64_t>());
    case nlohmann::json::value_t::number_float: return format_number(v.get<double>());
    case nlohmann::json::value_t::string: return v.get<std::string>();
    case nlohmann::json::value_t::array: {
      std::string s;
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ';';
        s += cell_text(v[i]);
      }
      return s;
    }
    default: return v.dump();
  }
}

/// Nested objects become dotted keys; arrays stay whole.
inline void flatten(const nlohmann::json& j, const std::string& prefix, std::map<std::string, nlohmann::json>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it->is_object()) {
      flatten(*it, key, out);
    } else {
      out[key] = *it;
    }
  }
}

inline void check_finite(const nlohmann::json& j) {
  if (j.is_number_float()) {
    require(std::isfinite(j.get<double>()), ErrorKind::Io, "refusing to write a non-finite number");
  } else if (j.is_structured()) {
    for (const auto& v : j) check_finite(v);
  }
}

}  // namespace detail

/// Rows of JSON scalars under a fixed header; written as comma-separated
/// text with a header row and LF line endings.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows;

  void write(std::ostream& os) const {
    for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << detail::csv_escape(columns[c]);
    os << '\n';
    for (const auto& row : rows) {
      require(row.size() == columns.size(), ErrorKind::Io, "table row does not match its header");
      for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << detail::csv_escape(detail::cell_text(row[c]));
      os << '\n';
    }
  }
};

/// One row per record: quantity, value, stderr, trials, then every params
/// key (flattened, sorted); keys missing from a record give empty cells.
inline CsvTable records_table(const std::vector<EstimateRecord>& records) {
  std::vector<std::map<std::string, nlohmann::json>> flat(records.size());
  std::set<std::string> keys;
  for (std::size_t i = 0; i < records.size(); ++i) {
    detail::check_finite(records[i].params);
    detail::flatten(records[i].params, "", flat[i]);
    for (const auto& [k, v] : flat[i]) keys.insert(k);
  }
  CsvTable t;
  t.columns = {"quantity", "value", "stderr", "trials"};
  t.columns.insert(t.columns.end(), keys.begin(), keys.end());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    std::vector<nlohmann::json> row{to_string(r.quantity), r.value, r.std_err, r.trials};
    for (const auto& k : keys) {
      auto it = flat[i].find(k);
      row.push_back(it == flat[i].end() ? nlohmann::json() : it->second);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline void write_records_csv(std::ostream& os, const std::vector<EstimateRecord>& records) {
  records_table(records).write(os);
}

inline nlohmann::json to_json(const EstimateRecord& r) {
  detail::check_finite(r.params);
  require(std::isfinite(r.value) && std::isfinite(r.std_err), ErrorKind::Io, "refusing to write a non-finite number");
  return {{"quantity", to_string(r.quantity)},
          {"value", r.value},
          {"stderr", r.std_err},
          {"trials", r.trials},
          {"params", r.params}};
}

inline void write_records_jsonl(std::ostream& os, const std::vector<EstimateRecord>& records) {
  for (const auto& r : records) os << to_json(r).dump() << '\n';
}

/// "<quantity>_<d>_<p>_<seed>.csv".
inline std::string record_file_name(Quantity q, int d, double p, std::uint64_t seed) {
  return std::string(to_string(q)) + "_" + std::to_string(d) + "_" + format_number(p) + "_" + std::to_string(seed) +
         ".csv";
}

/// Parameter used as the abscissa when plotting records of this kind.
inline std::string default_plot_key(Quantity kind) {
  switch (kind) {
    case Quantity::GWGenMean: return "generation";
    case Quantity::SubadditivityGap: return "s";
    case Quantity::ConvergenceRatio:
    case Quantity::CardinalitySlope:
    case Quantity::TailFreq: return "n";
    default: return "t";
  }
}

/// First of t, n, generation, s present in the record, else the kind's default.
inline std::string default_plot_key(const EstimateRecord& r) {
  for (const char* k : {"t", "n", "generation", "s"}) {
    if (r.params.contains(k)) return k;
  }
  return default_plot_key(r.quantity);
}

/// Whitespace-separated "x y yerr" rows sorted by x (stable), after a
/// comment header. All records must share `kind`.
inline void emit_plotdata(std::ostream& os, const std::vector<EstimateRecord>& records, Quantity kind,
                          std::optional<std::string> x_key = std::nullopt) {
  for (const auto& r : records) {
    require(r.quantity == kind, ErrorKind::Kind,
            std::string("plot data mixes ") + to_string(r.quantity) + " into " + to_string(kind) + " records");
  }
  std::string key = x_key.value_or(records.empty() ? default_plot_key(kind) : default_plot_key(records.front()));
  struct Row {
    double x, y, e;
  };
  std::vector<Row> rows;
  for (const auto& r : records) {
    require(r.params.contains(key) && r.params.at(key).is_number(), ErrorKind::Kind,
            "record has no numeric '" + key + "' parameter to plot against");
    rows.push_back({r.params.at(key).get<double>(), r.value, r.std_err});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.x < b.x; });
  os << "# " << to_string(kind) << ": " << key << " value stderr\n";
  for (const auto& r : rows) os << format_number(r.x) << ' ' << format_number(r.y) << ' ' << format_number(r.e) << '\n';
}

}  // namespace pwsp
