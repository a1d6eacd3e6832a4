#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spadofdm/link.hpp"

/// Scenario configuration files (JSON, strict keys, units in key names) and
/// self-describing result tables with CSV/JSON emission.
namespace spadofdm {

inline constexpr const char* kToolVersion = "1.0.0";

struct SweepSpec {
  std::vector<DeadTimeKind> kinds{DeadTimeKind::Pq, DeadTimeKind::Aq};
  std::vector<SweepEntry> entries{
      {Scheme::Aco, 0.0, 4},  {Scheme::Aco, 0.0, 16},  {Scheme::Aco, 0.0, 64},
      {Scheme::Dco, 7.0, 4},  {Scheme::Dco, 7.0, 16},  {Scheme::Dco, 7.0, 64},
      {Scheme::Dco, 13.0, 4}, {Scheme::Dco, 13.0, 16}, {Scheme::Dco, 13.0, 64}};
  std::vector<double> symbol_periods_us{1000.0, 1.0};
};

struct MonteCarloSpec {
  std::uint64_t n_frames = 200;
  int n_pilot_frames = 10;
  std::uint64_t min_errors = 100;
};

struct PowerRange {
  double start_dbm = -100.0;
  double stop_dbm = -30.0;
  double step_db = 1.0;

  std::vector<double> grid() const {
    if (!(step_db > 0.0)) throw ConfigError("power step must be > 0");
    std::vector<double> g;
    for (double p = start_dbm; p <= stop_dbm + 1e-9; p += step_db) g.push_back(p);
    return g;
  }
};

/// A parsed scenario file: one LinkScenario plus sweep ranges and MC settings.
struct ScenarioFile {
  LinkScenario scenario;
  MonteCarloSpec monte_carlo;
  SweepSpec sweep;
  PowerRange power;
  std::string canonical;  ///< canonical serialization, hashed into metadata
};

namespace detail {

using Json = nlohmann::json;

inline void require_keys(const Json& obj, const char* where,
                         std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (item.key() == k) { ok = true; break; }
    if (!ok)
      throw ConfigError(std::string("unknown key '") + item.key() + "' in " + where);
  }
}

inline double get_num(const Json& obj, const char* key, double fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number())
    throw ConfigError(std::string("key '") + key + "' must be a number");
  return obj[key].get<double>();
}

inline Scheme parse_scheme(const std::string& s) {
  if (s == "ACO") return Scheme::Aco;
  if (s == "DCO") return Scheme::Dco;
  throw ConfigError("key 'scheme' must be \"ACO\" or \"DCO\", got \"" + s + "\"");
}

inline DeadTimeKind parse_kind(const std::string& s) {
  if (s == "PQ") return DeadTimeKind::Pq;
  if (s == "AQ") return DeadTimeKind::Aq;
  throw ConfigError("key 'kind' must be \"PQ\" or \"AQ\", got \"" + s + "\"");
}

inline const char* scheme_name(Scheme s) { return s == Scheme::Aco ? "ACO" : "DCO"; }
inline const char* kind_name(DeadTimeKind k) { return k == DeadTimeKind::Pq ? "PQ" : "AQ"; }

}  // namespace detail

inline ScenarioFile parse_scenario_json(const std::string& text) {
  using detail::Json;
  Json root;
  try {
    root = Json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("scenario file is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("scenario file must be a JSON object");
  detail::require_keys(root, "scenario",
                       {"ofdm", "spad", "kind", "count_mode", "target_ber",
                        "monte_carlo", "sweep", "power_dbm"});
  ScenarioFile sf;

  if (root.contains("ofdm")) {
    const Json& o = root["ofdm"];
    detail::require_keys(o, "ofdm",
                         {"scheme", "constellation_size", "dft_size",
                          "bias_level_db", "symbol_period_us"});
    if (o.contains("scheme"))
      sf.scenario.ofdm.scheme = detail::parse_scheme(o["scheme"].get<std::string>());
    sf.scenario.ofdm.constellation_size = static_cast<int>(
        detail::get_num(o, "constellation_size", sf.scenario.ofdm.constellation_size));
    sf.scenario.ofdm.dft_size =
        static_cast<int>(detail::get_num(o, "dft_size", sf.scenario.ofdm.dft_size));
    sf.scenario.ofdm.bias_level_db =
        detail::get_num(o, "bias_level_db", sf.scenario.ofdm.bias_level_db);
    sf.scenario.ofdm.symbol_period_s =
        detail::get_num(o, "symbol_period_us", sf.scenario.ofdm.symbol_period_s * 1e6) * 1e-6;
  }
  if (root.contains("spad")) {
    const Json& s = root["spad"];
    detail::require_keys(s, "spad",
                         {"fill_factor", "pdp", "dcr_per_device_hz",
                          "after_pulsing_prob", "dead_time_ns", "n_devices",
                          "wavelength_nm"});
    SpadArrayConfig& c = sf.scenario.spad;
    c.fill_factor = detail::get_num(s, "fill_factor", c.fill_factor);
    c.pdp = detail::get_num(s, "pdp", c.pdp);
    c.dcr_per_device_hz = detail::get_num(s, "dcr_per_device_hz", c.dcr_per_device_hz);
    c.after_pulsing_prob = detail::get_num(s, "after_pulsing_prob", c.after_pulsing_prob);
    c.dead_time_s = detail::get_num(s, "dead_time_ns", c.dead_time_s * 1e9) * 1e-9;
    c.n_devices = static_cast<int>(detail::get_num(s, "n_devices", c.n_devices));
    c.wavelength_m = detail::get_num(s, "wavelength_nm", c.wavelength_m * 1e9) * 1e-9;
  }
  if (root.contains("kind"))
    sf.scenario.kind = detail::parse_kind(root["kind"].get<std::string>());
  if (root.contains("count_mode")) {
    const std::string m = root["count_mode"].get<std::string>();
    if (m == "poisson") sf.scenario.count_mode = CountingMode::Poisson;
    else if (m == "exact") sf.scenario.count_mode = CountingMode::Exact;
    else throw ConfigError("key 'count_mode' must be \"poisson\" or \"exact\"");
  }
  sf.scenario.target_ber = detail::get_num(root, "target_ber", sf.scenario.target_ber);

  if (root.contains("monte_carlo")) {
    const Json& m = root["monte_carlo"];
    detail::require_keys(m, "monte_carlo", {"n_frames", "n_pilot_frames", "min_errors"});
    sf.monte_carlo.n_frames = static_cast<std::uint64_t>(
        detail::get_num(m, "n_frames", static_cast<double>(sf.monte_carlo.n_frames)));
    sf.monte_carlo.n_pilot_frames = static_cast<int>(
        detail::get_num(m, "n_pilot_frames", sf.monte_carlo.n_pilot_frames));
    sf.monte_carlo.min_errors = static_cast<std::uint64_t>(
        detail::get_num(m, "min_errors", static_cast<double>(sf.monte_carlo.min_errors)));
  }
  if (root.contains("sweep")) {
    const Json& s = root["sweep"];
    detail::require_keys(s, "sweep", {"kinds", "entries", "symbol_periods_us"});
    if (s.contains("kinds")) {
      sf.sweep.kinds.clear();
      for (const auto& k : s["kinds"])
        sf.sweep.kinds.push_back(detail::parse_kind(k.get<std::string>()));
    }
    if (s.contains("entries")) {
      sf.sweep.entries.clear();
      for (const auto& e : s["entries"]) {
        detail::require_keys(e, "sweep.entries",
                             {"scheme", "constellation_size", "bias_level_db"});
        SweepEntry entry;
        entry.scheme = detail::parse_scheme(e["scheme"].get<std::string>());
        entry.constellation_size =
            static_cast<int>(detail::get_num(e, "constellation_size", 4));
        entry.bias_level_db = detail::get_num(e, "bias_level_db", 0.0);
        sf.sweep.entries.push_back(entry);
      }
    }
    if (s.contains("symbol_periods_us")) {
      sf.sweep.symbol_periods_us.clear();
      for (const auto& t : s["symbol_periods_us"])
        sf.sweep.symbol_periods_us.push_back(t.get<double>());
    }
  }
  if (root.contains("power_dbm")) {
    const Json& p = root["power_dbm"];
    detail::require_keys(p, "power_dbm", {"start", "stop", "step"});
    sf.power.start_dbm = detail::get_num(p, "start", sf.power.start_dbm);
    sf.power.stop_dbm = detail::get_num(p, "stop", sf.power.stop_dbm);
    sf.power.step_db = detail::get_num(p, "step", sf.power.step_db);
  }

  sf.canonical = root.dump();
  sf.scenario.validate();
  return sf;
}

inline ScenarioFile load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_json(ss.str());
}

inline ScenarioFile default_scenario() { return parse_scenario_json("{}"); }

/// FNV-1a, used to stamp result tables with a scenario fingerprint.
inline std::uint64_t fnv1a_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// ResultTable

/// Rows of named numeric columns with reproducibility metadata. CSV output is
/// '#'-prefixed metadata lines, a header row, then data rows; '.' decimal
/// separator, locale independent.
class ResultTable {
 public:
  explicit ResultTable(std::vector<std::string> columns)
      : columns_(std::move(columns)) {}

  void add_metadata(const std::string& key, const std::string& value) {
    metadata_.emplace_back(key, value);
  }

  void add_row(std::vector<double> row) {
    if (row.size() != columns_.size())
      throw ConfigError("row width " + std::to_string(row.size()) +
                        " does not match column count " + std::to_string(columns_.size()));
    rows_.push_back(std::move(row));
  }

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<double>>& rows() const { return rows_; }
  const std::vector<std::pair<std::string, std::string>>& metadata() const {
    return metadata_;
  }

  static std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
  }

  void write_csv(std::ostream& os) const {
    for (const auto& [k, v] : metadata_) os << "# " << k << "=" << v << "\n";
    for (std::size_t i = 0; i < columns_.size(); ++i)
      os << columns_[i] << (i + 1 < columns_.size() ? "," : "");
    os << "\n";
    for (const auto& row : rows_) {
      for (std::size_t i = 0; i < row.size(); ++i)
        os << format_number(row[i]) << (i + 1 < row.size() ? "," : "");
      os << "\n";
    }
  }

  void write_json(std::ostream& os) const {
    nlohmann::ordered_json j;
    for (const auto& [k, v] : metadata_) j["metadata"][k] = v;
    j["columns"] = columns_;
    auto& rows = j["rows"] = nlohmann::ordered_json::array();
    for (const auto& row : rows_) rows.push_back(row);
    os << j.dump(2) << "\n";
  }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<double>> rows_;
  std::vector<std::pair<std::string, std::string>> metadata_;
};

}  // namespace spadofdm
