// Copyright 2026 The bqkd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bqkd/common.hpp"
#include "bqkd/covariance.hpp"
#include "bqkd/detection.hpp"
#include "bqkd/fit.hpp"
#include "bqkd/grid.hpp"
#include "bqkd/jsa.hpp"
#include "bqkd/optical_train.hpp"
#include "bqkd/plot.hpp"
#include "bqkd/wdm.hpp"

namespace bqkd {

using Json = nlohmann::json;

enum class Envelope { nominal, best, worst };

inline const char* to_string(Envelope e) {
  switch (e) {
    case Envelope::nominal: return "nominal";
    case Envelope::best: return "best";
    case Envelope::worst: return "worst";
  }
  return "?";
}

/// Which end of an uncertain parameter's range is the best case.
enum class Better { higher, lower };

/// A parameter known only within [lo, hi].
struct Range {
  double lo = 0.0;
  double hi = 0.0;

  Range() = default;
  Range(double v) : lo(v), hi(v) {}
  Range(double a, double b) : lo(a), hi(b) {}

  double nominal() const { return 0.5 * (lo + hi); }
  double pick(Envelope e, Better b) const {
    if (e == Envelope::nominal) return nominal();
    return (e == Envelope::best) == (b == Better::higher) ? hi : lo;
  }
};

// ---------------------------------------------------------------------------
// Configuration

struct PhaseMatchingConfig {
  std::string model = "sinc";  // sinc | gaussian | spectrum | fit
  double length_mm = 24.0;
  double dk1_s_per_m = 3e-10;
  double dk0_per_m = 0.0;
  double delta_k1_per_m2 = 0.0;
  double delta_k2_per_m3 = 0.0;
  double width_ghz = 0.0;
  std::string file;
};

struct SourceConfig {
  ProcessType process = ProcessType::type2;
  std::optional<double> mu;
  std::optional<double> gain;
  double pump_fwhm_ps = 400.0;
  PhaseMatchingConfig phase_matching;
  double grid_half_width_ghz = 0.0;
  Eigen::Index grid_points = 0;
  double schmidt_drop = 1e-4;
  int series_order = 0;
};

struct PumpInterferometerConfig {
  double amplitude_transmittivity = 1.0 / std::numbers::sqrt2;
  double phase_rad = 0.0;
  double delay_ns = 0.0;
  Range long_arm_transmission{1.0};
};

struct LinkConfig {
  double length_km = 0.0;
  Range alpha_db_per_km{0.0};
  double beta2_ps2_per_km = -21.7;
};

struct ReceiverConfig {
  double amplitude_transmittivity = 1.0 / std::numbers::sqrt2;
  std::array<double, 2> phase_rad{0.0, 0.0};
  std::array<double, 2> delay_ns{0.0, 0.0};
  std::array<std::array<Range, 2>, 2> eta_amplitude{{{Range(1.0), Range(1.0)}, {Range(1.0), Range(1.0)}}};
  Range mode_match_amplitude{1.0};
};

struct DetectorConfig {
  Range efficiency{1.0};
  Range dark_count_rate_hz{0.0};
  Range afterpulse_probability{0.0};
  Range dead_time_us{0.0};
  /// Measured (dead time [us], afterpulse probability) pairs, increasing in dead time.
  std::vector<std::pair<double, double>> afterpulse_by_dead_time;
};

struct BinningConfig {
  double rep_rate_mhz = 110.0;
  std::array<std::array<double, 2>, 3> bins_ns{};
  bool interleaved = false;
  int crosstalk_window = 0;
};

struct TimeGridConfig {
  double step_ps = 0.0;
  double start_ns = 0.0;
  double end_ns = 0.0;
};

struct ChannelConfig {
  std::string file;
  double center_ghz = 0.0;
  double width_ghz = 0.0;
  double edge_ghz = 0.0;
};

struct WdmConfig {
  ChannelConfig alice;
  ChannelConfig bob;
  double offset_ghz = 0.0;  // shift of Alice's channel
};

enum class SweepAxis { mu, dead_time, phase, offset, total_length, rep_rate };

inline constexpr std::array<SweepAxis, 6> kSweepAxes{SweepAxis::mu,     SweepAxis::dead_time,    SweepAxis::phase,
                                                     SweepAxis::offset, SweepAxis::total_length, SweepAxis::rep_rate};

/// Command-line name of an axis.
inline const char* axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::mu: return "mu";
    case SweepAxis::dead_time: return "dead_time";
    case SweepAxis::phase: return "phase";
    case SweepAxis::offset: return "offset";
    case SweepAxis::total_length: return "L_+";
    case SweepAxis::rep_rate: return "r_p";
  }
  return "?";
}

/// Key of the axis values in the config's "sweep" object (with units).
inline const char* axis_key(SweepAxis a) {
  switch (a) {
    case SweepAxis::mu: return "mu";
    case SweepAxis::dead_time: return "dead_time_us";
    case SweepAxis::phase: return "phase_rad";
    case SweepAxis::offset: return "offset_ghz";
    case SweepAxis::total_length: return "L_plus_km";
    case SweepAxis::rep_rate: return "rep_rate_mhz";
  }
  return "?";
}

inline SweepAxis parse_axis(const std::string& s) {
  for (SweepAxis a : kSweepAxes)
    if (s == axis_name(a) || s == axis_key(a)) return a;
  throw ConfigError("unknown sweep axis '" + s + "' (mu, dead_time, phase, offset, L_+, r_p)");
}

struct ScenarioConfig {
  SourceConfig source;
  PumpInterferometerConfig pump;
  std::array<LinkConfig, 2> links;
  std::array<ReceiverConfig, 2> receivers;
  std::array<std::array<DetectorConfig, 2>, 2> detectors;
  BinningConfig binning;
  TimeGridConfig time_grid;
  std::optional<WdmConfig> wdm;
  std::string envelope = "nominal";
  std::map<SweepAxis, std::vector<double>> sweep;
  double filter_threshold_cycles = 8.0;
};

namespace detail {

inline std::string where(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline void check_keys(const Json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (!k.empty() && k[0] == '_') continue;  // comments
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }))
      throw ConfigError("unknown key '" + where(path, k) + "'");
  }
}

inline double number(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path + ": must be finite");
  return v;
}

inline void read(const Json& j, const std::string& path, const char* key, double& out) {
  if (j.contains(key)) out = number(j.at(key), where(path, key));
}

inline void read(const Json& j, const std::string& path, const char* key, Range& out) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  const std::string p = where(path, key);
  if (v.is_array()) {
    if (v.size() != 2) throw ConfigError(p + ": expected a number or [low, high]");
    out = Range(number(v[0], p), number(v[1], p));
    if (out.lo > out.hi) throw ConfigError(p + ": low exceeds high");
  } else {
    out = Range(number(v, p));
  }
}

template <std::size_t N>
inline void read(const Json& j, const std::string& path, const char* key, std::array<double, N>& out) {
  if (!j.contains(key)) return;
  const Json& v = j.at(key);
  const std::string p = where(path, key);
  if (!v.is_array() || v.size() != N) throw ConfigError(p + ": expected " + std::to_string(N) + " numbers");
  for (std::size_t i = 0; i < N; ++i) out[i] = number(v[i], p);
}

inline std::string resolve(const std::string& file, const std::filesystem::path& base) {
  std::filesystem::path p(file);
  if (p.is_relative()) p = base / p;
  if (!std::filesystem::exists(p)) throw ConfigError("file not found: " + p.string());
  return p.string();
}

inline PhaseMatchingConfig parse_phase_matching(const Json& j, const std::string& path,
                                                const std::filesystem::path& base) {
  check_keys(j, path, {"model", "length_mm", "dk1_s_per_m", "dk0_per_m", "delta_k1_per_m2", "delta_k2_per_m3",
                       "width_ghz", "file"});
  PhaseMatchingConfig c;
  if (j.contains("model")) c.model = j.at("model").get<std::string>();
  read(j, path, "length_mm", c.length_mm);
  read(j, path, "dk1_s_per_m", c.dk1_s_per_m);
  read(j, path, "dk0_per_m", c.dk0_per_m);
  read(j, path, "delta_k1_per_m2", c.delta_k1_per_m2);
  read(j, path, "delta_k2_per_m3", c.delta_k2_per_m3);
  read(j, path, "width_ghz", c.width_ghz);
  if (c.model == "spectrum" || c.model == "fit") {
    if (!j.contains("file")) throw ConfigError(path + ": model '" + c.model + "' needs a spectrum file");
    c.file = resolve(j.at("file").get<std::string>(), base);
  } else if (c.model == "gaussian") {
    if (!(c.width_ghz > 0.0)) throw ConfigError(path + ".width_ghz must be positive");
  } else if (c.model != "sinc") {
    throw ConfigError(path + ".model must be sinc, gaussian, spectrum or fit");
  }
  if (!(c.length_mm > 0.0)) throw ConfigError(path + ".length_mm must be positive");
  return c;
}

inline SourceConfig parse_source(const Json& j, const std::filesystem::path& base) {
  const std::string path = "source";
  check_keys(j, path, {"process", "mu", "gain", "pump", "phase_matching", "grid", "schmidt_drop", "series_order"});
  SourceConfig c;
  const std::string proc = j.value("process", std::string("type-II"));
  if (proc == "type-II" || proc == "type2")
    c.process = ProcessType::type2;
  else if (proc == "type-0" || proc == "type0" || proc == "type-I")
    c.process = ProcessType::type0;
  else
    throw ConfigError("source.process must be type-II or type-0");
  if (j.contains("mu") == j.contains("gain")) throw ConfigError("source: give exactly one of mu and gain");
  if (j.contains("mu")) {
    c.mu = number(j.at("mu"), "source.mu");
    if (*c.mu < 0.0) throw ConfigError("source.mu must be >= 0");
  } else {
    c.gain = number(j.at("gain"), "source.gain");
    if (*c.gain < 0.0) throw ConfigError("source.gain must be >= 0");
  }
  if (j.contains("pump")) {
    check_keys(j.at("pump"), "source.pump", {"fwhm_ps"});
    read(j.at("pump"), "source.pump", "fwhm_ps", c.pump_fwhm_ps);
  }
  if (j.contains("phase_matching")) c.phase_matching = parse_phase_matching(j.at("phase_matching"), "source.phase_matching", base);
  if (!j.contains("grid")) throw ConfigError("source.grid is required");
  const Json& g = j.at("grid");
  check_keys(g, "source.grid", {"half_width_ghz", "points"});
  read(g, "source.grid", "half_width_ghz", c.grid_half_width_ghz);
  if (!g.contains("points") || !g.at("points").is_number_integer()) throw ConfigError("source.grid.points must be an integer");
  c.grid_points = g.at("points").get<Eigen::Index>();
  if (!(c.grid_half_width_ghz > 0.0) || c.grid_points < 3) throw ConfigError("source.grid needs half_width_ghz > 0 and >= 3 points");
  read(j, path, "schmidt_drop", c.schmidt_drop);
  c.series_order = c.process == ProcessType::type0 ? 5 : 0;
  if (j.contains("series_order")) {
    if (!j.at("series_order").is_number_integer()) throw ConfigError("source.series_order must be an integer");
    c.series_order = j.at("series_order").get<int>();
  }
  if (c.series_order < 0) throw ConfigError("source.series_order must be >= 0");
  if (c.process == ProcessType::type0 && c.series_order < 1)
    throw ConfigError("source.series_order must be >= 1 for a type-0 source");
  return c;
}

inline LinkConfig parse_link(const Json& j, const std::string& path) {
  check_keys(j, path, {"length_km", "alpha_db_per_km", "beta2_ps2_per_km"});
  LinkConfig c;
  read(j, path, "length_km", c.length_km);
  read(j, path, "alpha_db_per_km", c.alpha_db_per_km);
  read(j, path, "beta2_ps2_per_km", c.beta2_ps2_per_km);
  return c;
}

inline ReceiverConfig parse_receiver(const Json& j, const std::string& path) {
  check_keys(j, path, {"amplitude_transmittivity", "phase_rad", "delay_ns", "eta_amplitude", "mode_match_amplitude"});
  ReceiverConfig c;
  read(j, path, "amplitude_transmittivity", c.amplitude_transmittivity);
  read(j, path, "phase_rad", c.phase_rad);
  read(j, path, "delay_ns", c.delay_ns);
  read(j, path, "mode_match_amplitude", c.mode_match_amplitude);
  if (j.contains("eta_amplitude")) {
    const Json& e = j.at("eta_amplitude");
    const std::string p = where(path, "eta_amplitude");
    if (!e.is_array() || e.size() != 2) throw ConfigError(p + ": expected [[short->D0, short->D1], [long->D0, long->D1]]");
    for (int x = 0; x < 2; ++x) {
      if (!e[x].is_array() || e[x].size() != 2) throw ConfigError(p + ": expected two rows of two entries");
      for (int d = 0; d < 2; ++d) {
        Json wrap{{"v", e[x][d]}};
        read(wrap, p, "v", c.eta_amplitude[x][d]);
      }
    }
  }
  return c;
}

inline DetectorConfig parse_detector(const Json& j, const std::string& path) {
  check_keys(j, path, {"efficiency", "dark_count_rate_hz", "afterpulse_probability", "dead_time_us",
                       "afterpulse_probability_by_dead_time"});
  DetectorConfig c;
  read(j, path, "efficiency", c.efficiency);
  read(j, path, "dark_count_rate_hz", c.dark_count_rate_hz);
  read(j, path, "afterpulse_probability", c.afterpulse_probability);
  read(j, path, "dead_time_us", c.dead_time_us);
  if (j.contains("afterpulse_probability_by_dead_time")) {
    const std::string p = where(path, "afterpulse_probability_by_dead_time");
    const Json& t = j.at("afterpulse_probability_by_dead_time");
    if (!t.is_array() || t.size() < 2) throw ConfigError(p + ": expected at least two [dead_time_us, probability] pairs");
    for (const auto& row : t) {
      if (!row.is_array() || row.size() != 2) throw ConfigError(p + ": expected [dead_time_us, probability] pairs");
      c.afterpulse_by_dead_time.emplace_back(number(row[0], p), number(row[1], p));
    }
    for (std::size_t i = 1; i < c.afterpulse_by_dead_time.size(); ++i)
      if (!(c.afterpulse_by_dead_time[i].first > c.afterpulse_by_dead_time[i - 1].first))
        throw ConfigError(p + ": dead times must increase");
    if (j.contains("afterpulse_probability")) throw ConfigError(path + ": give afterpulse_probability or its table, not both");
  }
  return c;
}

inline std::array<DetectorConfig, 2> parse_party_detectors(const Json& j, const std::string& path) {
  if (j.is_object()) {
    const DetectorConfig d = parse_detector(j, path);
    return {d, d};
  }
  if (!j.is_array() || j.size() != 2) throw ConfigError(path + ": expected one detector object or a pair [D0, D1]");
  return {parse_detector(j[0], path + "[0]"), parse_detector(j[1], path + "[1]")};
}

inline ChannelConfig parse_channel(const Json& j, const std::string& path, const std::filesystem::path& base) {
  check_keys(j, path, {"file", "center_ghz", "width_ghz", "edge_ghz"});
  ChannelConfig c;
  if (j.contains("file")) {
    c.file = resolve(j.at("file").get<std::string>(), base);
    return c;
  }
  read(j, path, "center_ghz", c.center_ghz);
  read(j, path, "width_ghz", c.width_ghz);
  read(j, path, "edge_ghz", c.edge_ghz);
  if (!(c.width_ghz > 0.0) || c.edge_ghz < 0.0) throw ConfigError(path + ": needs width_ghz > 0 and edge_ghz >= 0");
  return c;
}

inline double interpolate_table(const std::vector<std::pair<double, double>>& t, double x, const char* what) {
  if (x < t.front().first || x > t.back().first)
    throw ConfigError(std::string(what) + ": dead time " + std::to_string(x) + " us lies outside the table [" +
                      std::to_string(t.front().first) + ", " + std::to_string(t.back().first) + "] us");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (x <= t[i].first) {
      const double f = (x - t[i - 1].first) / (t[i].first - t[i - 1].first);
      return (1.0 - f) * t[i - 1].second + f * t[i].second;
    }
  return t.back().second;
}

}  // namespace detail

inline ScenarioConfig parse_config(const Json& j, const std::filesystem::path& base = ".") {
  using namespace detail;
  check_keys(j, "", {"source", "pump_interferometer", "links", "receivers", "detectors", "binning", "time_grid", "wdm",
                     "envelope", "sweep", "filter_threshold_cycles", "description"});
  ScenarioConfig c;
  if (!j.contains("source")) throw ConfigError("source is required");
  c.source = parse_source(j.at("source"), base);
  if (j.contains("pump_interferometer")) {
    const Json& p = j.at("pump_interferometer");
    check_keys(p, "pump_interferometer", {"amplitude_transmittivity", "phase_rad", "delay_ns", "long_arm_transmission"});
    read(p, "pump_interferometer", "amplitude_transmittivity", c.pump.amplitude_transmittivity);
    read(p, "pump_interferometer", "phase_rad", c.pump.phase_rad);
    read(p, "pump_interferometer", "delay_ns", c.pump.delay_ns);
    read(p, "pump_interferometer", "long_arm_transmission", c.pump.long_arm_transmission);
  }
  const std::array<const char*, 2> parties{"alice", "bob"};
  if (j.contains("links")) {
    check_keys(j.at("links"), "links", {"alice", "bob"});
    for (int p = 0; p < 2; ++p)
      if (j.at("links").contains(parties[p]))
        c.links[p] = parse_link(j.at("links").at(parties[p]), std::string("links.") + parties[p]);
  }
  if (j.contains("receivers")) {
    check_keys(j.at("receivers"), "receivers", {"alice", "bob"});
    for (int p = 0; p < 2; ++p)
      if (j.at("receivers").contains(parties[p]))
        c.receivers[p] = parse_receiver(j.at("receivers").at(parties[p]), std::string("receivers.") + parties[p]);
  }
  if (j.contains("detectors")) {
    check_keys(j.at("detectors"), "detectors", {"alice", "bob"});
    for (int p = 0; p < 2; ++p)
      if (j.at("detectors").contains(parties[p]))
        c.detectors[p] = parse_party_detectors(j.at("detectors").at(parties[p]), std::string("detectors.") + parties[p]);
  }
  if (!j.contains("binning")) throw ConfigError("binning is required");
  {
    const Json& b = j.at("binning");
    check_keys(b, "binning", {"rep_rate_mhz", "bins_ns", "interleaved", "crosstalk_window"});
    read(b, "binning", "rep_rate_mhz", c.binning.rep_rate_mhz);
    if (!b.contains("bins_ns") || !b.at("bins_ns").is_array() || b.at("bins_ns").size() != 3)
      throw ConfigError("binning.bins_ns must list the early, central and late bins as [begin, end] pairs");
    for (int i = 0; i < 3; ++i) {
      Json wrap{{"v", b.at("bins_ns")[i]}};
      read(wrap, "binning.bins_ns", "v", c.binning.bins_ns[i]);
    }
    c.binning.interleaved = b.value("interleaved", false);
    c.binning.crosstalk_window = b.value("crosstalk_window", 0);
  }
  if (!j.contains("time_grid")) throw ConfigError("time_grid is required");
  {
    const Json& t = j.at("time_grid");
    check_keys(t, "time_grid", {"step_ps", "start_ns", "end_ns"});
    read(t, "time_grid", "step_ps", c.time_grid.step_ps);
    read(t, "time_grid", "start_ns", c.time_grid.start_ns);
    read(t, "time_grid", "end_ns", c.time_grid.end_ns);
    if (!(c.time_grid.step_ps > 0.0) || !(c.time_grid.end_ns > c.time_grid.start_ns))
      throw ConfigError("time_grid needs step_ps > 0 and end_ns > start_ns");
  }
  if (j.contains("wdm")) {
    const Json& w = j.at("wdm");
    check_keys(w, "wdm", {"alice_channel", "bob_channel", "offset_ghz"});
    if (!w.contains("alice_channel") || !w.contains("bob_channel"))
      throw ConfigError("wdm needs alice_channel and bob_channel");
    WdmConfig wc;
    wc.alice = parse_channel(w.at("alice_channel"), "wdm.alice_channel", base);
    wc.bob = parse_channel(w.at("bob_channel"), "wdm.bob_channel", base);
    read(w, "wdm", "offset_ghz", wc.offset_ghz);
    c.wdm = wc;
  }
  if (c.source.process == ProcessType::type0 && !c.wdm)
    throw ConfigError("a type-0 source needs wdm channels to route photons to Alice and Bob");
  if (c.source.process == ProcessType::type2 && c.wdm)
    throw ConfigError("wdm channels apply to type-0 sources only");
  c.envelope = j.value("envelope", std::string("nominal"));
  if (c.envelope != "nominal" && c.envelope != "best" && c.envelope != "worst" && c.envelope != "both")
    throw ConfigError("envelope must be nominal, best, worst or both");
  if (j.contains("sweep")) {
    const Json& s = j.at("sweep");
    if (!s.is_object()) throw ConfigError("sweep: expected an object of axis value lists");
    for (const auto& [k, v] : s.items()) {
      if (!k.empty() && k[0] == '_') continue;
      const SweepAxis a = parse_axis(k);
      if (!v.is_array() || v.empty()) throw ConfigError("sweep." + k + ": expected a non-empty list");
      std::vector<double> vals;
      for (const auto& x : v) vals.push_back(number(x, "sweep." + k));
      c.sweep[a] = vals;
    }
  }
  read(j, "", "filter_threshold_cycles", c.filter_threshold_cycles);
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  Json j;
  try {
    j = Json::parse(in, nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  try {
    return parse_config(j, std::filesystem::path(path).parent_path());
  } catch (const Json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline std::vector<Envelope> envelopes(const ScenarioConfig& c) {
  if (c.envelope == "both") return {Envelope::best, Envelope::worst};
  if (c.envelope == "best") return {Envelope::best};
  if (c.envelope == "worst") return {Envelope::worst};
  return {Envelope::nominal};
}

/// The configuration with one sweep axis set to `v`.
inline ScenarioConfig with_axis(ScenarioConfig c, SweepAxis a, double v) {
  switch (a) {
    case SweepAxis::mu:
      if (v < 0.0) throw ConfigError("mu must be >= 0");
      c.source.mu = v;
      c.source.gain.reset();
      break;
    case SweepAxis::dead_time:
      for (auto& party : c.detectors)
        for (auto& d : party) d.dead_time_us = Range(v);
      break;
    case SweepAxis::phase: c.receivers[1].phase_rad[1] = v; break;
    case SweepAxis::offset:
      if (!c.wdm) throw ConfigError("the offset axis needs wdm channels");
      c.wdm->offset_ghz = v;
      break;
    case SweepAxis::total_length:
      c.links[0].length_km = 0.5 * v;
      c.links[1].length_km = 0.5 * v;
      break;
    case SweepAxis::rep_rate: c.binning.rep_rate_mhz = v; break;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Evaluation

struct ResultRow {
  double sweep_value = std::numeric_limits<double>::quiet_NaN();
  Envelope envelope = Envelope::nominal;
  double sifted_rate = std::numeric_limits<double>::quiet_NaN();
  double qber_time = std::numeric_limits<double>::quiet_NaN();
  double qber_phase = std::numeric_limits<double>::quiet_NaN();
  std::array<double, 4> singles;  // A0, A1, B0, B1 (1/s)
  std::array<double, 4> live;
  Warnings warnings;
  std::optional<std::string> error;
  int exit_code = 0;

  ResultRow() {
    singles.fill(std::numeric_limits<double>::quiet_NaN());
    live.fill(std::numeric_limits<double>::quiet_NaN());
  }
  bool ok() const { return !error; }
};

/// Source modes at unit gain plus what is needed to calibrate the gain.
struct PreparedSource {
  SchmidtDecomposition modes;  // two-party modes, gain 1
  RealVector calibration;      // Schmidt coefficients of the whole generated JSA
  double pulse_duration = 0.0;
  Warnings warnings;
};

inline constexpr double kGhz = kTwoPi * 1e9;  // rad/s per GHz

namespace detail {

/// Runs `f`, prefixing any library error with the pipeline stage.
template <class F>
auto in_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(stage) + ": " + e.what());
  } catch (const GridError& e) {
    throw GridError(std::string(stage) + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(stage) + ": " + e.what());
  }
}

inline PhaseMatching build_phase_matching(const SourceConfig& s, Warnings& warnings) {
  const PhaseMatchingConfig& c = s.phase_matching;
  const double w_max = 2.0 * s.grid_half_width_ghz * kGhz;
  if (c.model == "gaussian") return gaussian_phase_matching(c.width_ghz * kGhz);
  if (c.model == "spectrum") return phase_matching_from_spectrum(symmetrize_spectrum(load_spectrum(c.file)));
  if (c.model == "fit") {
    FitResult f = phase_matching_from_fit(load_spectrum(c.file), c.length_mm * 1e-3, c.dk1_s_per_m);
    warnings.insert(warnings.end(), f.phase_matching.warnings.begin(), f.phase_matching.warnings.end());
    return f.phase_matching;
  }
  PhaseMatchingParameters p;
  p.length = c.length_mm * 1e-3;
  p.dk1 = c.dk1_s_per_m;
  p.dk0 = c.dk0_per_m;
  p.delta_k1 = c.delta_k1_per_m2;
  p.delta_k2 = c.delta_k2_per_m3;
  return phase_matching_from_parameters(p, RealVector::LinSpaced(2049, -w_max, w_max));
}

inline ChannelTransmission build_channel(const ChannelConfig& c) {
  if (!c.file.empty()) return load_channel(c.file);
  return flat_top_channel(c.center_ghz * kGhz, c.width_ghz * kGhz, c.edge_ghz * kGhz);
}

}  // namespace detail

inline PreparedSource prepare_source(const ScenarioConfig& cfg) {
  const SourceConfig& s = cfg.source;
  PreparedSource out;
  const PumpAmplitude pump = detail::in_stage("source", [&] { return gaussian_pump(s.pump_fwhm_ps * 1e-12); });
  out.pulse_duration = pump.pulse_duration;
  const PhaseMatching pm = detail::in_stage("source", [&] { return detail::build_phase_matching(s, out.warnings); });
  const FrequencyGrid grid = detail::in_stage("source", [&] { return make_grid(0.0, s.grid_half_width_ghz * kGhz, s.grid_points); });
  const JointSpectralAmplitude jsa = detail::in_stage("source", [&] { return assemble_jsa(pump, pm, grid, grid, s.process); });
  out.warnings.insert(out.warnings.end(), jsa.warnings.begin(), jsa.warnings.end());
  const SchmidtDecomposition whole = detail::in_stage("source", [&] { return schmidt(jsa.kernel, s.process, 1.0, s.schmidt_drop); });
  out.calibration = whole.coefficients;
  if (s.process == ProcessType::type2) {
    out.modes = whole;
    return out;
  }
  detail::in_stage("wdm", [&] {
    const ChannelPair pair = make_channel_pair(shift_channel(detail::build_channel(cfg.wdm->alice), cfg.wdm->offset_ghz * kGhz),
                                               detail::build_channel(cfg.wdm->bob));
    const ReducedJsa r = reduce_jsa(jsa, pair, s.series_order);
    out.warnings.insert(out.warnings.end(), r.warnings.begin(), r.warnings.end());
    out.modes = post_wdm_modes(r, pair, 1.0, s.schmidt_drop);
    return 0;
  });
  return out;
}

/// Prepared sources keyed by the only source parameter a sweep can change.
class SourceCache {
 public:
  const PreparedSource& get(const ScenarioConfig& cfg) {
    const double key = cfg.wdm ? cfg.wdm->offset_ghz : 0.0;
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    return cache_.emplace(key, prepare_source(cfg)).first->second;
  }

 private:
  std::map<double, PreparedSource> cache_;
};

inline std::array<std::array<DetectorModel, 2>, 2> detector_models(const ScenarioConfig& cfg, Envelope env) {
  std::array<std::array<DetectorModel, 2>, 2> out;
  for (int p = 0; p < 2; ++p)
    for (int d = 0; d < 2; ++d) {
      const DetectorConfig& c = cfg.detectors[p][d];
      DetectorModel& m = out[p][d];
      m.efficiency = c.efficiency.pick(env, Better::higher);
      m.dark_count_rate = c.dark_count_rate_hz.pick(env, Better::lower);
      const double dead_us = c.dead_time_us.pick(env, Better::lower);
      m.dead_time = dead_us * 1e-6;
      m.afterpulse_probability = c.afterpulse_by_dead_time.empty()
                                     ? c.afterpulse_probability.pick(env, Better::lower)
                                     : detail::interpolate_table(c.afterpulse_by_dead_time, dead_us, "afterpulse table");
    }
  return out;
}

inline TimeGrid scenario_time_grid(const TimeGridConfig& t) {
  const double dt = t.step_ps * 1e-12;
  const double span = (t.end_ns - t.start_ns) * 1e-9;
  const auto n = static_cast<Eigen::Index>(std::llround(span / dt)) + 1;
  if (n > 200000) throw ConfigError("time grid has " + std::to_string(n) + " points; the limit is 200000");
  return uniform_time_grid(t.start_ns * 1e-9, dt, n);
}

inline TimeBinning scenario_binning(const BinningConfig& b) {
  if (!(b.rep_rate_mhz > 0.0)) throw ConfigError("binning.rep_rate_mhz must be positive");
  TimeBinning out;
  out.period = 1.0 / (b.rep_rate_mhz * 1e6);
  out.interleaved = b.interleaved;
  for (int i = 0; i < 3; ++i) out.bins[i] = {b.bins_ns[i][0] * 1e-9, b.bins_ns[i][1] * 1e-9};
  return out;
}

/// Final covariance and detector setup of one configuration point.
struct PointModel {
  FinalCovariance covariance;
  std::array<std::array<DetectorModel, 2>, 2> detectors;
  TimeBinning binning;
  int crosstalk_window = 0;
  Warnings warnings;

  EventModel events() const { return EventModel(covariance, detectors, binning, crosstalk_window); }
};

/// Source, pump interferometer, fibers and receivers for one point.
inline PointModel build_point(const ScenarioConfig& cfg, Envelope env, SourceCache& cache) {
  const PreparedSource& src = cache.get(cfg);
  Warnings warnings = src.warnings;
  const ProcessType process = cfg.source.process;
  const double t_pump = cfg.pump.amplitude_transmittivity;
  const double long_arm = cfg.pump.long_arm_transmission.pick(env, Better::higher);

  const PumpSplitState st = detail::in_stage("pump interferometer", [&] {
    const auto [ks, kl] = pump_split_coefficients(t_pump, long_arm);
    SchmidtDecomposition sd = src.modes;
    sd.gain = cfg.source.gain ? *cfg.source.gain : calibrate_gain(src.calibration, *cfg.source.mu, process, {ks, kl});
    return split_pump(sd, t_pump, cfg.pump.phase_rad, cfg.pump.delay_ns * 1e-9, src.pulse_duration, long_arm);
  });

  const auto dets = detector_models(cfg, env);
  const FinalCovariance fc = detail::in_stage("optical train", [&] {
    OpticalSetup setup;
    std::array<FiberLink*, 2> fibers{&setup.fiber_a, &setup.fiber_b};
    std::array<ReceiverInterferometer*, 2> rxs{&setup.rx_a, &setup.rx_b};
    for (int p = 0; p < 2; ++p) {
      const LinkConfig& l = cfg.links[p];
      *fibers[p] = FiberLink{l.length_km, l.alpha_db_per_km.pick(env, Better::lower), l.beta2_ps2_per_km * 1e-24};
      const ReceiverConfig& r = cfg.receivers[p];
      ReceiverInterferometer rx;
      rx.t = r.amplitude_transmittivity;
      rx.phase = r.phase_rad;
      rx.delay = {r.delay_ns[0] * 1e-9, r.delay_ns[1] * 1e-9};
      for (int x = 0; x < 2; ++x)
        for (int d = 0; d < 2; ++d) rx.eta[x][d] = r.eta_amplitude[x][d].pick(env, Better::higher);
      rx.xi = r.mode_match_amplitude.pick(env, Better::higher);
      rx.validate();
      for (const auto& d : dets[p]) d.validate();
      *rxs[p] = with_detectors(rx, dets[p]);
    }
    setup.time = scenario_time_grid(cfg.time_grid);
    setup.filter_threshold = cfg.filter_threshold_cycles;
    return FinalCovariance(st, setup, cfg.source.series_order);
  });
  warnings.insert(warnings.end(), st.warnings.begin(), st.warnings.end());
  return PointModel{fc, dets, scenario_binning(cfg.binning), cfg.binning.crosstalk_window, warnings};
}

/// One point of the full pipeline: source, pump interferometer, fibers,
/// receivers, detection.
inline ResultRow run_point(const ScenarioConfig& cfg, Envelope env, SourceCache& cache) {
  ResultRow row;
  row.envelope = env;
  const PointModel model = build_point(cfg, env, cache);
  row.warnings = model.warnings;
  const EventSummary s = detail::in_stage("detection", [&] { return model.events().summarize(); });
  row.sifted_rate = s.sifted_rate;
  if (s.qber_time) row.qber_time = *s.qber_time;
  if (s.qber_phase) row.qber_phase = *s.qber_phase;
  for (int p = 0; p < 2; ++p)
    for (int d = 0; d < 2; ++d) {
      row.singles[2 * p + d] = s.detectors[p][d].singles_rate;
      row.live[2 * p + d] = s.detectors[p][d].live;
    }
  for (const auto& w : s.warnings)
    if (std::find(row.warnings.begin(), row.warnings.end(), w) == row.warnings.end()) row.warnings.push_back(w);
  return row;
}

/// Exit code for a library error: 2 for configuration and grid errors, 3 for numerical failures.
inline int error_code(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const GridError*>(&e)) return 2;
  return 3;
}

namespace detail {

inline ResultRow guarded_point(const ScenarioConfig& cfg, Envelope env, SourceCache& cache, double value) {
  try {
    ResultRow r = run_point(cfg, env, cache);
    r.sweep_value = value;
    return r;
  } catch (const std::exception& e) {
    ResultRow r;
    r.sweep_value = value;
    r.envelope = env;
    r.error = e.what();
    r.exit_code = error_code(e);
    return r;
  }
}

}  // namespace detail

/// Single-point evaluation, one row per envelope of the config.
inline std::vector<ResultRow> run_simulate(const ScenarioConfig& cfg) {
  SourceCache cache;
  std::vector<ResultRow> rows;
  for (Envelope e : envelopes(cfg)) rows.push_back(detail::guarded_point(cfg, e, cache, std::numeric_limits<double>::quiet_NaN()));
  return rows;
}

/// One row per sweep value and envelope, in value-major order. Failing points
/// carry NaN results and their error; the sweep continues.
inline std::vector<ResultRow> run_sweep(const ScenarioConfig& cfg, SweepAxis axis) {
  const auto it = cfg.sweep.find(axis);
  if (it == cfg.sweep.end())
    throw ConfigError(std::string("config has no values for sweep axis ") + axis_name(axis) + " (sweep." + axis_key(axis) + ")");
  if (axis == SweepAxis::offset && !cfg.wdm) throw ConfigError("the offset axis needs wdm channels");
  SourceCache cache;
  std::vector<ResultRow> rows;
  for (double v : it->second) {
    std::optional<ScenarioConfig> point;
    std::string failure;
    try {
      point = with_axis(cfg, axis, v);
    } catch (const ConfigError& e) {
      failure = e.what();
    }
    for (Envelope e : envelopes(cfg)) {
      if (point) {
        rows.push_back(detail::guarded_point(*point, e, cache, v));
      } else {
        ResultRow r;
        r.sweep_value = v;
        r.envelope = e;
        r.error = failure;
        r.exit_code = 2;
        rows.push_back(r);
      }
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Output

inline constexpr const char* kCsvHeader =
    "sweep_value,envelope,sifted_rate_hz,qber_time,qber_phase,singles_A0,singles_A1,singles_B0,singles_B1,"
    "live_A0,live_A1,live_B0,live_B1";

namespace detail {

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace detail

inline std::string to_csv(const std::vector<ResultRow>& rows) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += detail::csv_number(r.sweep_value) + "," + to_string(r.envelope) + "," + detail::csv_number(r.sifted_rate) + "," +
           detail::csv_number(r.qber_time) + "," + detail::csv_number(r.qber_phase);
    for (double v : r.singles) out += "," + detail::csv_number(v);
    for (double v : r.live) out += "," + detail::csv_number(v);
    out += "\n";
  }
  return out;
}

/// Warnings and errors per row, in row order.
inline Json to_report(const std::vector<ResultRow>& rows) {
  Json j = Json::array();
  for (const auto& r : rows) {
    Json e;
    e["sweep_value"] = std::isnan(r.sweep_value) ? Json() : Json(r.sweep_value);
    e["envelope"] = to_string(r.envelope);
    e["warnings"] = r.warnings;
    e["error"] = r.error ? Json(*r.error) : Json();
    j.push_back(e);
  }
  return j;
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << content;
}

/// Sifted-rate and QBER plots of a sweep, one line per envelope.
inline std::pair<std::string, std::string> sweep_plots(const std::vector<ResultRow>& rows, SweepAxis axis) {
  std::map<Envelope, plot::Series> rate, qt, qp;
  for (const auto& r : rows) {
    for (auto* m : {&rate, &qt, &qp}) (*m)[r.envelope].x.push_back(r.sweep_value);
    rate[r.envelope].y.push_back(r.sifted_rate);
    qt[r.envelope].y.push_back(r.qber_time);
    qp[r.envelope].y.push_back(r.qber_phase);
  }
  std::vector<plot::Series> a, b;
  for (auto& [e, s] : rate) {
    s.label = to_string(e);
    a.push_back(s);
  }
  for (auto& [e, s] : qt) {
    s.label = std::string("time, ") + to_string(e);
    b.push_back(s);
  }
  for (auto& [e, s] : qp) {
    s.label = std::string("phase, ") + to_string(e);
    b.push_back(s);
  }
  const std::string x = std::string(axis_name(axis)) + " (" + axis_key(axis) + ")";
  return {plot::line_chart(a, {"Sifted key rate", x, "R_sifted (1/s)", false}),
          plot::line_chart(b, {"QBER", x, "QBER", false})};
}

}  // namespace bqkd
