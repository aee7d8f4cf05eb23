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

#include <array>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "bqkd/common.hpp"
#include "bqkd/optical_train.hpp"

namespace bqkd {

struct DetectorModel {
  double efficiency = 1.0;          // quantum efficiency (power); enters eta_D as its square root
  double dark_count_rate = 0.0;     // 1/s
  double afterpulse_probability = 0.0;
  double dead_time = 0.0;           // s

  void validate() const {
    if (!(efficiency > 0.0 && efficiency <= 1.0)) throw ConfigError("detector efficiency must lie in (0, 1]");
    if (!(dark_count_rate >= 0.0) || !std::isfinite(dark_count_rate))
      throw ConfigError("dark-count rate must be finite and >= 0");
    if (!(afterpulse_probability >= 0.0 && afterpulse_probability < 1.0))
      throw ConfigError("afterpulse probability must lie in [0, 1)");
    if (!(dead_time >= 0.0) || !std::isfinite(dead_time)) throw ConfigError("dead time must be finite and >= 0");
  }
  double amplitude() const { return std::sqrt(efficiency); }
};

/// Folds detector efficiencies into the path-to-detector amplitudes.
inline ReceiverInterferometer with_detectors(ReceiverInterferometer rx, const std::array<DetectorModel, 2>& d) {
  for (int x = 0; x < 2; ++x)
    for (int k = 0; k < 2; ++k) rx.eta[x][k] *= d[k].amplitude();
  return rx;
}

enum class Bin : int { early = 0, central = 1, late = 2 };

inline const char* bin_name(Bin b) {
  switch (b) {
    case Bin::early: return "e";
    case Bin::central: return "c";
    case Bin::late: return "l";
  }
  return "?";
}

struct TimeBinning {
  std::array<Interval, 3> bins;  // early, central, late
  double period = 0.0;           // 1 / r_p
  bool interleaved = false;

  const Interval& bin(Bin b) const { return bins[static_cast<int>(b)]; }
  double repetition_rate() const { return 1.0 / period; }

  void validate() const {
    if (!(period > 0.0) || !std::isfinite(period)) throw ConfigError("repetition period must be positive");
    for (int i = 0; i < 3; ++i) {
      if (!(bins[i].end > bins[i].begin)) throw ConfigError("time bins must be non-empty");
      if (i > 0 && bins[i].begin < bins[i - 1].end) throw ConfigError("time bins must be ordered and disjoint");
    }
    const double span = bins[2].end - bins[0].begin;
    if (!interleaved) {
      if (span > period * (1.0 + 1e-12))
        throw ConfigError("time bins span " + std::to_string(span) + " s, longer than the repetition period");
      return;
    }
    // Interleaved: bins of adjacent repetitions fall into the gaps.
    const int reach = static_cast<int>(std::ceil(span / period));
    for (int n = 1; n <= reach; ++n)
      for (const auto& a : bins)
        for (const auto& b : bins) {
          const double lo = b.begin + n * period, hi = b.end + n * period;
          if (lo < a.end - 1e-15 && hi > a.begin + 1e-15)
            throw ConfigError("interleaved time bins overlap with those of an adjacent repetition");
        }
  }
};

/// Closed-form noise rate r = (r_dc + p_ap r_p <n>) / (1 - p_ap).
inline double solve_noise_rate(const DetectorModel& d, double mean_photons, double rep_rate) {
  if (!(d.afterpulse_probability >= 0.0 && d.afterpulse_probability < 1.0))
    throw ConfigError("afterpulse probability must lie in [0, 1)");
  return (d.dark_count_rate + d.afterpulse_probability * rep_rate * mean_photons) / (1.0 - d.afterpulse_probability);
}

/// Fraction of time a detector with event rate r_click is not dead.
inline double live_probability(const DetectorModel& d, double r_click) {
  return 1.0 / (1.0 + r_click * d.dead_time);
}

/// exp(-r |I|) times the inverse determinant.
inline double vacuum_povm_expectation(double determinant_vacuum, double noise_rate, double length) {
  return std::exp(-noise_rate * length) * determinant_vacuum;
}

struct DetectorStatistics {
  double mean_photons = 0.0;  // per repetition
  double noise_rate = 0.0;
  double event_rate = 0.0;    // noise + photon detections
  double live = 1.0;
  double singles_rate = 0.0;  // registered events per second, dead-time limited
};

struct EventSummary {
  // key[D_A][D_B][I_A][I_B], live-corrected; zero for non-sifted pairs.
  std::array<std::array<std::array<std::array<double, 3>, 3>, 2>, 2> key{};
  std::array<std::array<DetectorStatistics, 2>, 2> detectors{};  // [party][D]
  double sifted_rate = 0.0;
  std::optional<double> qber_time;
  std::optional<double> qber_phase;
  Warnings warnings;
};

inline bool is_sifted(Bin a, Bin b) {
  return (a == Bin::central) == (b == Bin::central);
}

/// One detector watching a set of disjoint intervals.
struct DetectorWindow {
  Party party = Party::alice;
  int detector = 0;
  std::vector<Interval> intervals;
};

/// Event statistics on top of the detected Gaussian state.
class EventModel {
 public:
  EventModel(const FinalCovariance& fc, const std::array<std::array<DetectorModel, 2>, 2>& detectors,
             const TimeBinning& binning, int crosstalk_window = 0)
      : fc_(&fc), det_(detectors), bins_(binning), window_(crosstalk_window) {
    binning.validate();
    if (crosstalk_window < 0) throw ConfigError("cross-talk window must be >= 0");
    time_ = fc.time_window();
    const double rp = binning.repetition_rate();
    for (int p = 0; p < 2; ++p)
      for (int d = 0; d < 2; ++d) {
        det_[p][d].validate();
        DetectorStatistics& s = stats_[p][d];
        s.mean_photons = fc.mean_photons({party(p), d, time_});
        s.noise_rate = solve_noise_rate(det_[p][d], s.mean_photons, rp);
        s.event_rate = s.noise_rate + rp * s.mean_photons;
        s.live = live_probability(det_[p][d], s.event_rate);
        s.singles_rate = s.event_rate * s.live;
      }
  }

  const DetectorStatistics& statistics(Party p, int d) const { return stats_[index(p)][d]; }

  /// Joint vacuum expectation over several detector windows, including noise
  /// and, if enabled, the product over adjacent repetitions (noise at n = 0 only).
  double vacuum(const std::vector<DetectorWindow>& windows) const {
    double noise = 0.0;
    for (const auto& w : windows)
      for (const auto& iv : w.intervals) noise += stats_[index(w.party)][w.detector].noise_rate * iv.length();
    double p = std::exp(-noise);
    for (int n = -window_; n <= window_; ++n) {
      std::vector<Projection> pr;
      for (const auto& w : windows)
        for (const auto& iv : w.intervals)
          if (auto c = clip({iv.begin + n * bins_.period, iv.end + n * bins_.period})) pr.push_back({w.party, w.detector, *c});
      p *= cached_vacuum(pr);
    }
    return p;
  }

  /// Click in bin `b` with no earlier click, for one detector (no dead-time factor).
  double click(Party p, int d, Bin b) const {
    return vacuum({{p, d, earlier(b)}}) - vacuum({{p, d, through(b)}});
  }

  /// Raw key event: clicks in (D_A, I_A) and (D_B, I_B), vacuum in the other
  /// two detectors over all three bins, times the four live probabilities.
  double key_event(int da, int db, Bin ia, Bin ib) const {
    if (!is_sifted(ia, ib)) throw ConfigError(std::string("interval pair (") + bin_name(ia) + ", " + bin_name(ib) +
                                              ") is not a sifted key event");
    const std::vector<Interval> all = through(Bin::late);
    const DetectorWindow other_a{Party::alice, 1 - da, all}, other_b{Party::bob, 1 - db, all};
    double expectation = 0.0;
    for (int sa = 0; sa < 2; ++sa)
      for (int sb = 0; sb < 2; ++sb) {
        std::vector<DetectorWindow> w{other_a, other_b};
        w.push_back({Party::alice, da, sa == 0 ? earlier(ia) : through(ia)});
        w.push_back({Party::bob, db, sb == 0 ? earlier(ib) : through(ib)});
        expectation += ((sa + sb) % 2 == 0 ? 1.0 : -1.0) * vacuum(w);
      }
    return stats_[0][0].live * stats_[0][1].live * stats_[1][0].live * stats_[1][1].live * expectation;
  }

  EventSummary summarize() const {
    EventSummary s;
    s.detectors = stats_;
    s.warnings = fc_->warnings;
    double total = 0.0, time_all = 0.0, time_err = 0.0, cc_all = 0.0, cc_err = 0.0;
    for (int da = 0; da < 2; ++da)
      for (int db = 0; db < 2; ++db)
        for (int ia = 0; ia < 3; ++ia)
          for (int ib = 0; ib < 3; ++ib) {
            const Bin a = static_cast<Bin>(ia), b = static_cast<Bin>(ib);
            if (!is_sifted(a, b)) continue;
            const double p = key_event(da, db, a, b);
            s.key[da][db][ia][ib] = p;
            total += p;
            if (a == Bin::central) {
              cc_all += p;
              if (da != db) cc_err += p;
            } else {
              time_all += p;
              if (a != b) time_err += p;
            }
          }
    s.sifted_rate = bins_.repetition_rate() * total;
    if (time_all > 0.0) s.qber_time = time_err / time_all;
    if (cc_all > 0.0) s.qber_phase = cc_err / cc_all;
    if (!s.qber_time || !s.qber_phase) s.warnings.push_back("no sifted events in one basis; QBER undefined");
    return s;
  }

 private:
  static int index(Party p) { return p == Party::alice ? 0 : 1; }
  static Party party(int p) { return p == 0 ? Party::alice : Party::bob; }

  std::vector<Interval> earlier(Bin b) const {
    return {bins_.bins.begin(), bins_.bins.begin() + static_cast<int>(b)};
  }
  std::vector<Interval> through(Bin b) const {
    return {bins_.bins.begin(), bins_.bins.begin() + static_cast<int>(b) + 1};
  }

  /// Part of an interval inside the simulated window; the wave packets are
  /// negligible outside it.
  std::optional<Interval> clip(const Interval& iv) const {
    const Interval c{std::max(iv.begin, time_.begin), std::min(iv.end, time_.end)};
    const double dt = fc_->time_step();
    if (c.end - c.begin < 0.5 * dt) return std::nullopt;
    return c;
  }

  /// Determinant vacuum probability, memoized on the sorted projection list.
  double cached_vacuum(std::vector<Projection> pr) const {
    auto key_of = [](const Projection& x) {
      return std::tuple(static_cast<int>(x.party), x.detector, x.interval.begin, x.interval.end);
    };
    std::sort(pr.begin(), pr.end(), [&](const auto& a, const auto& b) { return key_of(a) < key_of(b); });
    std::vector<std::tuple<int, int, double, double>> key;
    for (const auto& x : pr) key.push_back(key_of(x));
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    const double v = fc_->vacuum_probability(pr);
    memo_.emplace(std::move(key), v);
    return v;
  }

  const FinalCovariance* fc_;
  mutable std::map<std::vector<std::tuple<int, int, double, double>>, double> memo_;
  std::array<std::array<DetectorModel, 2>, 2> det_;
  TimeBinning bins_;
  int window_ = 0;
  Interval time_;
  std::array<std::array<DetectorStatistics, 2>, 2> stats_{};
};

}  // namespace bqkd
