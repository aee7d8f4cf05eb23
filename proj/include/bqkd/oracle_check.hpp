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
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "bqkd/covariance.hpp"
#include "bqkd/fock_oracle.hpp"
#include "bqkd/optical_train.hpp"
#include "bqkd/oracles.hpp"
#include "bqkd/wdm.hpp"

namespace bqkd {

struct OracleCheckOptions {
  std::uint64_t seed = 1;
  int trials = 4;
  int determinant_dim = 24;  // largest random dimension, at most 64
  int fock_grid = 4;         // Fock oracle grid points per axis, at most 8
  /// Flip the sign of one receiver transformation row in the fast path.
  bool inject_fault = false;
};

struct OracleCheckResult {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  int cases = 0;
  bool passed() const { return max_error <= tolerance; }
};

struct OracleReport {
  std::vector<OracleCheckResult> checks;
  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed(); });
  }
};

namespace detail {

inline ComplexMatrix block_diagonal(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix m = ComplexMatrix::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  m.topLeftCorner(a.rows(), a.cols()) = a;
  m.bottomRightCorner(b.rows(), b.cols()) = b;
  return m;
}

inline AxisGrid uniform_toy_axis(Eigen::Index n) { return oracle::equal_weight_grid(n, 1.0); }

/// det(1 + P S G S^dag P) against the mode-space determinant det(1 + S^dag P S G).
inline OracleCheckResult check_determinant_orderings(std::mt19937_64& rng, int trials, int max_dim) {
  OracleCheckResult r{"determinant_orderings", 0.0, 1e-9, 0};
  std::uniform_int_distribution<int> dim(2, max_dim / 2);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 4 * trials; ++trial) {
    const int m_in = dim(rng), m_out = dim(rng);
    const ComplexMatrix g =
        covariance_exact(schmidt(oracle::random_jsa(rng, m_in, m_in, 3), ProcessType::type2, 0.9)).values;
    ComplexMatrix s(2 * m_out, 2 * m_in);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = cplx(n01(rng), n01(rng)) / std::sqrt(4.0 * m_in);
    ComplexMatrix p = ComplexMatrix::Zero(2 * m_out, 2 * m_out);
    for (int i = 0; i < 2 * m_out; ++i)
      if (n01(rng) > 0.0) p(i, i) = 1.0;
    const cplx big = logdet_lu(p * s * g * s.adjoint() * p);
    const cplx small = logdet_lu(s.adjoint() * p * s * g);
    r.max_error = std::max(r.max_error, std::abs(std::exp(big.real() - small.real()) - 1.0));
    ++r.cases;
  }
  return r;
}

/// Gaussian vacuum probabilities against the truncated photon-number expansion.
inline OracleCheckResult check_fock(std::mt19937_64& rng, int trials, int n) {
  OracleCheckResult r{"fock_expansion", 0.0, 1e-7, 0};
  std::uniform_int_distribution<int> rank(1, 3);
  for (int trial = 0; trial < trials; ++trial) {
    const auto jsa = oracle::random_jsa(rng, n, n, rank(rng));
    const double c = 0.3;
    FockOracle fock(jsa, c, ProcessType::type2, {5, 1e-8});
    const auto gamma = covariance_exact(schmidt(jsa, ProcessType::type2, c));
    const ComplexMatrix wa = oracle::random_detection(rng, n, 2);
    const ComplexMatrix wb = oracle::random_detection(rng, n, 3);
    const ComplexMatrix z = ComplexMatrix::Zero(n, n);
    for (const auto& [a, b] : {std::pair{wa, z}, std::pair{z, wb}, std::pair{wa, wb}}) {
      const double f = fock.vacuum_probability(block_diagonal(a, b));
      const double d = vacuum_probability(gamma, reduced_detection(a, b));
      r.max_error = std::max(r.max_error, std::abs(f - d));
      ++r.cases;
    }
  }
  return r;
}

inline OpticalSetup chain_setup(const std::array<oracle::FactoredReceiver, 2>& rx, const std::array<FiberLink, 2>& fiber,
                                const TimeGrid& tg) {
  OpticalSetup s;
  s.fiber_a = fiber[0];
  s.fiber_b = fiber[1];
  s.rx_a = rx[0].interferometer();
  s.rx_b = rx[1].interferometer();
  s.time = tg;
  return s;
}

/// Mode-space detection against the explicit six-mode element chain.
inline OracleCheckResult check_six_mode_chain(std::mt19937_64& rng, int trials, bool inject_fault) {
  OracleCheckResult r{"six_mode_chain", 0.0, 1e-9, 0};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < trials; ++trial) {
    DiscretizedKernel jsa = oracle::random_jsa(rng, 10, 10, 4);
    jsa.rows = uniform_toy_axis(10);
    jsa.cols = jsa.rows;
    const PumpSplitState st = split_pump(schmidt(jsa, ProcessType::type2, 0.5 + 0.5 * u(rng)), 0.6, 0.7, 2.0);
    std::array<oracle::FactoredReceiver, 2> rx;
    for (auto& x : rx) {
      x.t = 0.5 + 0.3 * u(rng);
      x.phase = {kTwoPi * u(rng), kTwoPi * u(rng)};
      x.delay = {0.5 * std::floor(2.0 * u(rng)), 2.0 + 0.5 * std::floor(2.0 * u(rng))};
      x.path = {0.6 + 0.4 * u(rng), 0.6 + 0.4 * u(rng)};
      x.det = {0.6 + 0.4 * u(rng), 0.6 + 0.4 * u(rng)};
      x.xi = 0.8 + 0.2 * u(rng);
    }
    const std::array<FiberLink, 2> fiber{FiberLink{3.0, 0.5, 0.4 * (u(rng) - 0.5)},
                                         FiberLink{1.5, 0.3, 0.4 * (u(rng) - 0.5)}};
    const TimeGrid tg = uniform_time_grid(-3.0, 0.5, 24);
    const OpticalSetup setup = chain_setup(rx, fiber, tg);
    std::array<ReducedTransformation, 2> rt{build_reduced_transformation(setup.rx_a, setup.fiber_a),
                                            build_reduced_transformation(setup.rx_b, setup.fiber_b)};
    if (inject_fault) rt[0].rows[1].coefficient[1] = -rt[0].rows[1].coefficient[1];
    const std::vector<std::vector<Projection>> cases{
        {{Party::alice, 1, {-1.0, 2.0}}},
        {{Party::bob, 1, {2.0, 5.0}}},
        {{Party::alice, 1, {0.0, 3.0}}, {Party::bob, 0, {-3.0, 1.0}}},
        {{Party::alice, 0, {-3.0, 8.5}}, {Party::alice, 1, {-3.0, 8.5}}, {Party::bob, 0, {-3.0, 8.5}},
         {Party::bob, 1, {-3.0, 8.5}}},
    };
    for (int order : {0, 3}) {
      const FinalCovariance fc(st, setup, order, rt);
      for (const auto& c : cases) {
        const double fast = fc.vacuum_probability(c);
        const double brute = oracle::chain_vacuum_probability(st, order, rx, fiber, tg, c);
        r.max_error = std::max(r.max_error, std::abs(fast / brute - 1.0));
        ++r.cases;
      }
    }
  }
  return r;
}

/// Fast-oscillation filtering on a coarse grid against an oversampled, unfiltered run.
inline OracleCheckResult check_oversampling() {
  OracleCheckResult r{"oversampled_dispersion", 0.0, 1e-4, 0};
  const FiberLink fiber{10.0, 0.0, 0.5};
  ReceiverInterferometer rx;
  rx.delay = {0.0, 50.0};
  rx.phase = {0.0, 0.9};
  OpticalSetup s;
  s.fiber_a = fiber;
  s.fiber_b = fiber;
  s.rx_a = rx;
  s.rx_b = rx;
  s.time = uniform_time_grid(-35.0, 0.5, 341);
  const std::vector<std::vector<Projection>> cases{
      {{Party::alice, 0, {-35.0, 15.0}}},
      {{Party::alice, 1, {35.0, 65.0}}},
      {{Party::alice, 0, {35.0, 65.0}}, {Party::bob, 0, {35.0, 65.0}}},
      {{Party::alice, 1, {35.0, 65.0}}, {Party::bob, 0, {35.0, 65.0}}, {Party::bob, 1, {80.0, 135.0}}},
  };
  auto run = [&](Eigen::Index n, double threshold) {
    const PumpSplitState st = split_pump(oracle::hermite_source(n, 5.0, 0.6), 1.0 / std::numbers::sqrt2, 0.4, 50.0);
    OpticalSetup local = s;
    local.filter_threshold = threshold;
    const FinalCovariance fc(st, local);
    std::vector<double> clicks;
    for (const auto& c : cases) clicks.push_back(1.0 - fc.vacuum_probability(c));
    return clicks;
  };
  const auto coarse = run(451, 0.5);
  const auto fine = run(1801, std::numeric_limits<double>::infinity());
  for (std::size_t k = 0; k < cases.size(); ++k) {
    r.max_error = std::max(r.max_error, std::abs(coarse[k] / fine[k] - 1.0));
    ++r.cases;
  }
  return r;
}

/// Reordered post-WDM covariance against the full-port form on the reduced
/// and on the unreduced grid.
inline OracleCheckResult check_wdm_reduction(std::mt19937_64& rng, int trials) {
  OracleCheckResult r{"wdm_reduction", 0.0, 1e-8, 0};
  const PumpAmplitude pump = gaussian_pump();
  const double d = pump.delta_plus();
  const FrequencyGrid g = make_grid(0.0, 10.0 * d, 161);
  const auto jsa = assemble_jsa(pump, gaussian_phase_matching(200.0 * d), g, g, ProcessType::type0);
  const auto pair = make_channel_pair(flat_top_channel(-6.0 * d, 2.0 * d, 0.25 * d), flat_top_channel(6.0 * d, 2.0 * d, 0.25 * d));
  const int order = 3;
  const double gain = calibrate_gain(schmidt(jsa.kernel, ProcessType::type0).coefficients, 0.1, ProcessType::type0);
  const ReducedJsa reduced = reduce_jsa(jsa, pair, order);
  ReducedJsa whole;
  whole.kernel = jsa.kernel;
  whole.order = order;
  whole.delta_plus = jsa.delta_plus;
  whole.original_size = jsa.kernel.rows.size();
  for (Eigen::Index i = 0; i < whole.original_size; ++i) whole.retained.push_back(i);
  const auto reordered = post_wdm_covariance(reduced, pair, gain, WdmForm::reordered);
  const auto full_reduced = post_wdm_covariance(reduced, pair, gain, WdmForm::full);
  const auto full_whole = post_wdm_covariance(whole, pair, gain, WdmForm::full);
  const Eigen::Index na = reordered.split, nb = reordered.dim() - reordered.split;
  for (int trial = 0; trial < trials; ++trial) {
    const ComplexMatrix wa = oracle::random_detection(rng, na, 3);
    const ComplexMatrix wb = oracle::random_detection(rng, nb, 3);
    const double p_red = vacuum_probability(reordered, reduced_detection(wa, wb));
    const double p_full = vacuum_probability(full_reduced, full_port_detection(wa, wb));
    const double p_whole = vacuum_probability(full_whole, full_port_detection(wa, wb));
    r.max_error = std::max({r.max_error, std::abs(p_red / p_full - 1.0), std::abs(p_red / p_whole - 1.0)});
    ++r.cases;
  }
  return r;
}

}  // namespace detail

inline OracleReport run_oracle_check(const OracleCheckOptions& opt = {}) {
  if (opt.trials < 1 || opt.trials > 16) throw ConfigError("oracle-check trials must lie in [1, 16]");
  if (opt.determinant_dim < 4 || opt.determinant_dim > 64)
    throw ConfigError("oracle-check determinant dimension must lie in [4, 64]");
  if (opt.fock_grid < 3 || opt.fock_grid > 8) throw ConfigError("oracle-check Fock grid must lie in [3, 8]");
  std::mt19937_64 rng(opt.seed);
  OracleReport rep;
  rep.checks.push_back(detail::check_determinant_orderings(rng, opt.trials, opt.determinant_dim));
  rep.checks.push_back(detail::check_fock(rng, opt.trials, opt.fock_grid));
  rep.checks.push_back(detail::check_six_mode_chain(rng, opt.trials, opt.inject_fault));
  rep.checks.push_back(detail::check_oversampling());
  rep.checks.push_back(detail::check_wdm_reduction(rng, opt.trials));
  return rep;
}

inline nlohmann::json to_json(const OracleReport& rep, const OracleCheckOptions& opt) {
  nlohmann::json j;
  j["seed"] = opt.seed;
  j["inject_fault"] = opt.inject_fault;
  j["trials"] = opt.trials;
  j["determinant_dim"] = opt.determinant_dim;
  j["fock_grid"] = opt.fock_grid;
  j["passed"] = rep.passed();
  j["checks"] = nlohmann::json::array();
  for (const auto& c : rep.checks)
    j["checks"].push_back({{"name", c.name}, {"max_error", c.max_error}, {"tolerance", c.tolerance}, {"cases", c.cases},
                           {"passed", c.passed()}});
  return j;
}

}  // namespace bqkd
