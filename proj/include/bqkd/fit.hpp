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
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/LevenbergMarquardt>
#include <unsupported/Eigen/NumericalDiff>

#include "bqkd/common.hpp"
#include "bqkd/jsa.hpp"

namespace bqkd {

struct FitOptions {
  std::vector<double> p1_starts{1.0, 10.0, 25.0, 50.0};       // delta_k1 L^2
  std::vector<double> p2_starts{-150.0, -30.0, 30.0, 150.0};  // delta_k2 L^3
  double p1_bound = 400.0;
  double p2_bound = 4000.0;
  int explore_evaluations = 80;
  int refine_evaluations = 800;
  double max_residual = 0.2;
  Eigen::Index z_points = 513;
};

struct FitResult {
  PhaseMatching phase_matching;
  PhaseMatchingParameters parameters;
  double amplitude = 0.0;  // in units of the input spectrum
  double baseline = 0.0;
  double residual = 0.0;   // RMS misfit relative to the spectrum maximum
  int evaluations = 0;
  int starts = 0;
};

namespace detail {

/// Residuals of S ~ A |Phi|^2 + B with A, B eliminated by linear least squares.
struct SpectrumResidual : Eigen::DenseFunctor<double> {
  const PhaseMatchingQuadrature* quad;
  const RealVector* target;
  bool free_p1;
  std::shared_ptr<int> calls = std::make_shared<int>(0);

  SpectrumResidual(const PhaseMatchingQuadrature& q, const RealVector& s, bool free_p1 = true)
      : Eigen::DenseFunctor<double>(free_p1 ? 3 : 2, static_cast<int>(s.size())),
        quad(&q),
        target(&s),
        free_p1(free_p1) {}

  std::pair<double, double> linear(const RealVector& f) const {
    const double n = static_cast<double>(f.size());
    const double sf = f.sum(), ss = target->sum(), ff = f.squaredNorm(), fs = f.dot(*target);
    const double det = n * ff - sf * sf;
    if (std::abs(det) < 1e-300) return {0.0, ss / n};
    return {(n * fs - sf * ss) / det, (ff * ss - sf * fs) / det};
  }

  /// Full parameter vector (p1, p2, p3) from the optimizer's inputs.
  Eigen::Vector3d full(const InputType& x) const {
    return free_p1 ? Eigen::Vector3d(x(0), x(1), x(2)) : Eigen::Vector3d(0.0, x(0), x(1));
  }

  RealVector model(const InputType& x) const {
    const Eigen::Vector3d p = full(x);
    return quad->evaluate(p(0), p(1), p(2)).cwiseAbs2();
  }

  int operator()(const InputType& x, ValueType& fvec) const {
    ++*calls;
    const RealVector f = model(x);
    const auto [a, b] = linear(f);
    fvec = (a * f).array() + b - target->array();
    return 0;
  }
};

}  // namespace detail

/// Fits S(w_-) = A |Phi(w_-)|^2 + B with Phi from the quadratic-imperfection
/// model, for fixed crystal length and group-velocity mismatch dk1.
/// The sign of delta_k1 is not observable in |Phi|^2 and is reported >= 0.
inline FitResult phase_matching_from_fit(const Spectrum& measured, double length, double dk1,
                                         const FitOptions& opt = {}) {
  const Eigen::Index n = measured.omega.size();
  if (n < 50 || measured.power.size() != n) throw ConfigError("fit needs at least 50 spectrum samples");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(measured.power(i))) throw ConfigError("spectrum contains non-finite values");
    if (measured.power(i) < 0.0) throw ConfigError("spectrum contains negative values");
    if (i > 0 && !(measured.omega(i) > measured.omega(i - 1))) throw ConfigError("frequencies must increase");
  }
  if (!(length > 0.0) || dk1 == 0.0) throw ConfigError("crystal length and dk1 must be nonzero");
  const double scale = measured.power.maxCoeff();
  if (!(scale > 0.0)) throw ConfigError("spectrum is identically zero");
  const RealVector target = measured.power / scale;

  const PhaseMatchingQuadrature quad(measured.omega, length, dk1, opt.z_points);
  detail::SpectrumResidual functor(quad, target);
  Eigen::NumericalDiff<detail::SpectrumResidual> diff(functor);
  detail::SpectrumResidual flat_functor(quad, target, false);
  flat_functor.calls = functor.calls;
  Eigen::NumericalDiff<detail::SpectrumResidual> flat_diff(flat_functor);

  // The mean mismatch over the crystal, p3 + p2/24, sets the spectral center.
  Eigen::Index peak;
  target.maxCoeff(&peak);
  const RealVector above = (target.array() - target.minCoeff()).matrix();
  const double centroid = above.dot(measured.omega) / above.sum();
  auto p3_starts = [&](double p2) {
    return std::array<double, 2>{-dk1 * centroid * length - p2 / 24.0, -dk1 * measured.omega(peak) * length - p2 / 24.0};
  };
  const double p3_start = -dk1 * measured.omega(peak) * length;

  auto cost = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd r(n);
    functor(x, r);
    return r.squaredNorm();
  };
  auto run = [&](Eigen::VectorXd x, int budget) {
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<detail::SpectrumResidual>> lm(diff);
    lm.setMaxfev(budget);
    lm.minimize(x);
    return x;
  };
  auto in_bounds = [&](const Eigen::VectorXd& x) {
    return std::abs(x(0)) <= opt.p1_bound && std::abs(x(1)) <= opt.p2_bound && x.allFinite();
  };

  struct Candidate {
    Eigen::VectorXd x;
    double cost;
  };
  std::vector<Candidate> found;
  int starts = 0;
  // |Phi|^2 is even in p1, so p1 = 0 is a stationary line searched separately.
  std::optional<Candidate> flat;
  for (double p1 : opt.p1_starts)
    for (double p2 : opt.p2_starts)
      for (double p3 : p3_starts(p2)) {
        Eigen::VectorXd x(3);
        x << p1, p2, p3;
        x = run(x, opt.explore_evaluations);
        ++starts;
        if (in_bounds(x)) found.push_back({x, cost(x)});
      }
  for (double p2 : {0.0, opt.p2_starts.front(), opt.p2_starts.back()}) {
    Eigen::VectorXd y(2);
    y << p2, p3_start;
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<detail::SpectrumResidual>> lm(flat_diff);
    lm.setMaxfev(opt.refine_evaluations);
    lm.minimize(y);
    ++starts;
    Eigen::VectorXd x(3);
    x << 0.0, y(0), y(1);
    if (!in_bounds(x)) continue;
    const double c = cost(x);
    if (!flat || c < flat->cost) flat = Candidate{x, c};
  }
  if (found.empty() && !flat)  throw NumericalError("phase-matching fit left the parameter bounds from every start");
  std::sort(found.begin(), found.end(), [](const auto& a, const auto& b) { return a.cost < b.cost; });
  const std::size_t refine = std::min<std::size_t>(3, found.size());
  Candidate best = flat ? *flat : found.front();
  if (!found.empty() && found.front().cost < best.cost) best = found.front();
  for (std::size_t k = 0; k < refine; ++k) {
    Eigen::VectorXd x = run(found[k].x, opt.refine_evaluations);
    if (!in_bounds(x)) continue;
    const double c = cost(x);
    if (c < best.cost) best = {x, c};
  }

  FitResult res;
  res.residual = std::sqrt(best.cost / static_cast<double>(n));
  res.evaluations = *functor.calls;
  res.starts = starts;
  if (res.residual > opt.max_residual)
    throw NumericalError("phase-matching fit did not converge; best normalized RMS residual " +
                         std::to_string(res.residual));
  const auto [a, b] = functor.linear(functor.model(best.x));
  res.amplitude = a * scale;
  res.baseline = b * scale;
  res.parameters.length = length;
  res.parameters.dk1 = dk1;
  res.parameters.delta_k1 = std::abs(best.x(0)) / (length * length);
  res.parameters.delta_k2 = best.x(1) / (length * length * length);
  res.parameters.dk0 = best.x(2) / length;
  res.phase_matching = phase_matching_from_parameters(res.parameters, measured.omega, opt.z_points);
  res.phase_matching.residual = res.residual;

  // Main lobe plus two side lobes on each side: |Delta k L/2| >= 3 pi.
  const double lo = (res.parameters.dk0 + dk1 * measured.omega(0)) * length / 2.0;
  const double hi = (res.parameters.dk0 + dk1 * measured.omega(n - 1)) * length / 2.0;
  if (std::min(std::abs(lo), std::abs(hi)) < 3.0 * kPi || lo * hi > 0.0)
    res.phase_matching.warnings.push_back("spectrum does not span the main lobe and two side lobes on each side");
  return res;
}

}  // namespace bqkd
