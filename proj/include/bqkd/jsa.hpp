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
#include <complex>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bqkd/common.hpp"
#include "bqkd/grid.hpp"

namespace bqkd {

/// Complex function sampled on increasing abscissae; linear interpolation,
/// zero outside the sampled range. `exact`, when set, is evaluated instead.
struct SampledFunction {
  RealVector x;
  ComplexVector y;
  std::function<ComplexVector(const RealVector&)> exact;

  ComplexVector operator()(const RealVector& q) const {
    if (exact) return exact(q);
    ComplexVector out(q.size());
    for (Eigen::Index i = 0; i < q.size(); ++i) out(i) = at(q(i));
    return out;
  }

  cplx at(double q) const {
    if (exact) return exact(RealVector::Constant(1, q))(0);
    const Eigen::Index n = x.size();
    if (n == 0 || q < x(0) || q > x(n - 1)) return 0.0;
    if (n == 1) return y(0);
    const auto it = std::upper_bound(x.data(), x.data() + n, q);
    const Eigen::Index hi = std::min<Eigen::Index>(it - x.data(), n - 1);
    const Eigen::Index lo = hi - 1;
    const double f = (q - x(lo)) / (x(hi) - x(lo));
    return (1.0 - f) * y(lo) + f * y(hi);
  }
};

namespace detail {

inline RealVector interp_real(const RealVector& x, const RealVector& y, const RealVector& q) {
  SampledFunction f{x, y.cast<cplx>(), {}};
  return f(q).real();
}

/// Full width at half maximum of |f|^2 sampled on uniform-ish abscissae.
inline double fwhm(const RealVector& x, const RealVector& intensity) {
  Eigen::Index peak;
  const double m = intensity.maxCoeff(&peak);
  if (!(m > 0.0)) return 0.0;
  const double half = 0.5 * m;
  auto crossing = [&](Eigen::Index step) {
    Eigen::Index i = peak;
    while (i + step >= 0 && i + step < x.size() && intensity(i + step) >= half) i += step;
    if (i + step < 0 || i + step >= x.size()) return x(i);
    const double a = intensity(i), b = intensity(i + step);
    return x(i) + (x(i + step) - x(i)) * (a - half) / (a - b);
  };
  return crossing(1) - crossing(-1);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pump

/// Pump amplitude alpha(w_+) as a function of the sum-frequency offset.
struct PumpAmplitude {
  SampledFunction alpha;
  double pulse_duration = 0.0;  // s, intensity FWHM

  /// Full width Delta_+ of the region where |alpha| >= rel * peak.
  double delta_plus(double rel = 1e-12) const {
    const RealVector mag = alpha(alpha.x).cwiseAbs();
    const double thr = rel * mag.maxCoeff();
    double w = 0.0;
    for (Eigen::Index i = 0; i < mag.size(); ++i)
      if (mag(i) >= thr) w = std::max(w, std::abs(alpha.x(i)));
    return 2.0 * w;
  }
};

/// Transform-limited Gaussian pulse of intensity FWHM `fwhm` (s), cut to zero
/// below `cutoff` of its peak so that the JSA is strictly band limited.
inline PumpAmplitude gaussian_pump(double fwhm = 0.4e-9, Eigen::Index n = 4097, double cutoff = 1e-13) {
  if (!(fwhm > 0.0) || !std::isfinite(fwhm)) throw ConfigError("pump pulse duration must be positive");
  // |E(t)|^2 = exp(-4 ln2 t^2/fwhm^2)  ->  alpha(w) ~ exp(-w^2 fwhm^2 / (8 ln2)).
  const double a = fwhm * fwhm / (8.0 * std::log(2.0));
  const double w_cut = std::sqrt(-std::log(cutoff) / a);
  PumpAmplitude p;
  p.pulse_duration = fwhm;
  const double norm = std::pow(2.0 * a / kPi, 0.25);
  p.alpha.exact = [a, w_cut, norm](const RealVector& w) {
    ComplexVector out(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i)
      out(i) = std::abs(w(i)) <= w_cut ? norm * std::exp(-a * w(i) * w(i)) : 0.0;
    return out;
  };
  p.alpha.x = RealVector::LinSpaced(n, -w_cut, w_cut);
  p.alpha.y = p.alpha.exact(p.alpha.x);
  return p;
}

/// Pump from sampled amplitude data, normalized to unit L2 norm.
inline PumpAmplitude sampled_pump(RealVector omega, ComplexVector values, double pulse_duration) {
  if (omega.size() != values.size() || omega.size() < 2) throw ConfigError("pump samples malformed");
  for (Eigen::Index i = 1; i < omega.size(); ++i)
    if (!(omega(i) > omega(i - 1))) throw ConfigError("pump frequencies must increase");
  AxisGrid g{omega, RealVector::Zero(omega.size()), 0.0};
  for (Eigen::Index i = 0; i + 1 < omega.size(); ++i) {
    const double h = 0.5 * (omega(i + 1) - omega(i));
    g.weights(i) += h;
    g.weights(i + 1) += h;
  }
  const double n2 = (g.weights.array() * values.cwiseAbs2().array()).sum();
  if (!(n2 > 0.0)) throw ConfigError("pump amplitude vanishes");
  PumpAmplitude p;
  p.alpha.x = std::move(omega);
  p.alpha.y = values / std::sqrt(n2);
  p.pulse_duration = pulse_duration;
  return p;
}

// ---------------------------------------------------------------------------
// Phase matching

/// Phase-mismatch model Delta k(w_-) = dk0 + dk1 w_- with a quadratic
/// poling imperfection delta_k(z) = delta_k1 z + delta_k2 z^2 / 2.
struct PhaseMatchingParameters {
  double length = 24e-3;   // m
  double dk1 = 0.0;        // s/m, Delta k'
  double dk0 = 0.0;        // 1/m, Delta k_0
  double delta_k1 = 0.0;   // 1/m^2, delta k'
  double delta_k2 = 0.0;   // 1/m^3, delta k''
};

/// Phi(w_-) = (1/L) Int_{-L/2}^{L/2} exp(i(Delta k z + delta_k1 z^2/2 + delta_k2 z^3/6)) dz
/// by composite Simpson quadrature; Phi = sinc(Delta k L / 2) for a uniform crystal.
class PhaseMatchingQuadrature {
 public:
  PhaseMatchingQuadrature(const RealVector& omega_minus, double length, double dk1, Eigen::Index z_points = 1025)
      : length_(length) {
    if (z_points < 513) z_points = 513;
    if (z_points % 2 == 0) ++z_points;
    zeta_ = RealVector::LinSpaced(z_points, -0.5, 0.5);
    RealVector w = RealVector::Constant(z_points, 2.0);
    for (Eigen::Index k = 1; k < z_points; k += 2) w(k) = 4.0;
    w(0) = w(z_points - 1) = 1.0;
    w *= (1.0 / (z_points - 1)) / 3.0;
    kernel_.resize(omega_minus.size(), z_points);
    for (Eigen::Index j = 0; j < omega_minus.size(); ++j)
      for (Eigen::Index k = 0; k < z_points; ++k)
        kernel_(j, k) = std::polar(w(k), dk1 * omega_minus(j) * zeta_(k) * length);
  }

  /// Dimensionless parameters p1 = delta_k1 L^2, p2 = delta_k2 L^3, p3 = dk0 L.
  ComplexVector evaluate(double p1, double p2, double p3) const {
    ComplexVector g(zeta_.size());
    for (Eigen::Index k = 0; k < zeta_.size(); ++k) {
      const double z = zeta_(k);
      g(k) = std::polar(1.0, p3 * z + 0.5 * p1 * z * z + p2 * z * z * z / 6.0);
    }
    return kernel_ * g;
  }

  ComplexVector evaluate(const PhaseMatchingParameters& p) const {
    const double l = length_;
    return evaluate(p.delta_k1 * l * l, p.delta_k2 * l * l * l, p.dk0 * l);
  }

 private:
  double length_;
  RealVector zeta_;
  ComplexMatrix kernel_;
};

struct PhaseMatching {
  SampledFunction phi;
  std::optional<PhaseMatchingParameters> parameters;
  double residual = std::numeric_limits<double>::quiet_NaN();
  Warnings warnings;
};

inline PhaseMatching phase_matching_from_parameters(const PhaseMatchingParameters& p, const RealVector& omega_minus,
                                                    Eigen::Index z_points = 1025) {
  PhaseMatching pm;
  pm.parameters = p;
  pm.phi.exact = [p, z_points](const RealVector& w) {
    return PhaseMatchingQuadrature(w, p.length, p.dk1, z_points).evaluate(p);
  };
  pm.phi.x = omega_minus;
  pm.phi.y = pm.phi.exact(omega_minus);
  return pm;
}

/// Gaussian phase matching exp(-w_-^2 / (2 width^2)).
inline PhaseMatching gaussian_phase_matching(double width) {
  if (!(width > 0.0)) throw ConfigError("phase-matching width must be positive");
  PhaseMatching pm;
  pm.phi.exact = [width](const RealVector& w) {
    return (-(w.array() / width).square() * 0.5).exp().cast<cplx>().matrix().eval();
  };
  pm.phi.x = RealVector::LinSpaced(2049, -8.0 * width, 8.0 * width);
  pm.phi.y = pm.phi.exact(pm.phi.x);
  return pm;
}

// ---------------------------------------------------------------------------
// Spectra and channels

/// Power spectrum vs angular-frequency offset (rad/s).
struct Spectrum {
  RealVector omega;
  RealVector power;
};

/// Phase matching Phi(w_-) = sqrt(S(w_-/2)) from a single-photon marginal
/// spectrum measured with a narrowband pump (real, nonnegative amplitude).
inline PhaseMatching phase_matching_from_spectrum(const Spectrum& s) {
  PhaseMatching pm;
  pm.phi.x = 2.0 * s.omega;
  pm.phi.y = s.power.cwiseMax(0.0).cwiseSqrt().cast<cplx>();
  return pm;
}

/// S_sym(w) = [S(w) + S(-w)]/2 on a symmetric uniform grid.
inline Spectrum symmetrize_spectrum(const Spectrum& in, Eigen::Index n_points = 0) {
  const Eigen::Index n = in.omega.size();
  if (n < 2 || in.power.size() != n) throw ConfigError("spectrum needs at least two samples");
  if (!(in.omega(0) < 0.0 && in.omega(n - 1) > 0.0))
    throw ConfigError("spectrum is one-sided; symmetrization needs samples on both sides of zero offset");
  const double w = std::min(-in.omega(0), in.omega(n - 1));
  Eigen::Index m = n_points > 0 ? n_points : n;
  if (m % 2 == 0) ++m;
  Spectrum out;
  out.omega = RealVector::LinSpaced(m, -w, w);
  const Eigen::Index mid = m / 2;
  out.omega(mid) = 0.0;
  for (Eigen::Index k = 0; k < mid; ++k) out.omega(k) = -out.omega(m - 1 - k);
  const RealVector pos = out.omega.tail(mid + 1);
  const RealVector a = detail::interp_real(in.omega, in.power, pos);
  const RealVector b = detail::interp_real(in.omega, in.power, -pos);
  out.power.resize(m);
  for (Eigen::Index k = 0; k <= mid; ++k) {
    const double v = 0.5 * (a(k) + b(k));
    out.power(mid + k) = v;
    out.power(mid - k) = v;
  }
  return out;
}

/// Power transmission T^2(w) of a demultiplexer channel.
struct ChannelTransmission {
  RealVector omega;  // rad/s offsets, increasing
  RealVector t2;
  double lower = 0.0;  // nominal bounds (rad/s)
  double upper = 0.0;

  RealVector power_on(const RealVector& w) const { return detail::interp_real(omega, t2, w).cwiseMax(0.0); }
  RealVector amplitude_on(const RealVector& w) const { return power_on(w).cwiseSqrt(); }
};

/// Outermost points around the transmission peak where T^2 crosses `level_db`.
inline std::pair<double, double> channel_bounds(const RealVector& omega, const RealVector& t2, double level_db) {
  const double level = std::pow(10.0, level_db / 10.0);
  Eigen::Index peak;
  const double m = t2.maxCoeff(&peak);
  if (!(m > level)) throw ConfigError("channel never exceeds the bound level");
  auto edge = [&](Eigen::Index step) {
    Eigen::Index i = peak;
    while (i + step >= 0 && i + step < omega.size() && t2(i + step) >= level) i += step;
    if (i + step < 0 || i + step >= omega.size()) return omega(i);
    const double a = t2(i), b = t2(i + step);
    return omega(i) + (omega(i + step) - omega(i)) * (a - level) / (a - b);
  };
  return {edge(-1), edge(1)};
}

inline ChannelTransmission make_channel(RealVector omega, RealVector t2, double level_db = -30.0) {
  if (omega.size() < 2 || omega.size() != t2.size()) throw ConfigError("channel needs at least two samples");
  for (Eigen::Index i = 0; i < omega.size(); ++i) {
    if (i > 0 && !(omega(i) > omega(i - 1))) throw ConfigError("channel frequencies must increase strictly");
    if (!std::isfinite(t2(i)) || t2(i) < 0.0) throw ConfigError("channel transmission must be finite and >= 0");
    if (t2(i) > 1.0 + 1e-6) throw ConfigError("channel transmission exceeds unity");
  }
  ChannelTransmission c;
  c.t2 = t2.cwiseMin(1.0);
  c.omega = std::move(omega);
  std::tie(c.lower, c.upper) = channel_bounds(c.omega, c.t2, level_db);
  return c;
}

/// Flat-top channel [center - width/2, center + width/2] with raised-cosine
/// edges of width `edge` outside the passband (edge = 0: rectangular).
inline ChannelTransmission flat_top_channel(double center, double width, double edge, Eigen::Index n = 2001) {
  const double half = 0.5 * width + edge;
  RealVector w = RealVector::LinSpaced(n, center - 1.5 * half, center + 1.5 * half);
  RealVector t2(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = std::abs(w(i) - center) - 0.5 * width;
    if (d <= 0.0)
      t2(i) = 1.0;
    else if (edge > 0.0 && d < edge)
      t2(i) = std::pow(std::cos(0.5 * kPi * d / edge), 2);
    else
      t2(i) = 0.0;
  }
  return make_channel(std::move(w), std::move(t2));
}

inline ChannelTransmission shift_channel(ChannelTransmission c, double delta) {
  c.omega.array() += delta;
  c.lower += delta;
  c.upper += delta;
  return c;
}

namespace detail {

struct CsvData {
  bool db = false;
  std::vector<double> freq;
  std::vector<double> value;
};

inline CsvData read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  CsvData d;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (line[line.find_first_not_of(" \t")] == '#') {
      if (line.find("unit") != std::string::npos) {
        header_seen = true;
        if (line.find("dB") != std::string::npos)
          d.db = true;
        else if (line.find("linear") == std::string::npos)
          throw ConfigError(path + ": unit must be dB or linear");
        if (line.find("Hz-offset") == std::string::npos) throw ConfigError(path + ": axis must be Hz-offset");
      }
      continue;
    }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    double f, v;
    if (!(ss >> f >> v)) {
      if (d.freq.empty()) continue;  // column names
      throw ConfigError(path + ": malformed row '" + line + "'");
    }
    d.freq.push_back(f);
    d.value.push_back(v);
  }
  if (!header_seen) throw ConfigError(path + ": missing '# unit: ..., axis: Hz-offset' header");
  if (d.freq.empty()) throw ConfigError(path + ": no data rows");
  return d;
}

}  // namespace detail

/// Spectrum CSV: frequency offset in Hz, power in dB or linear units.
inline Spectrum load_spectrum(const std::string& path) {
  const auto d = detail::read_csv(path);
  Spectrum s;
  const Eigen::Index n = static_cast<Eigen::Index>(d.freq.size());
  s.omega.resize(n);
  s.power.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.omega(i) = kTwoPi * d.freq[i];
    s.power(i) = d.db ? std::pow(10.0, d.value[i] / 10.0) : d.value[i];
    if (i > 0 && !(s.omega(i) > s.omega(i - 1))) throw ConfigError(path + ": frequencies must increase strictly");
    if (!std::isfinite(s.power(i))) throw ConfigError(path + ": non-finite power");
  }
  return s;
}

/// Channel CSV: frequency offset in Hz, transmission in dB (T^2 = 10^(dB/10)) or linear T^2.
inline ChannelTransmission load_channel(const std::string& path, double level_db = -30.0) {
  const auto s = load_spectrum(path);
  try {
    return make_channel(s.omega, s.power, level_db);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Joint spectral amplitude

struct JointSpectralAmplitude {
  DiscretizedKernel kernel;  // weight embedded, unit norm
  double delta_plus = 0.0;
  double aspect_ratio = 0.0;
  ProcessType process = ProcessType::type2;
  Warnings warnings;
};

namespace detail {

/// Evaluates f on all x_i + s*y_j; shares work when both grids are uniform with equal spacing.
inline ComplexMatrix evaluate_combination(const SampledFunction& f, const RealVector& x, const RealVector& y,
                                          double s) {
  const Eigen::Index nx = x.size(), ny = y.size();
  ComplexMatrix out(nx, ny);
  const double hx = nx > 1 ? x(1) - x(0) : 0.0, hy = ny > 1 ? y(1) - y(0) : 0.0;
  bool uniform = nx > 1 && ny > 1 && std::abs(hx - hy) <= 1e-12 * std::abs(hx);
  if (uniform) {
    for (Eigen::Index i = 1; i < nx && uniform; ++i) uniform = std::abs(x(i) - x(0) - i * hx) <= 1e-9 * std::abs(hx);
    for (Eigen::Index j = 1; j < ny && uniform; ++j) uniform = std::abs(y(j) - y(0) - j * hx) <= 1e-9 * std::abs(hx);
  }
  if (uniform) {
    // x_i + s y_j = x_0 + s y_0 + (i + s j) h.
    const Eigen::Index offset = s > 0 ? 0 : ny - 1;
    RealVector lattice(nx + ny - 1);
    for (Eigen::Index k = 0; k < lattice.size(); ++k)
      lattice(k) = x(0) + s * y(0) + static_cast<double>(k - offset) * hx;
    const ComplexVector v = f(lattice);
    for (Eigen::Index i = 0; i < nx; ++i)
      for (Eigen::Index j = 0; j < ny; ++j) out(i, j) = v(i + (s > 0 ? j : -j) + offset);
    return out;
  }
  RealVector all(nx * ny);
  for (Eigen::Index i = 0; i < nx; ++i)
    for (Eigen::Index j = 0; j < ny; ++j) all(i * ny + j) = x(i) + s * y(j);
  const ComplexVector v = f(all);
  for (Eigen::Index i = 0; i < nx; ++i)
    for (Eigen::Index j = 0; j < ny; ++j) out(i, j) = v(i * ny + j);
  return out;
}

}  // namespace detail

/// psi(w_s, w_i) = alpha(w_s + w_i) Phi(w_s - w_i) on the given offset grids,
/// weight embedded and normalized to unit L2 norm.
inline JointSpectralAmplitude assemble_jsa(const PumpAmplitude& pump, const PhaseMatching& pm,
                                           const FrequencyGrid& signal, const FrequencyGrid& idler,
                                           ProcessType process) {
  validate(signal);
  validate(idler);
  const ComplexMatrix a = detail::evaluate_combination(pump.alpha, signal.points, idler.points, 1.0);
  const ComplexMatrix f = detail::evaluate_combination(pm.phi, signal.points, idler.points, -1.0);
  JointSpectralAmplitude j;
  j.kernel = embed_weights(make_kernel(a.cwiseProduct(f), signal, idler));
  const double norm = j.kernel.values.norm();
  if (!(norm > 0.0) || !std::isfinite(norm)) throw NumericalError("JSA vanishes on the grid");
  j.kernel.values /= norm;
  j.process = process;
  j.delta_plus = pump.delta_plus();
  const double sum_max = signal.points.maxCoeff() + idler.points.maxCoeff();
  const double sum_min = signal.points.minCoeff() + idler.points.minCoeff();
  if (sum_max < 0.5 * j.delta_plus || sum_min > -0.5 * j.delta_plus)
    j.warnings.push_back("frequency grids do not cover the pump bandwidth");
  const RealVector pa = pump.alpha(pump.alpha.x).cwiseAbs2();
  const RealVector pp = pm.phi(pm.phi.x).cwiseAbs2();
  const double wa = detail::fwhm(pump.alpha.x, pa), wp = detail::fwhm(pm.phi.x, pp);
  j.aspect_ratio = wa > 0.0 ? wp / wa : std::numeric_limits<double>::infinity();
  if (j.aspect_ratio < 10.0)
    j.warnings.push_back("JSA aspect ratio " + std::to_string(j.aspect_ratio) +
                         " < 10; the alpha(w+) Phi(w-) factorization is weak");
  return j;
}

}  // namespace bqkd
