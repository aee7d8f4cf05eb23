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
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bqkd/common.hpp"
#include "bqkd/covariance.hpp"
#include "bqkd/grid.hpp"
#include "bqkd/jsa.hpp"

namespace bqkd {

/// Alice's (negative offsets) and Bob's (positive offsets) demultiplexer
/// channels with hard bounds a_outer <= a_inner <= 0 <= b_inner <= b_outer.
struct ChannelPair {
  ChannelTransmission a;
  ChannelTransmission b;
  double a_outer = 0.0;
  double a_inner = 0.0;
  double b_inner = 0.0;
  double b_outer = 0.0;

  double c_inner() const { return std::min(-a_inner, b_inner); }
  double c_outer() const { return std::max(-a_outer, b_outer); }
};

inline ChannelPair make_channel_pair(ChannelTransmission a, ChannelTransmission b) {
  ChannelPair p;
  p.a_outer = a.lower;
  p.a_inner = a.upper;
  p.b_inner = b.lower;
  p.b_outer = b.upper;
  if (!(p.a_outer <= p.a_inner && p.a_inner <= 0.0 && 0.0 <= p.b_inner && p.b_inner <= p.b_outer))
    throw ConfigError("channel bounds must satisfy a_outer <= a_inner <= 0 <= b_inner <= b_outer");
  p.a = std::move(a);
  p.b = std::move(b);
  return p;
}

/// n-fold alternating product psi psi^+ psi ... of a weight-embedded kernel.
inline DiscretizedKernel iterated_kernel(const DiscretizedKernel& psi, int n) {
  if (n < 1) throw std::invalid_argument("iteration count must be >= 1");
  if (!psi.weight_embedded) throw GridError("iterated kernel requires embedded weights");
  DiscretizedKernel out = psi;
  for (int k = 2; k <= n; ++k) {
    if (k % 2 == 0) {
      out.values = out.values * psi.values.adjoint();
      out.cols = psi.rows;
    } else {
      out.values = out.values * psi.values;
      out.cols = psi.cols;
    }
  }
  return out;
}

/// Largest |psi_n| outside |w1 - (-1)^n w_{n+1}| <= n delta_plus / 2,
/// relative to the kernel peak (weights removed).
inline double iterated_support_leak(const DiscretizedKernel& psi_n, int n, double delta_plus) {
  const DiscretizedKernel k = psi_n.weight_embedded ? unembed_weights(psi_n) : psi_n;
  const double peak = k.values.cwiseAbs().maxCoeff();
  if (!(peak > 0.0)) return 0.0;
  const double sign = n % 2 == 0 ? 1.0 : -1.0;
  const double half = 0.5 * n * delta_plus;
  double leak = 0.0;
  for (Eigen::Index j = 0; j < k.values.cols(); ++j)
    for (Eigen::Index i = 0; i < k.values.rows(); ++i)
      if (std::abs(k.rows.points(i) - sign * k.cols.points(j)) > half * (1.0 + 1e-12))
        leak = std::max(leak, std::abs(k.values(i, j)));
  return leak / peak;
}

/// Sufficient condition against photons of one pair landing in the same
/// channel up to series order N: c_inner > N delta_plus / 4.
inline bool check_no_double_photon(const ChannelPair& pair, double delta_plus, int order) {
  return pair.c_inner() > 0.25 * order * delta_plus;
}

/// Type-0 JSA restricted to c_inner - N D/2 <= |w| <= c_outer + N D/2.
struct ReducedJsa {
  DiscretizedKernel kernel;
  std::vector<Eigen::Index> retained;  // indices into the original grid
  Eigen::Index original_size = 0;
  int order = 0;
  double delta_plus = 0.0;
  Warnings warnings;
};

inline AxisGrid subgrid(const AxisGrid& g, const std::vector<Eigen::Index>& idx) {
  AxisGrid out;
  out.carrier = g.carrier;
  out.points.resize(static_cast<Eigen::Index>(idx.size()));
  out.weights.resize(out.points.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    out.points(static_cast<Eigen::Index>(k)) = g.points(idx[k]);
    out.weights(static_cast<Eigen::Index>(k)) = g.weights(idx[k]);
  }
  return out;
}

inline ReducedJsa reduce_jsa(const JointSpectralAmplitude& jsa, const ChannelPair& pair, int order) {
  if (order < 1) throw ConfigError("series order must be >= 1");
  const DiscretizedKernel& k = jsa.kernel;
  if (!k.weight_embedded) throw GridError("reduction requires an embedded JSA");
  if (!(k.rows == k.cols)) throw ConfigError("WDM reduction needs a single-grid (type-0) JSA");
  const RealVector& w = k.rows.points;
  if (w.minCoeff() > pair.a_inner || w.maxCoeff() < pair.b_inner)
    throw ConfigError("channel band lies outside the JSA grid");
  const double lo = pair.c_inner() - 0.5 * order * jsa.delta_plus;
  const double hi = pair.c_outer() + 0.5 * order * jsa.delta_plus;
  ReducedJsa r;
  r.order = order;
  r.delta_plus = jsa.delta_plus;
  r.original_size = w.size();
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (std::abs(w(i)) >= lo && std::abs(w(i)) <= hi) r.retained.push_back(i);
  if (w.minCoeff() > pair.a_outer || w.maxCoeff() < pair.b_outer)
    r.warnings.push_back("channels extend beyond the JSA grid");
  else if (-w.minCoeff() < hi || w.maxCoeff() < hi)
    r.warnings.push_back("JSA grid ends inside the band needed for series order " + std::to_string(order));
  const auto n = static_cast<Eigen::Index>(r.retained.size());
  r.kernel.values.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) r.kernel.values(i, j) = k.values(r.retained[i], r.retained[j]);
  r.kernel.rows = subgrid(k.rows, r.retained);
  r.kernel.cols = r.kernel.rows;
  r.kernel.basis = k.basis;
  r.kernel.weight_embedded = true;
  return r;
}

/// Output ports of the demultiplexer on a frequency grid: grid points inside
/// each channel's hard bounds and the amplitude transmissions there.
struct WdmPorts {
  std::vector<Eigen::Index> a_index;
  std::vector<Eigen::Index> b_index;
  RealVector t_a;
  RealVector t_b;
  AxisGrid grid_a;
  AxisGrid grid_b;

  Eigen::Index size_a() const { return t_a.size(); }
  Eigen::Index size_b() const { return t_b.size(); }

  /// (A port rows, B port rows) x grid amplitude map.
  ComplexMatrix map(Eigen::Index grid_size) const {
    ComplexMatrix eta = ComplexMatrix::Zero(size_a() + size_b(), grid_size);
    for (Eigen::Index k = 0; k < size_a(); ++k) eta(k, a_index[k]) = t_a(k);
    for (Eigen::Index k = 0; k < size_b(); ++k) eta(size_a() + k, b_index[k]) = t_b(k);
    return eta;
  }
};

inline WdmPorts wdm_ports(const AxisGrid& grid, const ChannelPair& pair) {
  WdmPorts p;
  const RealVector ta = pair.a.amplitude_on(grid.points);
  const RealVector tb = pair.b.amplitude_on(grid.points);
  std::vector<double> va, vb;
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    const double w = grid.points(i);
    if (w >= pair.a_outer && w <= pair.a_inner && ta(i) > 0.0) {
      p.a_index.push_back(i);
      va.push_back(ta(i));
    }
    if (w >= pair.b_inner && w <= pair.b_outer && tb(i) > 0.0) {
      p.b_index.push_back(i);
      vb.push_back(tb(i));
    }
  }
  if (p.a_index.empty() || p.b_index.empty()) throw ConfigError("a channel contains no grid points");
  p.t_a = Eigen::Map<RealVector>(va.data(), static_cast<Eigen::Index>(va.size()));
  p.t_b = Eigen::Map<RealVector>(vb.data(), static_cast<Eigen::Index>(vb.size()));
  p.grid_a = subgrid(grid, p.a_index);
  p.grid_b = subgrid(grid, p.b_index);
  return p;
}

/// Schmidt modes of the reduced JSA after the demultiplexer:
/// U_A = T_A U on Alice's port, V_B = T_B V on Bob's port. The result is a
/// two-party (reduced-form) source; U_A and V_B are in general not isometric.
inline SchmidtDecomposition post_wdm_modes(const ReducedJsa& r, const ChannelPair& pair, double gain,
                                           double drop_below = 0.0) {
  if (!check_no_double_photon(pair, r.delta_plus, r.order))
    throw ConfigError("channels violate c_inner > N Delta_+/4 (c_inner = " + std::to_string(pair.c_inner()) +
                      ", N Delta_+/4 = " + std::to_string(0.25 * r.order * r.delta_plus) +
                      "); the reordered form is not valid");
  const WdmPorts ports = wdm_ports(r.kernel.rows, pair);
  SchmidtDecomposition sd = schmidt(r.kernel, ProcessType::type0, gain, drop_below);
  ComplexMatrix ua(ports.size_a(), sd.rank()), vb(ports.size_b(), sd.rank());
  for (Eigen::Index k = 0; k < ports.size_a(); ++k) ua.row(k) = ports.t_a(k) * sd.U.row(ports.a_index[k]);
  for (Eigen::Index k = 0; k < ports.size_b(); ++k) vb.row(k) = ports.t_b(k) * sd.V.row(ports.b_index[k]);
  sd.U = std::move(ua);
  sd.V = std::move(vb);
  sd.rows = ports.grid_a;
  sd.cols = ports.grid_b;
  sd.form = CovarianceForm::reduced;
  return sd;
}

enum class WdmForm { reordered, full };

/// Post-demultiplexer covariance at series order r.order.
///
/// `reordered`: (Alice port, Bob-port conjugate) reduced form, detection via
/// reduced_detection. `full`: eta Gamma eta over the (a, a^dagger) halves of
/// the (A port, B port) modes, detection via full_port_detection.
inline RenormalizedCovariance post_wdm_covariance(const ReducedJsa& r, const ChannelPair& pair, double gain,
                                                  WdmForm form = WdmForm::reordered) {
  if (form == WdmForm::reordered) return covariance_exact(post_wdm_modes(r, pair, gain), r.order);
  const WdmPorts ports = wdm_ports(r.kernel.rows, pair);
  const RenormalizedCovariance g = covariance_series(r.kernel, gain, ProcessType::type0, r.order);
  const Eigen::Index m = r.kernel.rows.size(), p = ports.size_a() + ports.size_b();
  const ComplexMatrix eta = ports.map(m);
  ComplexMatrix h = ComplexMatrix::Zero(2 * p, 2 * m);
  h.topLeftCorner(p, m) = eta;
  h.bottomRightCorner(p, m) = eta;
  RenormalizedCovariance out;
  out.values = h * g.values * h.transpose();
  out.split = p;
  out.process = ProcessType::type0;
  out.form = CovarianceForm::full;
  out.truncation_order = r.order;
  return out;
}

/// Detection operator for a full-form port covariance from local operators
/// on Alice's and Bob's ports.
inline ComplexMatrix full_port_detection(const ComplexMatrix& w_a, const ComplexMatrix& w_b) {
  const Eigen::Index na = w_a.rows(), nb = w_b.rows(), p = na + nb;
  ComplexMatrix w = ComplexMatrix::Zero(2 * p, 2 * p);
  w.block(0, 0, na, na) = w_a;
  w.block(na, na, nb, nb) = w_b;
  w.block(p, p, na, na) = w_a.conjugate();
  w.block(p + na, p + na, nb, nb) = w_b.conjugate();
  return w;
}

// ---------------------------------------------------------------------------
// Channel-asymmetry study

struct CoincidenceSetup {
  JointSpectralAmplitude jsa;  // type-0, single grid
  ChannelTransmission channel_a;
  ChannelTransmission channel_b;
  int order = 5;
  double drop_below = 1e-10;
};

struct CoincidencePoint {
  double offset = 0.0;
  double p_a = 0.0;   // click probability in Alice's channel
  double p_b = 0.0;
  double p_ab = 0.0;  // coincidence probability
  double normalized = 0.0;
};

struct CoincidenceCurve {
  std::vector<CoincidencePoint> points;
  CoincidencePoint reference;  // zero offset
  double gain = 0.0;
  Warnings warnings;

  /// (max - min) / (max + min) of the raw coincidence probability.
  double contrast() const {
    double lo = reference.p_ab, hi = reference.p_ab;
    for (const auto& p : points) {
      lo = std::min(lo, p.p_ab);
      hi = std::max(hi, p.p_ab);
    }
    return (hi - lo) / (hi + lo);
  }
};

/// Click and coincidence probabilities of ideal bucket detectors behind the
/// two channels, with Alice's channel shifted by `offset`.
inline CoincidencePoint channel_coincidence(const CoincidenceSetup& setup, double gain, double offset) {
  const ChannelPair pair = make_channel_pair(shift_channel(setup.channel_a, offset), setup.channel_b);
  const ReducedJsa r = reduce_jsa(setup.jsa, pair, setup.order);
  const SchmidtDecomposition sd = post_wdm_modes(r, pair, gain, setup.drop_below);
  const RenormalizedCovariance g = covariance_exact(sd, setup.order);
  const Eigen::Index na = sd.U.rows(), nb = sd.V.rows();
  const ComplexMatrix ia = ComplexMatrix::Identity(na, na), ib = ComplexMatrix::Identity(nb, nb);
  const double q_a = vacuum_probability(g, reduced_detection(ia, ComplexMatrix::Zero(nb, nb)));
  const double q_b = vacuum_probability(g, reduced_detection(ComplexMatrix::Zero(na, na), ib));
  const double q_ab = vacuum_probability(g, reduced_detection(ia, ib));
  CoincidencePoint p;
  p.offset = offset;
  p.p_a = 1.0 - q_a;
  p.p_b = 1.0 - q_b;
  p.p_ab = 1.0 - q_a - q_b + q_ab;
  return p;
}

/// Coincidence probability versus the offset of Alice's channel, normalized
/// to the symmetric (zero-offset) arrangement.
inline CoincidenceCurve coincidence_vs_offset(const CoincidenceSetup& setup, const std::vector<double>& offsets,
                                              double mu) {
  if (setup.jsa.process != ProcessType::type0) throw ConfigError("channel study requires a type-0 JSA");
  CoincidenceCurve c;
  const double ca = 0.5 * (setup.channel_a.lower + setup.channel_a.upper);
  const double cb = 0.5 * (setup.channel_b.lower + setup.channel_b.upper);
  const double wa = setup.channel_a.upper - setup.channel_a.lower;
  if (std::abs(ca + cb) > 1e-6 * wa) c.warnings.push_back("baseline channels are not symmetric about zero offset");
  const SchmidtDecomposition full = schmidt(setup.jsa.kernel, ProcessType::type0, 1.0, setup.drop_below);
  c.gain = calibrate_gain(full.coefficients, mu, ProcessType::type0);
  c.reference = channel_coincidence(setup, c.gain, 0.0);
  c.reference.normalized = 1.0;
  for (double d : offsets) {
    CoincidencePoint p = channel_coincidence(setup, c.gain, d);
    p.normalized = p.p_ab / c.reference.p_ab;
    c.points.push_back(p);
  }
  return c;
}

}  // namespace bqkd
