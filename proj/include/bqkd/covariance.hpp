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
#include <limits>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "bqkd/common.hpp"
#include "bqkd/grid.hpp"

namespace bqkd {

/// Layout of a renormalized covariance Gamma = (gamma - 1)/2.
///
/// `reduced`: two-party operator over (Alice, Bob-conjugate) modes; the full
/// covariance is this block operator plus its complex conjugate, so vacuum
/// probabilities are 1/|det(1 + W Gamma)|.
/// `full`: (a, a^dagger) halves of a single set of modes (type-0 before
/// reordering); vacuum probabilities are |det(1 + W Gamma)|^{-1/2}.
enum class CovarianceForm { reduced, full };

inline CovarianceForm natural_form(ProcessType p) {
  return p == ProcessType::type0 ? CovarianceForm::full : CovarianceForm::reduced;
}

/// Singular-value (Schmidt) decomposition psi = U diag(coefficients) V^dagger
/// of a weight-embedded JSA together with the gain C.
///
/// Columns of U are the Alice (signal) modes. The physical Bob (idler)
/// amplitudes are the complex conjugates of the columns of V, so that
/// psi(wA, wB) = sum_k coefficients_k U(wA, k) conj(V(wB, k)).
struct SchmidtDecomposition {
  ComplexMatrix U;
  ComplexMatrix V;
  RealVector coefficients;
  double gain = 0.0;
  ProcessType process = ProcessType::type2;
  AxisGrid rows;
  AxisGrid cols;
  CovarianceForm form = CovarianceForm::reduced;

  /// Squeezing parameters: 2 C Sigma (type-0/I) or C Sigma (type-II).
  RealVector sigma() const { return gain_factor() * gain * coefficients; }
  double gain_factor() const { return process == ProcessType::type0 ? 2.0 : 1.0; }
  Eigen::Index rank() const { return coefficients.size(); }
};

struct RenormalizedCovariance {
  ComplexMatrix values;
  Eigen::Index split = 0;  // size of the first block
  Basis basis = Basis::frequency;
  ProcessType process = ProcessType::type2;
  CovarianceForm form = CovarianceForm::reduced;
  int truncation_order = 0;  // 0: exact

  Eigen::Index dim() const { return values.rows(); }
  auto block(int i, int j) const {
    const Eigen::Index r0 = i == 0 ? 0 : split, c0 = j == 0 ? 0 : split;
    const Eigen::Index nr = i == 0 ? split : dim() - split, nc = j == 0 ? split : dim() - split;
    return values.block(r0, c0, nr, nc);
  }
  /// Mean photon number described by the covariance.
  double mean_photons() const {
    const double tr = values.trace().real();
    return form == CovarianceForm::reduced ? tr : 0.5 * tr;
  }
};

/// Truncated hyperbolic series: c_N(x) = sum_{even n<=N} x^n/n!, s_N(x) = sum_{odd n<=N}.
/// N = 0 selects the exact cosh/sinh.
inline double cosh_series(double x, int order) {
  if (order <= 0) return std::cosh(x);
  double term = 1.0, sum = 1.0;
  for (int n = 1; n <= order; ++n) {
    term *= x / n;
    if (n % 2 == 0) sum += term;
  }
  return sum;
}

inline double sinh_series(double x, int order) {
  if (order <= 0) return std::sinh(x);
  double term = 1.0, sum = 0.0;
  for (int n = 1; n <= order; ++n) {
    term *= x / n;
    if (n % 2 == 1) sum += term;
  }
  return sum;
}

/// Schmidt decomposition of a weight-embedded JSA. Coefficients below
/// `drop_below` (relative to the largest) are discarded.
inline SchmidtDecomposition schmidt(const DiscretizedKernel& jsa, ProcessType process, double gain = 1.0,
                                    double drop_below = 0.0) {
  if (!jsa.weight_embedded) throw GridError("Schmidt decomposition requires embedded weights");
  if (!jsa.values.allFinite()) throw NumericalError("JSA contains non-finite entries");
  Eigen::BDCSVD<ComplexMatrix> svd(jsa.values, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RealVector& s = svd.singularValues();
  Eigen::Index keep = s.size();
  if (drop_below > 0.0 && s.size() > 0) {
    keep = 0;
    while (keep < s.size() && s(keep) > drop_below * s(0)) ++keep;
    keep = std::max<Eigen::Index>(keep, 1);
  }
  SchmidtDecomposition sd;
  sd.U = svd.matrixU().leftCols(keep);
  sd.V = svd.matrixV().leftCols(keep);
  sd.coefficients = s.head(keep);
  sd.gain = gain;
  sd.process = process;
  sd.rows = jsa.rows;
  sd.cols = jsa.cols;
  sd.form = natural_form(process);
  return sd;
}

/// Block covariance 1/2 [[A (c-1) A^+, A s B^+], [B s A^+, B (c-1) B^+]] for
/// explicit mode matrices; shared by the exact and truncated constructions.
inline ComplexMatrix schmidt_block_covariance(const ComplexMatrix& a_modes, const ComplexMatrix& b_modes,
                                              const RealVector& sigma, int order, cplx pair_phase = 1.0) {
  const Eigen::Index na = a_modes.rows(), nb = b_modes.rows();
  RealVector cm1(sigma.size()), sn(sigma.size());
  for (Eigen::Index k = 0; k < sigma.size(); ++k) {
    cm1(k) = 0.5 * (cosh_series(sigma(k), order) - 1.0);
    sn(k) = 0.5 * sinh_series(sigma(k), order);
  }
  ComplexMatrix g(na + nb, na + nb);
  g.topLeftCorner(na, na) = a_modes * cm1.asDiagonal() * a_modes.adjoint();
  g.topRightCorner(na, nb) = pair_phase * (a_modes * sn.asDiagonal() * b_modes.adjoint());
  g.bottomLeftCorner(nb, na) = g.topRightCorner(na, nb).adjoint();
  g.bottomRightCorner(nb, nb) = b_modes * cm1.asDiagonal() * b_modes.adjoint();
  return g;
}

/// Exact renormalized covariance from the Schmidt form (`order` > 0 applies
/// the truncated c_N, s_N series instead).
inline RenormalizedCovariance covariance_exact(const SchmidtDecomposition& sd, int order = 0) {
  RenormalizedCovariance g;
  g.values = schmidt_block_covariance(sd.U, sd.V, sd.sigma(), order);
  g.split = sd.U.rows();
  g.process = sd.process;
  g.form = sd.form;
  g.truncation_order = order;
  return g;
}

/// Truncated series Gamma_N = sum_{n=1}^N (2Z)^n / (2 n!) built from
/// iterated kernel products, without a Schmidt decomposition.
inline RenormalizedCovariance covariance_series(const DiscretizedKernel& jsa, double gain, ProcessType process,
                                                int order) {
  if (order < 1) throw std::invalid_argument("series order must be >= 1");
  if (!jsa.weight_embedded) throw GridError("series requires embedded weights");
  const Eigen::Index na = jsa.values.rows(), nb = jsa.values.cols();
  const double g = (process == ProcessType::type0 ? 2.0 : 1.0) * gain;
  ComplexMatrix two_z = ComplexMatrix::Zero(na + nb, na + nb);
  two_z.topRightCorner(na, nb) = g * jsa.values;
  two_z.bottomLeftCorner(nb, na) = g * jsa.values.adjoint();
  ComplexMatrix power = ComplexMatrix::Identity(na + nb, na + nb);
  ComplexMatrix sum = ComplexMatrix::Zero(na + nb, na + nb);
  double factorial = 1.0;
  for (int n = 1; n <= order; ++n) {
    power = power * two_z;
    factorial *= n;
    sum += power / (2.0 * factorial);
  }
  RenormalizedCovariance out;
  out.values = std::move(sum);
  out.split = na;
  out.process = process;
  out.form = natural_form(process);
  out.truncation_order = order;
  return out;
}

/// Detection operator on the reduced (Alice, Bob-conjugate) mode space for
/// local operators W_A and W_B given on the physical grids.
inline ComplexMatrix reduced_detection(const ComplexMatrix& w_a, const ComplexMatrix& w_b) {
  ComplexMatrix w = ComplexMatrix::Zero(w_a.rows() + w_b.rows(), w_a.cols() + w_b.cols());
  w.topLeftCorner(w_a.rows(), w_a.cols()) = w_a;
  w.bottomRightCorner(w_b.rows(), w_b.cols()) = w_b.conjugate();
  return w;
}

// ---------------------------------------------------------------------------
// Determinants

enum class DeterminantMethod { automatic, lu, log_series };

struct DeterminantOptions {
  DeterminantMethod method = DeterminantMethod::automatic;
  Eigen::Index lu_max_dim = 4096;
  int series_order = 0;  // 0: chosen from the remainder estimate
  double series_tolerance = 1e-12;
};

/// Spectral radius of a square matrix.
inline double spectral_radius(const ComplexMatrix& x) {
  if (x.size() == 0) return 0.0;
  Eigen::ComplexEigenSolver<ComplexMatrix> es(x, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// log det(1 + X) by the truncated trace series -sum (-1)^n/n Tr(X^n).
inline cplx logdet_expansion(const ComplexMatrix& x, int order) {
  if (order < 1) throw std::invalid_argument("series order must be >= 1");
  const double rho = spectral_radius(x);
  if (!(rho < 1.0))
    throw NumericalError("log-trace series diverges (spectral radius " + std::to_string(rho) +
                         " >= 1); use the LU determinant path");
  ComplexMatrix power = ComplexMatrix::Identity(x.rows(), x.cols());
  cplx sum = 0.0;
  for (int n = 1; n <= order; ++n) {
    power = power * x;
    sum -= (n % 2 == 0 ? 1.0 : -1.0) / n * power.trace();
  }
  return sum;
}

/// Order-2 pieces of the trace series: Tr(X) and Tr(X^2).
struct PoissonPieces {
  cplx trace;
  cplx trace_of_square;
};

inline PoissonPieces poisson_pieces(const ComplexMatrix& x) {
  return {x.trace(), (x * x).trace()};
}

/// log det(1 + X) via LU.
inline cplx logdet_lu(const ComplexMatrix& x) {
  const Eigen::Index n = x.rows();
  if (n == 0) return 0.0;
  Eigen::PartialPivLU<ComplexMatrix> lu(ComplexMatrix::Identity(n, n) + x);
  const ComplexMatrix& m = lu.matrixLU();
  cplx sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (m(i, i) == cplx(0.0)) throw NumericalError("singular determinant");
    sum += std::log(m(i, i));
  }
  // Row swaps only flip the sign, which is absorbed into the imaginary part.
  if (lu.permutationP().determinant() < 0) sum += cplx(0.0, kPi);
  return sum;
}

inline cplx logdet(const ComplexMatrix& x, const DeterminantOptions& opt = {}) {
  const bool series = opt.method == DeterminantMethod::log_series ||
                      (opt.method == DeterminantMethod::automatic && x.rows() > opt.lu_max_dim);
  if (!series) return logdet_lu(x);
  int order = opt.series_order;
  if (order <= 0) {
    const double rho = spectral_radius(x);
    if (!(rho < 1.0)) throw NumericalError("log-trace series diverges; use the LU determinant path");
    order = 1;
    while (std::pow(rho, order + 1) / ((order + 1) * (1.0 - rho)) > opt.series_tolerance && order < 400) ++order;
  }
  return logdet_expansion(x, order);
}

/// Vacuum probability for detection operator `w` = s^dagger P s acting on
/// the covariance's mode space.
inline double vacuum_probability(const RenormalizedCovariance& gamma, const ComplexMatrix& w,
                                 const DeterminantOptions& opt = {}) {
  if (w.rows() != gamma.dim() || w.cols() != gamma.dim())
    throw GridError("detection operator and covariance dimensions differ");
  const cplx ld = logdet(w * gamma.values, opt);
  // det(1 + W Gamma) is real and >= 1 for PSD W and Gamma.
  const double det_re = std::exp(ld.real()) * std::cos(ld.imag());
  if (!(det_re > 0.0) || std::abs(std::sin(ld.imag())) > 1e-6) {
    Eigen::JacobiSVD<ComplexMatrix> svd(ComplexMatrix::Identity(gamma.dim(), gamma.dim()) + w * gamma.values);
    const RealVector& s = svd.singularValues();
    throw NumericalError("determinant breakdown: log det = (" + std::to_string(ld.real()) + ", " +
                         std::to_string(ld.imag()) + "), condition number " +
                         std::to_string(s(0) / s(s.size() - 1)));
  }
  const double scale = gamma.form == CovarianceForm::reduced ? 1.0 : 0.5;
  return std::exp(-scale * ld.real());
}

// ---------------------------------------------------------------------------
// Pump interferometer

/// The two pump-interferometer contributions Gamma = Gamma_s + Gamma_l.
struct PumpSplitState {
  SchmidtDecomposition source;
  double k_short = 1.0;
  double k_long = 0.0;
  double phase_short = 0.0;
  double phase_long = 0.0;
  double delay_short = 0.0;
  double delay_long = 0.0;
  Warnings warnings;

  double k(int path) const { return path == 0 ? k_short : k_long; }
  double phase(int path) const { return path == 0 ? phase_short : phase_long; }
  double delay(int path) const { return path == 0 ? delay_short : delay_long; }

  /// Subnormalized summand for path 0 (short) or 1 (long) in the frequency basis.
  RenormalizedCovariance summand(int path, int order = 0) const {
    const AxisGrid& ga = source.rows;
    const AxisGrid& gb = source.cols;
    const double tau = delay(path);
    // psi_z = K e^{i phi} e^{i w_+ tau} psi: Alice modes pick up the phase and
    // delay; Bob's conjugated modes pick up the conjugate delay phase.
    ComplexVector da(ga.size()), db(gb.size());
    for (Eigen::Index i = 0; i < ga.size(); ++i) da(i) = std::polar(1.0, ga.points(i) * tau + phase(path));
    for (Eigen::Index i = 0; i < gb.size(); ++i) db(i) = std::polar(1.0, -gb.points(i) * tau);
    const ComplexMatrix a = da.asDiagonal() * source.U;
    const ComplexMatrix b = db.asDiagonal() * source.V;
    RenormalizedCovariance g;
    g.values = schmidt_block_covariance(a, b, k(path) * source.sigma(), order);
    g.split = ga.size();
    g.process = source.process;
    g.form = source.form;
    g.truncation_order = order;
    return g;
  }

  RenormalizedCovariance total(int order = 0) const {
    RenormalizedCovariance g = summand(0, order);
    g.values += summand(1, order).values;
    return g;
  }
};

/// Pump split coefficients K_s, K_l for amplitude transmittivity `t` and an
/// optional relative amplitude loss of the long arm.
inline std::pair<double, double> pump_split_coefficients(double t, double long_arm_loss = 1.0) {
  if (t < 0.0 || t > 1.0) throw ConfigError("pump transmittivity must lie in [0, 1]");
  const double t2 = t * t, r2 = (1.0 - t2) * long_arm_loss;
  const double n = std::sqrt(t2 * t2 + r2 * r2);
  return {t2 / n, r2 / n};
}

inline PumpSplitState split_pump(const SchmidtDecomposition& source, double transmittivity, double phase,
                                 double delay, double pulse_duration = 0.0, double long_arm_loss = 1.0) {
  PumpSplitState st;
  st.source = source;
  std::tie(st.k_short, st.k_long) = pump_split_coefficients(transmittivity, long_arm_loss);
  st.phase_long = phase;
  st.delay_long = delay;
  if (pulse_duration > 0.0 && !(delay > pulse_duration))
    st.warnings.push_back("pump interferometer delay does not exceed the pulse duration; "
                          "the two pump halves overlap");
  return st;
}

// ---------------------------------------------------------------------------
// Mean pair number <-> gain

/// Mean number of pairs for Schmidt coefficients at gain C, summed over the
/// pump paths with amplitude weights `path_k`.
inline double mean_pairs(const RealVector& coefficients, double gain, ProcessType process,
                         std::initializer_list<double> path_k = {1.0}) {
  const double f = process == ProcessType::type0 ? 2.0 : 1.0;
  double sum = 0.0;
  for (double kz : path_k)
    for (Eigen::Index i = 0; i < coefficients.size(); ++i) {
      const double s = std::sinh(0.5 * f * gain * kz * coefficients(i));
      sum += s * s;
    }
  // A type-0 Schmidt mode holds photons of both partners; pairs are half the photons.
  return process == ProcessType::type0 ? 0.5 * sum : sum;
}

inline double mean_pairs(const PumpSplitState& st) {
  return mean_pairs(st.source.coefficients, st.source.gain, st.source.process, {st.k_short, st.k_long});
}

/// Inverts mean_pairs for the gain C.
inline double calibrate_gain(const RealVector& coefficients, double mu, ProcessType process,
                             std::initializer_list<double> path_k = {1.0}) {
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw ConfigError("mean pair number must be finite and >= 0");
  if (mu == 0.0) return 0.0;
  double lo = 0.0, hi = 1.0;
  while (mean_pairs(coefficients, hi, process, path_k) < mu) {
    hi *= 2.0;
    if (hi > 1e6) throw NumericalError("cannot reach requested mean pair number");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_pairs(coefficients, mid, process, path_k) < mu ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace bqkd
