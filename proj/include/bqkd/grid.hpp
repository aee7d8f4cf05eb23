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

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace bqkd {

using cplx = std::complex<double>;
using RealVector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

class GridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A one-dimensional quadrature grid: sample points and their weights.
///
/// `carrier` is only meaningful for frequency grids, where `points` are
/// angular-frequency offsets from it.
struct AxisGrid {
  RealVector points;
  RealVector weights;
  double carrier = 0.0;

  Eigen::Index size() const { return points.size(); }
  double spacing() const { return size() > 1 ? points(1) - points(0) : 0.0; }
  double span() const { return size() > 0 ? points(size() - 1) - points(0) : 0.0; }
  double covered() const { return weights.sum(); }
  double max_abs() const { return points.cwiseAbs().maxCoeff(); }

  bool operator==(const AxisGrid&) const = default;
};

/// Angular-frequency offsets (rad/s) around `carrier`.
struct FrequencyGrid : AxisGrid {};
/// Times (s).
struct TimeGrid : AxisGrid {};

namespace detail {

inline void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw GridError(std::string("non-finite ") + what);
}

inline AxisGrid uniform_axis(double lo, double hi, Eigen::Index n) {
  if (n < 2) throw GridError("grid needs at least two points");
  if (!(hi > lo)) throw GridError("grid interval is empty");
  AxisGrid g;
  g.points = RealVector::LinSpaced(n, lo, hi);
  const double h = (hi - lo) / static_cast<double>(n - 1);
  g.weights = RealVector::Constant(n, h);
  g.weights(0) *= 0.5;
  g.weights(n - 1) *= 0.5;
  return g;
}

}  // namespace detail

/// Checks monotonicity and weight positivity; throws GridError otherwise.
inline void validate(const AxisGrid& g) {
  if (g.points.size() != g.weights.size()) throw GridError("points/weights size mismatch");
  if (g.size() < 1) throw GridError("empty grid");
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    detail::check_finite(g.points(i), "grid point");
    if (!(g.weights(i) > 0.0)) throw GridError("grid weights must be strictly positive");
    if (i > 0 && !(g.points(i) > g.points(i - 1)))
      throw GridError("grid points must be strictly increasing");
  }
}

/// Uniform trapezoidal frequency grid of `n_points` offsets in
/// [-half_width, half_width] around the absolute carrier `center`.
inline FrequencyGrid make_grid(double center, double half_width, Eigen::Index n_points) {
  detail::check_finite(center, "grid center");
  detail::check_finite(half_width, "grid half width");
  if (!(half_width > 0.0)) throw GridError("half width must be positive");
  FrequencyGrid g{detail::uniform_axis(-half_width, half_width, n_points)};
  g.carrier = center;
  return g;
}

/// Uniform trapezoidal time grid on [t_begin, t_end].
inline TimeGrid make_time_grid(double t_begin, double t_end, Eigen::Index n_points) {
  detail::check_finite(t_begin, "time grid start");
  detail::check_finite(t_end, "time grid end");
  return TimeGrid{detail::uniform_axis(t_begin, t_end, n_points)};
}

/// Time grid with uniform (non-trapezoidal) weights that is the discrete
/// Fourier partner of `freq`: n points, spacing 2*pi/(n * d_omega).
inline TimeGrid conjugate_time_grid(const FrequencyGrid& freq) {
  const Eigen::Index n = freq.size();
  const double dt = kTwoPi / (static_cast<double>(n) * freq.spacing());
  TimeGrid t;
  t.points = RealVector::LinSpaced(n, -0.5 * dt * (n - 1), 0.5 * dt * (n - 1));
  t.weights = RealVector::Constant(n, dt);
  return t;
}

enum class Basis { frequency, time };

/// Discretized integral-operator kernel K(x, x') on (rows x cols).
///
/// With `weight_embedded` set, entry (i, j) holds K(x_i, x'_j) sqrt(w_i w'_j)
/// so that operator composition, traces and determinants are ordinary
/// matrix operations.
struct DiscretizedKernel {
  ComplexMatrix values;
  AxisGrid rows;
  AxisGrid cols;
  Basis basis = Basis::frequency;
  bool weight_embedded = false;
};

inline DiscretizedKernel make_kernel(ComplexMatrix values, const AxisGrid& rows,
                                     const AxisGrid& cols, Basis basis = Basis::frequency) {
  if (values.rows() != rows.size() || values.cols() != cols.size())
    throw GridError("kernel shape does not match its grids");
  return DiscretizedKernel{std::move(values), rows, cols, basis, false};
}

inline DiscretizedKernel embed_weights(DiscretizedKernel k) {
  if (k.weight_embedded) throw GridError("kernel weights are already embedded");
  const RealVector r = k.rows.weights.cwiseSqrt();
  const RealVector c = k.cols.weights.cwiseSqrt();
  k.values = r.asDiagonal() * k.values * c.asDiagonal();
  k.weight_embedded = true;
  return k;
}

inline DiscretizedKernel unembed_weights(DiscretizedKernel k) {
  if (!k.weight_embedded) throw GridError("kernel weights are not embedded");
  const RealVector r = k.rows.weights.cwiseSqrt().cwiseInverse();
  const RealVector c = k.cols.weights.cwiseSqrt().cwiseInverse();
  k.values = r.asDiagonal() * k.values * c.asDiagonal();
  k.weight_embedded = false;
  return k;
}

/// Operator product a * b of two weight-embedded kernels.
inline DiscretizedKernel compose(const DiscretizedKernel& a, const DiscretizedKernel& b) {
  if (!a.weight_embedded || !b.weight_embedded)
    throw GridError("composition requires weight-embedded kernels");
  if (a.cols.size() != b.rows.size()) throw GridError("inner grids do not match");
  return DiscretizedKernel{a.values * b.values, a.rows, b.cols, a.basis, true};
}

/// Hilbert-Schmidt norm of an embedded kernel.
inline double hs_norm(const DiscretizedKernel& k) {
  if (!k.weight_embedded) throw GridError("HS norm requires a weight-embedded kernel");
  return k.values.norm();
}

/// How the column index of a kernel transforms.
///
/// `operator_basis`: the kernel is an operator and is conjugated by the
/// unitary transform, K_t = F K F^dagger, i.e. (2pi)^-1 Int e^{-i(w t - w' t')} K.
/// `pair_amplitude`: the kernel is a two-photon amplitude psi(w_A, w_B); both
/// arguments transform alike, K_t = F K F^T, so that a linear spectral phase
/// e^{i w tau} on either argument delays that photon by +tau.
enum class FourierPairing { operator_basis, pair_amplitude };

/// Weight-embedded Fourier matrix E(j, i) = sqrt(w_t,j w_w,i) e^{-i w_i t_j} / sqrt(2 pi).
inline ComplexMatrix fourier_matrix(const AxisGrid& freq, const AxisGrid& time) {
  ComplexMatrix e(time.size(), freq.size());
  const double norm = 1.0 / std::sqrt(kTwoPi);
  for (Eigen::Index i = 0; i < freq.size(); ++i) {
    const double wi = std::sqrt(freq.weights(i));
    for (Eigen::Index j = 0; j < time.size(); ++j) {
      e(j, i) = std::polar(norm * wi * std::sqrt(time.weights(j)), -freq.points(i) * time.points(j));
    }
  }
  return e;
}

/// Throws GridError when sampling `time` cannot represent functions band
/// limited to `freq` without aliasing.
inline void check_nyquist(const AxisGrid& freq, const AxisGrid& time) {
  const double period = kTwoPi / freq.spacing();
  if (time.span() > period * (1.0 + 1e-9))
    throw GridError("time span " + std::to_string(time.span()) +
                    " s exceeds the frequency-grid period " + std::to_string(period) + " s");
  const double dt_max = kPi / freq.max_abs();
  if (time.size() > 1 && time.spacing() > dt_max * (1.0 + 1e-9))
    throw GridError("time step " + std::to_string(time.spacing()) +
                    " s undersamples the frequency band (limit " + std::to_string(dt_max) + " s)");
}

/// Transforms a weight-embedded frequency-basis kernel to the time basis.
inline DiscretizedKernel symplectic_fourier(const DiscretizedKernel& k, const TimeGrid& row_times,
                                            const TimeGrid& col_times,
                                            FourierPairing pairing = FourierPairing::operator_basis) {
  if (k.basis != Basis::frequency) throw GridError("kernel is not in the frequency basis");
  if (!k.weight_embedded) throw GridError("Fourier transform requires embedded weights");
  check_nyquist(k.rows, row_times);
  check_nyquist(k.cols, col_times);
  const ComplexMatrix er = fourier_matrix(k.rows, row_times);
  const ComplexMatrix ec = fourier_matrix(k.cols, col_times);
  DiscretizedKernel out;
  out.values = pairing == FourierPairing::operator_basis ? ComplexMatrix(er * k.values * ec.adjoint())
                                                         : ComplexMatrix(er * k.values * ec.transpose());
  out.rows = row_times;
  out.cols = col_times;
  out.basis = Basis::time;
  out.weight_embedded = true;
  return out;
}

inline DiscretizedKernel symplectic_fourier(const DiscretizedKernel& k, const TimeGrid& times,
                                            FourierPairing pairing = FourierPairing::operator_basis) {
  return symplectic_fourier(k, times, times, pairing);
}

/// Inverse of symplectic_fourier onto the given frequency grids.
inline DiscretizedKernel inverse_symplectic_fourier(const DiscretizedKernel& k,
                                                    const FrequencyGrid& row_freq,
                                                    const FrequencyGrid& col_freq,
                                                    FourierPairing pairing = FourierPairing::operator_basis) {
  if (k.basis != Basis::time) throw GridError("kernel is not in the time basis");
  if (!k.weight_embedded) throw GridError("Fourier transform requires embedded weights");
  const ComplexMatrix er = fourier_matrix(row_freq, k.rows);
  const ComplexMatrix ec = fourier_matrix(col_freq, k.cols);
  DiscretizedKernel out;
  out.values = pairing == FourierPairing::operator_basis ? ComplexMatrix(er.adjoint() * k.values * ec)
                                                         : ComplexMatrix(er.adjoint() * k.values * ec.conjugate());
  out.rows = row_freq;
  out.cols = col_freq;
  out.basis = Basis::frequency;
  out.weight_embedded = true;
  return out;
}

}  // namespace bqkd
