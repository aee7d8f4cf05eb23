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
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "bqkd/common.hpp"
#include "bqkd/covariance.hpp"
#include "bqkd/grid.hpp"

namespace bqkd {

// ---------------------------------------------------------------------------
// Fiber

struct FiberLink {
  double length_km = 0.0;
  double alpha_db_per_km = 0.2;
  double beta2_s2_per_km = -21.7e-24;  // standard single-mode fiber near 1550 nm

  void validate() const {
    if (!(length_km >= 0.0) || !std::isfinite(length_km)) throw ConfigError("fiber length must be >= 0");
    if (!(alpha_db_per_km >= 0.0) || !std::isfinite(alpha_db_per_km))
      throw ConfigError("fiber loss coefficient must be >= 0");
    if (!std::isfinite(beta2_s2_per_km)) throw ConfigError("fiber dispersion must be finite");
  }
  /// Characteristic loss length L0 (km).
  double loss_length_km() const {
    return alpha_db_per_km > 0.0 ? 1.0 / std::log(std::pow(10.0, 0.1 * alpha_db_per_km))
                                 : std::numeric_limits<double>::infinity();
  }
  /// Amplitude transmittivity exp(-L / (2 L0)).
  double amplitude() const { return std::exp(-length_km / (2.0 * loss_length_km())); }
  /// Accumulated group-velocity dispersion beta2 L (s^2).
  double chirp() const { return beta2_s2_per_km * length_km; }
  double phase(double omega) const { return 0.5 * chirp() * omega * omega; }
};

/// Multiplies a frequency-basis JSA by exp(i beta2 L_A wA^2/2 + i beta2 L_B wB^2/2).
inline DiscretizedKernel apply_dispersion(DiscretizedKernel jsa, const FiberLink& a, const FiberLink& b) {
  if (jsa.basis != Basis::frequency) throw GridError("dispersion acts in the frequency basis");
  for (Eigen::Index j = 0; j < jsa.values.cols(); ++j)
    for (Eigen::Index i = 0; i < jsa.values.rows(); ++i)
      jsa.values(i, j) *= std::polar(1.0, a.phase(jsa.rows.points(i)) + b.phase(jsa.cols.points(j)));
  return jsa;
}

/// Same on Schmidt modes: Alice's modes get the phase, Bob's conjugated
/// modes get its conjugate.
inline SchmidtDecomposition apply_dispersion(SchmidtDecomposition sd, const FiberLink& a, const FiberLink& b) {
  for (Eigen::Index i = 0; i < sd.U.rows(); ++i) sd.U.row(i) *= std::polar(1.0, a.phase(sd.rows.points(i)));
  for (Eigen::Index i = 0; i < sd.V.rows(); ++i) sd.V.row(i) *= std::polar(1.0, -b.phase(sd.cols.points(i)));
  return sd;
}

// ---------------------------------------------------------------------------
// Receiver interferometer

enum Path : int { short_path = 0, long_path = 1 };

struct ReceiverInterferometer {
  double t = 1.0 / std::numbers::sqrt2;  // beam-splitter amplitude transmittivity
  std::array<double, 2> phase{0.0, 0.0};  // constant arm phases (short, long)
  std::array<double, 2> delay{0.0, 0.0};  // arm delays (s)
  /// eta[x][D]: amplitude transmittivity from path x to detector D.
  std::array<std::array<double, 2>, 2> eta{{{1.0, 1.0}, {1.0, 1.0}}};
  double xi = 1.0;  // mode-match amplitude

  double r() const { return std::sqrt(std::max(0.0, 1.0 - t * t)); }
  double xi_bar() const { return std::sqrt(std::max(0.0, 1.0 - xi * xi)); }

  void validate() const {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("interferometer transmittivity must lie in [0, 1]");
    if (!(xi >= 0.0 && xi <= 1.0)) throw ConfigError("mode-match amplitude must lie in [0, 1]");
    for (const auto& row : eta)
      for (double e : row)
        if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("path transmittivities must lie in [0, 1]");
    for (double d : delay)
      if (!std::isfinite(d)) throw ConfigError("interferometer delays must be finite");
  }
};

/// One output mode: detector, and the real amplitude picked up via each path.
struct TransformationRow {
  int detector = 0;
  bool interfering = false;
  std::array<double, 2> coefficient{0.0, 0.0};
};

/// Six output rows per party: two interfering (D0, D1) and four mismatch rows.
struct ReducedTransformation {
  std::array<TransformationRow, 6> rows;
  std::array<double, 2> phase{0.0, 0.0};
  std::array<double, 2> delay{0.0, 0.0};

  /// Complex row amplitudes at angular-frequency offset `omega`.
  ComplexVector amplitude(double omega) const {
    ComplexVector a(6);
    for (int r = 0; r < 6; ++r) {
      a(r) = 0.0;
      for (int x = 0; x < 2; ++x)
        a(r) += rows[r].coefficient[x] * std::polar(1.0, phase[x] + omega * delay[x]);
    }
    return a;
  }

  /// K^(D)_{x,y} = sum over rows at D of c_x c_y.
  Eigen::Matrix2d k_table(int detector) const {
    Eigen::Matrix2d k = Eigen::Matrix2d::Zero();
    for (const auto& row : rows)
      if (row.detector == detector)
        for (int x = 0; x < 2; ++x)
          for (int y = 0; y < 2; ++y) k(x, y) += row.coefficient[x] * row.coefficient[y];
    return k;
  }
};

inline ReducedTransformation build_reduced_transformation(const ReceiverInterferometer& rx,
                                                          const FiberLink& fiber = {}) {
  rx.validate();
  fiber.validate();
  const double f = fiber.amplitude();
  const double t = rx.t, r = rx.r(), xi = rx.xi, xb = rx.xi_bar();
  const auto& e = rx.eta;
  ReducedTransformation rt;
  rt.phase = rx.phase;
  rt.delay = rx.delay;
  rt.rows[0] = {0, true, {f * e[0][0] * xi * t * t, f * e[1][0] * xi * r * r}};
  rt.rows[1] = {1, true, {f * e[0][1] * xi * t * r, -f * e[1][1] * xi * t * r}};
  rt.rows[2] = {0, false, {f * e[0][0] * xb * t * t, 0.0}};
  rt.rows[3] = {0, false, {0.0, f * e[1][0] * xb * r * r}};
  rt.rows[4] = {1, false, {f * e[0][1] * xb * t * r, 0.0}};
  rt.rows[5] = {1, false, {0.0, -f * e[1][1] * xb * t * r}};
  return rt;
}

// ---------------------------------------------------------------------------
// Time grid and projections

/// Detection interval [begin, end) in seconds.
struct Interval {
  double begin = 0.0;
  double end = 0.0;
  double length() const { return end - begin; }
};

/// Uniform time grid with equal weights dt, as used for detection windows.
inline TimeGrid uniform_time_grid(double t_begin, double dt, Eigen::Index n) {
  if (!(dt > 0.0) || n < 2) throw ConfigError("time grid needs dt > 0 and at least two points");
  TimeGrid g;
  g.points = RealVector::LinSpaced(n, t_begin, t_begin + dt * static_cast<double>(n - 1));
  g.weights = RealVector::Constant(n, dt);
  return g;
}

namespace detail {

inline long grid_steps(double tau, double dt, const char* what) {
  const double s = tau / dt;
  const double k = std::round(s);
  if (std::abs(s - k) > 1e-6 * std::max(1.0, std::abs(s)))
    throw ConfigError(std::string(what) + " of " + std::to_string(tau) +
                      " s is not a multiple of the time step " + std::to_string(dt) + " s");
  return static_cast<long>(k);
}

/// Requires dt <= pi / max|w| so that Gram sums over the grid are exact.
inline void check_time_step(const AxisGrid& freq, double dt) {
  const double dt_max = kPi / freq.max_abs();
  if (dt > dt_max * (1.0 + 1e-9))
    throw GridError("time step " + std::to_string(dt) + " s undersamples the frequency band (limit " +
                    std::to_string(dt_max) + " s)");
}

/// Time-domain values of weight-embedded frequency modes at the times `t`,
/// kept on the alias-free period [-pi/dw, pi/dw) around zero and zero outside.
inline ComplexMatrix principal_time_modes(const AxisGrid& freq, const ComplexMatrix& modes, const AxisGrid& t) {
  ComplexMatrix e = fourier_matrix(freq, t);
  const double dw = freq.spacing();
  bool uniform = freq.size() > 1;
  for (Eigen::Index i = 1; i < freq.size() && uniform; ++i)
    uniform = std::abs(freq.points(i) - freq.points(i - 1) - dw) <= 1e-6 * std::abs(dw);
  if (!uniform) throw GridError("frequency grid of the modes must be uniform");
  const double half = kPi / dw;
  for (Eigen::Index j = 0; j < t.size(); ++j)
    if (t.points(j) < -half || t.points(j) >= half) e.row(j).setZero();
  return e * modes;
}

/// Index range [first, last) of grid points inside the interval.
inline std::pair<Eigen::Index, Eigen::Index> interval_rows(const TimeGrid& g, const Interval& iv) {
  const double dt = g.spacing(), t0 = g.points(0);
  if (!(iv.end > iv.begin)) throw ConfigError("detection interval is empty");
  const auto first = static_cast<Eigen::Index>(std::ceil((iv.begin - t0) / dt - 1e-9));
  const auto last = static_cast<Eigen::Index>(std::ceil((iv.end - t0) / dt - 1e-9));
  if (first < 0 || last > g.size())
    throw ConfigError("detection interval [" + std::to_string(iv.begin) + ", " + std::to_string(iv.end) +
                      ") lies outside the simulated time window");
  return {first, last};
}

}  // namespace detail

/// s^dagger P s for one detector and interval: a sum over path pairs of
/// windowed, delay-shifted identity kernels weighted by K^(D)_{x,y}.
struct PathProjectionKernel {
  int detector = 0;
  Interval interval;
  Eigen::Matrix2d k = Eigen::Matrix2d::Zero();
  std::array<double, 2> phase{0.0, 0.0};
  std::array<double, 2> delay{0.0, 0.0};

  /// Weight-embedded operator on a uniform time grid:
  /// W(t, t') = sum K_xy e^{i(phi_y - phi_x)} rect_I(t + tau_x) delta(t' - t - tau_x + tau_y).
  ComplexMatrix dense(const TimeGrid& g) const {
    const double dt = g.spacing();
    const auto [first, last] = detail::interval_rows(g, interval);
    std::array<long, 2> s{detail::grid_steps(delay[0], dt, "delay"), detail::grid_steps(delay[1], dt, "delay")};
    const Eigen::Index n = g.size();
    ComplexMatrix w = ComplexMatrix::Zero(n, n);
    for (int x = 0; x < 2; ++x)
      for (int y = 0; y < 2; ++y) {
        if (k(x, y) == 0.0) continue;
        const cplx c = k(x, y) * std::polar(1.0, phase[y] - phase[x]);
        for (Eigen::Index d = first; d < last; ++d) {
          const Eigen::Index i = d - s[x], j = d - s[y];
          if (i < 0 || i >= n || j < 0 || j >= n) throw GridError("grid shift out of window");
          w(i, j) += c;
        }
      }
    return w;
  }
};

inline PathProjectionKernel path_projection_kernel(const ReducedTransformation& rt, int detector,
                                                   const Interval& interval) {
  if (detector != 0 && detector != 1) throw ConfigError("detector index must be 0 or 1");
  return {detector, interval, rt.k_table(detector), rt.phase, rt.delay};
}

// ---------------------------------------------------------------------------
// Fast-oscillation filter

/// A cross term between two copies of a chirped wave packet. Its integrand
/// oscillates at `rate` rad/s (analytic, from delay difference / chirp).
struct OscillatingTerm {
  cplx value = 0.0;
  double rate = 0.0;
};

struct FilterResult {
  cplx total = 0.0;
  double dropped_mass = 0.0;  // sum |dropped| / sum |all|
  int dropped = 0;
};

/// Cycles per grid cell of a chirped overlap with delay difference `delta_tau`.
inline double oscillation_cycles(double delta_tau, double chirp, double dt) {
  if (chirp == 0.0 || delta_tau == 0.0) return 0.0;
  return std::abs(delta_tau / chirp) * dt / kTwoPi;
}

/// Drops terms oscillating faster than `threshold` cycles per cell of size `dt`.
inline FilterResult fast_oscillation_filter(const std::vector<OscillatingTerm>& terms, double dt, double threshold) {
  FilterResult out;
  double all = 0.0, dropped = 0.0;
  for (const auto& t : terms) {
    all += std::abs(t.value);
    if (t.rate * dt / kTwoPi > threshold) {
      dropped += std::abs(t.value);
      ++out.dropped;
    } else {
      out.total += t.value;
    }
  }
  out.dropped_mass = all > 0.0 ? dropped / all : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Final covariance

enum class Party { alice, bob };

struct Projection {
  Party party = Party::alice;
  int detector = 0;
  Interval interval;
};

struct OpticalSetup {
  FiberLink fiber_a;
  FiberLink fiber_b;
  ReceiverInterferometer rx_a;
  ReceiverInterferometer rx_b;
  TimeGrid time;                  // uniform detection grid
  double filter_threshold = 8.0;  // cycles per grid cell
};

/// The detected state: per pump path z, Alice's and Bob's physical modes in
/// the time domain; Gamma = sum_z M_z D_z M_z^dagger. Detection operators
/// enter through Gram matrices in this mode space, so every determinant has
/// dimension at most 2 x (number of modes); a party whose frequency grid is
/// smaller than the mode count is handled on its grid instead.
class FinalCovariance {
 public:
  FinalCovariance(const PumpSplitState& state, const OpticalSetup& setup, int order = 0)
      : FinalCovariance(state, setup, order,
                        {build_reduced_transformation(setup.rx_a, setup.fiber_a),
                         build_reduced_transformation(setup.rx_b, setup.fiber_b)}) {}

  /// With explicit receiver transformations (Alice, Bob) in place of the ones
  /// built from `setup`.
  FinalCovariance(const PumpSplitState& state, const OpticalSetup& setup, int order,
                  const std::array<ReducedTransformation, 2>& transformations)
      : setup_(setup), rt_(transformations) {
    if (state.source.form != CovarianceForm::reduced)
      throw ConfigError("detection requires a two-party (reduced-form) source");
    validate(setup.time);
    dt_ = setup.time.spacing();
    for (Eigen::Index i = 1; i < setup.time.size(); ++i)
      if (std::abs(setup.time.weights(i) - dt_) > 1e-12 * dt_ ||
          std::abs(setup.time.points(i) - setup.time.points(i - 1) - dt_) > 1e-9 * dt_)
        throw ConfigError("detection time grid must be uniform");
    long rx_pad = 0;
    for (int p = 0; p < 2; ++p)
      for (int x = 0; x < 2; ++x) {
        shift_[p][x] = detail::grid_steps(rt_[p].delay[x], dt_, "interferometer delay");
        rx_pad = std::max<long>(rx_pad, std::abs(shift_[p][x]));
      }
    pad_ = rx_pad;
    const Eigen::Index r = state.source.rank();
    k_ = 2 * r;
    pump_delay_ = {state.delay(0), state.delay(1)};
    const SchmidtDecomposition sd = apply_dispersion(state.source, setup.fiber_a, setup.fiber_b);
    RealVector cm1(k_), sn(k_);
    const RealVector sigma = sd.sigma();
    for (int z = 0; z < 2; ++z)
      for (Eigen::Index k = 0; k < r; ++k) {
        const double s = state.k(z) * sigma(k);
        cm1(z * r + k) = 0.5 * (cosh_series(s, order) - 1.0);
        sn(z * r + k) = 0.5 * sinh_series(s, order);
      }
    core_ = ComplexMatrix::Zero(2 * k_, 2 * k_);
    core_.topLeftCorner(k_, k_) = cm1.asDiagonal();
    core_.bottomRightCorner(k_, k_) = cm1.asDiagonal();
    core_.topRightCorner(k_, k_) = sn.asDiagonal();
    core_.bottomLeftCorner(k_, k_) = sn.asDiagonal();
    cm1_ = cm1;
    sn_ = sn;

    // Columns per pump path z: the time-domain modes, or, when a party's
    // frequency grid is smaller than the mode count, the grid's own Fourier
    // columns with the modes kept as coefficients E_p. Pump-path delays are
    // exact time shifts; Bob's physical modes are conj(V).
    detail::check_time_step(sd.rows, dt_);
    detail::check_time_step(sd.cols, dt_);
    const Eigen::Index n_ext = setup.time.size() + 2 * pad_;
    const std::array<ComplexMatrix, 2> freq_modes{sd.U, sd.V.conjugate()};
    const std::array<const AxisGrid*, 2> grids{&sd.rows, &sd.cols};
    for (int p = 0; p < 2; ++p) {
      const Eigen::Index nf = grids[p]->size();
      const bool ported = nf < r;
      block_[p] = ported ? nf : r;
      modes_[p].resize(n_ext, 2 * block_[p]);
      if (ported) {
        coef_[p] = ComplexMatrix::Zero(2 * nf, k_);
        for (int z = 0; z < 2; ++z)
          coef_[p].block(z * nf, z * r, nf, r) = (p == 0 ? std::polar(1.0, state.phase(z)) : cplx(1.0)) * freq_modes[p];
      }
      for (int z = 0; z < 2; ++z) {
        const TimeGrid ext = uniform_time_grid(setup.time.points(0) - dt_ * static_cast<double>(pad_) - state.delay(z),
                                               dt_, n_ext);
        if (ported)
          modes_[p].middleCols(z * nf, nf) = detail::principal_time_modes(*grids[p], ComplexMatrix::Identity(nf, nf), ext);
        else
          modes_[p].middleCols(z * r, r) = (p == 0 ? std::polar(1.0, state.phase(z)) : cplx(1.0)) *
                                           detail::principal_time_modes(*grids[p], freq_modes[p], ext);
      }
      photons_[p] = to_basis(p, ComplexMatrix(cm1.cast<cplx>().asDiagonal()));
    }
    if (block_[0] != r || block_[1] != r) {
      const Eigen::Index da = 2 * block_[0], db = 2 * block_[1];
      ComplexMatrix l = ComplexMatrix::Zero(da + db, 2 * k_);
      l.topLeftCorner(da, k_) = block_[0] == r ? ComplexMatrix::Identity(k_, k_) : coef_[0];
      l.bottomRightCorner(db, k_) = block_[1] == r ? ComplexMatrix::Identity(k_, k_) : ComplexMatrix(coef_[1].conjugate());
      basis_core_ = l * core_ * l.adjoint();
    }
    for (int p = 0; p < 2; ++p) {
      const double inside = (photons_[p] * (modes_[p].adjoint() * modes_[p])).trace().real();
      double total = 0.0;
      for (Eigen::Index k = 0; k < k_; ++k) total += cm1(k) * freq_modes[p].col(k % r).squaredNorm();
      if (total > 0.0 && inside < (1.0 - 1e-6) * total)
        warnings.push_back(std::string(p == 0 ? "Alice" : "Bob") + "'s photons extend beyond the time window (" +
                           std::to_string(100.0 * (1.0 - inside / total)) + "% outside)");
    }
    warnings.insert(warnings.end(), state.warnings.begin(), state.warnings.end());
  }

  Eigen::Index modes() const { return k_; }
  double time_step() const { return dt_; }
  /// The whole detection window [t_0, t_last + dt).
  Interval time_window() const {
    const auto n = setup_.time.size();
    return {setup_.time.points(0), setup_.time.points(n - 1) + dt_};
  }
  const ComplexMatrix& core() const { return core_; }
  const ReducedTransformation& transformation(Party p) const { return rt_[index(p)]; }

  /// Gram matrix M^dagger (s^dagger P s) M for one projection, in the
  /// party's column basis (the mode space unless the party is ported).
  const ComplexMatrix& gram(const Projection& pr) const {
    const auto [first, last] = detail::interval_rows(setup_.time, pr.interval);
    const auto key = std::make_tuple(index(pr.party), pr.detector, first, last);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    const int p = index(pr.party);
    const Eigen::Matrix2d kt = rt_[p].k_table(pr.detector);
    const double chirp = (p == 0 ? setup_.fiber_a : setup_.fiber_b).chirp();
    const Eigen::Index len = last - first;
    const Eigen::Index r = block_[p];
    ComplexMatrix g = ComplexMatrix::Zero(2 * r, 2 * r);
    for (int x = 0; x < 2; ++x)
      for (int y = 0; y < 2; ++y) {
        if (kt(x, y) == 0.0) continue;
        const cplx c = kt(x, y) * std::polar(1.0, rt_[p].phase[y] - rt_[p].phase[x]);
        const ComplexMatrix term = c * rows(p, x, first, len).adjoint() * rows(p, y, first, len);
        // Blocks pair pump path z (rows) with z' (columns).
        for (int z = 0; z < 2; ++z)
          for (int zp = 0; zp < 2; ++zp) {
            const auto block = term.block(z * r, zp * r, r, r);
            const double shift = rt_[p].delay[y] + pump_delay_[zp] - rt_[p].delay[x] - pump_delay_[z];
            if (oscillation_cycles(shift, chirp, dt_) > setup_.filter_threshold) {
              filter_dropped_ += block.norm();
              continue;
            }
            filter_kept_ += block.norm();
            g.block(z * r, zp * r, r, r) += block;
          }
      }
    return cache_.emplace(key, std::move(g)).first->second;
  }

  /// An operator whose determinant equals det(1 + s^dagger P s Gamma):
  /// core * blockdiag(G_A, conj(G_B)) in mode space, or its Sylvester
  /// transpose blockdiag(G_A, conj(G_B)) * L core L^dagger in the column basis.
  ComplexMatrix reduced_operator(const std::vector<Projection>& projections) const {
    const Eigen::Index da = 2 * block_[0], db = 2 * block_[1];
    ComplexMatrix ga = ComplexMatrix::Zero(da, da), gb = ComplexMatrix::Zero(db, db);
    for (const auto& pr : projections) (pr.party == Party::alice ? ga : gb) += gram(pr);
    const ComplexMatrix gbc = gb.conjugate();
    if (basis_core_.size() > 0) {
      ComplexMatrix out(da + db, da + db);
      out.topRows(da) = ga * basis_core_.topRows(da);
      out.bottomRows(db) = gbc * basis_core_.bottomRows(db);
      return out;
    }
    // core_ has diagonal blocks [[c, s], [s, c]], so the product is a row scaling.
    ComplexMatrix out(2 * k_, 2 * k_);
    out.topLeftCorner(k_, k_) = cm1_.asDiagonal() * ga;
    out.topRightCorner(k_, k_) = sn_.asDiagonal() * gbc;
    out.bottomLeftCorner(k_, k_) = sn_.asDiagonal() * ga;
    out.bottomRightCorner(k_, k_) = cm1_.asDiagonal() * gbc;
    return out;
  }

  /// Probability that no photon is registered in any of the projections.
  double vacuum_probability(const std::vector<Projection>& projections) const {
    if (projections.empty()) return 1.0;
    const cplx ld = logdet_lu(reduced_operator(projections));
    if (std::abs(std::sin(ld.imag())) > 1e-6 || std::cos(ld.imag()) < 0.0)
      throw NumericalError("determinant breakdown in the detection probability: log det = (" +
                           std::to_string(ld.real()) + ", " + std::to_string(ld.imag()) + ")");
    return std::exp(-ld.real());
  }

  /// Mean number of photons reaching the projection.
  double mean_photons(const Projection& pr) const {
    return (photons_[index(pr.party)] * gram(pr)).trace().real();
  }

  /// Pieces Tr(X), Tr(X^2) of the logarithm expansion for a projection set.
  PoissonPieces poisson_pieces(const std::vector<Projection>& projections) const {
    return bqkd::poisson_pieces(reduced_operator(projections));
  }

  /// Relative Frobenius mass of Gram cross terms removed by the filter.
  double filtered_mass() const {
    const double all = filter_kept_ + filter_dropped_;
    return all > 0.0 ? filter_dropped_ / all : 0.0;
  }

  Warnings warnings;

 private:
  static int index(Party p) { return p == Party::alice ? 0 : 1; }

  /// E X E^dagger for a mode-space matrix X; X itself for an unported party.
  ComplexMatrix to_basis(int p, const ComplexMatrix& x) const {
    if (coef_[p].size() == 0) return x;
    return coef_[p] * x * coef_[p].adjoint();
  }

  /// Mode values at detector times t - tau_x for t in rows [first, first + len).
  Eigen::Block<const ComplexMatrix> rows(int p, int x, Eigen::Index first, Eigen::Index len) const {
    const Eigen::Index start = first + pad_ - shift_[p][x];
    if (start < 0 || start + len > modes_[p].rows()) throw GridError("grid shift out of window");
    return modes_[p].middleRows(start, len);
  }

  OpticalSetup setup_;
  double dt_ = 0.0;
  long pad_ = 0;
  std::array<std::array<long, 2>, 2> shift_{};
  std::array<double, 2> pump_delay_{};
  std::array<ReducedTransformation, 2> rt_;
  Eigen::Index k_ = 0;
  ComplexMatrix core_;
  RealVector cm1_;
  RealVector sn_;
  std::array<ComplexMatrix, 2> modes_;
  std::array<Eigen::Index, 2> block_{};   // columns per pump path
  std::array<ComplexMatrix, 2> coef_;     // E_p; empty when columns are modes
  std::array<ComplexMatrix, 2> photons_;  // E_p diag(c - 1) E_p^dagger
  ComplexMatrix basis_core_;              // L core L^dagger; empty when unported
  mutable std::map<std::tuple<int, int, Eigen::Index, Eigen::Index>, ComplexMatrix> cache_;
  mutable double filter_kept_ = 0.0;
  mutable double filter_dropped_ = 0.0;
};

// ---------------------------------------------------------------------------
// Poisson approximation

struct PoissonTerms {
  double single_trace = 0.0;  // Tr(Gamma_final): mean detected photons
  double hs_norm_sq = 0.0;    // two-photon interference term
  double dropped_mass = 0.0;
  Warnings warnings;

  /// exp(-Tr + HS/2): vacuum probability to second order of the log expansion.
  double vacuum_probability() const { return std::exp(-single_trace + 0.5 * hs_norm_sq); }
};

/// Lowest-order closed forms: explicit path sums of windowed overlaps of the
/// time-domain JSA, without the Schmidt-mode determinant.
inline PoissonTerms poisson_terms(const PumpSplitState& state, const OpticalSetup& setup,
                                  const std::vector<Projection>& projections) {
  const SchmidtDecomposition& sd = state.source;
  if (sd.form != CovarianceForm::reduced) throw ConfigError("Poisson terms require a two-party source");
  PoissonTerms out;
  const double mu = mean_pairs(state);
  if (mu > 0.1)
    out.warnings.push_back("mean pair number " + std::to_string(mu) + " > 0.1; Poisson approximation is coarse");
  const TimeGrid& tg = setup.time;
  const double dt = tg.spacing();
  const std::array<ReducedTransformation, 2> rt{build_reduced_transformation(setup.rx_a, setup.fiber_a),
                                                build_reduced_transformation(setup.rx_b, setup.fiber_b)};
  const std::array<double, 2> chirp{setup.fiber_a.chirp(), setup.fiber_b.chirp()};
  std::array<std::array<long, 2>, 2> shift{};
  long pad = 0;
  for (int p = 0; p < 2; ++p)
    for (int x = 0; x < 2; ++x) {
      shift[p][x] = detail::grid_steps(rt[p].delay[x], dt, "interferometer delay");
      pad = std::max<long>(pad, std::abs(shift[p][x]));
    }
  const TimeGrid ext = uniform_time_grid(tg.points(0) - dt * static_cast<double>(pad), dt, tg.size() + 2 * pad);
  const ComplexMatrix ea = fourier_matrix(sd.rows, ext), eb = fourier_matrix(sd.cols, ext);
  // Amplitude a with Gamma_AB ~ a psi, Gamma_AA ~ a^2 psi psi^dagger.
  const double amp = 0.5 * sd.gain_factor() * sd.gain;
  const DiscretizedKernel psi0{sd.U * sd.coefficients.asDiagonal() * sd.V.adjoint(), sd.rows, sd.cols,
                               Basis::frequency, true};
  const DiscretizedKernel psi = apply_dispersion(psi0, setup.fiber_a, setup.fiber_b);
  std::array<ComplexMatrix, 2> psi_t;  // time-domain JSA per pump path, on the extended grid
  std::array<std::array<ComplexMatrix, 2>, 2> rho;  // one-photon densities [party][path]
  for (int z = 0; z < 2; ++z) {
    ComplexVector da(sd.rows.size()), db(sd.cols.size());
    for (Eigen::Index i = 0; i < da.size(); ++i) da(i) = std::polar(1.0, sd.rows.points(i) * state.delay(z));
    for (Eigen::Index i = 0; i < db.size(); ++i) db(i) = std::polar(1.0, sd.cols.points(i) * state.delay(z));
    const ComplexMatrix a = ea * da.asDiagonal() * psi.values;  // Alice in time, Bob in frequency
    const ComplexMatrix b = eb * db.asDiagonal() * psi.values.transpose();
    psi_t[z] = a * db.asDiagonal() * eb.transpose();
    // The partner's time integral runs over the whole axis: done in frequency.
    rho[0][z] = a * a.adjoint();
    rho[1][z] = b * b.adjoint();
  }
  auto start = [&](int p, int x, Eigen::Index first) { return first + pad - shift[p][x]; };

  std::vector<OscillatingTerm> single, pair;
  for (const auto& pr : projections) {
    const int p = pr.party == Party::alice ? 0 : 1;
    const auto [first, last] = detail::interval_rows(tg, pr.interval);
    const Eigen::Index len = last - first;
    const Eigen::Matrix2d kt = rt[p].k_table(pr.detector);
    for (int z = 0; z < 2; ++z) {
      const ComplexMatrix& density = rho[p][z];
      for (int x = 0; x < 2; ++x)
        for (int y = 0; y < 2; ++y) {
          if (kt(x, y) == 0.0) continue;
          cplx s = 0.0;
          for (Eigen::Index d = 0; d < len; ++d) s += density(start(p, y, first) + d, start(p, x, first) + d);
          const double w = amp * amp * state.k(z) * state.k(z) * kt(x, y);
          single.push_back({w * std::polar(1.0, rt[p].phase[y] - rt[p].phase[x]) * s,
                            x == y || chirp[p] == 0.0 ? 0.0 : std::abs((rt[p].delay[y] - rt[p].delay[x]) / chirp[p])});
        }
    }
  }
  for (const auto& pa : projections) {
    if (pa.party != Party::alice) continue;
    const auto [fa, la] = detail::interval_rows(tg, pa.interval);
    const Eigen::Matrix2d ka = rt[0].k_table(pa.detector);
    for (const auto& pb : projections) {
      if (pb.party != Party::bob) continue;
      const auto [fb, lb] = detail::interval_rows(tg, pb.interval);
      const Eigen::Matrix2d kb = rt[1].k_table(pb.detector);
      for (int z = 0; z < 2; ++z)
        for (int zp = 0; zp < 2; ++zp)
          for (int x = 0; x < 2; ++x)
            for (int y = 0; y < 2; ++y)
              for (int xp = 0; xp < 2; ++xp)
                for (int yp = 0; yp < 2; ++yp) {
                  const double w = state.k(z) * state.k(zp) * ka(x, y) * kb(xp, yp);
                  if (w == 0.0) continue;
                  const auto lhs = psi_t[z].block(start(0, y, fa), start(1, yp, fb), la - fa, lb - fb);
                  const auto rhs = psi_t[zp].block(start(0, x, fa), start(1, xp, fb), la - fa, lb - fb);
                  const cplx s = (lhs.array() * rhs.conjugate().array()).sum();
                  const double phase = state.phase(z) - state.phase(zp) + rt[0].phase[y] - rt[0].phase[x] +
                                       rt[1].phase[yp] - rt[1].phase[xp];
                  const double da = (rt[0].delay[y] - rt[0].delay[x]) + (state.delay(z) - state.delay(zp));
                  const double db = (rt[1].delay[yp] - rt[1].delay[xp]) + (state.delay(z) - state.delay(zp));
                  const double rate = std::max(chirp[0] == 0.0 ? 0.0 : std::abs(da / chirp[0]),
                                               chirp[1] == 0.0 ? 0.0 : std::abs(db / chirp[1]));
                  pair.push_back({2.0 * amp * amp * w * std::polar(1.0, phase) * s, rate});
                }
    }
  }
  const FilterResult fs = fast_oscillation_filter(single, dt, setup.filter_threshold);
  const FilterResult fp = fast_oscillation_filter(pair, dt, setup.filter_threshold);
  out.single_trace = fs.total.real();
  out.hs_norm_sq = fp.total.real();
  out.dropped_mass = std::max(fs.dropped_mass, fp.dropped_mass);
  return out;
}

}  // namespace bqkd
