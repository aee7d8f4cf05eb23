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
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "bqkd/covariance.hpp"
#include "bqkd/grid.hpp"
#include "bqkd/optical_train.hpp"

namespace bqkd::oracle {

/// Unit-norm random complex JSA on (na x nb) points with at most `rank` modes.
inline DiscretizedKernel random_jsa(std::mt19937_64& rng, Eigen::Index na, Eigen::Index nb, Eigen::Index rank) {
  std::normal_distribution<double> n01;
  ComplexMatrix a(na, rank), b(rank, nb);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = cplx(n01(rng), n01(rng));
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = cplx(n01(rng), n01(rng));
  ComplexMatrix v = a * b;
  v /= v.norm();
  AxisGrid ga{RealVector::LinSpaced(na, -1.0, 1.0), RealVector::Ones(na), 0.0};
  AxisGrid gb{RealVector::LinSpaced(nb, -1.0, 1.0), RealVector::Ones(nb), 0.0};
  return DiscretizedKernel{v, ga, gb, Basis::frequency, true};
}

/// Random Hermitian matrix with spectrum in [0, 1].
inline ComplexMatrix random_detection(std::mt19937_64& rng, Eigen::Index n, Eigen::Index rank) {
  std::normal_distribution<double> n01;
  ComplexMatrix a(n, rank);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = cplx(n01(rng), n01(rng));
  Eigen::HouseholderQR<ComplexMatrix> qr(a);
  const ComplexMatrix q = qr.householderQ() * ComplexMatrix::Identity(n, rank);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  RealVector eta(rank);
  for (Eigen::Index i = 0; i < rank; ++i) eta(i) = u(rng);
  return q * eta.asDiagonal() * q.adjoint();
}

/// Receiver with separate path and detector amplitudes, eta[x][D] = path[x] det[D].
struct FactoredReceiver {
  double t = 0.6;
  std::array<double, 2> phase{0.3, -1.1};
  std::array<double, 2> delay{0.0, 2.0};
  std::array<double, 2> path{0.9, 0.8};
  std::array<double, 2> det{0.7, 0.95};
  double xi = 0.85;

  ReceiverInterferometer interferometer() const {
    ReceiverInterferometer rx;
    rx.t = t;
    rx.phase = phase;
    rx.delay = delay;
    for (int x = 0; x < 2; ++x)
      for (int d = 0; d < 2; ++d) rx.eta[x][d] = path[x] * det[d];
    rx.xi = xi;
    return rx;
  }
};

using Mat6 = Eigen::Matrix<cplx, 6, 6>;

namespace detail {

/// Two-mode real rotation [[c, -s], [s, c]] on modes (i, j).
inline Mat6 rotation(int i, int j, double c, double s) {
  Mat6 m = Mat6::Identity();
  m(i, i) = c;
  m(i, j) = -s;
  m(j, i) = s;
  m(j, j) = c;
  return m;
}

}  // namespace detail

/// Output mode -> detector for element_chain.
inline constexpr std::array<int, 6> kChainDetector{0, 1, 0, 0, 1, 1};

/// Explicit six-mode element chain at one frequency offset: fiber, input
/// splitter, arm phases/delays/losses, mode-mismatch splitters, output
/// splitter (adjoint of the input one), detector efficiencies.
inline Mat6 element_chain(const FactoredReceiver& rx, const FiberLink& fiber, double omega) {
  const double t = rx.t, r = std::sqrt(1.0 - t * t), xb = std::sqrt(1.0 - rx.xi * rx.xi);
  Mat6 cd = Mat6::Identity();
  cd(0, 0) = std::polar(fiber.amplitude(), 0.5 * fiber.beta2_s2_per_km * fiber.length_km * omega * omega);
  const Mat6 b_in = detail::rotation(0, 1, t, r);
  Mat6 arms = Mat6::Identity();
  for (int x = 0; x < 2; ++x) arms(x, x) = std::polar(rx.path[x], rx.phase[x] + omega * rx.delay[x]);
  const Mat6 mismatch = detail::rotation(0, 2, rx.xi, xb) * detail::rotation(1, 3, rx.xi, xb);
  // Output splitter on (s, l) pairs: (0, 1), (2, vacuum 4), (vacuum 5, 3).
  Mat6 b_out = Mat6::Zero();
  const Eigen::Matrix2d bt = (Eigen::Matrix2d() << t, r, -r, t).finished();
  const std::array<std::array<int, 2>, 3> in{{{0, 1}, {2, 4}, {5, 3}}};
  const std::array<std::array<int, 2>, 3> out{{{0, 1}, {2, 4}, {3, 5}}};
  for (int p = 0; p < 3; ++p)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) b_out(out[p][a], in[p][b]) = bt(a, b);
  Mat6 dets = Mat6::Identity();
  for (int m = 0; m < 6; ++m) dets(m, m) = rx.det[kChainDetector[m]];
  return dets * b_out * mismatch * arms * b_in * cd;
}

/// Vacuum probability from the covariance transformed in the full
/// (6 x grid) space and grid-level time projections E_I^dagger E_I.
inline double chain_vacuum_probability(const PumpSplitState& st, int order,
                                       const std::array<FactoredReceiver, 2>& rx,
                                       const std::array<FiberLink, 2>& fiber, const TimeGrid& tg,
                                       const std::vector<Projection>& projections) {
  const RenormalizedCovariance gamma = st.total(order);
  const std::array<const AxisGrid*, 2> grids{&st.source.rows, &st.source.cols};
  const std::array<Eigen::Index, 2> n{grids[0]->size(), grids[1]->size()};
  const Eigen::Index dim = 6 * (n[0] + n[1]);
  ComplexMatrix s = ComplexMatrix::Zero(dim, n[0] + n[1]);
  for (int p = 0; p < 2; ++p) {
    const Eigen::Index row0 = p == 0 ? 0 : 6 * n[0], col0 = p == 0 ? 0 : n[0];
    for (Eigen::Index i = 0; i < n[p]; ++i) {
      const Mat6 m = element_chain(rx[p], fiber[p], grids[p]->points(i));
      for (int r = 0; r < 6; ++r) s(row0 + r * n[p] + i, col0 + i) = p == 0 ? m(r, 0) : std::conj(m(r, 0));
    }
  }
  const ComplexMatrix final_gamma = s * gamma.values * s.adjoint();
  ComplexMatrix w = ComplexMatrix::Zero(dim, dim);
  for (const auto& pr : projections) {
    const int p = pr.party == Party::alice ? 0 : 1;
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < tg.size(); ++j)
      if (tg.points(j) >= pr.interval.begin - 1e-12 && tg.points(j) < pr.interval.end - 1e-12) idx.push_back(j);
    TimeGrid sub;
    sub.points.resize(static_cast<Eigen::Index>(idx.size()));
    sub.weights.resize(sub.points.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      sub.points(static_cast<Eigen::Index>(k)) = tg.points(idx[k]);
      sub.weights(static_cast<Eigen::Index>(k)) = tg.weights(idx[k]);
    }
    const ComplexMatrix e = fourier_matrix(*grids[p], sub);
    ComplexMatrix proj = e.adjoint() * e;
    if (p == 1) proj = proj.conjugate().eval();
    const Eigen::Index row0 = p == 0 ? 0 : 6 * n[0];
    for (int r = 0; r < 6; ++r)
      if (kChainDetector[r] == pr.detector) w.block(row0 + r * n[p], row0 + r * n[p], n[p], n[p]) += proj;
  }
  const ComplexMatrix m = ComplexMatrix::Identity(dim, dim) + w * final_gamma;
  return 1.0 / std::abs(Eigen::PartialPivLU<ComplexMatrix>(m).determinant());
}

/// Uniform grid on [-half, half] with equal weights.
inline AxisGrid equal_weight_grid(Eigen::Index n, double half) {
  AxisGrid g;
  g.points = RealVector::LinSpaced(n, -half, half);
  g.weights = RealVector::Constant(n, 2.0 * half / static_cast<double>(n - 1));
  return g;
}

/// Two-mode source with Gaussian and first-order Hermite modes on a uniform grid.
inline SchmidtDecomposition hermite_source(Eigen::Index n, double half, double gain) {
  SchmidtDecomposition sd;
  sd.rows = equal_weight_grid(n, half);
  sd.cols = sd.rows;
  ComplexMatrix u(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = sd.rows.points(i), g = std::exp(-0.5 * w * w) * std::sqrt(sd.rows.weights(i));
    u(i, 0) = g;
    u(i, 1) = w * g;
  }
  u.col(0).normalize();
  u.col(1).normalize();
  sd.U = u;
  sd.V = u;
  sd.coefficients = Eigen::Vector2d(0.8, 0.6);
  sd.gain = gain;
  return sd;
}

}  // namespace bqkd::oracle
