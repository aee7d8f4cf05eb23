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

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "bqkd/common.hpp"
#include "bqkd/covariance.hpp"
#include "bqkd/grid.hpp"

namespace bqkd {

/// Permanent of a square matrix (Ryser formula with Gray-code updates).
inline cplx permanent(const ComplexMatrix& a) {
  const int n = static_cast<int>(a.rows());
  if (n != a.cols()) throw std::invalid_argument("permanent of a non-square matrix");
  if (n == 0) return 1.0;
  if (n > 24) throw std::invalid_argument("permanent too large");
  ComplexVector row_sums = ComplexVector::Zero(n);
  cplx total = 0.0;
  std::uint32_t gray = 0;
  const std::uint32_t count = 1u << n;
  for (std::uint32_t k = 1; k < count; ++k) {
    const int bit = std::countr_zero(k);
    const std::uint32_t mask = 1u << bit;
    gray ^= mask;
    if (gray & mask)
      row_sums += a.col(bit);
    else
      row_sums -= a.col(bit);
    cplx prod = 1.0;
    for (int i = 0; i < n; ++i) prod *= row_sums(i);
    const int ones = std::popcount(gray);
    total += ((n - ones) % 2 == 0 ? 1.0 : -1.0) * prod;
  }
  return total;
}

struct FockOracleOptions {
  int cutoff = 6;                 // maximum total pair number
  double tail_tolerance = 1e-8;   // allowed discarded probability
  double prune = 1e-15;           // drop basis states below this probability
  Eigen::Index max_grid = 12;
};

/// Brute-force photon-number expansion of the two-party squeezed vacuum
/// generated by a small JSA: a product of two-mode squeezed states over the
/// Schmidt modes, truncated in the total pair number.
///
/// Detection operators act on the physical (Alice grid) + (Bob grid) space.
class FockOracle {
 public:
  FockOracle(const DiscretizedKernel& jsa, double gain, ProcessType process, FockOracleOptions opt = {})
      : opt_(opt) {
    if (jsa.values.rows() > opt.max_grid || jsa.values.cols() > opt.max_grid)
      throw std::invalid_argument("Fock oracle grid exceeds " + std::to_string(opt.max_grid) + " points");
    if (opt.cutoff < 0 || opt.cutoff > 6) throw std::invalid_argument("Fock oracle cutoff must lie in [0, 6]");
    const SchmidtDecomposition sd = schmidt(jsa, process, gain);
    const RealVector sigma = sd.sigma();
    std::vector<Eigen::Index> keep;
    for (Eigen::Index k = 0; k < sigma.size(); ++k)
      if (std::pow(std::tanh(0.5 * sigma(k)), 2) > 1e-14) keep.push_back(k);
    r_ = static_cast<int>(keep.size());
    na_ = jsa.values.rows();
    nb_ = jsa.values.cols();
    modes_ = ComplexMatrix::Zero(na_ + nb_, 2 * r_);
    std::vector<double> lambda(r_), vac(r_);
    for (int k = 0; k < r_; ++k) {
      modes_.block(0, k, na_, 1) = sd.U.col(keep[k]);
      modes_.block(na_, r_ + k, nb_, 1) = sd.V.col(keep[k]).conjugate();
      lambda[k] = std::tanh(0.5 * sigma(keep[k]));
      vac[k] = 1.0 / std::cosh(0.5 * sigma(keep[k]));
    }
    kept_mass_ = 0.0;
    std::vector<int> occ(r_, 0);
    enumerate(0, 0, 1.0, occ, lambda, vac);
    // Probability of the modes dropped above.
    tail_ = 1.0 - kept_mass_;
    for (Eigen::Index k = 0; k < sigma.size(); ++k)
      if (std::pow(std::tanh(0.5 * sigma(k)), 2) <= 1e-14) tail_ += std::pow(std::sinh(0.5 * sigma(k)), 2);
    if (tail_ > opt.tail_tolerance)
      throw NumericalError("Fock cutoff " + std::to_string(opt.cutoff) + " leaves tail mass " +
                           std::to_string(tail_));
  }

  double tail_mass() const { return tail_; }
  int schmidt_modes() const { return r_; }
  std::size_t basis_size() const { return states_.size(); }

  /// Probability of N pairs, N = 0..cutoff, from the truncated state.
  RealVector pair_distribution() const {
    RealVector p = RealVector::Zero(opt_.cutoff + 1);
    for (const auto& s : states_) p(s.pairs) += s.amplitude * s.amplitude;
    return p;
  }

  /// <psi| Gamma(T) |psi> for a single-particle operator T on the physical space.
  cplx expectation(const ComplexMatrix& t_phys) const {
    const ComplexMatrix t = modes_.adjoint() * t_phys * modes_;
    cplx sum = 0.0;
    for (const auto& m : states_)
      for (const auto& n : states_) {
        if (m.pairs != n.pairs) continue;
        const int np = 2 * m.pairs;
        ComplexMatrix sub(np, np);
        for (int i = 0; i < np; ++i)
          for (int j = 0; j < np; ++j) sub(i, j) = t(m.photons[i], n.photons[j]);
        sum += m.amplitude * n.amplitude * permanent(sub) / (m.factorial_norm * n.factorial_norm);
      }
    return sum / kept_mass_;
  }

  /// Probability that no photon is found by detection operator W.
  double vacuum_probability(const ComplexMatrix& w_phys) const {
    const Eigen::Index n = na_ + nb_;
    return expectation(ComplexMatrix::Identity(n, n) - w_phys).real();
  }

  /// Photon-number distribution P(n), n = 0..2*cutoff, registered by W.
  RealVector photon_distribution(const ComplexMatrix& w_phys) const {
    const int degree = 2 * opt_.cutoff;
    const int k = degree + 1;
    const Eigen::Index dim = na_ + nb_;
    std::vector<cplx> g(k);
    for (int j = 0; j < k; ++j) {
      const cplx z = std::polar(1.0, kTwoPi * j / k);
      g[j] = expectation(ComplexMatrix::Identity(dim, dim) - (1.0 - z) * w_phys);
    }
    RealVector p(k);
    for (int n = 0; n < k; ++n) {
      cplx c = 0.0;
      for (int j = 0; j < k; ++j) c += g[j] * std::polar(1.0, -kTwoPi * j * n / k);
      p(n) = c.real() / k;
    }
    return p;
  }

 private:
  struct State {
    double amplitude;
    double factorial_norm;
    int pairs;
    std::vector<int> photons;  // mode index per photon
  };

  void enumerate(int k, int pairs, double amp, std::vector<int>& occ, const std::vector<double>& lambda,
                 const std::vector<double>& vac) {
    if (k == r_) {
      State s;
      s.amplitude = amp;
      s.pairs = pairs;
      s.factorial_norm = 1.0;
      for (int q = 0; q < r_; ++q)
        for (int i = 0; i < occ[q]; ++i) s.factorial_norm *= (i + 1);
      for (int q = 0; q < r_; ++q)
        for (int i = 0; i < occ[q]; ++i) s.photons.push_back(q);
      for (int q = 0; q < r_; ++q)
        for (int i = 0; i < occ[q]; ++i) s.photons.push_back(r_ + q);
      kept_mass_ += amp * amp;
      states_.push_back(std::move(s));
      return;
    }
    double a = amp * vac[k];
    for (int n = 0; pairs + n <= opt_.cutoff; ++n) {
      if (a * a < opt_.prune) break;
      occ[k] = n;
      enumerate(k + 1, pairs + n, a, occ, lambda, vac);
      a *= lambda[k];
    }
    occ[k] = 0;
  }

  FockOracleOptions opt_;
  int r_ = 0;
  Eigen::Index na_ = 0, nb_ = 0;
  ComplexMatrix modes_;
  std::vector<State> states_;
  double kept_mass_ = 0.0;
  double tail_ = 0.0;
};

}  // namespace bqkd
