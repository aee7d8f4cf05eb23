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

#include "bqkd/grid.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace bqkd;

TEST(MakeGrid, ThreePointTrapezoid) {
  auto g = make_grid(0.0, 1.0, 3);
  EXPECT_DOUBLE_EQ(g.points(0), -1.0);
  EXPECT_DOUBLE_EQ(g.points(1), 0.0);
  EXPECT_DOUBLE_EQ(g.points(2), 1.0);
  EXPECT_DOUBLE_EQ(g.weights(0), 0.5);
  EXPECT_DOUBLE_EQ(g.weights(1), 1.0);
  EXPECT_DOUBLE_EQ(g.weights(2), 0.5);
}

TEST(MakeGrid, WeightsCoverBandwidth) {
  const double w = 2.0 * kPi * 37e9;
  auto g = make_grid(1.2e15, w, 2);
  EXPECT_NEAR(g.covered(), 2.0 * w, 1e-12 * 2.0 * w);
  auto h = make_grid(1.2e15, w, 1001);
  EXPECT_NEAR(h.covered(), 2.0 * w, 1e-12 * 2.0 * w);
  EXPECT_NO_THROW(validate(h));
  EXPECT_DOUBLE_EQ(h.carrier, 1.2e15);
}

TEST(MakeGrid, GaussianDensityIntegral) {
  // Reference: the unit Gaussian density integrates to erf(8/sqrt2) on [-8, 8].
  auto g = make_grid(0.0, 8.0, 129);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    sum += g.weights(i) * std::exp(-0.5 * g.points(i) * g.points(i)) / std::sqrt(kTwoPi);
  const double exact = std::erf(8.0 / std::sqrt(2.0));
  EXPECT_LT(std::abs(sum - exact) / exact, 1e-6);
}

TEST(MakeGrid, RejectsBadInput) {
  EXPECT_THROW(make_grid(0.0, std::numeric_limits<double>::quiet_NaN(), 5), GridError);
  EXPECT_THROW(make_grid(std::numeric_limits<double>::infinity(), 1.0, 5), GridError);
  EXPECT_THROW(make_grid(0.0, 1.0, 1), GridError);
  EXPECT_THROW(make_grid(0.0, -1.0, 5), GridError);
}

TEST(EmbedWeights, IdentityWithUnitWeights) {
  AxisGrid g;
  g.points = RealVector::LinSpaced(2, 0.0, 1.0);
  g.weights = RealVector::Ones(2);
  auto k = embed_weights(make_kernel(ComplexMatrix::Identity(2, 2), g, g));
  EXPECT_TRUE(k.weight_embedded);
  EXPECT_LT((k.values - ComplexMatrix::Identity(2, 2)).norm(), 1e-15);
  EXPECT_THROW(embed_weights(k), GridError);
}

TEST(EmbedWeights, ScalesByRootWeights) {
  AxisGrid g;
  g.points = RealVector::LinSpaced(2, 0.0, 1.0);
  g.weights = RealVector::Constant(2, 4.0);
  ComplexMatrix m(2, 2);
  m << 1.0, 2.0, cplx(0, 3.0), -1.0;
  auto k = embed_weights(make_kernel(m, g, g));
  EXPECT_LT((k.values - 4.0 * m).norm(), 1e-14);
  EXPECT_LT((unembed_weights(k).values - m).norm(), 1e-14);
}

TEST(EmbedWeights, RankOneCompositionMatchesGaussianIntegrals) {
  // f = exp(-(w-a)^2/2), g = exp(-(w-b)^2/2) on the real line:
  //   Int f^2 = Int g^2 = sqrt(pi),  Int f g = sqrt(pi) exp(-(a-b)^2/4).
  const double a = 0.7, b = -0.4;
  auto grid = make_grid(0.0, 12.0, 241);
  ComplexVector f(grid.size()), g(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) {
    f(i) = std::exp(-0.5 * std::pow(grid.points(i) - a, 2));
    g(i) = std::exp(-0.5 * std::pow(grid.points(i) - b, 2));
  }
  auto k = embed_weights(make_kernel(f * g.transpose(), grid, grid));
  const double sp = std::sqrt(kPi);
  const double overlap = sp * std::exp(-(a - b) * (a - b) / 4.0);
  // Tr(K K) = (Int f g)^2 ; Tr(K K^dagger) = Int f^2 Int g^2.
  EXPECT_NEAR(compose(k, k).values.trace().real(), overlap * overlap, 1e-10);
  EXPECT_NEAR(hs_norm(k) * hs_norm(k), sp * sp, 1e-10);
}

namespace {

// psi(wA, wB) = exp(-(wA+wB)^2/(2 dp^2) - (wA-wB)^2/(2 dm^2)), weight embedded.
DiscretizedKernel gaussian_jsa(const FrequencyGrid& g, double dp, double dm) {
  ComplexMatrix m(g.size(), g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i)
    for (Eigen::Index j = 0; j < g.size(); ++j) {
      const double wp = g.points(i) + g.points(j), wm = g.points(i) - g.points(j);
      m(i, j) = std::exp(-wp * wp / (2 * dp * dp) - wm * wm / (2 * dm * dm));
    }
  return embed_weights(make_kernel(m, g, g));
}

}  // namespace

TEST(SymplecticFourier, GaussianWidthsInvert) {
  const double dp = 1.0, dm = 4.0;
  auto g = make_grid(0.0, 12.0, 256);
  auto t = conjugate_time_grid(g);
  auto kt = symplectic_fourier(gaussian_jsa(g, dp, dm), t, FourierPairing::pair_amplitude);
  // |psi(t)|^2 ~ exp(-tp^2 dp^2 - tm^2 dm^2), tp = (tA+tB)/2, tm = (tA-tB)/2.
  double norm = 0, mp = 0, mm = 0;
  for (Eigen::Index i = 0; i < t.size(); ++i)
    for (Eigen::Index j = 0; j < t.size(); ++j) {
      const double p = std::norm(kt.values(i, j));
      const double tp = 0.5 * (t.points(i) + t.points(j)), tm = 0.5 * (t.points(i) - t.points(j));
      norm += p;
      mp += p * tp * tp;
      mm += p * tm * tm;
    }
  const double sp = std::sqrt(mp / norm), sm = std::sqrt(mm / norm);
  EXPECT_NEAR(sp, 1.0 / (std::sqrt(2.0) * dp), 0.01 / (std::sqrt(2.0) * dp));
  EXPECT_NEAR(sm, 1.0 / (std::sqrt(2.0) * dm), 0.01 / (std::sqrt(2.0) * dm));
}

TEST(SymplecticFourier, ParsevalAndRoundTrip) {
  auto g = make_grid(0.0, 12.0, 128);
  auto t = conjugate_time_grid(g);
  auto k = gaussian_jsa(g, 1.5, 3.0);
  for (auto pairing : {FourierPairing::operator_basis, FourierPairing::pair_amplitude}) {
    auto kt = symplectic_fourier(k, t, pairing);
    EXPECT_NEAR(hs_norm(kt), hs_norm(k), 1e-10 * hs_norm(k));
    auto back = inverse_symplectic_fourier(kt, g, g, pairing);
    EXPECT_LT((back.values - k.values).norm() / k.values.norm(), 1e-9);
  }
}

TEST(SymplecticFourier, AntiDiagonalJsaDependsOnlyOnTimeDifference) {
  auto g = make_grid(0.0, 10.0, 65);
  ComplexMatrix m = ComplexMatrix::Zero(g.size(), g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i)
    m(i, g.size() - 1 - i) = std::exp(-0.1 * g.points(i) * g.points(i));
  auto t = conjugate_time_grid(g);
  auto kt = symplectic_fourier(embed_weights(make_kernel(m, g, g)), t, FourierPairing::pair_amplitude);
  // Constant along tA + tB: compare (i, j) with (i+1, j+1).
  double worst = 0;
  for (Eigen::Index i = 0; i + 1 < t.size(); ++i)
    for (Eigen::Index j = 0; j + 1 < t.size(); ++j)
      worst = std::max(worst, std::abs(kt.values(i, j) - kt.values(i + 1, j + 1)));
  EXPECT_LT(worst, 1e-12 * kt.values.cwiseAbs().maxCoeff());
}

TEST(SymplecticFourier, LinearPhaseDelaysBothPhotons) {
  auto g = make_grid(0.0, 12.0, 128);
  auto t = conjugate_time_grid(g);
  auto k = gaussian_jsa(g, 2.0, 2.0);
  const double tau = 4.0 * t.spacing();
  auto shifted = k;
  for (Eigen::Index i = 0; i < g.size(); ++i)
    for (Eigen::Index j = 0; j < g.size(); ++j)
      shifted.values(i, j) *= std::polar(1.0, (g.points(i) + g.points(j)) * tau);
  auto a = symplectic_fourier(k, t, FourierPairing::pair_amplitude);
  auto b = symplectic_fourier(shifted, t, FourierPairing::pair_amplitude);
  const Eigen::Index n = t.size();
  EXPECT_LT((b.values.bottomRightCorner(n - 4, n - 4) - a.values.topLeftCorner(n - 4, n - 4)).norm(),
            1e-9 * a.values.norm());
}

TEST(SymplecticFourier, ReportsNyquistViolation) {
  auto g = make_grid(0.0, 12.0, 64);
  auto k = gaussian_jsa(g, 1.0, 1.0);
  auto too_long = make_time_grid(-100.0, 100.0, 2000);
  EXPECT_THROW(symplectic_fourier(k, too_long), GridError);
  auto too_coarse = make_time_grid(-5.0, 5.0, 5);
  EXPECT_THROW(symplectic_fourier(k, too_coarse), GridError);
}
