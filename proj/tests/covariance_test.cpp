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

#include "bqkd/covariance.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"

using namespace bqkd;
using bqkd::testing::random_detection;
using bqkd::testing::random_jsa;

namespace {

double op_norm(const ComplexMatrix& m) {
  Eigen::JacobiSVD<ComplexMatrix> svd(m);
  return svd.singularValues()(0);
}

DiscretizedKernel single_mode_jsa() {
  AxisGrid g{RealVector::Zero(1), RealVector::Ones(1), 0.0};
  return DiscretizedKernel{ComplexMatrix::Ones(1, 1), g, g, Basis::frequency, true};
}

// Gaussian amplitude exp(-(x+y)^2/(2 sp^2) - (x-y)^2/(2 sm^2)) on a square grid.
DiscretizedKernel gaussian_jsa(double sp, double sm, double half, Eigen::Index n) {
  FrequencyGrid g = make_grid(0.0, half, n);
  ComplexMatrix v(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double x = g.points(i), y = g.points(j);
      v(i, j) = std::exp(-(x + y) * (x + y) / (2 * sp * sp) - (x - y) * (x - y) / (2 * sm * sm));
    }
  auto k = embed_weights(make_kernel(v, g, g));
  k.values /= k.values.norm();
  return k;
}

}  // namespace

TEST(Schmidt, SeparableKernelHasRankOne) {
  FrequencyGrid g = make_grid(0.0, 3.0, 41);
  ComplexVector f(41), h(41);
  for (Eigen::Index i = 0; i < 41; ++i) {
    f(i) = std::exp(-g.points(i) * g.points(i));
    h(i) = std::polar(1.0 / (1.0 + g.points(i) * g.points(i)), 0.3 * g.points(i));
  }
  auto k = embed_weights(make_kernel(f * h.transpose(), g, g));
  k.values /= k.values.norm();
  auto sd = schmidt(k, ProcessType::type2);
  EXPECT_NEAR(sd.coefficients(0), 1.0, 1e-12);
  EXPECT_LT(sd.coefficients(1), 1e-12);
}

TEST(Schmidt, GaussianGeometricSpectrum) {
  // Mehler kernel: coefficients sqrt(1 - q^2) q^n with q = (r - 1)/(r + 1), r = sm/sp.
  const double sp = 0.5, sm = 2.0;
  auto sd = schmidt(gaussian_jsa(sp, sm, 12.0, 241), ProcessType::type2);
  const double q = (sm - sp) / (sm + sp);
  for (int n = 0; n < 10; ++n) {
    const double expected = std::sqrt(1 - q * q) * std::pow(q, n);
    EXPECT_NEAR(sd.coefficients(n) / expected, 1.0, 0.01) << "mode " << n;
  }
}

TEST(Schmidt, OrthonormalModesAndUnitNorm) {
  std::mt19937_64 rng(11);
  auto jsa = random_jsa(rng, 9, 7, 5);
  auto sd = schmidt(jsa, ProcessType::type2, 0.4);
  const auto r = sd.rank();
  EXPECT_LT((sd.U.adjoint() * sd.U - ComplexMatrix::Identity(r, r)).norm(), 1e-10);
  EXPECT_LT((sd.V.adjoint() * sd.V - ComplexMatrix::Identity(r, r)).norm(), 1e-10);
  EXPECT_NEAR(sd.coefficients.squaredNorm(), 1.0, 1e-10);
  for (Eigen::Index k = 1; k < r; ++k) EXPECT_GE(sd.coefficients(k - 1), sd.coefficients(k));
  EXPECT_LT((sd.U * sd.coefficients.asDiagonal() * sd.V.adjoint() - jsa.values).norm(), 1e-12);
  EXPECT_DOUBLE_EQ(sd.sigma()(0), 0.4 * sd.coefficients(0));
  sd.process = ProcessType::type0;
  EXPECT_DOUBLE_EQ(sd.sigma()(0), 0.8 * sd.coefficients(0));
}

TEST(Schmidt, RejectsNonFinite) {
  auto jsa = single_mode_jsa();
  jsa.values(0, 0) = cplx(std::nan(""), 0.0);
  EXPECT_THROW(schmidt(jsa, ProcessType::type2), NumericalError);
  auto raw = single_mode_jsa();
  raw.weight_embedded = false;
  EXPECT_THROW(schmidt(raw, ProcessType::type2), GridError);
}

TEST(CovarianceExact, ZeroGainIsVacuum) {
  std::mt19937_64 rng(3);
  auto g = covariance_exact(schmidt(random_jsa(rng, 5, 5, 3), ProcessType::type2, 0.0));
  EXPECT_LT(g.values.norm(), 1e-15);
  ComplexMatrix w = ComplexMatrix::Identity(10, 10);
  EXPECT_DOUBLE_EQ(vacuum_probability(g, w), 1.0);
}

TEST(CovarianceExact, SingleModePhotonNumber) {
  const double sigma = 0.37;
  auto g = covariance_exact(schmidt(single_mode_jsa(), ProcessType::type2, sigma));
  EXPECT_NEAR(g.block(0, 0)(0, 0).real(), std::pow(std::sinh(sigma / 2), 2), 1e-15);
  EXPECT_NEAR(g.block(1, 1)(0, 0).real(), std::pow(std::sinh(sigma / 2), 2), 1e-15);
}

TEST(CovarianceExact, SingleModeVacuumProbability) {
  // sinh^2(sigma/2) = 0.01  ->  P(vac) = 1/cosh^2(sigma/2) = 1/1.01.
  const double sigma = 2.0 * std::asinh(0.1);
  auto g = covariance_exact(schmidt(single_mode_jsa(), ProcessType::type2, sigma));
  EXPECT_NEAR(vacuum_probability(g, ComplexMatrix::Identity(2, 2)), 1.0 / 1.01, 1e-12);
  EXPECT_NEAR(1.0 / 1.01, 0.990099, 1e-6);
  // Alice alone sees a thermal state with the same vacuum weight.
  EXPECT_NEAR(vacuum_probability(g, reduced_detection(ComplexMatrix::Ones(1, 1), ComplexMatrix::Zero(1, 1))),
              1.0 / 1.01, 1e-12);
}

TEST(CovarianceExact, SingleModeSqueezedVacuumTypeZero) {
  // One type-0 Schmidt mode with sigma = 2C is a squeezed vacuum with r = C.
  const double c = 0.21;
  auto g = covariance_exact(schmidt(single_mode_jsa(), ProcessType::type0, c));
  EXPECT_EQ(g.form, CovarianceForm::full);
  EXPECT_NEAR(vacuum_probability(g, ComplexMatrix::Identity(2, 2)), 1.0 / std::cosh(c), 1e-13);
  EXPECT_NEAR(g.mean_photons(), std::pow(std::sinh(c), 2), 1e-14);
}

TEST(CovarianceExact, HermitianAndPhysical) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = covariance_exact(schmidt(random_jsa(rng, 6, 8, 4), ProcessType::type2, 0.8));
    EXPECT_LT((g.values - g.values.adjoint()).norm(), 1e-12);
    // gamma = 1 + 2 Gamma is a positive definite covariance.
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(ComplexMatrix::Identity(14, 14) + 2.0 * g.values);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(CovarianceSeries, FirstOrderIsPairAmplitude) {
  std::mt19937_64 rng(8);
  auto jsa = random_jsa(rng, 4, 5, 3);
  auto g = covariance_series(jsa, 0.2, ProcessType::type2, 1);
  EXPECT_EQ(g.truncation_order, 1);
  EXPECT_LT(g.block(0, 0).norm(), 1e-15);
  EXPECT_LT(g.block(1, 1).norm(), 1e-15);
  EXPECT_LT((g.block(0, 1) - 0.1 * jsa.values).norm(), 1e-15);
}

TEST(CovarianceSeries, MatchesTruncatedSchmidtForm) {
  std::mt19937_64 rng(9);
  auto jsa = random_jsa(rng, 6, 6, 6);
  for (int n = 1; n <= 6; ++n) {
    auto a = covariance_series(jsa, 0.5, ProcessType::type2, n);
    auto b = covariance_exact(schmidt(jsa, ProcessType::type2, 0.5), n);
    EXPECT_LT((a.values - b.values).norm(), 1e-13) << "N = " << n;
  }
}

TEST(CovarianceSeries, MonotoneConvergence) {
  std::mt19937_64 rng(10);
  auto jsa = random_jsa(rng, 8, 8, 8);
  auto sd = schmidt(jsa, ProcessType::type2);
  const double gain = 0.3 / sd.coefficients(0);
  auto exact = covariance_exact(schmidt(jsa, ProcessType::type2, gain));
  double previous = 1e300;
  for (int n = 1; n <= 6; ++n) {
    const double err = op_norm(covariance_series(jsa, gain, ProcessType::type2, n).values - exact.values);
    EXPECT_LT(err, previous) << "N = " << n;
    // Single-mode remainder scale sigma^{N+1}/(N+1)!.
    EXPECT_LT(err, std::pow(0.3, n + 1) / std::tgamma(n + 2));
    if (n == 5) EXPECT_LT(err, 1e-6);
    previous = err;
  }
  EXPECT_THROW(covariance_series(jsa, gain, ProcessType::type2, 0), std::invalid_argument);
}

TEST(Determinant, SylvesterIdentity) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> dim(2, 32);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 50; ++trial) {
    const int m_in = dim(rng), m_out = dim(rng);
    auto g = covariance_exact(schmidt(random_jsa(rng, m_in, m_in, 3), ProcessType::type2, 0.9)).values;
    ComplexMatrix s(2 * m_out, 2 * m_in);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = cplx(n01(rng), n01(rng)) / std::sqrt(4.0 * m_in);
    ComplexMatrix p = ComplexMatrix::Zero(2 * m_out, 2 * m_out);
    for (int i = 0; i < 2 * m_out; ++i)
      if (n01(rng) > 0.0) p(i, i) = 1.0;
    const cplx big = logdet_lu(p * s * g * s.adjoint() * p);
    const cplx small = logdet_lu(s.adjoint() * p * s * g);
    EXPECT_NEAR(std::exp(big.real() - small.real()), 1.0, 1e-10);
  }
}

TEST(Determinant, LogExpansionScalarLimit) {
  ComplexMatrix x = ComplexMatrix::Zero(2, 2);
  x(0, 0) = 0.1;
  x(1, 1) = 0.2;
  EXPECT_NEAR(logdet_expansion(x, 60).real(), std::log(1.1 * 1.2), 1e-15);
  EXPECT_NEAR(logdet(x, {DeterminantMethod::log_series}).real(), std::log(1.32), 1e-12);
  x(1, 1) = 1.5;
  EXPECT_THROW(logdet_expansion(x, 4), NumericalError);
}

TEST(Determinant, OrderTwoRemainderIsCubic) {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> n01;
  const int d = 6;
  ComplexMatrix base(d, d);
  for (Eigen::Index i = 0; i < base.size(); ++i) base.data()[i] = cplx(n01(rng), n01(rng));
  base = (base + base.adjoint()).eval();
  base /= op_norm(base);
  for (double eps : {0.08, 0.04, 0.02, 0.01}) {
    const ComplexMatrix x = eps * base;
    const double err = std::abs(logdet_expansion(x, 2) - logdet_lu(x));
    EXPECT_LT(err, d * std::pow(eps, 3) / (3.0 * (1.0 - eps)));
    const auto pieces = poisson_pieces(x);
    EXPECT_NEAR(std::abs(logdet_expansion(x, 2) - (pieces.trace - 0.5 * pieces.trace_of_square)), 0.0, 1e-15);
  }
}

TEST(Determinant, SeriesAgreesWithLuAtOrderTwelve) {
  std::mt19937_64 rng(41);
  auto g = covariance_exact(schmidt(random_jsa(rng, 8, 8, 4), ProcessType::type2, 1.0)).values;
  g *= 0.3 / op_norm(g);
  const ComplexMatrix w = 0.9 * random_detection(rng, 16, 10);
  const ComplexMatrix x = w * g;
  EXPECT_NEAR(std::abs(logdet_expansion(x, 12) - logdet_lu(x)), 0.0, 1e-8);
}

TEST(Determinant, BreakdownReportsCondition) {
  RenormalizedCovariance g;
  g.values = -ComplexMatrix::Identity(2, 2);
  try {
    vacuum_probability(g, ComplexMatrix::Identity(2, 2));
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("singular"), std::string::npos);
  }
  g.values = -2.0 * ComplexMatrix::Identity(3, 3);
  try {
    vacuum_probability(g, ComplexMatrix::Identity(3, 3));
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("condition"), std::string::npos);
  }
}

TEST(PumpSplit, Coefficients) {
  auto [ks, kl] = pump_split_coefficients(1.0 / std::sqrt(2.0));
  EXPECT_NEAR(ks, 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(kl, 1.0 / std::sqrt(2.0), 1e-15);
  std::tie(ks, kl) = pump_split_coefficients(1.0);
  EXPECT_EQ(ks, 1.0);
  EXPECT_EQ(kl, 0.0);
  for (double t : {0.1, 0.4, 0.77, 0.95}) {
    std::tie(ks, kl) = pump_split_coefficients(t);
    EXPECT_NEAR(ks * ks + kl * kl, 1.0, 1e-12);
  }
  EXPECT_THROW(pump_split_coefficients(1.2), ConfigError);
}

TEST(PumpSplit, UnitTransmissionKeepsSource) {
  std::mt19937_64 rng(51);
  auto sd = schmidt(random_jsa(rng, 6, 6, 3), ProcessType::type2, 0.3);
  auto st = split_pump(sd, 1.0, 0.4, 2.0);
  EXPECT_LT((st.total().values - covariance_exact(sd).values).norm(), 1e-14);
  EXPECT_LT(st.summand(1).values.norm(), 1e-15);
}

TEST(PumpSplit, FirstOrderPhotonBookkeeping) {
  std::mt19937_64 rng(52);
  auto sd = schmidt(random_jsa(rng, 6, 6, 4), ProcessType::type2, 0.05);
  for (double t : {0.5, 0.7071, 0.9}) {
    auto st = split_pump(sd, t, 1.1, 3.0);
    const double split = st.summand(0, 2).mean_photons() + st.summand(1, 2).mean_photons();
    EXPECT_NEAR(split, covariance_exact(sd, 2).mean_photons(), 1e-10);
  }
}

TEST(PumpSplit, SummandDelaysAndPhases) {
  // The long summand equals the source with Alice modes multiplied by
  // e^{i(w tau + phi)} and Bob-conjugate modes by e^{-i w tau}.
  std::mt19937_64 rng(53);
  auto sd = schmidt(random_jsa(rng, 5, 4, 3), ProcessType::type2, 0.6);
  const double tau = 0.8, phi = 0.3;
  auto st = split_pump(sd, 0.0, phi, tau);
  ComplexVector da(5), db(4);
  for (int i = 0; i < 5; ++i) da(i) = std::polar(1.0, sd.rows.points(i) * tau + phi);
  for (int i = 0; i < 4; ++i) db(i) = std::polar(1.0, -sd.cols.points(i) * tau);
  ComplexVector d(9);
  d << da, db;
  const ComplexMatrix expected = d.asDiagonal() * covariance_exact(sd).values * d.conjugate().asDiagonal();
  EXPECT_LT((st.summand(1).values - expected).norm(), 1e-14);
}

TEST(PumpSplit, OverlapWarning) {
  std::mt19937_64 rng(54);
  auto sd = schmidt(random_jsa(rng, 3, 3, 1), ProcessType::type2, 0.1);
  EXPECT_TRUE(split_pump(sd, 0.7, 0.0, 2.0, 1.0).warnings.empty());
  EXPECT_EQ(split_pump(sd, 0.7, 0.0, 0.5, 1.0).warnings.size(), 1u);
}

TEST(MeanPairs, CalibrationRoundTrip) {
  std::mt19937_64 rng(61);
  auto sd = schmidt(random_jsa(rng, 8, 8, 5), ProcessType::type2);
  for (double mu : {1e-3, 0.02, 0.2, 1.0}) {
    const double c = calibrate_gain(sd.coefficients, mu, ProcessType::type2, {0.6, 0.8});
    EXPECT_NEAR(mean_pairs(sd.coefficients, c, ProcessType::type2, {0.6, 0.8}), mu, 1e-12 * (1 + mu));
  }
  // Type-II: photons per party equal pairs.
  const double c = calibrate_gain(sd.coefficients, 0.05, ProcessType::type2);
  sd.gain = c;
  auto g = covariance_exact(sd);
  EXPECT_NEAR(g.block(0, 0).trace().real(), 0.05, 1e-12);
  EXPECT_EQ(calibrate_gain(sd.coefficients, 0.0, ProcessType::type0), 0.0);
  EXPECT_THROW(calibrate_gain(sd.coefficients, -1.0, ProcessType::type0), ConfigError);
}
