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

#include "bqkd/jsa.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bqkd/covariance.hpp"

using namespace bqkd;

namespace {

PumpAmplitude gaussian_amplitude(double width) {
  PumpAmplitude p;
  p.alpha.exact = [width](const RealVector& w) {
    return (-(w.array() / width).square() * 0.5).exp().cast<cplx>().matrix().eval();
  };
  p.alpha.x = RealVector::LinSpaced(2001, -10 * width, 10 * width);
  p.alpha.y = p.alpha.exact(p.alpha.x);
  return p;
}

std::string write_temp(const std::string& name, const std::string& body) {
  const auto path = std::filesystem::temp_directory_path() / ("bqkd_" + name);
  std::ofstream(path) << body;
  return path.string();
}

}  // namespace

TEST(Pump, GaussianIsNormalizedAndBandLimited) {
  const double fwhm = 0.4e-9;
  auto p = gaussian_pump(fwhm);
  AxisGrid g{p.alpha.x, RealVector::Constant(p.alpha.x.size(), p.alpha.x(1) - p.alpha.x(0)), 0.0};
  const double norm = (g.weights.array() * p.alpha(g.points).cwiseAbs2().array()).sum();
  EXPECT_NEAR(norm, 1.0, 1e-10);
  const double a = fwhm * fwhm / (8 * std::log(2.0));
  const double expected = 2 * std::sqrt(std::log(1e12) / a);
  EXPECT_NEAR(p.delta_plus() / expected, 1.0, 2e-3);
  // Zero beyond the cut.
  EXPECT_EQ(std::abs(p.alpha.at(1.01 * p.alpha.x(p.alpha.x.size() - 1))), 0.0);
}

TEST(Pump, SampledIsNormalized) {
  RealVector w = RealVector::LinSpaced(101, -5, 5);
  ComplexVector v = (-w.array().square()).exp().cast<cplx>();
  auto p = sampled_pump(w, 3.0 * v, 1e-9);
  double n2 = 0.0;
  for (Eigen::Index i = 0; i < 101; ++i) n2 += (i == 0 || i == 100 ? 0.05 : 0.1) * std::norm(p.alpha.y(i));
  EXPECT_NEAR(n2, 1.0, 1e-12);
  EXPECT_NEAR(std::abs(p.alpha.at(0.05) - 0.5 * (p.alpha.y(50) + p.alpha.y(51))), 0.0, 1e-14);
}

TEST(PhaseMatching, UniformCrystalIsSinc) {
  PhaseMatchingParameters par;
  par.length = 2.0;
  par.dk1 = 1.5;
  const RealVector w = RealVector::LinSpaced(301, -12, 12);
  const ComplexVector phi = PhaseMatchingQuadrature(w, par.length, par.dk1, 1025).evaluate(par);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double x = par.dk1 * w(i) * par.length / 2;
    const double sinc = x == 0.0 ? 1.0 : std::sin(x) / x;
    EXPECT_NEAR(std::abs(phi(i) - sinc), 0.0, 1e-7);
  }
}

TEST(PhaseMatching, SignOfLinearChirpConjugates) {
  const RealVector w = RealVector::LinSpaced(51, -6, 6);
  PhaseMatchingQuadrature q(w, 1.0, 1.0);
  const ComplexVector a = q.evaluate(17.0, 40.0, 0.3), b = q.evaluate(-17.0, 40.0, 0.3);
  EXPECT_LT((a.cwiseAbs() - b.cwiseAbs()).norm(), 1e-12);
  EXPECT_LT((a.conjugate() - b).norm(), 1e-12);
}

TEST(AssembleJsa, GaussianSchmidtNumber) {
  const double a = 1.0, b = 4.0;
  auto grid = make_grid(0.0, 14.0, 281);
  auto jsa = assemble_jsa(gaussian_amplitude(a), gaussian_phase_matching(b), grid, grid, ProcessType::type2);
  auto sd = schmidt(jsa.kernel, jsa.process);
  const double k = 1.0 / sd.coefficients.array().pow(4).sum();
  const double r = b / a;
  EXPECT_NEAR(k / (0.5 * (r + 1 / r)), 1.0, 0.01);
  EXPECT_NEAR(jsa.kernel.values.norm(), 1.0, 1e-12);
  // FWHM ratio is b/a = 4 < 10.
  EXPECT_NEAR(jsa.aspect_ratio, 4.0, 0.01);
  ASSERT_EQ(jsa.warnings.size(), 1u);
  EXPECT_NE(jsa.warnings[0].find("aspect ratio"), std::string::npos);
}

TEST(AssembleJsa, SymmetricForEvenRealFactors) {
  auto grid = make_grid(0.0, 10.0, 61);
  auto jsa = assemble_jsa(gaussian_amplitude(0.4), gaussian_phase_matching(5.0), grid, grid, ProcessType::type0);
  EXPECT_LT((jsa.kernel.values - jsa.kernel.values.transpose()).norm(), 1e-14);
  EXPECT_TRUE(jsa.warnings.empty());
}

TEST(AssembleJsa, NonUniformGridsMatchLatticePath) {
  auto grid = make_grid(0.0, 6.0, 41);
  FrequencyGrid other = grid;
  other.points.array() += 1e-3 * other.points.array().square();  // breaks uniformity
  auto pm = gaussian_phase_matching(3.0);
  auto pump = gaussian_amplitude(0.7);
  auto direct = assemble_jsa(pump, pm, grid, other, ProcessType::type2);
  for (Eigen::Index i = 0; i < 41; i += 7)
    for (Eigen::Index j = 0; j < 41; j += 5) {
      const double x = grid.points(i), y = other.points(j);
      const double v = std::exp(-0.5 * std::pow((x + y) / 0.7, 2) - 0.5 * std::pow((x - y) / 3.0, 2));
      const double w = std::sqrt(grid.weights(i) * other.weights(j));
      EXPECT_NEAR(direct.kernel.values(i, j).real() / (v * w), direct.kernel.values(20, 20).real() /
                      (std::sqrt(grid.weights(20) * other.weights(20)) *
                       std::exp(-0.5 * std::pow((grid.points(20) + other.points(20)) / 0.7, 2) -
                                0.5 * std::pow((grid.points(20) - other.points(20)) / 3.0, 2))),
                  1e-9);
    }
}

TEST(AssembleJsa, NarrowPumpMarginalFollowsPhaseMatching) {
  // Narrowband pump: signal marginal ~ |Phi(2 w_s)|^2.
  PhaseMatchingParameters par;
  par.length = 1.0;
  par.dk1 = 1.0;
  auto pm = phase_matching_from_parameters(par, RealVector::LinSpaced(4001, -60, 60));
  pm.phi.exact = nullptr;
  auto grid = make_grid(0.0, 20.0, 1601);
  auto jsa = assemble_jsa(gaussian_amplitude(0.05), pm, grid, grid, ProcessType::type2);
  const RealVector marginal = jsa.kernel.values.cwiseAbs2().rowwise().sum().cwiseQuotient(grid.weights);
  RealVector expected(grid.size());
  for (Eigen::Index i = 0; i < grid.size(); ++i) expected(i) = std::norm(pm.phi.at(2 * grid.points(i)));
  EXPECT_LT((marginal / marginal.maxCoeff() - expected / expected.maxCoeff()).cwiseAbs().maxCoeff(), 1e-2);
  EXPECT_GT(jsa.aspect_ratio, 10.0);
}

TEST(Symmetrize, RemovesOddPart) {
  Spectrum s{RealVector::LinSpaced(41, -1, 1), RealVector()};
  s.power = 1.0 + s.omega.array();
  auto out = symmetrize_spectrum(s);
  EXPECT_LT((out.power.array() - 1.0).abs().maxCoeff(), 1e-14);
}

TEST(Symmetrize, KeepsSymmetricInputAndIsIdempotent) {
  Spectrum s{RealVector::LinSpaced(81, -2, 2), RealVector()};
  s.power = (-s.omega.array().square()).exp();
  auto out = symmetrize_spectrum(s);
  EXPECT_LT((out.power - s.power).cwiseAbs().maxCoeff(), 1e-14);
  auto twice = symmetrize_spectrum(out);
  EXPECT_LT((twice.power - out.power).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Symmetrize, AsymmetricDoubleHumpBecomesExactlyEven) {
  Spectrum s{RealVector::LinSpaced(300, -3.1, 2.7), RealVector()};
  s.power = 1.3 * (-(s.omega.array() + 1.2).square() * 3).exp() + 0.7 * (-(s.omega.array() - 1.0).square() * 2).exp();
  auto out = symmetrize_spectrum(s);
  const Eigen::Index m = out.omega.size();
  double worst = 0.0;
  for (Eigen::Index k = 0; k < m; ++k) {
    worst = std::max(worst, std::abs(out.power(k) - out.power(m - 1 - k)));
    EXPECT_EQ(out.omega(k), -out.omega(m - 1 - k));
  }
  EXPECT_EQ(worst, 0.0);
}

TEST(Symmetrize, RejectsOneSided) {
  Spectrum s{RealVector::LinSpaced(10, 0.0, 1.0), RealVector::Ones(10)};
  EXPECT_THROW(symmetrize_spectrum(s), ConfigError);
}

TEST(LoadChannel, FlatThreeDecibel) {
  std::string body = "# unit: dB, axis: Hz-offset\n";
  for (int i = -10; i <= 10; ++i) body += std::to_string(i * 1e9) + ",-3.0103\n";
  auto c = load_channel(write_temp("flat.csv", body));
  EXPECT_NEAR(c.t2.maxCoeff(), 0.5, 1e-4);
  EXPECT_NEAR(c.t2.minCoeff(), 0.5, 1e-4);
  EXPECT_NEAR(c.power_on(RealVector::Constant(1, kTwoPi * 0.5e9))(0), 0.5, 1e-4);
  EXPECT_EQ(c.power_on(RealVector::Constant(1, kTwoPi * 20e9))(0), 0.0);
}

TEST(LoadChannel, FiftyGigahertzNominalWidth) {
  // Flat-top 50 GHz channel at +100 GHz with 5 GHz cosine roll-off, in dB.
  std::string body = "# unit: dB, axis: Hz-offset\nfreq,value\n";
  for (int i = 0; i <= 400; ++i) {
    const double f = 40e9 + i * 0.3e9;
    const double d = std::abs(f - 100e9) - 25e9;
    double t2 = d <= 0 ? 1.0 : (d < 5e9 ? std::pow(std::cos(0.5 * kPi * d / 5e9), 2) : 0.0);
    body += std::to_string(f) + "," + std::to_string(10 * std::log10(std::max(t2, 1e-8))) + "\n";
  }
  auto c = load_channel(write_temp("ch50.csv", body));
  const double width = c.upper - c.lower;
  EXPECT_NEAR(width / (kTwoPi * 50e9), 1.0, 0.2);
  EXPECT_GT(c.lower, kTwoPi * 70e9);
  EXPECT_LT(c.upper, kTwoPi * 130e9);
}

TEST(LoadChannel, Rejections) {
  EXPECT_THROW(load_channel(write_temp("empty.csv", "")), ConfigError);
  EXPECT_THROW(load_channel(write_temp("hdr.csv", "# unit: dB, axis: Hz-offset\n")), ConfigError);
  EXPECT_THROW(load_channel(write_temp("gain.csv", "# unit: dB, axis: Hz-offset\n0,0.1\n1,0.0\n")), ConfigError);
  EXPECT_THROW(load_channel(write_temp("order.csv", "# unit: linear, axis: Hz-offset\n0,0.5\n-1,0.5\n")),
               ConfigError);
  EXPECT_NO_THROW(load_channel(write_temp("unity.csv", "# unit: linear, axis: Hz-offset\n0,1.0000005\n1,1\n")));
  EXPECT_THROW(load_channel("/nonexistent/channel.csv"), ConfigError);
}

TEST(Channel, FlatTopBoundsAndShift) {
  auto c = flat_top_channel(10.0, 4.0, 0.0);
  EXPECT_NEAR(c.lower, 8.0, 0.01);
  EXPECT_NEAR(c.upper, 12.0, 0.01);
  auto s = shift_channel(c, -3.0);
  EXPECT_NEAR(s.lower, 5.0, 0.01);
  EXPECT_EQ(s.power_on(RealVector::Constant(1, 7.0))(0), 1.0);
}
