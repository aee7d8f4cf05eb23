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

#include "bqkd/scenario.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "bqkd/oracle_check.hpp"

using namespace bqkd;

namespace {

std::string example_path(const char* name) { return std::string(BQKD_EXAMPLES_DIR) + "/" + name; }

Json example_json(const char* name) {
  std::ifstream in(example_path(name));
  return Json::parse(in);
}

ScenarioConfig ideal(double mu) { return with_axis(load_config(example_path("ideal_type2.json")), SweepAxis::mu, mu); }

}  // namespace

TEST(Config, UnknownKeysRejectedCommentsIgnored) {
  Json j = example_json("ideal_type2.json");
  j["_note"] = "ignored";
  j["source"]["_why"] = 1;
  EXPECT_NO_THROW(parse_config(j));
  j["source"]["pump"]["fwhm"] = 20;
  try {
    parse_config(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("source.pump.fwhm"), std::string::npos);
  }
}

TEST(Config, ExactlyOneOfMuAndGain) {
  Json j = example_json("ideal_type2.json");
  j["source"]["gain"] = 0.1;
  EXPECT_THROW(parse_config(j), ConfigError);
  j["source"].erase("mu");
  const ScenarioConfig c = parse_config(j);
  ASSERT_TRUE(c.source.gain.has_value());
  EXPECT_FALSE(c.source.mu.has_value());
  j["source"].erase("gain");
  EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Config, RangesAndEnvelopePicks) {
  const ScenarioConfig c = load_config(example_path("saturation_type2.json"));
  const Range& eff = c.detectors[0][0].efficiency;
  EXPECT_EQ(eff.lo, 0.2);
  EXPECT_EQ(eff.hi, 0.25);
  EXPECT_EQ(eff.pick(Envelope::best, Better::higher), 0.25);
  EXPECT_EQ(eff.pick(Envelope::worst, Better::higher), 0.2);
  EXPECT_EQ(eff.pick(Envelope::best, Better::lower), 0.2);
  EXPECT_DOUBLE_EQ(eff.pick(Envelope::nominal, Better::lower), 0.225);
  EXPECT_EQ(envelopes(c), (std::vector<Envelope>{Envelope::best, Envelope::worst}));

  const auto best = detector_models(c, Envelope::best);
  const auto worst = detector_models(c, Envelope::worst);
  EXPECT_LT(best[0][0].dark_count_rate, worst[0][0].dark_count_rate);
  EXPECT_LT(best[1][1].afterpulse_probability, worst[1][1].afterpulse_probability);
  EXPECT_LT(best[0][1].dead_time, worst[0][1].dead_time);

  Json j = example_json("saturation_type2.json");
  j["detectors"]["alice"]["efficiency"] = Json::array({0.3, 0.2});
  EXPECT_THROW(parse_config(j), ConfigError);
  j["detectors"]["alice"]["efficiency"] = Json::array({0.2, 0.25, 0.3});
  EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Config, ProcessAndChannelsMustAgree) {
  Json t0 = example_json("type0_wdm.json");
  t0.erase("wdm");
  EXPECT_THROW(parse_config(t0), ConfigError);
  Json t2 = example_json("ideal_type2.json");
  t2["wdm"] = example_json("type0_wdm.json")["wdm"];
  EXPECT_THROW(parse_config(t2), ConfigError);
}

TEST(Config, SweepAxes) {
  for (SweepAxis a : kSweepAxes) {
    EXPECT_EQ(parse_axis(axis_name(a)), a);
    EXPECT_EQ(parse_axis(axis_key(a)), a);
  }
  EXPECT_THROW(parse_axis("temperature"), ConfigError);
  const ScenarioConfig c = with_axis(ideal(0.01), SweepAxis::total_length, 7.0);
  EXPECT_EQ(c.links[0].length_km, 3.5);
  EXPECT_EQ(c.links[1].length_km, 3.5);
  EXPECT_THROW(with_axis(c, SweepAxis::offset, 1.0), ConfigError);
  EXPECT_THROW(run_sweep(c, SweepAxis::dead_time), ConfigError);
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
  try {
    load_config("/nonexistent/config.json");
  } catch (const std::exception& e) {
    EXPECT_EQ(error_code(e), 2);
  }
  EXPECT_EQ(error_code(NumericalError("x")), 3);
  EXPECT_EQ(error_code(GridError("x")), 2);
}

TEST(Simulate, IdealLinkIsNearlyErrorFree) {
  const auto rows = run_simulate(ideal(1e-3));
  ASSERT_EQ(rows.size(), 1u);
  const ResultRow& r = rows[0];
  ASSERT_TRUE(r.ok()) << *r.error;
  EXPECT_GT(r.sifted_rate, 0.0);
  EXPECT_LT(r.qber_time, 1e-3);
  EXPECT_LT(r.qber_phase, 1e-3);
  for (double l : r.live) EXPECT_EQ(l, 1.0);
  // Two detectors share the photons of each party.
  EXPECT_NEAR((r.singles[0] + r.singles[1]) / (r.singles[2] + r.singles[3]), 1.0, 1e-6);
}

TEST(Simulate, SiftedRateLinearAtLowMu) {
  const double r1 = run_simulate(ideal(1e-4))[0].sifted_rate;
  const double r2 = run_simulate(ideal(2e-4))[0].sifted_rate;
  EXPECT_NEAR(r2 / r1, 2.0, 0.01);
}

TEST(Simulate, CsvIsDeterministic) {
  const ScenarioConfig c = ideal(0.01);
  const std::string a = to_csv(run_simulate(c));
  const std::string b = to_csv(run_simulate(c));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.substr(0, a.find('\n')), kCsvHeader);
}

TEST(Simulate, UndefinedValuesPrintAsNan) {
  ResultRow r;
  r.sweep_value = 1.0;
  r.error = "boom";
  const std::string csv = to_csv({r});
  EXPECT_NE(csv.find("1,nominal,nan,nan,nan"), std::string::npos);
  EXPECT_EQ(to_report({r})[0]["error"], "boom");
}

TEST(Sweep, FailingPointIsRecordedAndSweepContinues) {
  ScenarioConfig c = ideal(0.01);
  c.sweep[SweepAxis::mu] = {1e-3, -1.0, 2e-3};
  const auto rows = run_sweep(c, SweepAxis::mu);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_TRUE(rows[0].ok());
  EXPECT_FALSE(rows[1].ok());
  EXPECT_EQ(rows[1].exit_code, 2);
  EXPECT_TRUE(std::isnan(rows[1].sifted_rate));
  EXPECT_EQ(rows[1].sweep_value, -1.0);
  EXPECT_TRUE(rows[2].ok());
  EXPECT_GT(rows[2].sifted_rate, rows[0].sifted_rate);
}

TEST(Sweep, AfterpulseTableDeadTimeTrend) {
  Json j = example_json("saturation_type2.json");
  j["envelope"] = "nominal";
  j["source"]["mu"] = 0.02;
  for (const char* p : {"alice", "bob"}) {
    j["detectors"][p].erase("afterpulse_probability");
    j["detectors"][p]["afterpulse_probability_by_dead_time"] = Json::parse("[[2, 0.08], [10, 0.03], [25, 0.01]]");
  }
  j["sweep"] = Json::parse(R"({"dead_time_us": [2, 6, 12, 20, 40]})");
  const auto rows = run_sweep(parse_config(j), SweepAxis::dead_time);
  ASSERT_EQ(rows.size(), 5u);
  for (int i = 0; i < 4; ++i) ASSERT_TRUE(rows[i].ok()) << *rows[i].error;
  for (int i = 1; i < 4; ++i) {
    EXPECT_LT(rows[i].qber_time, rows[i - 1].qber_time) << rows[i].sweep_value;
    EXPECT_LT(rows[i].live[0], rows[i - 1].live[0]);
  }
  EXPECT_FALSE(rows[4].ok());
  EXPECT_EQ(rows[4].exit_code, 2);
  EXPECT_NE(rows[4].error->find("outside the table"), std::string::npos);

  j["detectors"]["alice"]["afterpulse_probability"] = 0.01;
  EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Sweep, EnvelopeContainment) {
  ScenarioConfig c = load_config(example_path("saturation_type2.json"));
  c.sweep[SweepAxis::mu] = {0.002, 0.05};
  const auto rows = run_sweep(c, SweepAxis::mu);
  ASSERT_EQ(rows.size(), 4u);
  for (std::size_t i = 0; i < rows.size(); i += 2) {
    const ResultRow &best = rows[i], &worst = rows[i + 1];
    ASSERT_EQ(best.envelope, Envelope::best);
    ASSERT_EQ(worst.envelope, Envelope::worst);
    EXPECT_GE(best.sifted_rate, worst.sifted_rate);
    EXPECT_LE(best.qber_time, worst.qber_time);
    EXPECT_LE(best.qber_phase, worst.qber_phase);
  }
}

TEST(Simulate, TypeZeroWdmLinkEndToEnd) {
  const auto rows = run_simulate(load_config(example_path("type0_wdm.json")));
  ASSERT_EQ(rows.size(), 1u);
  const ResultRow& r = rows[0];
  ASSERT_TRUE(r.ok()) << *r.error;
  EXPECT_TRUE(r.warnings.empty());
  EXPECT_GT(r.sifted_rate, 0.0);
  EXPECT_GT(r.qber_time, 0.0);
  EXPECT_LT(r.qber_time, 0.05);
  EXPECT_GT(r.qber_phase, 0.0);
  EXPECT_LT(r.qber_phase, 0.15);
  for (int k = 0; k < 4; ++k) {
    EXPECT_GT(r.singles[k], 0.0);
    EXPECT_GT(r.live[k], 0.0);
    EXPECT_LE(r.live[k], 1.0);
  }
}

TEST(OracleCheck, PassesAndDetectsInjectedFault) {
  OracleCheckOptions opt;
  opt.trials = 2;
  const OracleReport ok = run_oracle_check(opt);
  EXPECT_TRUE(ok.passed());
  for (const auto& c : ok.checks) EXPECT_TRUE(c.passed()) << c.name << " " << c.max_error;
  opt.inject_fault = true;
  const OracleReport bad = run_oracle_check(opt);
  EXPECT_FALSE(bad.passed());
  for (const auto& c : bad.checks) EXPECT_EQ(c.passed(), c.name != "six_mode_chain") << c.name;
  EXPECT_EQ(to_json(bad, opt)["passed"], false);
}

TEST(OracleCheck, RefusesOversizedRuns) {
  OracleCheckOptions opt;
  opt.fock_grid = 9;
  EXPECT_THROW(run_oracle_check(opt), ConfigError);
  opt = {};
  opt.determinant_dim = 65;
  EXPECT_THROW(run_oracle_check(opt), ConfigError);
  opt = {};
  opt.trials = 0;
  EXPECT_THROW(run_oracle_check(opt), ConfigError);
}
