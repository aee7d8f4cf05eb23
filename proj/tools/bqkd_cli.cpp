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

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "bqkd/oracle_check.hpp"
#include "bqkd/scenario.hpp"

namespace fs = std::filesystem;
using namespace bqkd;

namespace {

int first_failure(const std::vector<ResultRow>& rows) {
  for (const auto& r : rows)
    if (r.exit_code != 0) return r.exit_code;
  return 0;
}

void report_errors(const std::vector<ResultRow>& rows) {
  for (const auto& r : rows) {
    if (r.error) std::cerr << "error [" << to_string(r.envelope) << ", " << r.sweep_value << "]: " << *r.error << "\n";
    for (const auto& w : r.warnings) std::cerr << "warning [" << to_string(r.envelope) << "]: " << w << "\n";
  }
}

int simulate(const std::string& config, const std::string& out) {
  const ScenarioConfig cfg = load_config(config);
  const auto rows = run_simulate(cfg);
  const fs::path dir(out);
  write_file(dir / "simulate.csv", to_csv(rows));
  write_file(dir / "report.json", to_report(rows).dump(2) + "\n");
  std::vector<std::string> labels;
  std::vector<double> rates;
  for (const auto& r : rows) {
    labels.push_back(to_string(r.envelope));
    rates.push_back(r.sifted_rate);
  }
  write_file(dir / "simulate.svg", plot::bar_chart(labels, rates, {"Sifted key rate", "", "R_sifted (1/s)", false}));
  std::cout << to_csv(rows);
  report_errors(rows);
  return first_failure(rows);
}

int sweep(const std::string& config, const std::string& axis_name_arg, const std::string& out) {
  const ScenarioConfig cfg = load_config(config);
  const SweepAxis axis = parse_axis(axis_name_arg);
  const auto rows = run_sweep(cfg, axis);
  std::string stem = std::string("sweep_") + axis_name(axis);
  if (axis == SweepAxis::total_length) stem = "sweep_L_plus";
  const fs::path dir(out);
  write_file(dir / (stem + ".csv"), to_csv(rows));
  write_file(dir / (stem + "_report.json"), to_report(rows).dump(2) + "\n");
  const auto [rate, qber] = sweep_plots(rows, axis);
  write_file(dir / (stem + "_rate.svg"), rate);
  write_file(dir / (stem + "_qber.svg"), qber);
  std::cout << to_csv(rows);
  report_errors(rows);
  return first_failure(rows);
}

int fit_jsa(const std::string& spectrum, double length_mm, double dk1, const std::string& out) {
  const Spectrum s = load_spectrum(spectrum);
  const FitResult f = phase_matching_from_fit(s, length_mm * 1e-3, dk1);
  const fs::path dir(out);
  const std::string stem = fs::path(spectrum).stem().string() + "_fit";

  std::string csv = "omega_minus_over_2pi_hz,measured,model\n";
  plot::Series measured{"measured", {}, {}}, model{"model", {}, {}};
  for (Eigen::Index i = 0; i < s.omega.size(); ++i) {
    const double phi = std::norm(f.phase_matching.phi.at(s.omega(i)));
    const double m = f.amplitude * phi + f.baseline;
    const double freq = s.omega(i) / kTwoPi;
    char line[128];
    std::snprintf(line, sizeof line, "%.12g,%.12g,%.12g\n", freq, s.power(i), m);
    csv += line;
    measured.x.push_back(freq * 1e-9);
    measured.y.push_back(s.power(i));
    model.x.push_back(freq * 1e-9);
    model.y.push_back(m);
  }
  write_file(dir / (stem + ".csv"), csv);
  write_file(dir / (stem + ".svg"),
             plot::line_chart({measured, model}, {"Marginal spectrum fit", "omega_- / 2 pi (GHz)", "power", false}));

  Json rep;
  rep["spectrum"] = spectrum;
  rep["length_mm"] = length_mm;
  rep["dk1_s_per_m"] = dk1;
  rep["delta_k1_per_m2"] = f.parameters.delta_k1;
  rep["delta_k2_per_m3"] = f.parameters.delta_k2;
  rep["dk0_per_m"] = f.parameters.dk0;
  rep["amplitude"] = f.amplitude;
  rep["baseline"] = f.baseline;
  rep["relative_rms_residual"] = f.residual;
  rep["evaluations"] = f.evaluations;
  rep["starts"] = f.starts;
  rep["warnings"] = f.phase_matching.warnings;
  write_file(dir / (stem + ".json"), rep.dump(2) + "\n");

  std::printf("phase-matching fit of %s\n", spectrum.c_str());
  std::printf("  crystal length       %.6g mm\n", length_mm);
  std::printf("  dk1                  %.6g s/m\n", dk1);
  std::printf("  delta k1             %.6g 1/m^2\n", f.parameters.delta_k1);
  std::printf("  delta k2             %.6g 1/m^3\n", f.parameters.delta_k2);
  std::printf("  dk0                  %.6g 1/m\n", f.parameters.dk0);
  std::printf("  relative residual    %.3g\n", f.residual);
  std::printf("  evaluations          %d from %d starts\n", f.evaluations, f.starts);
  for (const auto& w : f.phase_matching.warnings) std::printf("  warning: %s\n", w.c_str());
  return 0;
}

int oracle_check(const OracleCheckOptions& opt, const std::string& out) {
  const OracleReport rep = run_oracle_check(opt);
  const std::string text = to_json(rep, opt).dump(2) + "\n";
  if (!out.empty()) write_file(fs::path(out) / "oracle_check.json", text);
  std::cout << text;
  return rep.passed() ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-bin entangled QKD link simulator"};
  app.require_subcommand(1);

  std::string config, out = ".", axis, spectrum;
  double length_mm = 24.0, dk1 = 3e-10;
  OracleCheckOptions oc;
  std::string oc_out;

  auto* sim = app.add_subcommand("simulate", "Evaluate one configuration");
  sim->add_option("--config", config, "JSON configuration")->required();
  sim->add_option("--out", out, "Output directory");

  auto* sw = app.add_subcommand("sweep", "Sweep one parameter axis");
  sw->add_option("--config", config, "JSON configuration")->required();
  sw->add_option("--axis", axis, "mu, dead_time, phase, offset, L_+ or r_p")->required();
  sw->add_option("--out", out, "Output directory");

  auto* fit = app.add_subcommand("fit-jsa", "Fit phase matching to a measured marginal spectrum");
  fit->add_option("--spectrum", spectrum, "Spectrum CSV")->required();
  fit->add_option("--length-mm", length_mm, "Crystal length (mm)");
  fit->add_option("--dk1", dk1, "Group-velocity mismatch (s/m)");
  fit->add_option("--out", out, "Output directory");

  auto* orc = app.add_subcommand("oracle-check", "Compare the fast pipeline with independent oracles");
  orc->add_option("--seed", oc.seed, "Random seed");
  orc->add_option("--trials", oc.trials, "Random instances per check (1-16)");
  orc->add_option("--determinant-dim", oc.determinant_dim, "Largest determinant dimension (4-64)");
  orc->add_option("--fock-grid", oc.fock_grid, "Fock oracle grid points per axis (3-8)");
  orc->add_flag("--inject-fault", oc.inject_fault, "Perturb one receiver transformation sign");
  orc->add_option("--out", oc_out, "Write oracle_check.json here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*sim) return simulate(config, out);
    if (*sw) return sweep(config, axis, out);
    if (*fit) return fit_jsa(spectrum, length_mm, dk1, out);
    if (*orc) return oracle_check(oc, oc_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return error_code(e);
  }
  return 0;
}
