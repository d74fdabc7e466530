// Config-driven entry point: ties field synthesis, corrector solves,
// commutator ensembles, and the statistical verdicts together, writing
// machine-readable reports plus a run manifest per invocation.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "homog/chaos.hpp"
#include "homog/config.hpp"
#include "homog/corrector.hpp"
#include "homog/ensemble.hpp"
#include "homog/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace homog;

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_override;
  int workers_override = 0;
  bool has_seed_override = false;
  std::uint64_t seed_override = 0;
  bool quiet_override = false;
};

json matrix_json(const Matd& m) {
  json rows = json::array();
  for (int i = 0; i < m.d; ++i) {
    json row = json::array();
    for (int j = 0; j < m.d; ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

json config_echo(const ExperimentConfig& cfg) {
  json j;
  j["hash"] = cfg.hash();
  j["text"] = cfg.serialize();
  return j;
}

CoefficientField build_medium(const ExperimentConfig& cfg) {
  const Grid grid = cfg.ensemble.grid();
  if (cfg.medium_type == "laminate")
    return make_laminate_field(grid, cfg.medium_axis, cfg.medium_hi, cfg.medium_lo,
                               cfg.stripe_period);
  if (cfg.medium_type == "checkerboard")
    return make_checkerboard_field(grid, cfg.medium_hi, cfg.medium_lo, cfg.checker_cell);
  if (cfg.medium_type == "constant")
    return make_constant_field(grid,
                               Matd::identity(cfg.ensemble.dim, cfg.ensemble.constant_value));
  if (cfg.medium_type == "gaussian") {
    const CoefficientMap map = cfg.ensemble.build_map();
    const CovarianceModel model = CovarianceModel::build(
        cfg.ensemble.beta, cfg.ensemble.kappa, cfg.ensemble.C0, grid,
        canonical_profile(cfg.ensemble.beta, cfg.ensemble.dim, cfg.ensemble.profile_scale));
    const FieldSample field = sample_field(model, grid, cfg.ensemble.base_seed, 0);
    const double* shift = cfg.ensemble.shift.empty() ? nullptr : cfg.ensemble.shift.data();
    return evaluate_coefficient(map, field, shift);
  }
  throw std::runtime_error("config: unknown medium type '" + cfg.medium_type + "'");
}

json variance_fit_json(const std::vector<VarianceScalingFit>& fits) {
  json arr = json::array();
  for (const auto& f : fits) {
    json jf;
    jf["functional"] = f.functional_id;
    jf["slope"] = f.slope;
    jf["slope_se"] = f.slope_se;
    jf["expected"] = f.expected;
    jf["verdict"] = f.verdict;
    json rows = json::array();
    for (const auto& r : f.rows) {
      rows.push_back({{"epsilon", r.epsilon},
                      {"var_normalized", r.var_normalized},
                      {"se_normalized", r.se_normalized},
                      {"var_raw", r.var_raw},
                      {"se_raw", r.se_raw}});
    }
    jf["rows"] = rows;
    arr.push_back(jf);
  }
  return arr;
}

json k_tensor_json(const KTensor& kt) {
  json arr = json::array();
  for (int l = 0; l < kt.kappa; ++l)
    for (int i = 0; i < kt.dim; ++i)
      for (int j = 0; j < kt.dim; ++j)
        arr.push_back({{"l", l + 1},
                       {"i", i + 1},
                       {"j", j + 1},
                       {"value", kt.at(l, i, j)},
                       {"se", kt.se_at(l, i, j)}});
  return arr;
}

int run_subcommand(const std::string& sub, const ExperimentConfig& cfg,
                   const fs::path& out_dir, bool quiet) {
  const auto t0 = std::chrono::steady_clock::now();
  json report;
  report["schema_version"] = 1;
  report["subcommand"] = sub;
  report["config"] = config_echo(cfg);
  bool verdicts_pass = true;

  const int workers = cfg.workers;
  const auto& ens = cfg.ensemble;

  if (sub == "sample-field") {
    const Grid grid = ens.grid();
    const CovarianceModel model =
        CovarianceModel::build(ens.beta, ens.kappa, ens.C0, grid,
                               canonical_profile(ens.beta, ens.dim, ens.profile_scale));
    std::vector<FieldSample> fields;
    for (long s = 0; s < cfg.field_count; ++s) {
      fields.push_back(sample_field(model, grid, ens.base_seed, s));
      const std::string base = "field_" + std::to_string(s);
      write_field_binary((out_dir / (base + ".bin")).string(), fields.back());
      if (grid.sites() * static_cast<std::size_t>(ens.kappa) <= 1u << 16)
        write_field_csv((out_dir / (base + ".csv")).string(), fields.back());
    }
    report["envelope"] = {{"lo", model.envelope_lo()}, {"hi", model.envelope_hi()}};
    report["regime"] = regime_name(model.regime());
    if (fields.size() >= 2 && !cfg.lags.empty()) {
      std::vector<std::array<int, kMaxDim>> lags;
      for (const auto& lag : cfg.lags) {
        std::array<int, kMaxDim> a{};
        for (std::size_t k = 0; k < lag.size(); ++k) a[k] = lag[k];
        lags.push_back(a);
      }
      const auto table = empirical_covariance(fields, lags);
      json rows = json::array();
      for (const auto& row : table) {
        json r;
        r["lag"] = std::vector<int>(row.lag.begin(), row.lag.begin() + grid.dim);
        r["empirical"] = row.mean;
        r["se"] = row.se;
        std::array<int, kMaxDim> lag = row.lag;
        r["model"] = model.cov(0, 0, lag);
        rows.push_back(r);
      }
      report["empirical_covariance"] = rows;
    }
  } else if (sub == "solve-corrector") {
    const CoefficientField medium = build_medium(cfg);
    SolverOptions opt;
    opt.tol = ens.solver_tol;
    CorrectorSolution sol = solve_corrector(medium, opt);
    if (cfg.flux_corrector) solve_flux_corrector(sol);
    write_corrector_binary((out_dir / "corrector.bin").string(), sol, ens.base_seed);
    report["medium"] = cfg.medium_type;
    report["abar"] = matrix_json(sol.abar);
    report["residuals"] = sol.residual;
    report["iterations"] = sol.iterations;
    if (cfg.flux_corrector) report["sigma_residual"] = sol.sigma_residual;
  } else if (sub == "growth-scan") {
    if (cfg.scan_sides.empty())
      throw std::runtime_error("config: growth-scan needs [scan] sides");
    const CoefficientMap map = ens.build_map();
    SolverOptions opt;
    opt.tol = ens.solver_tol;
    const GrowthTable table =
        corrector_growth_scan(map, ens.beta, ens.C0, cfg.scan_sides, static_cast<int>(cfg.scan_samples),
                              ens.base_seed, workers, opt, ens.profile_scale);
    write_growth_csv((out_dir / "growth.csv").string(), table);
    json rows = json::array();
    for (const auto& r : table.rows)
      rows.push_back({{"N", r.side},
                      {"mean_phi_l2", r.mean_phi_l2},
                      {"se", r.se},
                      {"mu_reference", r.mu_reference}});
    report["rows"] = rows;
    report["fit_exponent"] = table.fit_exponent;
    report["fit_residual"] = table.fit_residual;
    report["ratio_spread"] = table.ratio_spread;
  } else if (sub == "commutator-scan" || sub == "covariance-check" || sub == "normality") {
    const EnsembleReport rep = run_ensemble(ens, workers);
    write_samples_csv((out_dir / "samples.csv").string(), rep);
    report["failures"] = rep.failures;
    Matd abar_mean(ens.dim), abar_se(ens.dim);
    rep.abar_statistics(abar_mean, abar_se);
    report["abar_mean"] = matrix_json(abar_mean);
    report["abar_se"] = matrix_json(abar_se);
    if (sub == "commutator-scan") {
      if (ens.epsilons.size() >= 3) report["variance_scaling"] = variance_fit_json(variance_scaling_fit(rep));
      if (ens.family != "constant") report["k_tensor"] = k_tensor_json(estimate_k_tensor(rep));
    } else if (sub == "covariance-check") {
      const CovarianceModel model =
          CovarianceModel::build(ens.beta, ens.kappa, ens.C0, ens.grid(),
                                 canonical_profile(ens.beta, ens.dim, ens.profile_scale));
      const CovarianceCheck chk = covariance_structure_check(rep, model);
      report["regime"] = regime_name(chk.regime);
      report["low_power"] = chk.low_power;
      if (chk.regime == Regime::integrable || ens.family == "constant") {
        json rows = json::array();
        for (const auto& p : chk.plateau)
          rows.push_back({{"epsilon", p.epsilon},
                          {"var", p.var_normalized},
                          {"se", p.se_normalized}});
        report["plateau"] = rows;
        report["plateau_gap"] = chk.plateau_gap;
        report["plateau_gap_se"] = chk.plateau_gap_se;
        report["plateau_ok"] = chk.plateau_ok;
        report["q_contraction"] = chk.q_contraction;
        verdicts_pass = chk.plateau_ok;
      } else {
        json rows = json::array();
        bool all_ok = true;
        for (const auto& r : chk.rows) {
          rows.push_back({{"F", r.f_id},
                          {"Fprime", r.fprime_id},
                          {"epsilon", r.epsilon},
                          {"empirical", r.empirical},
                          {"empirical_se", r.empirical_se},
                          {"predicted", r.predicted},
                          {"predicted_se", r.predicted_se},
                          {"combined_se", r.combined_se},
                          {"within_3sigma", r.within_3sigma}});
          all_ok = all_ok && r.within_3sigma;
        }
        report["rows"] = rows;
        verdicts_pass = all_ok;
      }
    } else {
      json rows = json::array();
      for (const auto& r : normality_distances(rep))
        rows.push_back({{"F", r.f_id},
                        {"epsilon", r.epsilon},
                        {"w1", r.w1},
                        {"ks", r.ks},
                        {"samples", r.samples},
                        {"tv", r.tv_note}});
      report["distances"] = rows;
    }
  } else if (sub == "degeneracy-scan") {
    if (cfg.scan_z.size() < 5)
      throw std::runtime_error("config: degeneracy-scan needs [scan] z with >= 5 points");
    EnsembleConfig base = ens;
    base.samples = cfg.scan_samples;
    const DegeneracyScan scan = degeneracy_scan(base, cfg.scan_z, workers);
    json rows = json::array();
    for (const auto& r : scan.rows)
      rows.push_back({{"z", r.z},
                      {"abar", r.abar},
                      {"abar_se", r.abar_se},
                      {"k", r.k},
                      {"k_se", r.k_se}});
    report["rows"] = rows;
    json identity = json::array();
    bool identity_ok = true;
    for (const auto& r : scan.identity) {
      identity.push_back({{"z", r.z},
                          {"k", r.k},
                          {"dabar_dz", r.dabar_dz},
                          {"gap", r.gap},
                          {"gap_se", r.gap_se},
                          {"truncation", r.truncation},
                          {"within_errors", r.within_errors}});
      identity_ok = identity_ok && r.within_errors;
    }
    report["identity"] = identity;
    report["z_at_max_abar"] = scan.z_at_max_abar;
    report["k_at_max"] = scan.k_at_max;
    report["k_at_max_se"] = scan.k_at_max_se;
    report["harmonic_bound_ok"] = scan.harmonic_bound_ok;
    verdicts_pass = identity_ok && scan.harmonic_bound_ok;
  } else if (sub == "malliavin-check") {
    const OracleSuiteResult res = run_malliavin_suite(ens.base_seed);
    json rows = json::array();
    for (const auto& c : res.checks)
      rows.push_back({{"identity", c.identity},
                      {"trial_seed", c.trial_seed},
                      {"lhs", c.lhs},
                      {"rhs", c.rhs},
                      {"abs_gap", c.abs_gap},
                      {"rel_gap", c.rel_gap}});
    report["checks"] = rows;
    report["max_rel_gap"] = res.max_rel_gap;
    report["poincare1_failures"] = res.poincare1_failures;
    report["poincare2_failures"] = res.poincare2_failures;
    report["pass"] = res.pass;
    verdicts_pass = res.pass;
  } else {
    throw std::runtime_error("unknown subcommand '" + sub + "'");
  }

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report["wall_seconds"] = wall;
  report["verdicts_pass"] = verdicts_pass;
  write_text_file((out_dir / "report.json").string(), report.dump(2) + "\n");
  ManifestInfo manifest;
  manifest.config_hash = cfg.hash();
  manifest.seed = cfg.ensemble.base_seed;
  manifest.wall_seconds = wall;
  manifest.subcommand = sub;
  write_manifest((out_dir / "manifest.json").string(), manifest);
  if (!quiet)
    std::printf("%s: %s in %.1f s -> %s\n", sub.c_str(),
                verdicts_pass ? "ok" : "VERDICT FAILED", wall, out_dir.string().c_str());
  return verdicts_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic-homogenization commutator laboratory"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  CliOptions opt;
  app.add_option("--config", opt.config_path, "experiment config file")->required();
  app.add_option("--out", opt.out_override, "output directory (overrides config)");
  app.add_option("--workers", opt.workers_override, "worker threads (overrides config)");
  auto* seed_opt = app.add_option("--seed", opt.seed_override, "base seed (overrides config)");
  app.add_flag("--quiet", opt.quiet_override, "suppress progress output");

  const std::vector<std::string> subs = {"sample-field",    "solve-corrector", "growth-scan",
                                         "commutator-scan", "covariance-check", "normality",
                                         "degeneracy-scan", "malliavin-check"};
  for (const auto& s : subs) app.add_subcommand(s, "");

  CLI11_PARSE(app, argc, argv);
  const std::string sub = app.get_subcommands().front()->get_name();

  // Configuration failures exit 2 with no artifacts; everything the run
  // needs is validated before the output directory is created.
  ExperimentConfig cfg;
  try {
    cfg = load_experiment_config(opt.config_path);
    if (!opt.out_override.empty()) cfg.out_dir = opt.out_override;
    if (opt.workers_override > 0) cfg.workers = opt.workers_override;
    if (seed_opt->count() > 0) cfg.ensemble.base_seed = opt.seed_override;
    if (opt.quiet_override) cfg.quiet = true;
    if (sub == "commutator-scan" || sub == "covariance-check" || sub == "normality")
      cfg.ensemble.validate();
    else if (sub == "degeneracy-scan") {
      EnsembleConfig probe = cfg.ensemble;
      probe.samples = cfg.scan_samples;
      probe.epsilons.clear();
      probe.functionals.clear();
      if (cfg.scan_z.size() < 5)
        throw std::runtime_error("config: degeneracy-scan needs [scan] z with >= 5 points");
      probe.shift = {cfg.scan_z.front()};
      probe.validate();
    } else if (sub == "growth-scan") {
      if (cfg.scan_sides.size() < 3)
        throw std::runtime_error("config: growth-scan needs >= 3 sides");
      cfg.ensemble.build_map();
    } else if (sub == "sample-field" || sub == "solve-corrector") {
      cfg.ensemble.grid().validate();
      if (cfg.medium_type == "gaussian" || sub == "sample-field") cfg.ensemble.build_map();
    }
  } catch (const std::exception& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 2;
  }

  try {
    fs::path out_dir = cfg.out_dir;
    fs::create_directories(out_dir);
    return run_subcommand(sub, cfg, out_dir, cfg.quiet);
  } catch (const std::exception& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return 3;
  }
}
