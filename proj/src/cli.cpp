#include "codeal/cli.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include <fmt/format.h>

#include "codeal/config.hpp"
#include "codeal/errors.hpp"
#include "codeal/estimators.hpp"
#include "codeal/io.hpp"
#include "codeal/simulate.hpp"

namespace codeal {
namespace {

using nlohmann::json;

struct CommonOpts {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int threads = 1;
  bool json_output = false;
  bool no_timestamp = false;
  bool print_config = false;
  CLI::Option* seed_option = nullptr;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path,
                  "configuration file (sections [dgp], [estimators], "
                  "[estimator], [covariate], [autoencoder], [vert-reg], "
                  "[mc-nnm])");
  cmd->add_option("--out", o.out_dir, "output directory")
      ->capture_default_str();
  o.seed_option =
      cmd->add_option("--seed", o.seed, "master random seed")
          ->capture_default_str();
  cmd->add_option("--threads", o.threads, "worker threads (1 = sequential)")
      ->capture_default_str();
  cmd->add_flag("--json", o.json_output, "also emit a JSON summary");
  cmd->add_flag("--no-timestamp", o.no_timestamp,
                "omit the timestamp comment from output files");
  cmd->add_flag("--print-config", o.print_config,
                "print the effective configuration and exit");
}

ConfigMap load_config(const CommonOpts& o) {
  return o.config_path.empty() ? ConfigMap::parse_text("")
                               : ConfigMap::parse_file(o.config_path);
}

void reject_unread(const ConfigMap& config) {
  const std::vector<std::string> unread = config.unread_keys();
  if (unread.empty()) return;
  std::string joined;
  for (const std::string& key : unread) {
    if (!joined.empty()) joined += ", ";
    joined += key;
  }
  throw InvalidConfig(fmt::format("unknown config keys: {}", joined));
}

std::string timestamp_comment(const CommonOpts& o) {
  if (o.no_timestamp) return "";
  const std::time_t now = std::time(nullptr);
  char buffer[32];
  std::tm parts{};
  gmtime_r(&now, &parts);
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &parts);
  return fmt::format("generated {}", buffer);
}

std::string output_path(const CommonOpts& o, const std::string& name) {
  std::filesystem::create_directories(o.out_dir);
  return (std::filesystem::path(o.out_dir) / name).string();
}

json dgp_to_json(const DgpConfig& dgp) {
  json j{{"design", to_name(dgp.design)},
         {"N", dgp.units},
         {"T", dgp.periods},
         {"P", dgp.covariate_dim},
         {"K", dgp.factor_dim},
         {"factor", to_name(dgp.factor_kind)},
         {"covariate", to_name(dgp.covariate_kind)},
         {"noiseSd", dgp.noise_sd},
         {"tauMean", dgp.tau_mean},
         {"tauVariance", dgp.tau_variance},
         {"seed", dgp.seed}};
  if (dgp.design == DesignKind::kFourBlock) {
    j["N1"] = dgp.control_units;
    j["T1"] = dgp.pre_periods;
  } else {
    j["r"] = dgp.staggered_groups;
  }
  return j;
}

json finite_or_null(double v) {
  return std::isfinite(v) ? json(v) : json(nullptr);
}

int run_simulate(const CommonOpts& opts, int reps,
                 const std::string& estimators_flag, bool save_first_panel) {
  const ConfigMap config = load_config(opts);
  DgpConfig dgp = dgp_from_config(config);
  if (opts.seed_option->count() > 0) dgp.seed = opts.seed;
  EstimatorConfig base = estimator_from_config(config);
  // Without an explicit width the code layer matches the generator's factor
  // count.
  if (!config.has("autoencoder.code-dim")) {
    base.autoencoder.code_dim = dgp.factor_dim;
  }
  std::vector<ExperimentEstimator> estimators;
  if (estimators_flag.empty()) {
    estimators = estimators_from_config(config, base);
  } else {
    ConfigMap flag = ConfigMap::parse_text(
        fmt::format("[estimators]\nlist = {}\n", estimators_flag), "--estimators");
    estimators = estimators_from_config(flag, base);
    (void)config.get_string_list("estimators.list", {});
  }
  reject_unread(config);

  if (opts.print_config) {
    std::fputs(render_config(dgp, estimators, base).c_str(), stdout);
    return 0;
  }

  const std::string comment = timestamp_comment(opts);
  if (save_first_panel) {
    // The first replication regenerates from the base seed, so these files
    // are exactly the panel that replication 0 scores.
    const SimulatedPanel sim = generate(dgp);
    save_panel(sim.panel, output_path(opts, "panel-y.csv"),
               output_path(opts, "panel-w.csv"),
               dgp.covariate_dim > 0 ? output_path(opts, "panel-x.csv") : "",
               comment);
    CsvTable tau;
    tau.row_labels = sim.panel.unit_labels;
    tau.column_labels = {"tau"};
    tau.values = sim.tau;
    write_csv(output_path(opts, "panel-tau.csv"), tau, comment);
  }

  const ExperimentResult result =
      run_experiment(dgp, estimators, reps, opts.threads);

  std::vector<std::string> removals;
  for (const ExperimentEstimator& e : estimators) {
    removals.push_back(to_name(e.config.covariate.kind));
  }
  write_results_csv(output_path(opts, "results.csv"), result, removals,
                    comment);

  if (opts.json_output) {
    json summary{{"config", dgp_to_json(dgp)},
                 {"replications", result.replications},
                 {"estimators", json::object()}};
    for (std::size_t e = 0; e < result.rows.size(); ++e) {
      const ExperimentRow& row = result.rows[e];
      summary["estimators"][row.estimator] = {
          {"covariateRemoval", removals[e]},
          {"maeMean", row.mae_mean},
          {"maeSe", finite_or_null(row.mae_se)},
          {"mseMean", row.mse_mean},
          {"mseSe", finite_or_null(row.mse_se)}};
    }
    std::ofstream out(output_path(opts, "results.json"));
    out << summary.dump(2) << "\n";
  }

  fmt::print("{} | {} replications\n", describe(dgp), result.replications);
  for (std::size_t e = 0; e < result.rows.size(); ++e) {
    const ExperimentRow& row = result.rows[e];
    if (result.replications > 1) {
      fmt::print("{:<18} mae {:.3f} ({:.3f})  mse {:.3f} ({:.3f})\n",
                 row.estimator, row.mae_mean, row.mae_se, row.mse_mean,
                 row.mse_se);
    } else {
      fmt::print("{:<18} mae {:.3f}  mse {:.3f}\n", row.estimator,
                 row.mae_mean, row.mse_mean);
    }
  }
  return 0;
}

int run_impute(const CommonOpts& opts, const std::string& y_path,
               const std::string& w_path, const std::string& x_path,
               const std::string& estimator_entry, const std::string& removal,
               Index code_dim) {
  const ConfigMap config = load_config(opts);
  (void)dgp_from_config(config);  // tolerate a shared config file
  EstimatorConfig base = estimator_from_config(config);
  ExperimentEstimator chosen = parse_estimator_entry(
      estimator_entry.empty() ? to_name(base.kind) : estimator_entry, base);
  if (!removal.empty()) {
    chosen.config.covariate.kind = covariate_kind_from_name(removal);
  }
  if (code_dim > 0) chosen.config.autoencoder.code_dim = code_dim;
  chosen.config.covariate.threads = opts.threads;
  reject_unread(config);

  if (opts.print_config) {
    std::fputs(render_config(DgpConfig{}, {chosen}, chosen.config).c_str(),
               stdout);
    return 0;
  }

  const PanelDataset panel = load_panel(y_path, w_path, x_path);
  const ImputationResult result =
      run_estimator(panel, chosen.config, SeedSequence(opts.seed));

  const std::string comment = timestamp_comment(opts);
  CsvTable cf;
  cf.row_labels = panel.unit_labels;
  cf.column_labels = panel.period_labels;
  cf.values = result.counterfactuals;
  write_csv(output_path(opts, "counterfactuals.csv"), cf, comment);

  CsvTable att;
  att.row_labels = panel.unit_labels;
  att.column_labels = {"att", "treatedPeriods"};
  att.values.resize(panel.units(), 2);
  for (Index i = 0; i < panel.units(); ++i) {
    att.values(i, 0) = result.att.per_unit[static_cast<std::size_t>(i)];
    att.values(i, 1) = static_cast<double>(
        result.att.treated_period_counts[static_cast<std::size_t>(i)]);
  }
  write_csv(output_path(opts, "att.csv"), att, comment);

  const double aggregate = aggregate_att(result.att, panel);
  if (opts.json_output) {
    json per_unit = json::array();
    for (Index i = 0; i < panel.units(); ++i) {
      const std::size_t k = static_cast<std::size_t>(i);
      per_unit.push_back(
          {{"unit", panel.unit_labels[k]},
           {"att", result.att.has(i) ? json(result.att.per_unit[k])
                                     : json(nullptr)},
           {"treatedPeriods", result.att.treated_period_counts[k]}});
    }
    json summary{{"estimator", to_name(chosen.config.kind)},
                 {"covariateRemoval", to_name(chosen.config.covariate.kind)},
                 {"seed", opts.seed},
                 {"aggregateAtt", aggregate},
                 {"perUnitAtt", per_unit}};
    std::ofstream out(output_path(opts, "summary.json"));
    out << summary.dump(2) << "\n";
  }

  fmt::print("{} units, {} periods, estimator {}\n", panel.units(),
             panel.periods(), to_name(chosen.config.kind));
  fmt::print("aggregate att {:.6g}\n", aggregate);
  return 0;
}

int run_evaluate(const CommonOpts& opts, const std::string& y_path,
                 const std::string& w_path, const std::string& x_path,
                 const std::string& tau_path, const std::string& imputed_path) {
  const PanelDataset panel = load_panel(y_path, w_path, x_path);

  const CsvTable tau_table = read_csv(tau_path);
  if (tau_table.column_labels.size() != 1) {
    throw HeaderMismatch(fmt::format(
        "'{}' must have exactly one value column, found {}", tau_path,
        tau_table.column_labels.size()));
  }
  const Vector tau = align_rows(tau_table, panel.unit_labels, tau_path);

  const CsvTable imputed_table = read_csv(imputed_path);
  if (imputed_table.column_labels != panel.period_labels) {
    throw HeaderMismatch(fmt::format(
        "'{}' period headers do not match the outcome file", imputed_path));
  }
  const Matrix imputed =
      align_rows(imputed_table, panel.unit_labels, imputed_path);

  const Metrics m = metrics(panel, tau, imputed);
  if (opts.json_output) {
    fmt::print("{}\n", json{{"mae", m.mae}, {"mse", m.mse}}.dump());
  } else {
    fmt::print("mae = {:.17g}\nmse = {:.17g}\n", m.mae, m.mse);
  }
  return 0;
}

int run_export(const CommonOpts& opts, const std::string& y_path,
               const std::string& w_path, const std::string& x_path,
               const std::string& cf_path, int window) {
  const PanelDataset panel = load_panel(y_path, w_path, x_path);
  const CsvTable cf_table = read_csv(cf_path);
  if (cf_table.column_labels != panel.period_labels) {
    throw HeaderMismatch(fmt::format(
        "'{}' period headers do not match the outcome file", cf_path));
  }
  const Matrix cf = align_rows(cf_table, panel.unit_labels, cf_path);
  const CounterfactualSeries series = counterfactual_series(panel, cf, window);
  write_series_csv(output_path(opts, "series.csv"), series,
                   timestamp_comment(opts));
  fmt::print("wrote series for {} periods\n", series.observed.size());
  return 0;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"counterfactual imputation and treatment effect estimation "
               "for causal panels"};
  app.require_subcommand(1);

  CommonOpts sim_opts;
  int reps = 1;
  std::string estimators_flag;
  bool save_first_panel = false;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "generate synthetic panels and score estimators on them");
  add_common(simulate, sim_opts);
  simulate->add_option("--reps", reps, "number of replications")
      ->capture_default_str();
  simulate->add_option("--estimators", estimators_flag,
                       "comma-separated list, entries 'kind' or "
                       "'kind/removal' (overrides the config)");
  simulate->add_flag("--save-panel", save_first_panel,
                     "also write the first replication's panel and effects");

  CommonOpts imp_opts;
  std::string imp_y, imp_w, imp_x, imp_estimator, imp_removal;
  Index imp_k = 0;
  CLI::App* impute = app.add_subcommand(
      "impute", "estimate counterfactuals and effects for an observed panel");
  add_common(impute, imp_opts);
  impute->add_option("--y", imp_y, "outcome CSV")->required();
  impute->add_option("--w", imp_w, "treatment CSV")->required();
  impute->add_option("--x", imp_x, "covariate CSV");
  impute->add_option("--estimator", imp_estimator,
                     "codeal | single-ae | did | vert-reg | mc-nnm, "
                     "optionally with /removal");
  impute->add_option("--covariate-removal", imp_removal,
                     "dnn | linear | none");
  impute->add_option("--k", imp_k, "autoencoder code dimension");

  CommonOpts eval_opts;
  std::string eval_y, eval_w, eval_x, eval_tau, eval_imputed;
  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "score an imputation against known unit effects");
  add_common(evaluate, eval_opts);
  evaluate->add_option("--y", eval_y, "outcome CSV")->required();
  evaluate->add_option("--w", eval_w, "treatment CSV")->required();
  evaluate->add_option("--x", eval_x, "covariate CSV");
  evaluate->add_option("--tau", eval_tau, "unit effect CSV (unit,tau)")
      ->required();
  evaluate->add_option("--imputed", eval_imputed, "counterfactual CSV")
      ->required();

  CommonOpts exp_opts;
  std::string exp_y, exp_w, exp_x, exp_cf;
  int window = 14;
  CLI::App* exporter = app.add_subcommand(
      "export-counterfactual",
      "aggregate observed and counterfactual outcomes over treated units");
  add_common(exporter, exp_opts);
  exporter->add_option("--y", exp_y, "outcome CSV")->required();
  exporter->add_option("--w", exp_w, "treatment CSV")->required();
  exporter->add_option("--x", exp_x, "covariate CSV");
  exporter->add_option("--counterfactual", exp_cf, "counterfactual CSV")
      ->required();
  exporter->add_option("--window", window, "rolling mean window, 0 disables")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
    if (simulate->parsed()) {
      return run_simulate(sim_opts, reps, estimators_flag, save_first_panel);
    }
    if (impute->parsed()) {
      return run_impute(imp_opts, imp_y, imp_w, imp_x, imp_estimator,
                        imp_removal, imp_k);
    }
    if (evaluate->parsed()) {
      return run_evaluate(eval_opts, eval_y, eval_w, eval_x, eval_tau,
                          eval_imputed);
    }
    if (exporter->parsed()) {
      return run_export(exp_opts, exp_y, exp_w, exp_x, exp_cf, window);
    }
    return 2;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "codeal: usage error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "codeal: usage error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "codeal: data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "codeal: numeric error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "codeal: error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace codeal
