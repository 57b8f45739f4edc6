// a3c: environment generation, runs, worker sweeps, oracle checks, reports
// and plots. Exit codes: 0 ok, 2 usage/config, 3 assumption violated, 4 I/O.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "a3c.hpp"

namespace fs = std::filesystem;
using namespace a3c;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitAssumption = 3;
constexpr int kExitIo = 4;

// Flags shared by run and sweep-workers; each overrides the config file only
// when given on the command line.
struct Overrides {
  std::string config;
  std::string env;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string mode;
  std::uint64_t updates = 0;
  std::string delay;
  std::string delay_script;
  std::uint64_t k0_cap = 0;
  std::uint64_t eval_every = 0;
  double radius = 0.0;
  std::size_t states = 0, actions = 0, dim = 0;
  double discount = 0.0;
  std::uint64_t env_seed = 0;
  std::string out = ".";

  std::vector<std::pair<CLI::Option*, std::string>> set;  // (option, config key)
};

void add_env_flags(CLI::App* app, Overrides& o) {
  o.set.emplace_back(app->add_option("--states", o.states, "Number of states"), "states");
  o.set.emplace_back(app->add_option("--actions", o.actions, "Number of actions"), "actions");
  o.set.emplace_back(app->add_option("--dim", o.dim, "Feature dimension"), "feature_dim");
  o.set.emplace_back(app->add_option("--discount", o.discount, "Discount factor"), "discount");
  o.set.emplace_back(app->add_option("--env-seed", o.env_seed, "Seed of the generated environment"), "env_seed");
}

void add_run_flags(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "Config file (key = value)")->check(CLI::ExistingFile);
  app->add_option("--env", o.env, "Environment file from gen-env; default: generate from config")
      ->check(CLI::ExistingFile);
  add_env_flags(app, o);
  o.set.emplace_back(app->add_option("--seed", o.seed, "Run seed"), "seed");
  o.set.emplace_back(app->add_option("--mode", o.mode, "Sampling mode")->check(CLI::IsMember({"iid", "markov"})),
                     "mode");
  o.set.emplace_back(app->add_option("--updates", o.updates, "Total commits K"), "updates");
  o.set.emplace_back(
      app->add_option("--delay", o.delay,
                      "real: threads; scripted: simulated, delays from --delay-script (zeros without one); "
                      "round-robin: simulated, delay N - 1")
          ->check(CLI::IsMember({"real", "scripted", "round-robin"})),
      "delay");
  o.set.emplace_back(app->add_option("--delay-script", o.delay_script, "Delay script file (implies --delay scripted)")
                         ->check(CLI::ExistingFile),
                     "delay_script");
  o.set.emplace_back(app->add_option("--k0-cap", o.k0_cap, "Declared delay bound K0"), "k0_cap");
  o.set.emplace_back(app->add_option("--eval-every", o.eval_every, "Evaluation cadence in commits"), "eval_every");
  o.set.emplace_back(app->add_option("--radius", o.radius, "Critic projection radius; default r_max / lambda"),
                     "radius");
  app->add_option("--out", o.out, "Output directory")->capture_default_str();
}

ExperimentConfig build_config(const Overrides& o, const std::vector<std::pair<CLI::Option*, std::string>>& extra) {
  ExperimentConfig cfg;
  if (!o.config.empty()) apply_config_file(cfg, o.config);
  auto apply = [&cfg](CLI::Option* opt, const std::string& key) {
    if (opt->count() == 0) return;
    apply_config_value(cfg, key, opt->as<std::string>());
  };
  for (const auto& [opt, key] : o.set) apply(opt, key);
  for (const auto& [opt, key] : extra) apply(opt, key);
  if (!o.delay_script.empty() && o.delay.empty()) cfg.delay = DelayKind::Scripted;
  cfg.validate();
  return cfg;
}

TabularMdp environment_for(const Overrides& o, const ExperimentConfig& cfg) {
  return o.env.empty() ? generate_synthetic_env(cfg.env) : load_env(o.env);
}

void print_config(const ExperimentConfig& cfg, const TabularMdp& mdp, const Overrides& o) {
  std::cout << "# effective configuration\n";
  std::istringstream lines(describe_config(cfg));
  std::string line;
  while (std::getline(lines, line)) std::cout << "# " << line << '\n';
  if (!o.env.empty())
    std::cout << "# env file = " << o.env << " (" << mdp.n_states() << " states, " << mdp.n_actions()
              << " actions, d = " << mdp.feature_dim() << ")\n";
}

fs::path out_dir(const std::string& out) {
  fs::path p(out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError(out, ec.message());
  return p;
}

int cmd_gen_env(const EnvSpec& spec, const std::string& out) {
  const TabularMdp mdp = generate_synthetic_env(spec);
  audit_environment(mdp);
  save_env(out, mdp);
  std::cout << "gen-env: wrote " << out << " (" << spec.n_states << " states, " << spec.n_actions << " actions, d = "
            << spec.feature_dim << ", gamma = " << spec.discount << ", seed = " << spec.seed << ")\n";
  return 0;
}

int cmd_run(const Overrides& o) {
  const ExperimentConfig cfg = build_config(o, {});
  const TabularMdp mdp = environment_for(o, cfg);
  print_config(cfg, mdp, o);
  const RunResult r = run_experiment(mdp, cfg);
  const fs::path dir = out_dir(o.out);
  write_csv((dir / "metrics.csv").string(), metrics_table(r.rows));
  write_csv((dir / "log.csv").string(), log_table(r.log));
  const MetricsRow& last = r.rows.back();
  std::cout << "run: " << r.log.records.size() << " commits, " << cfg.workers << " workers, max delay "
            << r.log.max_delay << ", J " << format_double(last.objective) << ", critic gap "
            << format_double(last.critic_gap) << " -> " << (dir / "metrics.csv").string() << ", "
            << (dir / "log.csv").string() << '\n';
  if (r.log.k0_exceeded)
    std::cerr << "warning: observed max delay " << r.log.max_delay << " exceeds K0 = " << r.log.k0_cap << '\n';
  return 0;
}

int cmd_sweep(const Overrides& o, const std::vector<std::pair<CLI::Option*, std::string>>& extra) {
  const ExperimentConfig cfg = build_config(o, extra);
  const TabularMdp mdp = environment_for(o, cfg);
  print_config(cfg, mdp, o);
  const SweepResult sweep = speedup_sweep(mdp, cfg);
  const SpeedupReport rep = speedup_report(sweep.runs, sweep.target.target);
  const fs::path dir = out_dir(o.out);
  write_csv((dir / "sweep.csv").string(), sweep_table(sweep));
  write_csv((dir / "speedup.csv").string(), speedup_table(rep));
  std::cout << "sweep-workers: target " << format_double(sweep.target.target) << ";";
  for (const auto& row : rep.rows)
    std::cout << " N=" << row.n_workers << " speedup " << format_double(row.speedup) << " (" << row.reached << "/"
              << row.runs << " reached)";
  std::cout << " -> " << (dir / "sweep.csv").string() << ", " << (dir / "speedup.csv").string() << '\n';
  return 0;
}

int cmd_report(const std::string& in, const std::string& out) {
  const SweepResult sweep = sweep_from_table(read_csv(in));
  const SpeedupReport rep = speedup_report(sweep.runs, sweep.target.target);
  write_csv(out, speedup_table(rep));
  std::cout << "report-speedup: " << rep.rows.size() << " worker counts -> " << out << '\n';
  return 0;
}

int cmd_plot(const std::string& in, const std::string& out) {
  write_text(out, plot_csv(read_csv(in)));
  std::cout << "plot: " << in << " -> " << out << '\n';
  return 0;
}

struct Check {
  std::string name;
  double residual;
  bool pass;
};

std::vector<Check> oracle_checks(const TabularMdp& mdp, const SoftmaxPolicy& policy, const std::string& tag) {
  std::vector<Check> out;
  const PolicyChain chain = policy_chain(mdp, policy);
  const Vector mu = stationary_distribution(chain);
  const double res_mu = stationary_residual(chain.kernel, mu);
  out.push_back({tag + ".stationary_residual", res_mu, res_mu < kStationaryResidualTol});
  const TdMatrices td = td_matrices(mdp, chain, mu);
  const double res_td = (td.A * td.omega_star + td.b).cwiseAbs().maxCoeff();
  out.push_back({tag + ".td_fixed_point", res_td, res_td < 1e-10});
  out.push_back({tag + ".lambda", td.lambda, td.lambda > 0.0});
  const double bound = mdp.r_max() / td.lambda;
  out.push_back({tag + ".omega_star_norm_over_bound", td.omega_star.norm() / bound, td.omega_star.norm() <= bound});
  const Vector d = discounted_visitation(mdp, chain);
  const RowMatrix restart = restart_kernel(mdp, chain);
  const double res_vis = (d.transpose() * restart - d.transpose()).cwiseAbs().maxCoeff();
  out.push_back({tag + ".visitation_restart_residual", res_vis, res_vis < 1e-10});
  const MixingFit fit = mixing_diagnostic(chain);
  double worst = 0.0;
  for (const auto& [t, tv] : fit.tv_curve)
    worst = std::max(worst, tv - fit.kappa * std::pow(fit.rho, static_cast<double>(t)));
  out.push_back({tag + ".mixing_bound_excess", worst, worst <= 0.0});
  return out;
}

int cmd_verify(const Overrides& o, std::size_t thetas) {
  const ExperimentConfig cfg = build_config(o, {});
  const TabularMdp mdp = environment_for(o, cfg);
  std::vector<Check> checks;
  double row_err = 0.0;
  for (Eigen::Index r = 0; r < mdp.transition().rows(); ++r)
    row_err = std::max(row_err, std::abs(mdp.transition().row(r).sum() - 1.0));
  checks.push_back({"env.transition_row_sum", row_err, row_err < kStochasticTol});
  double feat_err = 0.0;
  for (Eigen::Index s = 0; s < mdp.features().rows(); ++s)
    feat_err = std::max(feat_err, std::abs(mdp.features().row(s).norm() - 1.0));
  checks.push_back({"env.feature_norm", feat_err, feat_err < 1e-12});

  const SoftmaxPolicy uniform = SoftmaxPolicy::uniform(mdp);
  for (auto& c : oracle_checks(mdp, uniform, "theta0")) checks.push_back(c);
  Rng rng(cfg.seed, stream::kRollout + 1);
  for (std::size_t i = 0; i < thetas; ++i) {
    SoftmaxPolicy p = uniform;
    for (Eigen::Index j = 0; j < p.theta.size(); ++j) p.theta.data()[j] = 4.0 * rng.uniform() - 2.0;
    for (auto& c : oracle_checks(mdp, p, "theta" + std::to_string(i + 1))) checks.push_back(c);
  }
  bool ok = true;
  for (const auto& c : checks) {
    std::cout << c.name << ' ' << format_double(c.residual) << ' ' << (c.pass ? "pass" : "fail") << '\n';
    ok = ok && c.pass;
  }
  std::cout << "verify-oracles: " << checks.size() << " checks, " << (ok ? "all pass" : "FAILURES") << '\n';
  return ok ? 0 : kExitAssumption;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Asynchronous actor-critic (A3C-TD(0)) on tabular MDPs"};
  app.set_help_flag();
  app.set_help_all_flag("-h,--help", "Print help for every subcommand and exit");
  app.require_subcommand(1);

  EnvSpec gen;
  std::string gen_out = "env.txt";
  auto* gen_cmd = app.add_subcommand("gen-env", "Generate a synthetic environment file");
  gen_cmd->add_option("--states", gen.n_states, "Number of states")->capture_default_str();
  gen_cmd->add_option("--actions", gen.n_actions, "Number of actions")->capture_default_str();
  gen_cmd->add_option("--dim", gen.feature_dim, "Feature dimension")->capture_default_str();
  gen_cmd->add_option("--discount", gen.discount, "Discount factor")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Environment seed")->capture_default_str();
  gen_cmd->add_option("--out", gen_out, "Output file")->capture_default_str();

  Overrides run;
  auto* run_cmd = app.add_subcommand("run", "Single run; writes metrics.csv and log.csv to --out");
  add_run_flags(run_cmd, run);
  run.set.emplace_back(run_cmd->add_option("--workers", run.workers, "Number of workers N"), "workers");

  Overrides sweep;
  std::string n_list, target;
  std::size_t mc_runs = 0, threads = 0;
  std::uint64_t ref_updates = 0;
  double target_fraction = 0.0;
  auto* sweep_cmd = app.add_subcommand("sweep-workers", "Speedup sweep; writes sweep.csv and speedup.csv to --out");
  add_run_flags(sweep_cmd, sweep);
  std::vector<std::pair<CLI::Option*, std::string>> sweep_extra{
      {sweep_cmd->add_option("--n", n_list, "Worker counts, e.g. 1,2,4,8"), "worker_counts"},
      {sweep_cmd->add_option("--mc-runs", mc_runs, "Seeds per worker count"), "mc_runs"},
      {sweep_cmd->add_option("--target-reward", target, "Target running-average J, or auto"), "target_reward"},
      {sweep_cmd->add_option("--target-fraction", target_fraction, "Fraction of the reference gain used as target"),
       "target_fraction"},
      {sweep_cmd->add_option("--reference-updates", ref_updates, "Commits in the reference run"),
       "reference_updates"},
      {sweep_cmd->add_option("--threads", threads, "Independent runs executed concurrently"), "threads"}};

  Overrides verify;
  std::size_t thetas = 5;
  auto* verify_cmd = app.add_subcommand("verify-oracles", "Check oracle invariants; one line per check");
  verify_cmd->add_option("--config", verify.config, "Config file (key = value)")->check(CLI::ExistingFile);
  verify_cmd->add_option("--env", verify.env, "Environment file; default: generate from config")
      ->check(CLI::ExistingFile);
  add_env_flags(verify_cmd, verify);
  verify.set.emplace_back(verify_cmd->add_option("--seed", verify.seed, "Seed for random policies"), "seed");
  verify_cmd->add_option("--thetas", thetas, "Random policies checked besides the uniform one")->capture_default_str();

  std::string report_in, report_out = "speedup.csv";
  auto* report_cmd = app.add_subcommand("report-speedup", "Aggregate a sweep.csv into a speedup report");
  report_cmd->add_option("--in", report_in, "sweep.csv from sweep-workers")->required()->check(CLI::ExistingFile);
  report_cmd->add_option("--out", report_out, "Output CSV")->capture_default_str();

  std::string plot_in, plot_out = "plot.svg";
  auto* plot_cmd = app.add_subcommand("plot", "SVG chart of a metrics or speedup CSV");
  plot_cmd->add_option("--in", plot_in, "metrics.csv or speedup.csv")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("--out", plot_out, "Output SVG")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_env(gen, gen_out);
    if (*run_cmd) return cmd_run(run);
    if (*sweep_cmd) return cmd_sweep(sweep, sweep_extra);
    if (*verify_cmd) return cmd_verify(verify, thetas);
    if (*report_cmd) return cmd_report(report_in, report_out);
    if (*plot_cmd) return cmd_plot(plot_in, plot_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: ConfigError: " << e.what() << '\n';
    return kExitUsage;
  } catch (const AssumptionViolation& e) {
    std::cerr << "error: AssumptionViolation: " << e.what() << '\n';
    return kExitAssumption;
  } catch (const IoError& e) {
    std::cerr << "error: IoError: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: ConfigError: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
