#pragma once

// Synthetic environments, per-run metrics, samples-to-target and the
// worker-count speedup sweep.

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "a3c/config.hpp"
#include "a3c/csv.hpp"
#include "a3c/engine.hpp"
#include "a3c/errors.hpp"
#include "a3c/mdp.hpp"
#include "a3c/oracles.hpp"

namespace a3c {

// ---------------------------------------------------------------------------
// Environment generation

/// Transition, reward and feature entries drawn from U(0,1) in that order;
/// transition rows normalized to sum 1, feature rows to unit L2 norm, uniform
/// start distribution.
inline TabularMdp generate_synthetic_env(const EnvSpec& spec) {
  if (spec.n_states == 0 || spec.n_actions == 0 || spec.feature_dim == 0)
    throw ConfigError("environment dimensions must be positive");
  Rng rng(spec.seed, stream::kEnvironment);
  auto open_unit = [&rng] {
    double x;
    do x = rng.uniform();
    while (x == 0.0);
    return x;
  };
  const auto n = static_cast<Eigen::Index>(spec.n_states);
  const auto sa = static_cast<Eigen::Index>(spec.n_states * spec.n_actions);
  const auto d = static_cast<Eigen::Index>(spec.feature_dim);
  RowMatrix P(sa, n), R(sa, n), phi(n, d);
  for (Eigen::Index i = 0; i < P.size(); ++i) P.data()[i] = open_unit();
  for (Eigen::Index i = 0; i < R.size(); ++i) R.data()[i] = open_unit();
  for (Eigen::Index i = 0; i < phi.size(); ++i) phi.data()[i] = open_unit();
  for (Eigen::Index r = 0; r < sa; ++r) P.row(r) /= P.row(r).sum();
  for (Eigen::Index s = 0; s < n; ++s) phi.row(s) /= phi.row(s).norm();
  return TabularMdp(spec.n_states, spec.n_actions, std::move(P), std::move(R), spec.discount, std::move(phi),
                    Vector::Constant(n, 1.0 / static_cast<double>(n)), spec.seed);
}

/// Checks negative definiteness of A and ergodicity at the uniform policy
/// before a run starts; returns the TD quantities there.
inline TdMatrices audit_environment(const TabularMdp& mdp) {
  const SoftmaxPolicy uniform = SoftmaxPolicy::uniform(mdp);
  const PolicyChain chain = policy_chain(mdp, uniform);
  return td_matrices(mdp, chain, stationary_distribution(chain));
}

/// R_omega = r_max / lambda at the uniform policy.
inline double default_radius(const TabularMdp& mdp) {
  return projection_radius(mdp, audit_environment(mdp).lambda);
}

inline EngineConfig engine_config(const ExperimentConfig& cfg, const TabularMdp& mdp) {
  EngineConfig e;
  e.mode = cfg.mode;
  e.n_workers = cfg.workers;
  e.total_updates = cfg.updates;
  e.schedule = cfg.schedule();
  e.radius = cfg.radius ? *cfg.radius : default_radius(mdp);
  e.seed = cfg.seed;
  e.eval_every = cfg.eval_every;
  return e;
}

// ---------------------------------------------------------------------------
// Policy evaluation

struct PolicyEvaluation {
  double objective = 0.0;       // exact J
  double rollout_mean = 0.0;    // Monte-Carlo discounted normalized return
  double rollout_stderr = 0.0;
};

/// Exact J plus a finite-horizon rollout estimate over `episodes` episodes of
/// `horizon` steps from s0 ~ eta. The rollout is biased low by at most
/// gamma^horizon * r_max / (1 - gamma).
inline PolicyEvaluation evaluate_policy(const TabularMdp& mdp, const SoftmaxPolicy& policy, std::size_t horizon,
                                        std::size_t episodes, std::uint64_t seed) {
  PolicyEvaluation ev;
  ev.objective = exact_objective(mdp, policy);
  if (episodes == 0) return ev;
  Rng rng(seed, stream::kRollout);
  const Vector& eta = mdp.initial_dist();
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t e = 0; e < episodes; ++e) {
    std::size_t s = rng.categorical({eta.data(), static_cast<std::size_t>(eta.size())});
    double ret = 0.0, disc = 1.0;
    for (std::size_t t = 0; t < horizon; ++t) {
      const Transition x = sample_transition(mdp, policy, s, rng);
      ret += disc * mdp.reward(x.s, x.a, x.s_next);
      disc *= mdp.discount();
      s = x.s_next;
    }
    sum += ret;
    sum_sq += ret * ret;
  }
  const double n = static_cast<double>(episodes);
  ev.rollout_mean = sum / n;
  const double var = episodes > 1 ? std::max(0.0, (sum_sq - n * ev.rollout_mean * ev.rollout_mean) / (n - 1)) : 0.0;
  ev.rollout_stderr = std::sqrt(var / n);
  return ev;
}

// ---------------------------------------------------------------------------
// Metrics

/// One evaluation point. The test reward is the exact objective J(theta_k),
/// so running averages carry no evaluation noise.
struct MetricsRow {
  std::uint64_t k = 0;
  std::uint64_t samples = 0;
  double wall_time = 0.0;
  long long worker_id = -1;  // worker whose commit produced version k; -1 at k = 0
  std::uint64_t tau = 0;
  double critic_gap = std::numeric_limits<double>::quiet_NaN();
  double grad_norm_sq = std::numeric_limits<double>::quiet_NaN();
  double objective = std::numeric_limits<double>::quiet_NaN();
  double running_avg_test_reward = std::numeric_limits<double>::quiet_NaN();
  double running_avg_critic_gap = std::numeric_limits<double>::quiet_NaN();
  double running_avg_grad_norm_sq = std::numeric_limits<double>::quiet_NaN();
  double eps_app = std::numeric_limits<double>::quiet_NaN();
  double eps_app_running_max = std::numeric_limits<double>::quiet_NaN();
  std::string note;
};

struct MetricsOptions {
  bool critic = true;    // critic gap and eps_app (needs the TD fixed point)
  bool gradient = true;  // exact policy gradient norm
};

namespace detail {

/// Running mean over the finite entries seen so far.
struct RunningMean {
  double sum = 0.0;
  std::size_t n = 0;
  double push(double x) {
    if (std::isfinite(x)) {
      sum += x;
      ++n;
    }
    return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
  }
};

}  // namespace detail

/// Evaluates every captured snapshot whose version is a multiple of
/// `eval_every` (plus the final one) with the exact oracles.
inline std::vector<MetricsRow> compute_metrics(const TabularMdp& mdp, const RunLog& log, std::uint64_t eval_every,
                                               MetricsOptions opts = {}) {
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  std::vector<MetricsRow> rows;
  detail::RunningMean reward_avg, gap_avg, grad_avg;
  double eps_max = std::numeric_limits<double>::quiet_NaN();
  const std::uint64_t last = log.records.size();
  for (const auto& ev : log.snapshots) {
    const Snapshot& snap = ev.snap;
    if (snap.version % eval_every != 0 && snap.version != last) continue;
    if (!rows.empty() && rows.back().k == snap.version) continue;
    MetricsRow row;
    row.k = snap.version;
    row.samples = snap.version;
    row.wall_time = ev.wall_time;
    if (snap.version > 0 && snap.version <= log.records.size()) {
      const auto& rec = log.records[snap.version - 1];
      row.worker_id = static_cast<long long>(rec.worker_id);
      row.tau = rec.tau;
    }
    try {
      const RowMatrix pi = policy_table(snap.policy);
      const PolicyChain chain = policy_chain(mdp, pi);
      const Vector value = exact_value(mdp, chain);
      row.objective = mdp.initial_dist().dot(value);
      if (opts.gradient) row.grad_norm_sq = exact_policy_gradient(mdp, snap.policy).squaredNorm();
      if (opts.critic) {
        const Vector mu = stationary_distribution(chain);
        const TdMatrices td = td_matrices(mdp, chain, mu);
        row.critic_gap = (snap.omega - td.omega_star).norm();
        const Vector resid = value - mdp.features() * td.omega_star;
        row.eps_app = std::sqrt(mu.dot(resid.cwiseAbs2()));
        eps_max = std::isnan(eps_max) ? row.eps_app : std::max(eps_max, row.eps_app);
      }
    } catch (const AssumptionViolation& e) {
      row.note = e.what();
    }
    row.running_avg_test_reward = reward_avg.push(row.objective);
    row.running_avg_critic_gap = gap_avg.push(row.critic_gap);
    row.running_avg_grad_norm_sq = grad_avg.push(row.grad_norm_sq);
    row.eps_app_running_max = eps_max;
    rows.push_back(std::move(row));
  }
  return rows;
}

inline const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols{
      "k",          "samples",      "wall_time",       "worker_id",          "tau",
      "critic_gap", "grad_norm_sq", "objective",       "running_avg_test_reward",
      "running_avg_critic_gap",     "running_avg_grad_norm_sq", "eps_app",
      "eps_app_running_max",        "note"};
  return cols;
}

inline CsvTable metrics_table(const std::vector<MetricsRow>& rows) {
  CsvTable t;
  t.header = metrics_columns();
  for (const auto& r : rows) {
    t.rows.push_back({std::to_string(r.k), std::to_string(r.samples), format_double(r.wall_time),
                      std::to_string(r.worker_id), std::to_string(r.tau), format_double(r.critic_gap),
                      format_double(r.grad_norm_sq), format_double(r.objective),
                      format_double(r.running_avg_test_reward), format_double(r.running_avg_critic_gap),
                      format_double(r.running_avg_grad_norm_sq), format_double(r.eps_app),
                      format_double(r.eps_app_running_max), r.note});
  }
  return t;
}

inline std::vector<MetricsRow> metrics_from_table(const CsvTable& t) {
  if (t.header != metrics_columns()) throw ConfigError("CSV is not a metrics table");
  std::vector<MetricsRow> rows;
  for (const auto& f : t.rows) {
    MetricsRow r;
    r.k = static_cast<std::uint64_t>(parse_double(f[0]));
    r.samples = static_cast<std::uint64_t>(parse_double(f[1]));
    r.wall_time = parse_double(f[2]);
    r.worker_id = std::stoll(f[3]);
    r.tau = static_cast<std::uint64_t>(parse_double(f[4]));
    r.critic_gap = parse_double(f[5]);
    r.grad_norm_sq = parse_double(f[6]);
    r.objective = parse_double(f[7]);
    r.running_avg_test_reward = parse_double(f[8]);
    r.running_avg_critic_gap = parse_double(f[9]);
    r.running_avg_grad_norm_sq = parse_double(f[10]);
    r.eps_app = parse_double(f[11]);
    r.eps_app_running_max = parse_double(f[12]);
    r.note = f[13];
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string hex64(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

inline CsvTable log_table(const RunLog& log) {
  CsvTable t;
  t.header = {"k", "worker_id", "read_version", "tau", "s", "a", "s_next", "alpha", "beta", "hash", "wall_time"};
  for (const auto& r : log.records)
    t.rows.push_back({std::to_string(r.k), std::to_string(r.worker_id), std::to_string(r.read_version),
                      std::to_string(r.tau), std::to_string(r.x.s), std::to_string(r.x.a),
                      std::to_string(r.x.s_next), format_double(r.alpha), format_double(r.beta), hex64(r.hash),
                      format_double(r.wall_time)});
  return t;
}

// ---------------------------------------------------------------------------
// Samples to target

/// Index of the first row whose running-average test reward reaches `target`.
inline std::optional<std::size_t> first_crossing(const std::vector<MetricsRow>& rows, double target) {
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i].running_avg_test_reward >= target) return i;
  return std::nullopt;
}

/// Cumulative samples at the first row reaching `target`.
inline std::optional<std::uint64_t> samples_to_target(const std::vector<MetricsRow>& rows, double target) {
  const auto i = first_crossing(rows, target);
  if (!i) return std::nullopt;
  return rows[*i].samples;
}

// ---------------------------------------------------------------------------
// Single runs

struct RunResult {
  RunLog log;
  std::vector<MetricsRow> rows;
};

inline RunResult run_experiment(const TabularMdp& mdp, const ExperimentConfig& cfg, MetricsOptions opts = {}) {
  cfg.validate();
  const EngineConfig ecfg = engine_config(cfg, mdp);
  RunResult out;
  out.log = run_engine(mdp, ecfg, delay_policy(cfg));
  out.rows = compute_metrics(mdp, out.log, cfg.eval_every, opts);
  return out;
}

/// Seed of Monte-Carlo repetition `rep`; shared across worker counts.
inline std::uint64_t mc_seed(const ExperimentConfig& cfg, std::size_t rep) { return cfg.seed + rep; }

/// Seed of reference run `rep`, disjoint from the Monte-Carlo seeds.
inline std::uint64_t reference_seed(const ExperimentConfig& cfg, std::size_t rep = 0) {
  return cfg.seed + 1000003ULL + rep;
}

struct TargetInfo {
  double initial_objective = 0.0;
  double reference_running_avg = 0.0;
  double target = 0.0;
};

/// Target reward for speedup runs. An explicit `target_reward` wins.
/// Otherwise `mc_runs` single-worker zero-delay reference runs of
/// `reference_updates` commits are made, and the target is placed
/// `target_fraction` of the way from J(theta_0) to the mean of their final
/// running-average test rewards.
inline TargetInfo resolve_target(const TabularMdp& mdp, const ExperimentConfig& cfg) {
  TargetInfo info;
  info.initial_objective = exact_objective(mdp, SoftmaxPolicy::uniform(mdp));
  if (cfg.target_reward) {
    info.target = *cfg.target_reward;
    info.reference_running_avg = std::numeric_limits<double>::quiet_NaN();
    return info;
  }
  ExperimentConfig ref = cfg;
  ref.workers = 1;
  ref.updates = cfg.effective_reference_updates();
  ref.delay = DelayKind::Scripted;
  ref.delay_script.clear();
  ref.k0_cap = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < cfg.mc_runs; ++i) {
    ref.seed = reference_seed(cfg, i);
    sum += run_experiment(mdp, ref, {false, false}).rows.back().running_avg_test_reward;
  }
  info.reference_running_avg = sum / static_cast<double>(cfg.mc_runs);
  info.target = info.initial_objective + cfg.target_fraction * (info.reference_running_avg - info.initial_objective);
  return info;
}

// ---------------------------------------------------------------------------
// Speedup sweep

struct SweepRun {
  std::size_t n_workers = 1;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> samples_to_target;
  std::optional<double> wall_time_to_target;
  std::uint64_t max_delay = 0;
  double final_running_avg_test_reward = 0.0;
};

struct SweepResult {
  TargetInfo target;
  std::vector<SweepRun> runs;
};

struct SpeedupRow {
  std::size_t n_workers = 1;
  std::size_t runs = 0;
  std::size_t reached = 0;
  double reach_fraction = 0.0;
  double mean_samples = 0.0;  // total samples to target
  double std_samples = 0.0;
  double mean_per_worker = 0.0;
  double std_per_worker = 0.0;
  double speedup = 0.0;
  double mean_wall_time = 0.0;
  double wall_speedup = 0.0;
};

struct SpeedupReport {
  double target = 0.0;
  std::vector<SpeedupRow> rows;

  const SpeedupRow& at(std::size_t n) const {
    for (const auto& r : rows)
      if (r.n_workers == n) return r;
    throw ConfigError("no speedup row for N = " + std::to_string(n));
  }
};

inline SweepRun sweep_one(const TabularMdp& mdp, const ExperimentConfig& cfg, std::size_t n, std::size_t rep,
                          double target) {
  ExperimentConfig c = cfg;
  c.workers = n;
  c.seed = mc_seed(cfg, rep);
  const RunResult r = run_experiment(mdp, c, {false, false});
  SweepRun out;
  out.n_workers = n;
  out.seed = c.seed;
  out.max_delay = r.log.max_delay;
  out.final_running_avg_test_reward = r.rows.back().running_avg_test_reward;
  if (const auto i = first_crossing(r.rows, target)) {
    out.samples_to_target = r.rows[*i].samples;
    out.wall_time_to_target = r.rows[*i].wall_time;
  }
  return out;
}

/// Runs `mc_runs` seeds for every worker count and records samples-to-target.
/// Independent runs are spread over `cfg.threads` threads.
inline SweepResult speedup_sweep(const TabularMdp& mdp, const ExperimentConfig& cfg) {
  cfg.validate();
  if (std::find(cfg.worker_counts.begin(), cfg.worker_counts.end(), 1) == cfg.worker_counts.end())
    throw ConfigError("worker_counts must include 1");
  SweepResult result;
  result.target = resolve_target(mdp, cfg);

  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (auto n : cfg.worker_counts)
    for (std::size_t rep = 0; rep < cfg.mc_runs; ++rep) jobs.emplace_back(n, rep);
  result.runs.resize(jobs.size());

  std::size_t next = 0;
  std::mutex mu;
  std::exception_ptr error;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard lock(mu);
        if (next >= jobs.size() || error) return;
        i = next++;
      }
      try {
        result.runs[i] = sweep_one(mdp, cfg, jobs[i].first, jobs[i].second, result.target.target);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  const std::size_t nthreads = std::min(cfg.threads, jobs.size());
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return result;
}

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  const double sd = xs.size() > 1 ? std::sqrt(v / static_cast<double>(xs.size() - 1)) : 0.0;
  return {m, sd};
}

}  // namespace detail

/// Aggregates sweep runs: speedup(N) = per-worker(1) / per-worker(N), where
/// per-worker(N) is the mean over reached runs of samples-to-target / N.
inline SpeedupReport speedup_report(const std::vector<SweepRun>& runs, double target) {
  std::vector<std::size_t> ns;
  for (const auto& r : runs)
    if (std::find(ns.begin(), ns.end(), r.n_workers) == ns.end()) ns.push_back(r.n_workers);
  std::sort(ns.begin(), ns.end());
  if (ns.empty() || ns.front() != 1) throw ConfigError("speedup report needs runs with N = 1");
  SpeedupReport rep;
  rep.target = target;
  for (auto n : ns) {
    SpeedupRow row;
    row.n_workers = n;
    std::vector<double> total, per_worker, wall;
    for (const auto& r : runs) {
      if (r.n_workers != n) continue;
      ++row.runs;
      if (!r.samples_to_target) continue;
      ++row.reached;
      total.push_back(static_cast<double>(*r.samples_to_target));
      per_worker.push_back(static_cast<double>(*r.samples_to_target) / static_cast<double>(n));
      wall.push_back(r.wall_time_to_target.value_or(std::numeric_limits<double>::quiet_NaN()));
    }
    row.reach_fraction = row.runs ? static_cast<double>(row.reached) / static_cast<double>(row.runs) : 0.0;
    std::tie(row.mean_samples, row.std_samples) = detail::mean_std(total);
    std::tie(row.mean_per_worker, row.std_per_worker) = detail::mean_std(per_worker);
    row.mean_wall_time = detail::mean_std(wall).first;
    rep.rows.push_back(row);
  }
  const SpeedupRow base = rep.rows.front();
  for (auto& row : rep.rows) {
    row.speedup = row.n_workers == 1 ? 1.0 : base.mean_per_worker / row.mean_per_worker;
    row.wall_speedup = row.n_workers == 1 ? 1.0 : base.mean_wall_time / row.mean_wall_time;
  }
  return rep;
}

inline const std::vector<std::string>& sweep_columns() {
  static const std::vector<std::string> cols{"n_workers", "seed", "reached", "samples_to_target",
                                             "samples_per_worker", "wall_time_to_target", "max_delay",
                                             "final_running_avg_test_reward", "target"};
  return cols;
}

inline CsvTable sweep_table(const SweepResult& s) {
  CsvTable t;
  t.header = sweep_columns();
  for (const auto& r : s.runs) {
    const bool hit = r.samples_to_target.has_value();
    t.rows.push_back({std::to_string(r.n_workers), std::to_string(r.seed), hit ? "1" : "0",
                      hit ? std::to_string(*r.samples_to_target) : "",
                      hit ? format_double(static_cast<double>(*r.samples_to_target) / static_cast<double>(r.n_workers))
                          : "",
                      hit ? format_double(*r.wall_time_to_target) : "", std::to_string(r.max_delay),
                      format_double(r.final_running_avg_test_reward), format_double(s.target.target)});
  }
  return t;
}

inline SweepResult sweep_from_table(const CsvTable& t) {
  if (t.header != sweep_columns()) throw ConfigError("CSV is not a sweep table");
  SweepResult s;
  for (const auto& f : t.rows) {
    SweepRun r;
    r.n_workers = static_cast<std::size_t>(std::stoull(f[0]));
    r.seed = std::stoull(f[1]);
    if (f[2] == "1") {
      r.samples_to_target = std::stoull(f[3]);
      r.wall_time_to_target = parse_double(f[5]);
    }
    r.max_delay = std::stoull(f[6]);
    r.final_running_avg_test_reward = parse_double(f[7]);
    s.target.target = parse_double(f[8]);
    s.runs.push_back(r);
  }
  return s;
}

inline const std::vector<std::string>& speedup_columns() {
  static const std::vector<std::string> cols{
      "n_workers",        "runs",           "reached",      "reach_fraction", "mean_samples_to_target",
      "std_samples_to_target", "mean_samples_per_worker", "std_samples_per_worker", "speedup",
      "mean_wall_time_to_target", "wall_speedup", "target"};
  return cols;
}

inline CsvTable speedup_table(const SpeedupReport& rep) {
  CsvTable t;
  t.header = speedup_columns();
  for (const auto& r : rep.rows)
    t.rows.push_back({std::to_string(r.n_workers), std::to_string(r.runs), std::to_string(r.reached),
                      format_double(r.reach_fraction), format_double(r.mean_samples), format_double(r.std_samples),
                      format_double(r.mean_per_worker), format_double(r.std_per_worker), format_double(r.speedup),
                      format_double(r.mean_wall_time), format_double(r.wall_speedup), format_double(rep.target)});
  return t;
}

}  // namespace a3c
