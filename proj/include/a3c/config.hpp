#pragma once

// Experiment configuration and its flat `key = value` file format.
// Lines starting with '#' and blank lines are ignored.

#include <cstdint>
#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "a3c/engine.hpp"
#include "a3c/errors.hpp"

namespace a3c {

struct EnvSpec {
  std::size_t n_states = 100;
  std::size_t n_actions = 5;
  std::size_t feature_dim = 10;
  double discount = 0.95;
  std::uint64_t seed = 1;
};

/// Real: threads, emergent delays. Scripted: simulated, delays from a script
/// (all zeros without one). RoundRobin: simulated, tau_k = N - 1, the lag of
/// N workers taking turns.
enum class DelayKind { Real, Scripted, RoundRobin };

inline const char* to_string(DelayKind d) {
  switch (d) {
    case DelayKind::Scripted: return "scripted";
    case DelayKind::RoundRobin: return "round-robin";
    default: return "real";
  }
}

struct ExperimentConfig {
  EnvSpec env;
  double c1 = 0.05;
  double c2 = 0.05;
  double sigma1 = 0.6;
  double sigma2 = 0.4;
  SamplingMode mode = SamplingMode::Iid;
  std::size_t workers = 1;
  std::uint64_t updates = 10000;
  std::uint64_t eval_every = 100;
  std::optional<double> target_reward;  // unset: derived from a reference run
  double target_fraction = 0.9;
  std::uint64_t reference_updates = 0;  // 0: updates / 4
  std::size_t mc_runs = 10;
  DelayKind delay = DelayKind::Real;
  std::string delay_script;  // path, used with DelayKind::Scripted
  std::uint64_t k0_cap = 0;
  std::uint64_t seed = 0;
  std::optional<double> radius;  // unset: r_max / lambda at theta = 0
  std::vector<std::size_t> worker_counts{1, 2, 4, 8};
  std::size_t threads = 1;  // independent runs executed concurrently by sweeps

  StepSchedule schedule() const { return StepSchedule(c1, c2, sigma1, sigma2); }

  std::uint64_t effective_reference_updates() const {
    return reference_updates ? reference_updates : std::max<std::uint64_t>(1, updates / 4);
  }

  void validate() const {
    schedule();
    if (env.n_states == 0 || env.n_actions == 0 || env.feature_dim == 0)
      throw ConfigError("environment dimensions must be positive");
    if (!(env.discount >= 0.0 && env.discount < 1.0)) throw ConfigError("discount must lie in [0, 1)");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if (updates < 1) throw ConfigError("updates must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (mc_runs < 1) throw ConfigError("mc_runs must be >= 1");
    if (!(target_fraction > 0.0 && target_fraction <= 1.0)) throw ConfigError("target_fraction must lie in (0, 1]");
    if (radius && !(*radius > 0.0)) throw ConfigError("radius must be positive");
    if (worker_counts.empty()) throw ConfigError("worker_counts is empty");
    for (auto n : worker_counts)
      if (n < 1) throw ConfigError("worker_counts entries must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
};

/// Keys accepted in config files, in documentation order.
inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "states",      "actions",       "feature_dim", "discount",          "env_seed",
      "c1",          "c2",            "sigma1",      "sigma2",            "mode",
      "workers",     "updates",       "eval_every",  "target_reward",     "target_fraction",
      "reference_updates", "mc_runs", "delay",       "delay_script",      "k0_cap",
      "seed",        "radius",        "worker_counts", "threads"};
  return keys;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    const auto x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a nonnegative integer, got '" + v + "'");
  }
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

}  // namespace detail

/// Parses "1,2,4,8" (commas or whitespace).
inline std::vector<std::size_t> parse_count_list(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::string tok;
  std::stringstream ss(text);
  while (std::getline(ss, tok, ',')) {
    std::stringstream inner(tok);
    std::string piece;
    while (inner >> piece) out.push_back(static_cast<std::size_t>(detail::parse_u64(key, piece)));
  }
  return out;
}

/// Sets one key; throws ConfigError for unknown keys or bad values.
inline void apply_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& raw) {
  using detail::parse_real;
  using detail::parse_u64;
  const std::string v = detail::trim(raw);
  if (key == "states") cfg.env.n_states = parse_u64(key, v);
  else if (key == "actions") cfg.env.n_actions = parse_u64(key, v);
  else if (key == "feature_dim") cfg.env.feature_dim = parse_u64(key, v);
  else if (key == "discount") cfg.env.discount = parse_real(key, v);
  else if (key == "env_seed") cfg.env.seed = parse_u64(key, v);
  else if (key == "c1") cfg.c1 = parse_real(key, v);
  else if (key == "c2") cfg.c2 = parse_real(key, v);
  else if (key == "sigma1") cfg.sigma1 = parse_real(key, v);
  else if (key == "sigma2") cfg.sigma2 = parse_real(key, v);
  else if (key == "mode") cfg.mode = parse_sampling_mode(v);
  else if (key == "workers") cfg.workers = parse_u64(key, v);
  else if (key == "updates") cfg.updates = parse_u64(key, v);
  else if (key == "eval_every") cfg.eval_every = parse_u64(key, v);
  else if (key == "target_reward") {
    if (v == "auto") cfg.target_reward.reset();
    else cfg.target_reward = parse_real(key, v);
  } else if (key == "target_fraction") cfg.target_fraction = parse_real(key, v);
  else if (key == "reference_updates") cfg.reference_updates = parse_u64(key, v);
  else if (key == "mc_runs") cfg.mc_runs = parse_u64(key, v);
  else if (key == "delay") {
    if (v == "real") cfg.delay = DelayKind::Real;
    else if (v == "scripted" || v == "simulated") cfg.delay = DelayKind::Scripted;
    else if (v == "round-robin") cfg.delay = DelayKind::RoundRobin;
    else throw ConfigError("config key 'delay': expected real, scripted or round-robin, got '" + v + "'");
  } else if (key == "delay_script") cfg.delay_script = v;
  else if (key == "k0_cap") cfg.k0_cap = parse_u64(key, v);
  else if (key == "seed") cfg.seed = parse_u64(key, v);
  else if (key == "radius") {
    if (v == "auto") cfg.radius.reset();
    else cfg.radius = parse_real(key, v);
  } else if (key == "worker_counts") cfg.worker_counts = parse_count_list(key, v);
  else if (key == "threads") cfg.threads = parse_u64(key, v);
  else throw ConfigError("unknown config key '" + key + "'");
}

inline void apply_config_text(ExperimentConfig& cfg, std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    apply_config_value(cfg, detail::trim(t.substr(0, eq)), t.substr(eq + 1));
  }
}

inline void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  apply_config_text(cfg, in);
}

/// Effective configuration in the same key = value format.
inline std::string describe_config(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "states = " << c.env.n_states << "\nactions = " << c.env.n_actions
    << "\nfeature_dim = " << c.env.feature_dim << "\ndiscount = " << c.env.discount
    << "\nenv_seed = " << c.env.seed << "\nc1 = " << c.c1 << "\nc2 = " << c.c2
    << "\nsigma1 = " << c.sigma1 << "\nsigma2 = " << c.sigma2 << "\nmode = " << to_string(c.mode)
    << "\nworkers = " << c.workers << "\nupdates = " << c.updates << "\neval_every = " << c.eval_every
    << "\ntarget_reward = ";
  if (c.target_reward) o << *c.target_reward; else o << "auto";
  o << "\ntarget_fraction = " << c.target_fraction << "\nreference_updates = " << c.reference_updates
    << "\nmc_runs = " << c.mc_runs << "\ndelay = " << to_string(c.delay)
    << "\ndelay_script = " << c.delay_script << "\nk0_cap = " << c.k0_cap << "\nseed = " << c.seed
    << "\nradius = ";
  if (c.radius) o << *c.radius; else o << "auto";
  o << "\nworker_counts = ";
  for (std::size_t i = 0; i < c.worker_counts.size(); ++i) o << (i ? "," : "") << c.worker_counts[i];
  o << "\nthreads = " << c.threads << '\n';
  return o.str();
}

/// Reads a delay script: nonnegative integers separated by whitespace or commas.
inline std::vector<std::uint64_t> load_delay_script(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open delay script " + path);
  std::vector<std::uint64_t> out;
  std::string tok;
  while (in >> tok) {
    std::stringstream ss(tok);
    std::string piece;
    while (std::getline(ss, piece, ','))
      if (!piece.empty()) out.push_back(detail::parse_u64("delay_script", piece));
  }
  return out;
}

/// Delay policy described by the config. Scripts are validated against
/// k0_cap; with k0_cap = 0 the bound is taken to be the script maximum.
inline DelayPolicy delay_policy(const ExperimentConfig& c) {
  if (c.delay == DelayKind::Real) return DelayPolicy::real(c.k0_cap);
  if (c.delay == DelayKind::RoundRobin) {
    const std::uint64_t lag = c.workers - 1;
    return DelayPolicy::scripted({lag}, std::max(c.k0_cap, lag));
  }
  std::vector<std::uint64_t> script;
  if (!c.delay_script.empty()) script = load_delay_script(c.delay_script);
  std::uint64_t cap = c.k0_cap;
  if (cap == 0)
    for (auto d : script) cap = std::max(cap, d);
  return DelayPolicy::scripted(std::move(script), cap);
}

}  // namespace a3c
