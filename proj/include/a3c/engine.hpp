#pragma once

// Shared-memory asynchronous two-timescale actor-critic.
//
// N workers repeatedly read a consistent (theta, omega) snapshot, draw one
// transition with the snapshot policy, evaluate the TD(0) semi-gradient and
// the actor direction at the snapshot, and commit
//
//   omega <- Proj_R(omega + beta_k g(x, omega_stale))
//   theta <- theta + alpha_k v(x, theta_stale, omega_stale)
//
// to the *current* shared values, where k is the global commit counter read
// inside the critical section. Delay tau_k = k - (version of the snapshot).
//
// Two executors share the same commit path:
//   run_async      real threads; delays are whatever the scheduler produces.
//   run_simulated  one thread, round-robin workers, delays taken from a script.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <deque>
#include <exception>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "a3c/errors.hpp"
#include "a3c/mdp.hpp"
#include "a3c/oracles.hpp"
#include "a3c/rng.hpp"

namespace a3c {

enum class SamplingMode { Iid, Markovian };

inline const char* to_string(SamplingMode m) { return m == SamplingMode::Iid ? "iid" : "markov"; }

inline SamplingMode parse_sampling_mode(const std::string& s) {
  if (s == "iid") return SamplingMode::Iid;
  if (s == "markov" || s == "markovian") return SamplingMode::Markovian;
  throw ConfigError("unknown sampling mode '" + s + "' (expected iid or markov)");
}

/// Real: emergent delays, K0 only audited. Scripted: delays replayed exactly.
struct DelayPolicy {
  enum class Kind { Real, Scripted } kind = Kind::Real;
  std::vector<std::uint64_t> script;  // cycled; empty means all zeros
  std::uint64_t k0_cap = 0;           // 0: no declared bound

  static DelayPolicy real(std::uint64_t k0_cap = 0) { return {Kind::Real, {}, k0_cap}; }

  static DelayPolicy scripted(std::vector<std::uint64_t> script, std::uint64_t k0_cap) {
    DelayPolicy p{Kind::Scripted, std::move(script), k0_cap};
    p.validate();
    return p;
  }

  void validate() const {
    if (kind != Kind::Scripted) return;
    for (auto d : script)
      if (d > k0_cap)
        throw ConfigError("delay script entry " + std::to_string(d) + " exceeds K0 = " +
                          std::to_string(k0_cap));
  }

  /// Scripted delay for commit k, before clamping to k.
  std::uint64_t scripted_delay(std::uint64_t k) const {
    return script.empty() ? 0 : script[k % script.size()];
  }
};

struct EngineConfig {
  SamplingMode mode = SamplingMode::Iid;
  std::size_t n_workers = 1;
  std::uint64_t total_updates = 1;
  StepSchedule schedule{0.05, 0.05, 0.6, 0.4};
  double radius = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;
  std::uint64_t eval_every = 100;
  std::optional<SoftmaxPolicy> theta0;  // default: zeros
  std::optional<Vector> omega0;         // default: zeros

  void validate(const TabularMdp& mdp) const {
    if (n_workers < 1) throw ConfigError("need at least one worker");
    if (total_updates < 1) throw ConfigError("need at least one update");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (!(radius > 0.0)) throw ConfigError("projection radius must be positive");
    if (theta0 && (theta0->n_states() != mdp.n_states() || theta0->n_actions() != mdp.n_actions()))
      throw ConfigError("initial theta has wrong shape");
    if (omega0 && static_cast<std::size_t>(omega0->size()) != mdp.feature_dim())
      throw ConfigError("initial omega has wrong length");
  }
};

/// A committed (theta, omega) pair and the number of commits it reflects.
struct Snapshot {
  SoftmaxPolicy policy;
  Vector omega;
  std::uint64_t version = 0;
};

/// Snapshot captured at an evaluation point, with the commit time.
struct EvalSnapshot {
  Snapshot snap;
  double wall_time = 0.0;
};

struct UpdateRecord {
  std::uint64_t k = 0;
  std::size_t worker_id = 0;
  std::uint64_t read_version = 0;
  std::uint64_t tau = 0;
  Transition x;
  double alpha = 0.0;
  double beta = 0.0;
  std::uint64_t hash = 0;  // of (theta, omega) after this commit
  double wall_time = 0.0;

  /// Equality on everything except wall time.
  bool same_update(const UpdateRecord& o) const {
    return k == o.k && worker_id == o.worker_id && read_version == o.read_version && tau == o.tau &&
           x == o.x && alpha == o.alpha && beta == o.beta && hash == o.hash;
  }
};

struct RunLog {
  std::vector<UpdateRecord> records;
  std::vector<EvalSnapshot> snapshots;  // versions 0, eval_every, 2*eval_every, ..., K
  std::uint64_t max_delay = 0;
  std::uint64_t k0_cap = 0;
  bool k0_exceeded = false;
  double radius = 0.0;
  std::size_t n_workers = 1;
  SamplingMode mode = SamplingMode::Iid;
  Snapshot final_state;
};

/// FNV-1a over the raw bytes of theta then omega.
inline std::uint64_t snapshot_hash(const RowMatrix& theta, const Vector& omega) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const double* p, Eigen::Index n) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < static_cast<std::size_t>(n) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  mix(theta.data(), theta.size());
  mix(omega.data(), omega.size());
  return h;
}

/// The increments a worker sends to the store: both evaluated at its stale
/// snapshot. Only the score block of state x.s is nonzero, so only it is kept.
struct StaleGradients {
  Transition x;
  Vector critic;      // g = delta * phi(s)
  Vector actor_block; // delta * psi(s, .)
  std::uint64_t read_version = 0;
};

inline StaleGradients stale_gradients(const TabularMdp& mdp, const Transition& x, const Snapshot& stale) {
  const double delta = td_error(mdp, x, stale.omega);
  return {x, delta * mdp.feature(x.s).transpose(), delta * score_block(stale.policy, x.s, x.a),
          stale.version};
}

/// Shared parameters with serialized commits. Reads and commits take the same
/// mutex, so a reader always sees one whole committed version.
class SharedStore {
 public:
  using Clock = std::chrono::steady_clock;

  SharedStore(SoftmaxPolicy theta0, Vector omega0, double radius, std::uint64_t limit,
              std::uint64_t eval_every, std::size_t n_workers, bool virtual_time)
      : theta_(std::move(theta0.theta)),
        omega_(project_ball(omega0, radius)),
        radius_(radius),
        limit_(limit),
        eval_every_(eval_every),
        n_workers_(n_workers),
        virtual_time_(virtual_time),
        start_(Clock::now()) {
    records_.reserve(limit);
    snapshots_.push_back({Snapshot{SoftmaxPolicy{theta_}, omega_, 0}, 0.0});
  }

  Snapshot read_snapshot() const {
    std::lock_guard lock(mu_);
    return Snapshot{SoftmaxPolicy{theta_}, omega_, k_};
  }

  std::uint64_t counter() const {
    std::lock_guard lock(mu_);
    return k_;
  }

  double radius() const { return radius_; }

  /// Applies one update. Returns nullopt once the commit limit is reached.
  std::optional<UpdateRecord> commit_update(const StaleGradients& grads, const StepSchedule& sched,
                                            std::size_t worker_id) {
    std::lock_guard lock(mu_);
    if (k_ >= limit_) return std::nullopt;
    const auto [alpha, beta] = sched.at(k_);
    omega_ = project_ball(omega_ + beta * grads.critic, radius_);
    theta_.row(static_cast<Eigen::Index>(grads.x.s)) += alpha * grads.actor_block.transpose();
    UpdateRecord rec;
    rec.k = k_;
    rec.worker_id = worker_id;
    rec.read_version = grads.read_version;
    rec.tau = k_ - grads.read_version;
    rec.x = grads.x;
    rec.alpha = alpha;
    rec.beta = beta;
    rec.hash = snapshot_hash(theta_, omega_);
    rec.wall_time = now(k_ + 1);
    ++k_;
    records_.push_back(rec);
    if (k_ % eval_every_ == 0 || k_ == limit_)
      snapshots_.push_back({Snapshot{SoftmaxPolicy{theta_}, omega_, k_}, rec.wall_time});
    return rec;
  }

  /// Moves the log out; call after all workers have stopped.
  RunLog take_log() {
    std::lock_guard lock(mu_);
    RunLog log;
    log.records = std::move(records_);
    log.snapshots = std::move(snapshots_);
    log.radius = radius_;
    log.n_workers = n_workers_;
    log.final_state = Snapshot{SoftmaxPolicy{theta_}, omega_, k_};
    for (const auto& r : log.records) log.max_delay = std::max(log.max_delay, r.tau);
    return log;
  }

 private:
  double now(std::uint64_t commits) const {
    if (virtual_time_) return static_cast<double>(commits) / static_cast<double>(n_workers_);
    return std::chrono::duration<double>(Clock::now() - start_).count();
  }

  mutable std::mutex mu_;
  RowMatrix theta_;
  Vector omega_;
  double radius_;
  std::uint64_t k_ = 0;
  std::uint64_t limit_;
  std::uint64_t eval_every_;
  std::size_t n_workers_;
  bool virtual_time_;
  Clock::time_point start_;
  std::vector<UpdateRecord> records_;
  std::vector<EvalSnapshot> snapshots_;
};

/// Per-worker simulator: its own chain state and random draws.
///
/// The draws for the worker's t-th sample come from a generator keyed by the
/// nominal global index t * N + id, the commit it would make under
/// round-robin scheduling. Workers never share an index, and runs with
/// different N consume the same random inputs (common random numbers), so
/// with zero delay a simulated run does not depend on N at all.
struct WorkerState {
  std::size_t worker_id = 0;
  std::size_t n_workers = 1;
  std::uint64_t run_seed = 0;
  std::size_t state = 0;
  std::uint64_t local_t = 0;

  WorkerState(const TabularMdp& mdp, std::uint64_t seed, std::size_t id, std::size_t n)
      : worker_id(id), n_workers(n), run_seed(seed) {
    Rng init(seed, stream::kWorkerBase + id);
    const Vector& eta = mdp.initial_dist();
    state = init.categorical({eta.data(), static_cast<std::size_t>(eta.size())});
  }

  std::uint64_t nominal_index() const { return local_t * n_workers + worker_id; }

  Rng sample_rng() const { return Rng(run_seed, stream::kSampleBase + nominal_index()); }
};

/// Stationary distributions keyed by snapshot version. Concurrent lookups,
/// exclusive inserts, bounded size.
class StationaryCache {
 public:
  explicit StationaryCache(std::size_t capacity = 64) : capacity_(capacity) {}

  Vector get(const TabularMdp& mdp, const Snapshot& snap) {
    {
      std::shared_lock lock(mu_);
      for (const auto& [v, mu] : entries_)
        if (v == snap.version) return mu;
    }
    Vector mu = stationary_distribution(mdp, snap.policy);
    std::unique_lock lock(mu_);
    entries_.emplace_back(snap.version, mu);
    if (entries_.size() > capacity_) entries_.pop_front();
    return mu;
  }

 private:
  std::size_t capacity_;
  std::shared_mutex mu_;
  std::deque<std::pair<std::uint64_t, Vector>> entries_;
};

/// Draws the worker's next transition under the snapshot policy.
/// Iid: s ~ mu_theta afresh. Markovian: s is the worker's chain state, which
/// then advances to s'.
inline Transition worker_sample(const TabularMdp& mdp, const Snapshot& snap, SamplingMode mode,
                                WorkerState& worker, StationaryCache& cache) {
  Transition x;
  Rng rng = worker.sample_rng();
  if (mode == SamplingMode::Iid) {
    const Vector mu = cache.get(mdp, snap);
    const std::size_t s = rng.categorical({mu.data(), static_cast<std::size_t>(mu.size())});
    x = sample_transition(mdp, snap.policy, s, rng);
  } else {
    x = sample_transition(mdp, snap.policy, worker.state, rng);
    worker.state = x.s_next;
  }
  ++worker.local_t;
  return x;
}

namespace detail {

inline SharedStore make_store(const TabularMdp& mdp, const EngineConfig& cfg, bool virtual_time) {
  cfg.validate(mdp);
  SoftmaxPolicy theta0 = cfg.theta0 ? *cfg.theta0 : SoftmaxPolicy::uniform(mdp);
  Vector omega0 = cfg.omega0 ? *cfg.omega0 : Vector::Zero(static_cast<Eigen::Index>(mdp.feature_dim()));
  return SharedStore(std::move(theta0), std::move(omega0), cfg.radius, cfg.total_updates, cfg.eval_every,
                     cfg.n_workers, virtual_time);
}

inline void finish_log(RunLog& log, const EngineConfig& cfg, std::uint64_t k0_cap) {
  log.mode = cfg.mode;
  log.k0_cap = k0_cap;
  log.k0_exceeded = k0_cap > 0 && log.max_delay > k0_cap;
}

}  // namespace detail

/// Real multi-threaded execution. Delays are emergent; `k0_cap`, if nonzero,
/// is only checked afterwards (RunLog::k0_exceeded).
inline RunLog run_async(const TabularMdp& mdp, const EngineConfig& cfg, std::uint64_t k0_cap = 0) {
  SharedStore store = detail::make_store(mdp, cfg, false);
  StationaryCache cache(std::max<std::size_t>(64, 4 * cfg.n_workers));
  std::atomic<bool> abort{false};
  std::mutex err_mu;
  std::exception_ptr error;

  auto body = [&](std::size_t id) {
    try {
      WorkerState worker(mdp, cfg.seed, id, cfg.n_workers);
      while (!abort.load(std::memory_order_relaxed)) {
        const Snapshot snap = store.read_snapshot();
        if (snap.version >= cfg.total_updates) break;
        const Transition x = worker_sample(mdp, snap, cfg.mode, worker, cache);
        if (!store.commit_update(stale_gradients(mdp, x, snap), cfg.schedule, id)) break;
      }
    } catch (...) {
      std::lock_guard lock(err_mu);
      if (!error) error = std::current_exception();
      abort = true;
    }
  };

  std::vector<std::thread> threads;
  threads.reserve(cfg.n_workers);
  for (std::size_t i = 0; i < cfg.n_workers; ++i) threads.emplace_back(body, i);
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);

  RunLog log = store.take_log();
  detail::finish_log(log, cfg, k0_cap);
  return log;
}

/// Deterministic single-threaded execution. Commit k is made by worker
/// k mod N from the snapshot of version k - min(script[k], k).
inline RunLog run_simulated(const TabularMdp& mdp, const EngineConfig& cfg, const DelayPolicy& delays) {
  delays.validate();
  SharedStore store = detail::make_store(mdp, cfg, true);
  std::uint64_t max_script = 0;
  for (auto d : delays.script) max_script = std::max(max_script, d);
  const std::size_t window = static_cast<std::size_t>(max_script) + 1;

  std::vector<Snapshot> history(window);
  history[0] = store.read_snapshot();
  StationaryCache cache(window + 1);

  std::vector<WorkerState> workers;
  workers.reserve(cfg.n_workers);
  for (std::size_t i = 0; i < cfg.n_workers; ++i) workers.emplace_back(mdp, cfg.seed, i, cfg.n_workers);

  for (std::uint64_t k = 0; k < cfg.total_updates; ++k) {
    const std::uint64_t tau = std::min(delays.scripted_delay(k), k);
    const Snapshot& snap = history[static_cast<std::size_t>((k - tau) % window)];
    WorkerState& worker = workers[static_cast<std::size_t>(k % cfg.n_workers)];
    const Transition x = worker_sample(mdp, snap, cfg.mode, worker, cache);
    store.commit_update(stale_gradients(mdp, x, snap), cfg.schedule, worker.worker_id);
    history[static_cast<std::size_t>((k + 1) % window)] = store.read_snapshot();
  }

  RunLog log = store.take_log();
  detail::finish_log(log, cfg, delays.k0_cap);
  return log;
}

/// Dispatches on the delay policy.
inline RunLog run_engine(const TabularMdp& mdp, const EngineConfig& cfg, const DelayPolicy& delays) {
  if (delays.kind == DelayPolicy::Kind::Scripted) return run_simulated(mdp, cfg, delays);
  return run_async(mdp, cfg, delays.k0_cap);
}

struct ReplayResult {
  Snapshot final_state;
  bool hashes_match = true;
  std::uint64_t first_mismatch = 0;
};

/// Re-applies a log through the commit semantics: gradients at version
/// read_version, increments onto the latest version, recorded step sizes.
inline ReplayResult replay_log(const TabularMdp& mdp, const Snapshot& initial, double radius,
                               const std::vector<UpdateRecord>& records) {
  std::uint64_t max_tau = 0;
  for (const auto& r : records) max_tau = std::max(max_tau, r.tau);
  const std::size_t window = static_cast<std::size_t>(max_tau) + 1;
  std::vector<Snapshot> history(window);
  history[0] = initial;
  Snapshot cur = initial;
  ReplayResult out;
  for (const auto& r : records) {
    if (r.k != cur.version || r.read_version + r.tau != r.k)
      throw ConfigError("log is not gap-free at k = " + std::to_string(r.k));
    const Snapshot& stale = history[static_cast<std::size_t>(r.read_version % window)];
    const StaleGradients g = stale_gradients(mdp, r.x, stale);
    cur.omega = project_ball(cur.omega + r.beta * g.critic, radius);
    cur.policy.theta.row(static_cast<Eigen::Index>(r.x.s)) += r.alpha * g.actor_block.transpose();
    ++cur.version;
    if (out.hashes_match && snapshot_hash(cur.policy.theta, cur.omega) != r.hash) {
      out.hashes_match = false;
      out.first_mismatch = r.k;
    }
    history[static_cast<std::size_t>(cur.version % window)] = cur;
  }
  out.final_state = std::move(cur);
  return out;
}

}  // namespace a3c
