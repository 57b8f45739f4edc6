#pragma once

// Tabular MDP, softmax actor, linear critic and the per-transition
// TD(0) / policy-gradient quantities used by every worker.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "a3c/errors.hpp"
#include "a3c/rng.hpp"

namespace a3c {

using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Exact bound on the L2 norm of a tabular softmax score vector.
inline const double kScoreBound = std::sqrt(2.0);

inline constexpr double kStochasticTol = 1e-12;

/// Environment {S, A, P, R, gamma} with state features and start distribution.
///
/// Transitions and raw rewards are stored as (|S|*|A|) x |S| row-major
/// matrices, row index s*|A| + a. Rewards are kept raw; every TD and gradient
/// computation works with the normalized reward r = (1 - gamma) R.
class TabularMdp {
 public:
  TabularMdp(std::size_t n_states, std::size_t n_actions, RowMatrix transition,
             RowMatrix raw_reward, double discount, RowMatrix features, Vector initial_dist,
             std::uint64_t seed = 0)
      : n_states_(n_states),
        n_actions_(n_actions),
        transition_(std::move(transition)),
        raw_reward_(std::move(raw_reward)),
        discount_(discount),
        features_(std::move(features)),
        initial_dist_(std::move(initial_dist)),
        seed_(seed) {
    validate();
    const double r_abs = raw_reward_.size() ? raw_reward_.cwiseAbs().maxCoeff() : 0.0;
    r_max_ = (1.0 - discount_) * r_abs;
    raw_r_max_ = r_abs;
  }

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features_.cols()); }
  /// Number of actor parameters, |S| * |A|.
  std::size_t policy_dim() const { return n_states_ * n_actions_; }
  double discount() const { return discount_; }
  std::uint64_t seed() const { return seed_; }
  /// (1 - gamma) * max |R|.
  double r_max() const { return r_max_; }
  /// max |R| in raw units.
  double raw_r_max() const { return raw_r_max_; }

  const RowMatrix& transition() const { return transition_; }
  const RowMatrix& raw_reward() const { return raw_reward_; }
  const RowMatrix& features() const { return features_; }
  const Vector& initial_dist() const { return initial_dist_; }

  std::size_t row(std::size_t s, std::size_t a) const { return s * n_actions_ + a; }

  double prob(std::size_t s, std::size_t a, std::size_t s_next) const {
    return transition_(row(s, a), s_next);
  }

  /// Normalized reward r(s, a, s') = (1 - gamma) R(s, a, s').
  double reward(std::size_t s, std::size_t a, std::size_t s_next) const {
    return (1.0 - discount_) * raw_reward_(row(s, a), s_next);
  }

  auto feature(std::size_t s) const { return features_.row(static_cast<Eigen::Index>(s)); }

  void check_state(std::size_t s) const {
    if (s >= n_states_)
      throw std::out_of_range("state " + std::to_string(s) + " out of range [0, " +
                              std::to_string(n_states_) + ")");
  }

  void check_action(std::size_t a) const {
    if (a >= n_actions_)
      throw std::out_of_range("action " + std::to_string(a) + " out of range [0, " +
                              std::to_string(n_actions_) + ")");
  }

 private:
  void validate() const {
    const auto rows = static_cast<Eigen::Index>(n_states_ * n_actions_);
    const auto cols = static_cast<Eigen::Index>(n_states_);
    if (n_states_ == 0 || n_actions_ == 0) throw ConfigError("MDP needs at least one state and one action");
    if (transition_.rows() != rows || transition_.cols() != cols)
      throw ConfigError("transition tensor has wrong shape");
    if (raw_reward_.rows() != rows || raw_reward_.cols() != cols)
      throw ConfigError("reward tensor has wrong shape");
    if (features_.rows() != cols || features_.cols() == 0)
      throw ConfigError("feature matrix must have one non-empty row per state");
    if (initial_dist_.size() != cols) throw ConfigError("initial distribution has wrong length");
    if (!(discount_ >= 0.0 && discount_ < 1.0)) throw ConfigError("discount must lie in [0, 1)");
    if (!transition_.allFinite() || !raw_reward_.allFinite() || !features_.allFinite() ||
        !initial_dist_.allFinite())
      throw ConfigError("MDP contains non-finite values");
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (transition_.row(r).minCoeff() < 0.0) throw ConfigError("negative transition probability");
      if (std::abs(transition_.row(r).sum() - 1.0) > kStochasticTol)
        throw ConfigError("transition row " + std::to_string(r) + " does not sum to 1");
    }
    for (Eigen::Index s = 0; s < cols; ++s) {
      if (features_.row(s).norm() > 1.0 + 1e-12)
        throw ConfigError("feature row " + std::to_string(s) + " has norm above 1");
    }
    if (initial_dist_.minCoeff() < 0.0 || std::abs(initial_dist_.sum() - 1.0) > kStochasticTol)
      throw ConfigError("initial distribution is not a probability vector");
  }

  std::size_t n_states_;
  std::size_t n_actions_;
  RowMatrix transition_;
  RowMatrix raw_reward_;
  double discount_;
  RowMatrix features_;
  Vector initial_dist_;
  std::uint64_t seed_;
  double r_max_ = 0.0;
  double raw_r_max_ = 0.0;
};

/// Tabular softmax actor: one logit per (state, action).
struct SoftmaxPolicy {
  RowMatrix theta;  // |S| x |A|

  static SoftmaxPolicy uniform(const TabularMdp& mdp) {
    return SoftmaxPolicy{RowMatrix::Zero(static_cast<Eigen::Index>(mdp.n_states()),
                                         static_cast<Eigen::Index>(mdp.n_actions()))};
  }

  std::size_t n_states() const { return static_cast<std::size_t>(theta.rows()); }
  std::size_t n_actions() const { return static_cast<std::size_t>(theta.cols()); }
};

/// Linear critic V(s) = phi(s) . omega, kept inside the ball of `radius`.
struct CriticParams {
  Vector omega;
  double radius = std::numeric_limits<double>::infinity();
};

struct Transition {
  std::size_t s = 0;
  std::size_t a = 0;
  std::size_t s_next = 0;

  friend bool operator==(const Transition&, const Transition&) = default;
};

/// alpha_k = c1 / (1+k)^sigma1 (actor), beta_k = c2 / (1+k)^sigma2 (critic).
class StepSchedule {
 public:
  StepSchedule(double c1, double c2, double sigma1, double sigma2)
      : c1_(c1), c2_(c2), sigma1_(sigma1), sigma2_(sigma2) {
    if (!(c1 > 0.0) || !(c2 > 0.0)) throw ConfigError("step-size constants must be positive");
    if (!(0.0 < sigma2 && sigma2 < sigma1 && sigma1 < 1.0))
      throw ConfigError("step-size exponents must satisfy 0 < sigma2 < sigma1 < 1");
  }

  double c1() const { return c1_; }
  double c2() const { return c2_; }
  double sigma1() const { return sigma1_; }
  double sigma2() const { return sigma2_; }

  double alpha(std::uint64_t k) const { return c1_ / std::pow(1.0 + static_cast<double>(k), sigma1_); }
  double beta(std::uint64_t k) const { return c2_ / std::pow(1.0 + static_cast<double>(k), sigma2_); }

  std::pair<double, double> at(std::uint64_t k) const { return {alpha(k), beta(k)}; }

 private:
  double c1_, c2_, sigma1_, sigma2_;
};

inline std::pair<double, double> schedule_at(const StepSchedule& sched, std::uint64_t k) {
  return sched.at(k);
}

inline void check_transition(const TabularMdp& mdp, const Transition& x) {
  mdp.check_state(x.s);
  mdp.check_action(x.a);
  mdp.check_state(x.s_next);
}

/// Softmax of theta[s][.], stabilized by subtracting the row maximum.
inline Vector policy_probs(const SoftmaxPolicy& policy, std::size_t s) {
  if (s >= policy.n_states())
    throw std::out_of_range("state " + std::to_string(s) + " out of range");
  const auto row = policy.theta.row(static_cast<Eigen::Index>(s));
  const double m = row.maxCoeff();
  Vector p = (row.array() - m).exp().matrix().transpose();
  p /= p.sum();
  return p;
}

/// All action distributions at once, |S| x |A|.
inline RowMatrix policy_table(const SoftmaxPolicy& policy) {
  RowMatrix table(policy.theta.rows(), policy.theta.cols());
  for (Eigen::Index s = 0; s < policy.theta.rows(); ++s)
    table.row(s) = policy_probs(policy, static_cast<std::size_t>(s)).transpose();
  return table;
}

/// The state-s block of the score: 1{b=a} - pi(b|s) for each action b.
inline Vector score_block(const SoftmaxPolicy& policy, std::size_t s, std::size_t a) {
  if (a >= policy.n_actions()) throw std::out_of_range("action " + std::to_string(a) + " out of range");
  Vector block = -policy_probs(policy, s);
  block(static_cast<Eigen::Index>(a)) += 1.0;
  return block;
}

/// Full score vector grad log pi(a|s), length |S|*|A|, zero outside block s.
inline Vector score(const SoftmaxPolicy& policy, std::size_t s, std::size_t a) {
  Vector full = Vector::Zero(policy.theta.size());
  full.segment(static_cast<Eigen::Index>(s * policy.n_actions()),
               static_cast<Eigen::Index>(policy.n_actions())) = score_block(policy, s, a);
  return full;
}

/// r(s,a,s') + gamma phi(s').omega - phi(s).omega
inline double td_error(const TabularMdp& mdp, const Transition& x, const Vector& omega) {
  check_transition(mdp, x);
  const double v_next = mdp.feature(x.s_next).dot(omega);
  const double v_now = mdp.feature(x.s).dot(omega);
  return mdp.reward(x.s, x.a, x.s_next) + mdp.discount() * v_next - v_now;
}

inline double td_error(const TabularMdp& mdp, const Transition& x, const CriticParams& critic) {
  return td_error(mdp, x, critic.omega);
}

/// Critic semi-gradient g(x, omega) = delta * phi(s).
inline Vector critic_semi_gradient(const TabularMdp& mdp, const Transition& x, const Vector& omega) {
  const double delta = td_error(mdp, x, omega);
  return delta * mdp.feature(x.s).transpose();
}

inline Vector critic_semi_gradient(const TabularMdp& mdp, const Transition& x,
                                   const CriticParams& critic) {
  return critic_semi_gradient(mdp, x, critic.omega);
}

/// Actor direction v(x, theta, omega) = delta * psi_theta(s, a), full length.
inline Vector actor_stochastic_gradient(const TabularMdp& mdp, const Transition& x,
                                        const SoftmaxPolicy& policy, const Vector& omega) {
  const double delta = td_error(mdp, x, omega);
  return delta * score(policy, x.s, x.a);
}

inline Vector actor_stochastic_gradient(const TabularMdp& mdp, const Transition& x,
                                        const SoftmaxPolicy& policy, const CriticParams& critic) {
  return actor_stochastic_gradient(mdp, x, policy, critic.omega);
}

/// C_delta = r_max + (1 + gamma) R_omega bounds |delta| and ||g||.
inline double td_error_bound(const TabularMdp& mdp, double radius) {
  return mdp.r_max() + (1.0 + mdp.discount()) * radius;
}

/// Euclidean projection onto the ball of the given radius.
inline Vector project_ball(const Vector& omega, double radius) {
  if (!(radius > 0.0)) throw ConfigError("projection radius must be positive");
  const double norm = omega.norm();
  if (norm <= radius) return omega;
  Vector out = omega * (radius / norm);
  // Rounding can leave the norm an ulp above the radius; shrink until inside
  // so the output is a fixed point of the projection.
  while (out.norm() > radius) out *= 1.0 - 0x1.0p-52;
  return out;
}

/// a ~ pi(.|s), then s' ~ P(.|s, a).
inline Transition sample_transition(const TabularMdp& mdp, const SoftmaxPolicy& policy,
                                    std::size_t s, Rng& rng) {
  mdp.check_state(s);
  const Vector probs = policy_probs(policy, s);
  const std::size_t a = rng.categorical({probs.data(), static_cast<std::size_t>(probs.size())});
  const auto row = mdp.transition().row(static_cast<Eigen::Index>(mdp.row(s, a)));
  const std::size_t s_next = rng.categorical({row.data(), static_cast<std::size_t>(row.size())});
  return {s, a, s_next};
}

}  // namespace a3c
