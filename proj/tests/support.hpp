#pragma once

// Helpers shared by the test binaries: small hand-built and random MDPs.

#include <cmath>
#include <random>
#include <vector>

#include "a3c.hpp"

namespace a3c::test {

/// Random MDP with Dirichlet-ish transition rows, rewards in [lo, hi) and
/// unit-norm features. Independent of the library generator.
inline TabularMdp random_mdp(std::size_t n, std::size_t m, std::size_t d, double gamma, std::uint32_t seed,
                             double lo = 0.0, double hi = 1.0) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto N = static_cast<Eigen::Index>(n);
  const auto SA = static_cast<Eigen::Index>(n * m);
  RowMatrix P(SA, N), R(SA, N), phi(N, static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < SA; ++r) {
    for (Eigen::Index c = 0; c < N; ++c) P(r, c) = 0.05 + u(gen);
    P.row(r) /= P.row(r).sum();
    for (Eigen::Index c = 0; c < N; ++c) R(r, c) = lo + (hi - lo) * u(gen);
  }
  for (Eigen::Index s = 0; s < N; ++s) {
    for (Eigen::Index j = 0; j < phi.cols(); ++j) phi(s, j) = u(gen);
    phi.row(s) /= phi.row(s).norm();
  }
  Vector eta(N);
  for (Eigen::Index s = 0; s < N; ++s) eta(s) = 0.1 + u(gen);
  eta /= eta.sum();
  return TabularMdp(n, m, P, R, gamma, phi, eta, seed);
}

/// Same dynamics with features replaced by the identity.
inline TabularMdp one_hot(const TabularMdp& mdp) {
  const auto N = static_cast<Eigen::Index>(mdp.n_states());
  return TabularMdp(mdp.n_states(), mdp.n_actions(), mdp.transition(), mdp.raw_reward(), mdp.discount(),
                    RowMatrix::Identity(N, N), mdp.initial_dist(), mdp.seed());
}

inline SoftmaxPolicy random_policy(const TabularMdp& mdp, std::uint32_t seed, double scale = 2.0) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  SoftmaxPolicy p = SoftmaxPolicy::uniform(mdp);
  for (Eigen::Index i = 0; i < p.theta.size(); ++i) p.theta.data()[i] = scale * z(gen);
  return p;
}

/// Single state, single action, phi = 1, raw reward R.
inline TabularMdp single_state(double gamma, double reward) {
  RowMatrix P(1, 1), R(1, 1), phi(1, 1);
  P << 1.0;
  R << reward;
  phi << 1.0;
  return TabularMdp(1, 1, P, R, gamma, phi, Vector::Ones(1));
}

/// Two states, one action, with the given state kernel.
inline TabularMdp two_state_chain(double p01, double p10, double gamma = 0.5) {
  RowMatrix P(2, 2), R = RowMatrix::Zero(2, 2), phi(2, 1);
  P << 1.0 - p01, p01, p10, 1.0 - p10;
  phi << 1.0, 0.5;
  return TabularMdp(2, 1, P, R, gamma, phi, Vector::Constant(2, 0.5));
}

struct SerialResult {
  RowMatrix theta;
  Vector omega;
  std::vector<Transition> xs;
};

// The two-timescale recursion written out step by step, one worker, no
// delay: s ~ mu_theta (or the chain), a ~ pi_theta, s' ~ P, then
//   delta = r + gamma phi(s').omega - phi(s).omega
//   omega <- Proj(omega + beta_k delta phi(s))
//   theta[s][b] <- theta[s][b] + alpha_k delta (1{b=a} - pi(b|s)).
inline SerialResult serial_reference(const TabularMdp& mdp, const StepSchedule& sched, double radius, std::uint64_t seed,
                                     std::uint64_t K, SamplingMode mode) {
  const std::size_t n = mdp.n_states(), m = mdp.n_actions(), d = mdp.feature_dim();
  SerialResult out{RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m)),
                   Vector::Zero(static_cast<Eigen::Index>(d)),
                   {}};
  Rng init(seed, stream::kWorkerBase);
  std::size_t chain_state = init.categorical({mdp.initial_dist().data(), n});
  for (std::uint64_t k = 0; k < K; ++k) {
    SoftmaxPolicy pol{out.theta};
    Rng rng(seed, stream::kSampleBase + k);
    std::size_t s;
    if (mode == SamplingMode::Iid) {
      const Vector mu = stationary_distribution(mdp, pol);
      s = rng.categorical({mu.data(), n});
    } else {
      s = chain_state;
    }
    const Vector pi = policy_probs(pol, s);
    const std::size_t a = rng.categorical({pi.data(), m});
    const auto prow = mdp.transition().row(static_cast<Eigen::Index>(s * m + a));
    const std::size_t t = rng.categorical({prow.data(), n});
    chain_state = t;
    out.xs.push_back({s, a, t});

    const double alpha = sched.c1() / std::pow(1.0 + static_cast<double>(k), sched.sigma1());
    const double beta = sched.c2() / std::pow(1.0 + static_cast<double>(k), sched.sigma2());
    const double r = (1.0 - mdp.discount()) * mdp.raw_reward()(static_cast<Eigen::Index>(s * m + a),
                                                                static_cast<Eigen::Index>(t));
    const double v_next = mdp.features().row(static_cast<Eigen::Index>(t)).dot(out.omega);
    const double v_now = mdp.features().row(static_cast<Eigen::Index>(s)).dot(out.omega);
    const double delta = r + mdp.discount() * v_next - v_now;

    Vector w = out.omega;
    for (std::size_t j = 0; j < d; ++j)
      w(static_cast<Eigen::Index>(j)) += beta * (delta * mdp.features()(static_cast<Eigen::Index>(s),
                                                                         static_cast<Eigen::Index>(j)));
    const double norm = w.norm();
    if (norm > radius) {
      w *= radius / norm;
      while (w.norm() > radius) w *= 1.0 - 0x1.0p-52;
    }
    out.omega = w;
    for (std::size_t b = 0; b < m; ++b) {
      const double psi = (b == a ? 1.0 : 0.0) - pi(static_cast<Eigen::Index>(b));
      out.theta(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(b)) += alpha * (delta * psi);
    }
  }
  return out;
}

}  // namespace a3c::test
