#pragma once

// Exact linear-algebra oracles for a fixed policy: stationary distribution,
// value function, discounted visitation, objective and its gradient, the
// TD(0) fixed point, and geometric-mixing diagnostics.
//
// Everything here is dense; intended sizes are |S| up to a few hundred and
// feature dimension up to ~100.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "a3c/errors.hpp"
#include "a3c/mdp.hpp"

namespace a3c {

inline constexpr double kStationaryResidualTol = 1e-12;
inline constexpr double kErgodicityGapTol = 1e-10;
inline constexpr double kLambdaFloor = 1e-10;
inline constexpr double kRhoFloor = 1e-12;
// TV distances below this are beneath the resolution of mu itself.
inline constexpr double kTvNoiseFloor = 1e-14;

inline const char* const kAssumptionErgodic = "irreducible and aperiodic chain";
inline const char* const kAssumptionNegDef = "negative definite A";

/// State-to-state kernel and expected normalized reward under a policy.
struct PolicyChain {
  RowMatrix kernel;        // P_pi[s][s']
  Vector expected_reward;  // rbar_pi[s]
};

struct TdMatrices {
  Eigen::MatrixXd A;
  Vector b;
  double lambda = 0.0;
  Vector omega_star;
};

struct MixingFit {
  double kappa = 0.0;
  double rho = 0.0;
  std::vector<std::pair<std::size_t, double>> tv_curve;  // (t, sup_s TV)
};

inline PolicyChain policy_chain(const TabularMdp& mdp, const RowMatrix& pi) {
  const auto n = static_cast<Eigen::Index>(mdp.n_states());
  const auto m = static_cast<Eigen::Index>(mdp.n_actions());
  PolicyChain chain{RowMatrix::Zero(n, n), Vector::Zero(n)};
  const double scale = 1.0 - mdp.discount();
  for (Eigen::Index s = 0; s < n; ++s) {
    for (Eigen::Index a = 0; a < m; ++a) {
      const double p = pi(s, a);
      if (p == 0.0) continue;
      const auto r = s * m + a;
      chain.kernel.row(s) += p * mdp.transition().row(r);
      chain.expected_reward(s) +=
          p * scale * mdp.transition().row(r).dot(mdp.raw_reward().row(r));
    }
  }
  return chain;
}

inline PolicyChain policy_chain(const TabularMdp& mdp, const SoftmaxPolicy& policy) {
  return policy_chain(mdp, policy_table(policy));
}

/// Eigenvalue moduli of the kernel, descending.
inline std::vector<double> eigen_moduli(const RowMatrix& kernel) {
  Eigen::EigenSolver<Eigen::MatrixXd> solver(Eigen::MatrixXd(kernel), false);
  std::vector<double> mods;
  mods.reserve(static_cast<std::size_t>(kernel.rows()));
  for (const auto& ev : solver.eigenvalues()) mods.push_back(std::abs(ev));
  std::sort(mods.begin(), mods.end(), std::greater<>());
  return mods;
}

/// Second-largest eigenvalue modulus (0 for a one-state chain).
inline double subdominant_modulus(const RowMatrix& kernel) {
  const auto mods = eigen_moduli(kernel);
  return mods.size() > 1 ? mods[1] : 0.0;
}

/// Throws AssumptionViolation unless the chain is irreducible and aperiodic.
/// A strictly positive kernel is primitive, so the eigen-solve is skipped.
inline void check_ergodic(const RowMatrix& kernel) {
  if (kernel.minCoeff() > 0.0) return;
  const double second = subdominant_modulus(kernel);
  if (second >= 1.0 - kErgodicityGapTol)
    throw AssumptionViolation(kAssumptionErgodic,
                              "second eigenvalue modulus " + std::to_string(second) + " >= 1");
}

inline double stationary_residual(const RowMatrix& kernel, const Vector& mu) {
  return (kernel.transpose() * mu - mu).cwiseAbs().maxCoeff();
}

/// Stationary distribution mu with mu^T P = mu^T.
///
/// Direct solve of (P^T - I) mu = 0 with the last equation replaced by
/// sum(mu) = 1; falls back to power iteration if the solve is inaccurate.
inline Vector stationary_distribution(const PolicyChain& chain) {
  const RowMatrix& P = chain.kernel;
  const auto n = P.rows();
  check_ergodic(P);
  Eigen::MatrixXd M = P.transpose();
  M.diagonal().array() -= 1.0;
  M.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs(n - 1) = 1.0;
  Vector mu = M.partialPivLu().solve(rhs);
  mu = mu.cwiseMax(0.0);
  mu /= mu.sum();
  if (stationary_residual(P, mu) < kStationaryResidualTol) return mu;

  Vector cur = Vector::Constant(n, 1.0 / static_cast<double>(n));
  for (int it = 0; it < 1000000; ++it) {
    Vector next = P.transpose() * cur;
    next /= next.sum();
    const double diff = (next - cur).cwiseAbs().maxCoeff();
    cur = std::move(next);
    if (diff < 1e-15) break;
  }
  return cur;
}

inline Vector stationary_distribution(const TabularMdp& mdp, const SoftmaxPolicy& policy) {
  return stationary_distribution(policy_chain(mdp, policy));
}

/// V = (I - gamma P_pi)^{-1} rbar_pi.
inline Vector exact_value(const TabularMdp& mdp, const PolicyChain& chain) {
  Eigen::MatrixXd M = -mdp.discount() * Eigen::MatrixXd(chain.kernel);
  M.diagonal().array() += 1.0;
  return M.partialPivLu().solve(chain.expected_reward);
}

inline Vector exact_value(const TabularMdp& mdp, const SoftmaxPolicy& policy) {
  return exact_value(mdp, policy_chain(mdp, policy));
}

/// Q(s,a) = sum_s' P(s'|s,a) (r(s,a,s') + gamma V(s')).
inline RowMatrix action_values(const TabularMdp& mdp, const Vector& value) {
  const auto n = static_cast<Eigen::Index>(mdp.n_states());
  const auto m = static_cast<Eigen::Index>(mdp.n_actions());
  const double scale = 1.0 - mdp.discount();
  RowMatrix q(n, m);
  for (Eigen::Index s = 0; s < n; ++s)
    for (Eigen::Index a = 0; a < m; ++a) {
      const auto r = s * m + a;
      q(s, a) = mdp.transition().row(r).dot(scale * mdp.raw_reward().row(r) +
                                            mdp.discount() * value.transpose());
    }
  return q;
}

/// d = (1 - gamma) eta^T (I - gamma P_pi)^{-1}.
inline Vector discounted_visitation(const TabularMdp& mdp, const PolicyChain& chain) {
  Eigen::MatrixXd M = -mdp.discount() * Eigen::MatrixXd(chain.kernel.transpose());
  M.diagonal().array() += 1.0;
  Vector d = M.partialPivLu().solve((1.0 - mdp.discount()) * mdp.initial_dist());
  return d;
}

inline Vector discounted_visitation(const TabularMdp& mdp, const SoftmaxPolicy& policy) {
  return discounted_visitation(mdp, policy_chain(mdp, policy));
}

/// Restart kernel (1 - gamma) 1 eta^T + gamma P_pi, whose stationary
/// distribution is the discounted visitation measure.
inline RowMatrix restart_kernel(const TabularMdp& mdp, const PolicyChain& chain) {
  RowMatrix k = mdp.discount() * chain.kernel;
  k.rowwise() += (1.0 - mdp.discount()) * mdp.initial_dist().transpose();
  return k;
}

/// J(theta) = eta . V.
inline double exact_objective(const TabularMdp& mdp, const SoftmaxPolicy& policy) {
  return mdp.initial_dist().dot(exact_value(mdp, policy));
}

/// Exact gradient of J with respect to theta, flattened s*|A| + a.
///
/// Computed as E_{s~d, a~pi}[A(s,a) psi(s,a)] / (1 - gamma). With normalized
/// rewards the (1 - gamma) factor in d does not cancel against the value
/// scale, so it is divided back out here.
inline Vector exact_policy_gradient(const TabularMdp& mdp, const SoftmaxPolicy& policy) {
  const RowMatrix pi = policy_table(policy);
  const PolicyChain chain = policy_chain(mdp, pi);
  const Vector value = exact_value(mdp, chain);
  const RowMatrix q = action_values(mdp, value);
  const Vector d = discounted_visitation(mdp, chain);
  const auto n = static_cast<Eigen::Index>(mdp.n_states());
  const auto m = static_cast<Eigen::Index>(mdp.n_actions());
  Vector grad = Vector::Zero(n * m);
  for (Eigen::Index s = 0; s < n; ++s) {
    auto block = grad.segment(s * m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      const double advantage = q(s, a) - value(s);
      const double w = d(s) * pi(s, a) * advantage;
      if (w == 0.0) continue;
      block += w * score_block(policy, static_cast<std::size_t>(s), static_cast<std::size_t>(a));
    }
  }
  return grad / (1.0 - mdp.discount());
}

/// A = E_mu[phi(s)(gamma phi(s') - phi(s))^T], b = E_mu[r phi(s)],
/// omega* = -A^{-1} b, lambda = -lambda_max((A + A^T)/2).
inline TdMatrices td_matrices(const TabularMdp& mdp, const PolicyChain& chain, const Vector& mu) {
  const Eigen::MatrixXd phi = mdp.features();
  const Eigen::MatrixXd weighted = mu.asDiagonal() * phi;  // D Phi
  Eigen::MatrixXd next = mdp.discount() * (Eigen::MatrixXd(chain.kernel) * phi) - phi;
  TdMatrices out;
  out.A = weighted.transpose() * next;
  out.b = weighted.transpose() * chain.expected_reward;
  const Eigen::MatrixXd sym = 0.5 * (out.A + out.A.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  out.lambda = -eig.eigenvalues().maxCoeff();
  if (!(out.lambda > kLambdaFloor))
    throw AssumptionViolation(kAssumptionNegDef,
                              "max eigenvalue of sym(A) is " + std::to_string(-out.lambda));
  out.omega_star = -out.A.partialPivLu().solve(out.b);
  return out;
}

inline TdMatrices td_matrices(const TabularMdp& mdp, const SoftmaxPolicy& policy) {
  const PolicyChain chain = policy_chain(mdp, policy);
  return td_matrices(mdp, chain, stationary_distribution(chain));
}

/// R_omega = r_max / lambda.
inline double projection_radius(const TabularMdp& mdp, double lambda) {
  if (!(lambda > 0.0)) throw ConfigError("lambda must be positive");
  return mdp.r_max() / lambda;
}

/// sqrt(E_mu[(V(s) - phi(s).omega*)^2]) at one policy.
inline double critic_approx_error(const TabularMdp& mdp, const SoftmaxPolicy& policy) {
  const PolicyChain chain = policy_chain(mdp, policy);
  const Vector mu = stationary_distribution(chain);
  const TdMatrices td = td_matrices(mdp, chain, mu);
  const Vector value = exact_value(mdp, chain);
  const Vector resid = value - mdp.features() * td.omega_star;
  return std::sqrt(mu.dot(resid.cwiseAbs2()));
}

/// eps_sp = 4 Rmax^2 C_psi^2 (log_rho(1/kappa) + 1/(1 - rho)) (1 - gamma).
inline double sampling_error_constant(const TabularMdp& mdp, const MixingFit& fit, double c_psi) {
  if (!(fit.rho > 0.0 && fit.rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
  if (!(fit.kappa > 0.0)) throw ConfigError("kappa must be positive");
  const double log_term = -std::log(fit.kappa) / std::log(fit.rho);
  const double rmax = mdp.raw_r_max();
  return 4.0 * rmax * rmax * c_psi * c_psi * (log_term + 1.0 / (1.0 - fit.rho)) *
         (1.0 - mdp.discount());
}

/// Default horizon 10 * ceil(1 / (1 - rho)).
inline std::size_t mixing_horizon(double rho) {
  return 10 * static_cast<std::size_t>(std::ceil(1.0 / (1.0 - rho)));
}

/// Worst-case TV distance of the t-step state distribution from mu, exact,
/// for t = 0..horizon, plus the (kappa, rho) fit: rho is the subdominant
/// eigenvalue modulus and kappa the smallest constant with
/// tv(t) <= kappa rho^t on the whole curve.
///
/// The deviation D_t = P^t - 1 mu^T is propagated directly (D_{t+1} = D_t P,
/// with row sums re-zeroed each step) so that small distances keep their
/// relative accuracy instead of drowning in the rounding of P^t.
inline MixingFit mixing_diagnostic(const PolicyChain& chain, std::size_t horizon = 0) {
  const RowMatrix& P = chain.kernel;
  const auto n = P.rows();
  check_ergodic(P);
  const Vector mu = stationary_distribution(chain);
  MixingFit fit;
  fit.rho = std::max(subdominant_modulus(P), kRhoFloor);
  if (fit.rho >= 1.0) throw AssumptionViolation(kAssumptionErgodic, "rho >= 1");
  if (horizon == 0) horizon = mixing_horizon(fit.rho);

  RowMatrix dev = RowMatrix::Identity(n, n);
  dev.rowwise() -= mu.transpose();
  double kappa = 0.0;
  for (std::size_t t = 0; t <= horizon; ++t) {
    double tv = 0.5 * dev.cwiseAbs().rowwise().sum().maxCoeff();
    if (tv < kTvNoiseFloor) tv = 0.0;
    fit.tv_curve.emplace_back(t, tv);
    if (tv > 0.0) kappa = std::max(kappa, tv / std::pow(fit.rho, static_cast<double>(t)));
    RowMatrix next = dev * P;
    const Vector sums = next.rowwise().sum();
    next -= sums * mu.transpose();
    dev = std::move(next);
  }
  // One part in 1e12 of slack so kappa * rho^t, re-rounded, still dominates.
  fit.kappa = kappa * (1.0 + 1e-12);
  return fit;
}

inline MixingFit mixing_diagnostic(const TabularMdp& mdp, const SoftmaxPolicy& policy,
                                   std::size_t horizon = 0) {
  return mixing_diagnostic(policy_chain(mdp, policy), horizon);
}

}  // namespace a3c
