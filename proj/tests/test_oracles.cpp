#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace a3c;
using a3c::test::random_mdp;
using a3c::test::random_policy;
using a3c::test::single_state;
using a3c::test::two_state_chain;

namespace {

PolicyChain kernel_only(const RowMatrix& k) { return PolicyChain{k, Vector::Zero(k.rows())}; }

// Plain value iteration on normalized rewards.
Vector value_iteration(const TabularMdp& mdp, const SoftmaxPolicy& p) {
  const auto n = static_cast<Eigen::Index>(mdp.n_states());
  Vector v = Vector::Zero(n);
  for (int it = 0; it < 20000; ++it) {
    Vector next = Vector::Zero(n);
    for (std::size_t s = 0; s < mdp.n_states(); ++s) {
      const Vector pi = policy_probs(p, s);
      for (std::size_t a = 0; a < mdp.n_actions(); ++a)
        for (std::size_t t = 0; t < mdp.n_states(); ++t)
          next(static_cast<Eigen::Index>(s)) += pi(static_cast<Eigen::Index>(a)) * mdp.prob(s, a, t) *
                                                (mdp.reward(s, a, t) + mdp.discount() * v(static_cast<Eigen::Index>(t)));
    }
    const double diff = (next - v).cwiseAbs().maxCoeff();
    v = next;
    if (diff < 1e-15) break;
  }
  return v;
}

}  // namespace

TEST(PolicyChain, DeterministicPolicyPicksRow) {
  const TabularMdp mdp = random_mdp(4, 3, 2, 0.9, 1);
  RowMatrix pi = RowMatrix::Zero(4, 3);
  for (int s = 0; s < 4; ++s) pi(s, (s + 1) % 3) = 1.0;
  const PolicyChain c = policy_chain(mdp, pi);
  for (std::size_t s = 0; s < 4; ++s)
    EXPECT_EQ(c.kernel.row(static_cast<Eigen::Index>(s)),
              mdp.transition().row(static_cast<Eigen::Index>(mdp.row(s, (s + 1) % 3))));
}

TEST(PolicyChain, SingleActionIsTheKernel) {
  const TabularMdp mdp = random_mdp(5, 1, 2, 0.9, 2);
  EXPECT_EQ(policy_chain(mdp, SoftmaxPolicy::uniform(mdp)).kernel, mdp.transition());
}

TEST(PolicyChain, TwoByTwoHandMarginalization) {
  RowMatrix P(4, 2), R(4, 2), phi(2, 1);
  P << 0.9, 0.1,  //
      0.3, 0.7,   //
      0.5, 0.5,   //
      0.0, 1.0;
  R << 1, 0,  //
      0, 2,   //
      4, 4,   //
      0, 8;
  phi << 1, 0;
  const TabularMdp mdp(2, 2, P, R, 0.5, phi, Vector::Constant(2, 0.5));
  SoftmaxPolicy p{RowMatrix::Zero(2, 2)};
  p.theta(0, 0) = std::log(3.0);  // pi(.|0) = (0.75, 0.25), pi(.|1) = (0.5, 0.5)
  const PolicyChain c = policy_chain(mdp, p);
  EXPECT_NEAR(c.kernel(0, 0), 0.75 * 0.9 + 0.25 * 0.3, 1e-15);
  EXPECT_NEAR(c.kernel(0, 1), 0.75 * 0.1 + 0.25 * 0.7, 1e-15);
  EXPECT_NEAR(c.kernel(1, 0), 0.25, 1e-15);
  EXPECT_NEAR(c.kernel(1, 1), 0.75, 1e-15);
  // rbar = 0.5 * sum pi P R
  EXPECT_NEAR(c.expected_reward(0), 0.5 * (0.75 * 0.9 * 1 + 0.25 * 0.7 * 2), 1e-15);
  EXPECT_NEAR(c.expected_reward(1), 0.5 * (0.5 * 4 + 0.5 * 8), 1e-15);
}

TEST(PolicyChain, BruteForceOnRandomMdp) {
  const TabularMdp mdp = random_mdp(6, 4, 3, 0.8, 3, -1, 1);
  const SoftmaxPolicy p = random_policy(mdp, 4);
  const PolicyChain c = policy_chain(mdp, p);
  for (std::size_t s = 0; s < 6; ++s) {
    const Vector pi = policy_probs(p, s);
    EXPECT_NEAR(c.kernel.row(static_cast<Eigen::Index>(s)).sum(), 1.0, 1e-12);
    double rbar = 0.0;
    for (std::size_t t = 0; t < 6; ++t) {
      double k = 0.0;
      for (std::size_t a = 0; a < 4; ++a) {
        k += pi(static_cast<Eigen::Index>(a)) * mdp.prob(s, a, t);
        rbar += pi(static_cast<Eigen::Index>(a)) * mdp.prob(s, a, t) * mdp.reward(s, a, t);
      }
      EXPECT_NEAR(c.kernel(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)), k, 1e-15);
    }
    EXPECT_NEAR(c.expected_reward(static_cast<Eigen::Index>(s)), rbar, 1e-15);
  }
}

TEST(Stationary, TwoStateBalance) {
  RowMatrix k(2, 2);
  k << 0.9, 0.1, 0.2, 0.8;
  const Vector mu = stationary_distribution(kernel_only(k));
  EXPECT_NEAR(mu(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(mu(1), 1.0 / 3.0, 1e-15);
}

TEST(Stationary, DoublyStochasticIsUniform) {
  RowMatrix k(3, 3);
  k << 0.2, 0.5, 0.3,  //
      0.3, 0.2, 0.5,   //
      0.5, 0.3, 0.2;
  const Vector mu = stationary_distribution(kernel_only(k));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(mu(i), 1.0 / 3.0, 1e-15);
}

TEST(Stationary, ResidualOnRandomHundredStateChains) {
  for (std::uint32_t seed = 0; seed < 5; ++seed) {
    const TabularMdp mdp = random_mdp(100, 3, 2, 0.9, seed);
    const PolicyChain c = policy_chain(mdp, random_policy(mdp, seed));
    const Vector mu = stationary_distribution(c);
    EXPECT_LT(stationary_residual(c.kernel, mu), 1e-12);
    EXPECT_GE(mu.minCoeff(), 0.0);
    EXPECT_NEAR(mu.sum(), 1.0, 1e-12);
  }
}

TEST(Stationary, ReducibleOrPeriodicRejected) {
  RowMatrix periodic(2, 2);
  periodic << 0, 1, 1, 0;
  try {
    stationary_distribution(kernel_only(periodic));
    FAIL() << "periodic chain accepted";
  } catch (const AssumptionViolation& e) {
    EXPECT_EQ(e.assumption(), kAssumptionErgodic);
  }
  RowMatrix reducible(3, 3);
  reducible << 1, 0, 0,  //
      0, 0.5, 0.5,       //
      0, 0.5, 0.5;
  EXPECT_THROW(stationary_distribution(kernel_only(reducible)), AssumptionViolation);
}

TEST(ExactValue, GeometricSeries) {
  const TabularMdp mdp = single_state(0.5, 1.0);
  EXPECT_NEAR(exact_value(mdp, SoftmaxPolicy::uniform(mdp))(0), 1.0, 1e-15);
}

TEST(ExactValue, ZeroRewards) {
  const TabularMdp mdp = random_mdp(5, 2, 2, 0.9, 4, 0.0, 0.0);
  EXPECT_EQ(exact_value(mdp, random_policy(mdp, 1)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ExactValue, MatchesValueIteration) {
  for (std::uint32_t seed = 0; seed < 5; ++seed) {
    const TabularMdp mdp = random_mdp(5, 3, 2, 0.9, seed, -1, 2);
    const SoftmaxPolicy p = random_policy(mdp, seed + 10);
    const Vector v = exact_value(mdp, p);
    EXPECT_LT((v - value_iteration(mdp, p)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE(v.cwiseAbs().maxCoeff(), mdp.r_max() / (1 - mdp.discount()) + 1e-12);
  }
}

TEST(Visitation, GammaZeroIsEta) {
  const TabularMdp mdp = random_mdp(6, 2, 2, 0.0, 5);
  const Vector d = discounted_visitation(mdp, random_policy(mdp, 2));
  EXPECT_LT((d - mdp.initial_dist()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Visitation, StationaryStartIsFixedPoint) {
  const TabularMdp base = random_mdp(6, 2, 2, 0.9, 6);
  const SoftmaxPolicy p = random_policy(base, 3);
  const Vector mu = stationary_distribution(base, p);
  const TabularMdp mdp(6, 2, base.transition(), base.raw_reward(), 0.9, base.features(), mu);
  EXPECT_LT((discounted_visitation(mdp, p) - mu).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Visitation, TruncatedSeries) {
  const TabularMdp mdp = random_mdp(8, 3, 2, 0.95, 7);
  const SoftmaxPolicy p = random_policy(mdp, 5);
  const PolicyChain c = policy_chain(mdp, p);
  Vector term = mdp.initial_dist();
  Vector sum = Vector::Zero(8);
  double g = 1.0;
  for (int t = 0; t <= 2000; ++t) {
    sum += g * term;
    term = c.kernel.transpose() * term;
    g *= mdp.discount();
  }
  sum *= 1 - mdp.discount();
  const Vector d = discounted_visitation(mdp, c);
  EXPECT_LT((d - sum).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_NEAR(d.sum(), 1.0, 1e-12);
}

TEST(Visitation, EqualsRestartKernelStationary) {
  for (std::uint32_t seed = 0; seed < 5; ++seed) {
    const TabularMdp mdp = random_mdp(10, 3, 2, 0.9, seed);
    const PolicyChain c = policy_chain(mdp, random_policy(mdp, seed));
    const Vector d = discounted_visitation(mdp, c);
    const Vector nu = stationary_distribution(kernel_only(restart_kernel(mdp, c)));
    EXPECT_LT((d - nu).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Objective, PointMassStart) {
  const TabularMdp base = random_mdp(5, 2, 2, 0.9, 8);
  Vector eta = Vector::Zero(5);
  eta(3) = 1.0;
  const TabularMdp mdp(5, 2, base.transition(), base.raw_reward(), 0.9, base.features(), eta);
  const SoftmaxPolicy p = random_policy(mdp, 6);
  EXPECT_EQ(exact_objective(mdp, p), exact_value(mdp, p)(3));
}

TEST(Objective, ZeroRewards) {
  const TabularMdp mdp = random_mdp(5, 2, 2, 0.9, 9, 0.0, 0.0);
  EXPECT_EQ(exact_objective(mdp, random_policy(mdp, 1)), 0.0);
}

TEST(Objective, MonteCarloRollouts) {
  const TabularMdp mdp = random_mdp(6, 3, 2, 0.8, 10);
  const SoftmaxPolicy p = random_policy(mdp, 7);
  Rng rng(3, 3);
  const int episodes = 20000, horizon = 120;
  double sum = 0.0, sq = 0.0;
  for (int e = 0; e < episodes; ++e) {
    std::size_t s = rng.categorical({mdp.initial_dist().data(), 6});
    double ret = 0.0, disc = 1.0;
    for (int t = 0; t < horizon; ++t) {
      const Transition x = sample_transition(mdp, p, s, rng);
      ret += disc * mdp.reward(x.s, x.a, x.s_next);
      disc *= mdp.discount();
      s = x.s_next;
    }
    sum += ret;
    sq += ret * ret;
  }
  const double mean = sum / episodes;
  const double se = std::sqrt((sq / episodes - mean * mean) / episodes);
  EXPECT_LE(std::abs(mean - exact_objective(mdp, p)), 3 * se);
}

TEST(PolicyGradient, ConstantRewardsGiveZero) {
  RowMatrix R = RowMatrix::Constant(12, 4, 0.7);
  const TabularMdp base = random_mdp(4, 3, 2, 0.9, 11);
  const TabularMdp mdp(4, 3, base.transition(), R, 0.9, base.features(), base.initial_dist());
  EXPECT_LT(exact_policy_gradient(mdp, random_policy(mdp, 2)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(PolicyGradient, SingleActionGivesZero) {
  const TabularMdp mdp = random_mdp(6, 1, 2, 0.9, 12);
  EXPECT_EQ(exact_policy_gradient(mdp, random_policy(mdp, 3)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(PolicyGradient, MatchesCentralDifferences) {
  const double h = 1e-5;
  for (std::uint32_t seed = 0; seed < 10; ++seed) {
    const TabularMdp mdp = random_mdp(4 + seed, 3, 2, 0.9, seed + 100, -1, 1);
    const SoftmaxPolicy p = random_policy(mdp, seed, 1.0);
    const Vector g = exact_policy_gradient(mdp, p);
    Vector fd(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      SoftmaxPolicy plus = p, minus = p;
      plus.theta.data()[i] += h;
      minus.theta.data()[i] -= h;
      fd(i) = (exact_objective(mdp, plus) - exact_objective(mdp, minus)) / (2 * h);
    }
    EXPECT_LT((g - fd).norm() / g.norm(), 1e-6) << "seed " << seed;
  }
}

TEST(TdMatrices, ScalarExample) {
  const TabularMdp mdp = single_state(0.5, 1.0);
  const TdMatrices td = td_matrices(mdp, SoftmaxPolicy::uniform(mdp));
  EXPECT_NEAR(td.A(0, 0), -0.5, 1e-15);
  EXPECT_NEAR(td.b(0), 0.5, 1e-15);
  EXPECT_NEAR(td.omega_star(0), 1.0, 1e-15);
  EXPECT_NEAR(td.lambda, 0.5, 1e-15);
}

TEST(TdMatrices, OneHotFeaturesRecoverValue) {
  for (std::uint32_t seed = 0; seed < 5; ++seed) {
    const TabularMdp mdp = a3c::test::one_hot(random_mdp(8, 3, 1, 0.9, seed, -1, 1));
    const SoftmaxPolicy p = random_policy(mdp, seed);
    const TdMatrices td = td_matrices(mdp, p);
    EXPECT_LT((td.omega_star - exact_value(mdp, p)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(critic_approx_error(mdp, p), 1e-8);
  }
}

TEST(TdMatrices, InvariantsOnRandomMdps) {
  for (std::uint32_t seed = 0; seed < 10; ++seed) {
    const TabularMdp mdp = random_mdp(30, 4, 5, 0.95, seed);
    const TdMatrices td = td_matrices(mdp, random_policy(mdp, seed));
    EXPECT_LT((td.A * td.omega_star + td.b).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_GT(td.lambda, 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (td.A + td.A.transpose()));
    EXPECT_NEAR(-eig.eigenvalues().maxCoeff(), td.lambda, 1e-14);
    EXPECT_LE(td.omega_star.norm(), mdp.r_max() / td.lambda);
  }
}

TEST(TdMatrices, ExpectationsByExplicitSums) {
  const TabularMdp mdp = random_mdp(5, 2, 3, 0.7, 21);
  const SoftmaxPolicy p = random_policy(mdp, 9);
  const Vector mu = stationary_distribution(mdp, p);
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(3, 3);
  Vector b = Vector::Zero(3);
  for (std::size_t s = 0; s < 5; ++s) {
    const Vector pi = policy_probs(p, s);
    for (std::size_t a = 0; a < 2; ++a)
      for (std::size_t t = 0; t < 5; ++t) {
        const double w = mu(static_cast<Eigen::Index>(s)) * pi(static_cast<Eigen::Index>(a)) * mdp.prob(s, a, t);
        const Vector f = mdp.feature(s).transpose();
        const Vector g = mdp.feature(t).transpose();
        A += w * f * (mdp.discount() * g - f).transpose();
        b += w * mdp.reward(s, a, t) * f;
      }
  }
  const TdMatrices td = td_matrices(mdp, p);
  EXPECT_LT((td.A - A).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((td.b - b).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(TdMatrices, DegenerateFeaturesRejected) {
  // Two identical unit features make A singular, so lambda = 0.
  const TabularMdp base = random_mdp(4, 2, 2, 0.9, 3);
  RowMatrix phi(4, 2);
  phi.col(0).setConstant(std::sqrt(0.5));
  phi.col(1).setConstant(std::sqrt(0.5));
  const TabularMdp mdp(4, 2, base.transition(), base.raw_reward(), 0.9, phi, base.initial_dist());
  try {
    td_matrices(mdp, SoftmaxPolicy::uniform(mdp));
    FAIL() << "singular A accepted";
  } catch (const AssumptionViolation& e) {
    EXPECT_EQ(e.assumption(), kAssumptionNegDef);
  }
}

TEST(ProjectionRadius, Examples) {
  const TabularMdp mdp = single_state(0.5, 1.0);  // r_max = 0.5
  EXPECT_DOUBLE_EQ(projection_radius(mdp, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(projection_radius(mdp, 1.0), 0.5 * projection_radius(mdp, 0.5));
  EXPECT_THROW(projection_radius(mdp, 0.0), ConfigError);
  EXPECT_THROW(projection_radius(mdp, -1.0), ConfigError);
}

TEST(ProjectionRadius, GeneratedEnvironmentBoundsOmegaStar) {
  const TabularMdp mdp = generate_synthetic_env(EnvSpec{});
  const TdMatrices td = audit_environment(mdp);
  EXPECT_LE(td.omega_star.norm(), projection_radius(mdp, td.lambda));
  EXPECT_DOUBLE_EQ(default_radius(mdp), mdp.r_max() / td.lambda);
}

TEST(ApproxError, ConstantFeatureConstantValue) {
  // Every row of R is the same constant, so V is constant and phi = 1 spans it.
  const TabularMdp base = random_mdp(5, 2, 1, 0.9, 4);
  const TabularMdp mdp(5, 2, base.transition(), RowMatrix::Constant(10, 5, 0.3), 0.9, RowMatrix::Ones(5, 1),
                       base.initial_dist());
  EXPECT_LT(critic_approx_error(mdp, random_policy(mdp, 5)), 1e-12);
}

TEST(ApproxError, DirectWeightedResidual) {
  const TabularMdp mdp = random_mdp(10, 3, 3, 0.9, 31);
  const SoftmaxPolicy p = random_policy(mdp, 7);
  const Vector mu = stationary_distribution(mdp, p);
  const Vector v = value_iteration(mdp, p);
  const Vector w = td_matrices(mdp, p).omega_star;
  double acc = 0.0;
  for (std::size_t s = 0; s < 10; ++s) {
    const double e = v(static_cast<Eigen::Index>(s)) - mdp.feature(s).dot(w);
    acc += mu(static_cast<Eigen::Index>(s)) * e * e;
  }
  EXPECT_NEAR(critic_approx_error(mdp, p), std::sqrt(acc), 1e-10);
}

TEST(SamplingError, KappaOneClosedForm) {
  const TabularMdp mdp = single_state(0.9, 2.0);  // raw R_max = 2
  const MixingFit fit{1.0, 0.5, {}};
  EXPECT_NEAR(sampling_error_constant(mdp, fit, kScoreBound), 4 * 4 * 2 * 0.1 / 0.5, 1e-12);
}

TEST(SamplingError, ShrinksWithOneMinusGamma) {
  const MixingFit fit{3.0, 0.6, {}};
  double prev = INFINITY;
  for (double g : {0.0, 0.5, 0.9, 0.99, 0.999}) {
    const double v = sampling_error_constant(single_state(g, 1.0), fit, kScoreBound);
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(SamplingError, AnalyticTwoStateChain) {
  // Kernel eigenvalues are 1 and 1 - 0.1 - 0.2 = 0.7.
  const TabularMdp mdp = two_state_chain(0.1, 0.2);
  const MixingFit fit = mixing_diagnostic(mdp, SoftmaxPolicy::uniform(mdp));
  EXPECT_NEAR(fit.rho, 0.7, 1e-12);
  const double raw = mdp.raw_r_max();
  const double want =
      4 * raw * raw * 2 * (std::log(1 / fit.kappa) / std::log(0.7) + 1 / 0.3) * (1 - mdp.discount());
  EXPECT_NEAR(sampling_error_constant(mdp, fit, kScoreBound), want, 1e-12);
}

TEST(SamplingError, RejectsBadRho) {
  const TabularMdp mdp = single_state(0.9, 1.0);
  EXPECT_THROW(sampling_error_constant(mdp, MixingFit{1.0, 1.0, {}}, kScoreBound), ConfigError);
  EXPECT_THROW(sampling_error_constant(mdp, MixingFit{1.0, 0.0, {}}, kScoreBound), ConfigError);
}

TEST(Mixing, TwoStateRhoAndInitialTv) {
  RowMatrix k(2, 2);
  k << 0.9, 0.1, 0.2, 0.8;
  const MixingFit fit = mixing_diagnostic(kernel_only(k));
  EXPECT_NEAR(fit.rho, 0.7, 1e-12);
  EXPECT_NEAR(fit.tv_curve.front().second, 1.0 - 1.0 / 3.0, 1e-15);
  // Exact TV for this chain is (2/3) 0.7^t.
  for (const auto& [t, tv] : fit.tv_curve) {
    if (tv == 0.0) continue;
    EXPECT_NEAR(tv, (2.0 / 3.0) * std::pow(0.7, static_cast<double>(t)), 1e-13);
  }
}

TEST(Mixing, IidKernelFloorsRho) {
  RowMatrix k(3, 3);
  k << 0.2, 0.3, 0.5, 0.2, 0.3, 0.5, 0.2, 0.3, 0.5;
  const MixingFit fit = mixing_diagnostic(kernel_only(k), 5);
  EXPECT_EQ(fit.rho, kRhoFloor);
  EXPECT_NEAR(fit.tv_curve[0].second, 0.8, 1e-15);
  for (std::size_t t = 1; t < fit.tv_curve.size(); ++t) EXPECT_EQ(fit.tv_curve[t].second, 0.0);
  EXPECT_GT(fit.kappa, 0.0);
}

TEST(Mixing, BoundDominatesCurve) {
  for (std::uint32_t seed = 0; seed < 5; ++seed) {
    const TabularMdp mdp = random_mdp(15, 3, 2, 0.9, seed);
    const MixingFit fit = mixing_diagnostic(mdp, random_policy(mdp, seed, 3.0));
    EXPECT_GT(fit.rho, 0.0);
    EXPECT_LT(fit.rho, 1.0);
    EXPECT_EQ(fit.tv_curve.size(), mixing_horizon(fit.rho) + 1);
    for (const auto& [t, tv] : fit.tv_curve) EXPECT_LE(tv, fit.kappa * std::pow(fit.rho, static_cast<double>(t)));
  }
}

TEST(Mixing, TvCurveMatchesMatrixPowers) {
  const TabularMdp mdp = random_mdp(6, 2, 2, 0.9, 77);
  const PolicyChain c = policy_chain(mdp, random_policy(mdp, 1));
  const Vector mu = stationary_distribution(c);
  const MixingFit fit = mixing_diagnostic(c, 8);
  Eigen::MatrixXd pw = Eigen::MatrixXd::Identity(6, 6);
  for (std::size_t t = 0; t <= 8; ++t) {
    double worst = 0.0;
    for (int s = 0; s < 6; ++s) worst = std::max(worst, 0.5 * (pw.row(s).transpose() - mu).cwiseAbs().sum());
    EXPECT_NEAR(fit.tv_curve[t].second, worst, 1e-13);
    pw = pw * Eigen::MatrixXd(c.kernel);
  }
}
