#include <doctest.h>

#include "oracles.hpp"

#include <ges/environments.hpp>
#include <ges/mdp.hpp>

using namespace ges;

TEST_CASE("pair index round trip in both orders") {
  for (PairOrder order : {PairOrder::StateMajor, PairOrder::ActionMajor}) {
    PairIndex idx(4, 3, order);
    std::vector<bool> hit(12, false);
    for (Index s = 0; s < 4; ++s) {
      for (Index a = 0; a < 3; ++a) {
        const Index row = idx(s, a);
        REQUIRE(row >= 0);
        REQUIRE(row < 12);
        CHECK_FALSE(hit[std::size_t(row)]);
        hit[std::size_t(row)] = true;
        CHECK(idx.pair(row) == std::pair<Index, Index>{s, a});
      }
    }
  }
  PairIndex am(2, 2, PairOrder::ActionMajor);
  CHECK(am(0, 0) == 0);
  CHECK(am(1, 0) == 1);
  CHECK(am(0, 1) == 2);
  CHECK(am(1, 1) == 3);
}

TEST_CASE("model validation") {
  Eigen::MatrixXd k(2, 2);
  k << 0.5, 0.5, 0.3, 0.6;
  CHECK_THROWS_AS(FiniteMdp<double>({k}, Eigen::MatrixXd::Zero(2, 1), 0.9), ModelError);
  k << 0.5, 0.5, -0.1, 1.1;
  CHECK_THROWS_AS(FiniteMdp<double>({k}, Eigen::MatrixXd::Zero(2, 1), 0.9), ModelError);
  k << 0.5, 0.5, 0.5, 0.5;
  CHECK_THROWS_AS(FiniteMdp<double>({k}, Eigen::MatrixXd::Zero(2, 1), 1.0), ModelError);
  CHECK_THROWS_AS(FiniteMdp<double>({k}, Eigen::MatrixXd::Zero(2, 2), 0.9), ModelError);
  CHECK_NOTHROW(FiniteMdp<double>({k}, Eigen::MatrixXd::Zero(2, 1), 0.9));

  Eigen::MatrixXd p(1, 2);
  p << 0.4, 0.5;
  CHECK_THROWS_AS(Policy<double>{p}, ModelError);
  Eigen::MatrixXd phi(2, 1);
  phi << 1, 3;
  CHECK_THROWS_AS(FeatureMap<double>(phi, PairIndex(2, 1), 2.0), ModelError);
  CHECK(FeatureMap<double>(phi, PairIndex(2, 1)).phi_max() == 3.0);
}

TEST_CASE("two-state pair-level transition") {
  const TabularExport env = as_finite_mdp(TwoStateSpec{});
  const Eigen::MatrixXd P = state_action_transition(env.mdp, env.pi);
  Eigen::MatrixXd expected(4, 4);
  expected << 0, 1, 0, 0,
              0, 1, 0, 0,
              1, 0, 0, 0,
              1, 0, 0, 0;
  CHECK(P.isApprox(expected, 0.0));
}

TEST_CASE("single-state single-action chain") {
  Eigen::MatrixXd k(1, 1);
  k << 1.0;
  FiniteMdp<double> mdp({k}, Eigen::MatrixXd::Zero(1, 1), 0.5);
  Policy<double> pi(Eigen::MatrixXd::Ones(1, 1));
  const Eigen::MatrixXd P = state_action_transition(mdp, pi);
  REQUIRE(P.rows() == 1);
  CHECK(P(0, 0) == 1.0);
  CHECK(stationary_distribution(mdp, pi).xi(0) == doctest::Approx(1.0));
}

TEST_CASE("random pair-level transition matches direct summation") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto mdp = oracle::random_mdp(rng, 3, 2, 0.9);
    const auto pi = oracle::random_policy(rng, 3, 2, 0.0);
    const Eigen::MatrixXd P = state_action_transition(mdp, pi);
    CHECK((P - oracle::brute_force_transition(mdp, pi)).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((P.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("policy shape mismatch is rejected") {
  const TabularExport env = as_finite_mdp(TwoStateSpec{});
  Policy<double> wrong(Eigen::MatrixXd::Constant(3, 2, 0.5));
  CHECK_THROWS_AS(state_action_transition(env.mdp, wrong), ModelError);
}

TEST_CASE("two-state stationary distribution is uniform") {
  const TabularExport env = as_finite_mdp(TwoStateSpec{});
  const auto xi = stationary_distribution(env.mdp, env.mu);
  for (Index i = 0; i < 4; ++i) CHECK(xi.xi(i) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(xi.Xi().diagonal().sum() == doctest::Approx(1.0));
}

TEST_CASE("doubly stochastic chain has uniform stationary distribution") {
  Eigen::MatrixXd k(3, 3);
  k << 0.2, 0.5, 0.3,
       0.3, 0.2, 0.5,
       0.5, 0.3, 0.2;
  FiniteMdp<double> mdp({k, k.transpose()}, Eigen::MatrixXd::Zero(3, 2), 0.9);
  const auto mu = Policy<double>::uniform_rows(3, Eigen::Vector2d(0.5, 0.5));
  const auto xi = stationary_distribution(mdp, mu);
  for (Index i = 0; i < 6; ++i) CHECK(xi.xi(i) == doctest::Approx(1.0 / 6.0).epsilon(1e-10));
}

TEST_CASE("random ergodic chain matches dense eigen oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto mdp = oracle::random_mdp(rng, 5, 2, 0.9);
    const auto mu = oracle::random_policy(rng, 5, 2);
    const Eigen::MatrixXd P = state_action_transition(mdp, mu);
    const auto xi = stationary_distribution(mdp, mu);
    CHECK((xi.xi - oracle::stationary_by_eigen(P)).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(std::abs(xi.xi.sum() - 1.0) <= 1e-10);
    CHECK((P.transpose() * xi.xi - xi.xi).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(xi.xi.minCoeff() > 0.0);
  }
}

TEST_CASE("non-ergodic chains are reported") {
  Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
  FiniteMdp<double> split({I}, Eigen::MatrixXd::Zero(2, 1), 0.9);
  Policy<double> one(Eigen::MatrixXd::Ones(2, 1));
  CHECK_THROWS_AS(stationary_distribution(split, one), ErgodicityError);

  // Transient state: state 0 leaks into absorbing state 1.
  Eigen::MatrixXd k(2, 2);
  k << 0.5, 0.5, 0.0, 1.0;
  FiniteMdp<double> leak({k}, Eigen::MatrixXd::Zero(2, 1), 0.9);
  CHECK_THROWS_AS(stationary_distribution(leak, one), ErgodicityError);
}

TEST_CASE("periodic chain still has its stationary distribution") {
  Eigen::MatrixXd k(2, 2);
  k << 0, 1, 1, 0;
  FiniteMdp<double> flip({k}, Eigen::MatrixXd::Zero(2, 1), 0.9);
  Policy<double> one(Eigen::MatrixXd::Ones(2, 1));
  const auto xi = stationary_distribution(flip, one);
  CHECK(xi.xi(0) == doctest::Approx(0.5));
}

TEST_CASE("coverage check") {
  const TabularExport env = as_finite_mdp(TwoStateSpec{});
  CHECK(coverage_check(env.pi, env.mu));
  CHECK(coverage_check(env.mu, env.mu));
  Eigen::MatrixXd pi(1, 2), mu(1, 2);
  pi << 0.3, 0.7;
  mu << 0.0, 1.0;
  CHECK_FALSE(coverage_check(Policy<double>(pi), Policy<double>(mu)));
  CHECK(coverage_check(Policy<double>(mu), Policy<double>(pi)));
}

TEST_CASE("long double instantiation") {
  using LD = long double;
  MatrixX<LD> k(2, 2);
  k << 0.25L, 0.75L, 0.5L, 0.5L;
  FiniteMdp<LD> mdp({k}, MatrixX<LD>::Zero(2, 1), 0.9L);
  Policy<LD> one(MatrixX<LD>::Ones(2, 1));
  const auto xi = stationary_distribution(mdp, one);
  CHECK(static_cast<double>(xi.xi(0)) == doctest::Approx(0.4).epsilon(1e-12));
}
