#include <doctest.h>

#include "oracles.hpp"

#include <ges/analysis.hpp>
#include <ges/mdp_io.hpp>

#include <sstream>

using namespace ges;

namespace {

MdpDocument round_trip(const TabularExport& env, std::optional<double> lambda = {}) {
  std::stringstream ss;
  write_mdp(ss, env, lambda);
  return parse_mdp(ss);
}

MdpDocument parse_text(const std::string& text) {
  std::istringstream in(text);
  return parse_mdp(in, "inline");
}

const char* kSmall =
    "ges-mdp 1\n"
    "n_states 2\n"
    "n_actions 1\n"
    "gamma 0.5\n"
    "transition 0 0 0.25 0.75\n"
    "transition 1 0 1 0\n";

}  // namespace

TEST_CASE("two-state round trip is exact") {
  TwoStateSpec spec;
  spec.gamma = 0.9;
  spec.reward << 0.1, -1.0 / 3.0, 2.5, 0.0;
  const auto env = as_finite_mdp(spec);
  const auto doc = round_trip(env, 0.25);
  CHECK(doc.lambda == 0.25);
  CHECK(doc.mdp.gamma() == 0.9);
  CHECK(doc.mdp.pairs().order() == PairOrder::ActionMajor);
  CHECK(doc.mdp.reward_table() == env.mdp.reward_table());
  CHECK(doc.policy("target").probs() == env.pi.probs());
  CHECK(doc.policy("behavior").probs() == env.mu.probs());
  REQUIRE(doc.features);
  CHECK(doc.features->matrix() == env.features.matrix());
  CHECK(doc.features->phi_max() == 2.0);

  const auto a = key_matrices(env.mdp, env.pi, env.mu, env.features, 0.25);
  const auto b = key_matrices(doc.mdp, doc.policy("target"), doc.policy("behavior"), *doc.features, 0.25);
  CHECK(a.A == b.A);
  CHECK(a.b == b.b);
}

TEST_CASE("random MDP round trip") {
  Rng rng(31);
  const auto mdp = oracle::random_mdp(rng, 4, 3, 0.7);
  const FeatureMap<double> f(oracle::random_matrix(rng, 12, 5), mdp.pairs());
  const TabularExport env{mdp, oracle::random_policy(rng, 4, 3), oracle::random_policy(rng, 4, 3),
                          f, "random"};
  const auto doc = round_trip(env);
  CHECK_FALSE(doc.lambda);
  for (Index a = 0; a < 3; ++a) CHECK(doc.mdp.kernel(a) == mdp.kernel(a));
  CHECK(doc.features->matrix() == f.matrix());
}

TEST_CASE("baird round trip") {
  const auto env = as_finite_mdp(BairdStarSpec{});
  const auto doc = round_trip(env);
  CHECK(doc.features->matrix() == env.features.matrix());
  CHECK(doc.mdp.n_states() == 7);
}

TEST_CASE("minimal document") {
  const auto doc = parse_text(kSmall);
  CHECK(doc.mdp.p(0, 0, 1) == 0.75);
  CHECK(doc.mdp.reward(1, 0) == 0.0);
  CHECK(doc.policies.empty());
  CHECK_FALSE(doc.features);
  CHECK_THROWS_AS(doc.policy("target"), IoError);
}

TEST_CASE("malformed documents") {
  CHECK_THROWS_AS(parse_text(""), IoError);
  CHECK_THROWS_AS(parse_text("n_states 2\n"), IoError);
  CHECK_THROWS_AS(parse_text("ges-mdp 2\n"), IoError);
  CHECK_THROWS_AS(parse_text(std::string(kSmall) + "bogus 1\n"), IoError);
  CHECK_THROWS_AS(parse_text(std::string(kSmall) + "reward 5 0 1\n"), IoError);
  CHECK_THROWS_AS(parse_text(std::string(kSmall) + "reward 0 0 1 2\n"), IoError);
  CHECK_THROWS_AS(parse_text(std::string(kSmall) + "phi 0 0 1\n"), IoError);
  CHECK_THROWS_AS(parse_text(std::string(kSmall) + "policy p 0 1\n"), IoError);
  CHECK_THROWS_AS(parse_text(std::string(kSmall) + "features 1\nphi 0 0 1\n"), IoError);
  CHECK_THROWS_AS(parse_text("ges-mdp 1\nn_states 2\nn_actions 1\ngamma 0.5\ntransition 0 0 1 0\n"),
                  IoError);
  CHECK_THROWS_AS(parse_text("ges-mdp 1\nn_states 1\nn_actions 1\ntransition 0 0 1\n"), IoError);
  // Validation of the model itself surfaces as ModelError.
  CHECK_THROWS_AS(parse_text("ges-mdp 1\nn_states 1\nn_actions 1\ngamma 0.5\ntransition 0 0 0.5\n"),
                  ModelError);
  CHECK_THROWS_AS(read_mdp_file("/nonexistent.mdp"), IoError);
}

TEST_CASE("comments and terminal states") {
  const auto doc = parse_text(std::string("# leading comment\n") + kSmall +
                              "terminal 1   # absorbing\nactions go\n");
  CHECK(doc.mdp.terminal(1));
  CHECK_FALSE(doc.mdp.terminal(0));
  CHECK(doc.action_names == std::vector<std::string>{"go"});
}
