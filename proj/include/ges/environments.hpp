#pragma once

#include <ges/core.hpp>
#include <ges/learners.hpp>
#include <ges/mdp.hpp>
#include <ges/rng.hpp>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace ges {

/// Everything module analysis needs about a tabular environment.
struct TabularExport {
  FiniteMdp<double> mdp;
  Policy<double> pi;
  Policy<double> mu;
  FeatureMap<double> features;
  std::string name;
};

/// Two states, actions right (0) and left (1). Right moves to s2 and left to
/// s1 deterministically. Behavior picks right with probability 0.5, the target
/// always picks right. Pairs are ordered (s1,R),(s2,R),(s1,L),(s2,L) with
/// features (1,0),(2,0),(0,1),(0,2).
struct TwoStateSpec {
  double gamma = 0.9;
  double lambda = 0.0;
  /// R(s, a), rows s1 and s2, columns right and left. All zero by default.
  Eigen::Matrix2d reward = Eigen::Matrix2d::Zero();
  /// Steps per episode before a uniform restart; <= 0 means one endless episode.
  long episode_length = 20;
};

/// Baird's star: 7 states, actions dashed (0) and solid (1). Dashed moves to
/// one of the six upper states uniformly, solid moves to the seventh state.
/// mu(dashed) = 6/7, pi(solid) = 1, all rewards zero. Pairs are action-major;
/// Phi = [[2I, 1, 0], [0, 2I, 1]] with the dashed block first (14 x 16).
struct BairdStarSpec {
  double gamma = 0.99;
  double lambda = 0.0;
  long episode_length = 20;
};

enum class MountainCarAction { Left = 0, Neutral = 1, Right = 2 };

/// MountainCar on the box position x velocity = [-1.2, 0.6] x [-0.07, 0.07].
///
/// Features: `tilings` grids of (grid_size + 1)^2 cells, tiling i shifted by
/// i / tilings of a cell along both axes so that every tiling covers the box,
/// and one disjoint block per action. p = 3 * tilings * (grid_size + 1)^2.
struct MountainCarSpec {
  double gamma = 0.99;
  double lambda = 0.99;
  int tilings = 4;
  int grid_size = 8;
  long max_episode_steps = 1000;

  static constexpr double kPositionMin = -1.2;
  static constexpr double kPositionMax = 0.6;
  static constexpr double kVelocityMin = -0.07;
  static constexpr double kVelocityMax = 0.07;
  static constexpr int kActions = 3;

  Index feature_dim() const {
    const Index cells = Index(grid_size + 1) * Index(grid_size + 1);
    return Index(kActions) * Index(tilings) * cells;
  }
};

struct CarState {
  double position = -0.5;
  double velocity = 0.0;
};

struct CarStep {
  CarState next;
  double reward = -1.0;
  bool terminal = false;
};

/// Behavior and target action distributions at a given velocity.
std::array<double, 3> mountaincar_behavior(double velocity);
std::array<double, 3> mountaincar_target(double velocity);

/// Deterministic dynamics: velocity += 0.001 (a - 1) - 0.0025 cos(3 x), clipped;
/// position += velocity, clipped; the left wall zeroes velocity; reaching
/// position 0.6 terminates with reward -1 for that step.
CarStep mountaincar_step(const MountainCarSpec& spec, const CarState& state, int action);

/// Active feature indices, one per tiling. Out-of-box inputs are clipped.
std::vector<Index> tile_code(const MountainCarSpec& spec, double position, double velocity,
                             int action);

VectorX<double> tile_features(const MountainCarSpec& spec, const CarState& state, int action);

TabularExport as_finite_mdp(const TwoStateSpec& spec);
TabularExport as_finite_mdp(const BairdStarSpec& spec);

/// Samples one step of a tabular export from `state` under its behavior policy
/// (or with `forced_action`), filling rho and the expected next features
/// under the target policy.
Transition<double> sample_transition(const TabularExport& env, Index state, Rng& rng,
                                     std::optional<Index> forced_action = std::nullopt);

/// Transition stream over a tabular export with fixed-length episodes and a
/// uniform restart distribution over states.
class TabularEnvironment final : public TransitionSource<double> {
 public:
  TabularEnvironment(TabularExport env, long episode_length);

  Index dim() const override { return env_.features.dim(); }
  void reset(Rng& rng) override;
  Transition<double> next(Rng& rng) override;

  const TabularExport& tabular() const { return env_; }
  Index state() const { return state_; }

 private:
  TabularExport env_;
  long episode_length_;
  Index state_ = 0;
  long step_ = 0;
  bool started_ = false;
};

/// MountainCar stream. Episodes start at a uniform position in [-0.6, -0.4]
/// with zero velocity and end at the goal or after max_episode_steps.
class MountainCarEnvironment final : public TransitionSource<double> {
 public:
  explicit MountainCarEnvironment(MountainCarSpec spec);

  Index dim() const override { return spec_.feature_dim(); }
  void reset(Rng& rng) override;
  Transition<double> next(Rng& rng) override;

  const MountainCarSpec& spec() const { return spec_; }
  const CarState& state() const { return state_; }
  /// Largest importance ratio the policies can produce.
  double rho_max() const;

 private:
  MountainCarSpec spec_;
  CarState state_;
  long step_ = 0;
};

}  // namespace ges
