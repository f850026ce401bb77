#include <ges/environments.hpp>

#include <algorithm>
#include <cmath>

namespace ges {

namespace {

double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

std::vector<MatrixX<double>> zero_kernel(Index n_states, Index n_actions) {
  return std::vector<MatrixX<double>>(static_cast<std::size_t>(n_actions),
                                      MatrixX<double>::Zero(n_states, n_states));
}

}  // namespace

TabularExport as_finite_mdp(const TwoStateSpec& spec) {
  constexpr Index kRight = 0, kLeft = 1;
  auto kernel = zero_kernel(2, 2);
  kernel[kRight].col(1).setOnes();
  kernel[kLeft].col(0).setOnes();
  FiniteMdp<double> mdp(std::move(kernel), MatrixX<double>(spec.reward), spec.gamma,
                        PairOrder::ActionMajor);

  Eigen::Vector2d target(1.0, 0.0), behavior(0.5, 0.5);
  MatrixX<double> phi(4, 2);
  phi << 1, 0, 2, 0, 0, 1, 0, 2;
  return {mdp, Policy<double>::uniform_rows(2, target), Policy<double>::uniform_rows(2, behavior),
          FeatureMap<double>(phi, mdp.pairs()), "two_state"};
}

TabularExport as_finite_mdp(const BairdStarSpec& spec) {
  constexpr Index kStates = 7, kDashed = 0, kSolid = 1;
  auto kernel = zero_kernel(kStates, 2);
  kernel[kDashed].leftCols(6).setConstant(1.0 / 6.0);
  kernel[kSolid].col(6).setOnes();
  FiniteMdp<double> mdp(std::move(kernel), MatrixX<double>::Zero(kStates, 2), spec.gamma,
                        PairOrder::ActionMajor);

  MatrixX<double> phi = MatrixX<double>::Zero(14, 16);
  phi.block(0, 0, 7, 7).diagonal().setConstant(2.0);
  phi.block(0, 7, 7, 1).setOnes();
  phi.block(7, 8, 7, 7).diagonal().setConstant(2.0);
  phi.block(7, 15, 7, 1).setOnes();

  Eigen::Vector2d target(0.0, 1.0), behavior(6.0 / 7.0, 1.0 / 7.0);
  return {mdp, Policy<double>::uniform_rows(kStates, target),
          Policy<double>::uniform_rows(kStates, behavior), FeatureMap<double>(phi, mdp.pairs()),
          "baird"};
}

Transition<double> sample_transition(const TabularExport& env, Index state, Rng& rng,
                                     std::optional<Index> forced_action) {
  const auto& mdp = env.mdp;
  if (state < 0 || state >= mdp.n_states()) throw ModelError("sample_transition: state out of range");
  Transition<double> tr;
  tr.s = state;
  tr.a = forced_action ? *forced_action : rng.categorical(env.mu.probs().row(state));
  if (tr.a < 0 || tr.a >= mdp.n_actions()) throw ModelError("sample_transition: action out of range");
  tr.s_next = rng.categorical(mdp.kernel(tr.a).row(state));
  tr.r = mdp.reward(state, tr.a);
  const double mu = env.mu(state, tr.a);
  tr.rho = mu > 0.0 ? env.pi(state, tr.a) / mu : 0.0;
  tr.phi = env.features(state, tr.a);
  tr.expected_phi_next = VectorX<double>::Zero(env.features.dim());
  for (Index a = 0; a < mdp.n_actions(); ++a)
    tr.expected_phi_next += env.pi(tr.s_next, a) * env.features(tr.s_next, a);
  tr.terminal = mdp.terminal(tr.s_next);
  return tr;
}

TabularEnvironment::TabularEnvironment(TabularExport env, long episode_length)
    : env_(std::move(env)), episode_length_(episode_length) {}

void TabularEnvironment::reset(Rng& rng) {
  // An endless stream keeps its state across resets after the first one.
  if (episode_length_ <= 0 && started_) return;
  state_ = static_cast<Index>(rng.below(static_cast<std::uint64_t>(env_.mdp.n_states())));
  step_ = 0;
  started_ = true;
}

Transition<double> TabularEnvironment::next(Rng& rng) {
  if (!started_) reset(rng);
  Transition<double> tr = sample_transition(env_, state_, rng);
  ++step_;
  state_ = tr.s_next;
  if (episode_length_ > 0 && step_ >= episode_length_) tr.episode_end = true;
  if (tr.terminal) tr.episode_end = true;
  return tr;
}

std::array<double, 3> mountaincar_behavior(double velocity) {
  if (velocity > 0.0) return {0.01, 0.01, 0.98};
  return {0.98, 0.01, 0.01};
}

std::array<double, 3> mountaincar_target(double velocity) {
  if (velocity > 0.0) return {0.1, 0.1, 0.8};
  return {0.8, 0.1, 0.1};
}

CarStep mountaincar_step(const MountainCarSpec&, const CarState& state, int action) {
  using S = MountainCarSpec;
  CarStep out;
  double v = state.velocity + 0.001 * (action - 1) - 0.0025 * std::cos(3.0 * state.position);
  v = clip(v, S::kVelocityMin, S::kVelocityMax);
  double x = clip(state.position + v, S::kPositionMin, S::kPositionMax);
  if (x <= S::kPositionMin) v = 0.0;
  out.next = {x, v};
  out.reward = -1.0;
  out.terminal = x >= S::kPositionMax;
  return out;
}

std::vector<Index> tile_code(const MountainCarSpec& spec, double position, double velocity,
                             int action) {
  using S = MountainCarSpec;
  if (action < 0 || action >= S::kActions) throw ModelError("tile_code: action out of range");
  const double g = spec.grid_size;
  const double u = (clip(position, S::kPositionMin, S::kPositionMax) - S::kPositionMin) /
                   (S::kPositionMax - S::kPositionMin) * g;
  const double w = (clip(velocity, S::kVelocityMin, S::kVelocityMax) - S::kVelocityMin) /
                   (S::kVelocityMax - S::kVelocityMin) * g;
  const Index side = spec.grid_size + 1;
  const Index per_tiling = side * side;
  std::vector<Index> idx;
  idx.reserve(static_cast<std::size_t>(spec.tilings));
  for (int i = 0; i < spec.tilings; ++i) {
    const double offset = double(i) / double(spec.tilings);
    const Index cx = std::min<Index>(static_cast<Index>(std::floor(u + offset)), side - 1);
    const Index cv = std::min<Index>(static_cast<Index>(std::floor(w + offset)), side - 1);
    idx.push_back((Index(action) * spec.tilings + i) * per_tiling + cx * side + cv);
  }
  return idx;
}

VectorX<double> tile_features(const MountainCarSpec& spec, const CarState& state, int action) {
  VectorX<double> phi = VectorX<double>::Zero(spec.feature_dim());
  for (Index i : tile_code(spec, state.position, state.velocity, action)) phi(i) = 1.0;
  return phi;
}

MountainCarEnvironment::MountainCarEnvironment(MountainCarSpec spec) : spec_(spec) {
  if (spec_.tilings <= 0 || spec_.grid_size <= 0) {
    throw ModelError("MountainCarEnvironment: tilings and grid size must be positive");
  }
}

void MountainCarEnvironment::reset(Rng& rng) {
  state_ = {rng.uniform(-0.6, -0.4), 0.0};
  step_ = 0;
}

Transition<double> MountainCarEnvironment::next(Rng& rng) {
  const auto mu = mountaincar_behavior(state_.velocity);
  const auto pi = mountaincar_target(state_.velocity);
  Transition<double> tr;
  tr.a = rng.categorical(mu);
  tr.rho = pi[static_cast<std::size_t>(tr.a)] / mu[static_cast<std::size_t>(tr.a)];
  tr.phi = tile_features(spec_, state_, static_cast<int>(tr.a));
  const CarStep step = mountaincar_step(spec_, state_, static_cast<int>(tr.a));
  tr.r = step.reward;
  tr.terminal = step.terminal;
  tr.expected_phi_next = VectorX<double>::Zero(dim());
  if (!step.terminal) {
    const auto pi_next = mountaincar_target(step.next.velocity);
    for (int a = 0; a < MountainCarSpec::kActions; ++a) {
      for (Index i : tile_code(spec_, step.next.position, step.next.velocity, a))
        tr.expected_phi_next(i) += pi_next[static_cast<std::size_t>(a)];
    }
  }
  state_ = step.next;
  ++step_;
  tr.episode_end = tr.terminal || step_ >= spec_.max_episode_steps;
  return tr;
}

double MountainCarEnvironment::rho_max() const {
  double best = 0.0;
  for (double v : {-1.0, 1.0}) {
    const auto mu = mountaincar_behavior(v);
    const auto pi = mountaincar_target(v);
    for (std::size_t a = 0; a < 3; ++a) best = std::max(best, pi[a] / mu[a]);
  }
  return best;
}

}  // namespace ges
