#pragma once

#include <ges/analysis.hpp>
#include <ges/core.hpp>
#include <ges/rng.hpp>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ges {

/// Mutable state of one GES(lambda) learner.
template <typename Scalar>
struct LearnerState {
  VectorX<Scalar> theta;
  VectorX<Scalar> omega;
  VectorX<Scalar> trace;
  long t = 0;
  bool diverged = false;
  long diverged_at = -1;  // step index at which divergence was flagged

  static LearnerState zeros(Index p) {
    LearnerState s;
    s.theta = VectorX<Scalar>::Zero(p);
    s.omega = VectorX<Scalar>::Zero(p);
    s.trace = VectorX<Scalar>::Zero(p);
    return s;
  }

  Index dim() const { return theta.size(); }
};

/// One sampled step under the behavior policy.
///
/// The next action is not stored: the expected TD error marginalizes it under
/// pi through expected_phi_next. `terminal` zeroes the bootstrap and resets the
/// trace; `episode_end` only resets the trace (time-limit truncation).
template <typename Scalar>
struct Transition {
  Index s = 0;
  Index a = 0;
  Scalar r = Scalar(0);
  Index s_next = 0;
  Scalar rho = Scalar(1);
  VectorX<Scalar> phi;
  VectorX<Scalar> expected_phi_next;
  bool terminal = false;
  bool episode_end = false;
};

inline constexpr double kDivergenceThreshold = 1e12;

namespace detail {

template <typename Scalar>
bool blown_up(const VectorX<Scalar>& v) {
  using std::abs;
  using std::isfinite;
  for (Index i = 0; i < v.size(); ++i) {
    if (!isfinite(v(i)) || abs(v(i)) > Scalar(kDivergenceThreshold)) return true;
  }
  return false;
}

template <typename Scalar>
void flag_divergence(LearnerState<Scalar>& st) {
  if (!st.diverged && (blown_up(st.theta) || blown_up(st.omega))) {
    st.diverged = true;
    st.diverged_at = st.t;
  }
}

}  // namespace detail

/// In-place GES(lambda) update:
///   e     <- lambda gamma rho e + phi
///   delta <- r + gamma theta^T phibar' - theta^T phi
///   omega <- omega + beta (e delta - phi phi^T omega)
///   theta <- theta - alpha (gamma phibar' - phi) e^T omega_old
/// A diverged state is left untouched.
template <typename Scalar>
void ges_update(LearnerState<Scalar>& st, const Transition<Scalar>& tr, Scalar alpha, Scalar beta,
                Scalar gamma, Scalar lambda) {
  const Index p = st.dim();
  if (tr.phi.size() != p || (!tr.terminal && tr.expected_phi_next.size() != p) ||
      st.omega.size() != p || st.trace.size() != p) {
    throw ModelError("ges_step: transition and learner dimensions disagree");
  }
  if (st.diverged) return;

  st.trace = (lambda * gamma * tr.rho) * st.trace + tr.phi;
  VectorX<Scalar> delta_phi = -tr.phi;
  Scalar delta = tr.r - st.theta.dot(tr.phi);
  if (!tr.terminal) {
    delta += gamma * st.theta.dot(tr.expected_phi_next);
    delta_phi += gamma * tr.expected_phi_next;
  }
  const Scalar e_dot_omega = st.trace.dot(st.omega);
  const Scalar phi_dot_omega = tr.phi.dot(st.omega);
  st.omega += beta * (delta * st.trace - phi_dot_omega * tr.phi);
  st.theta -= (alpha * e_dot_omega) * delta_phi;
  ++st.t;
  if (tr.terminal || tr.episode_end) st.trace.setZero();
  detail::flag_divergence(st);
}

template <typename Scalar>
LearnerState<Scalar> ges_step(LearnerState<Scalar> st, const Transition<Scalar>& tr, Scalar alpha,
                              Scalar beta, Scalar gamma, Scalar lambda) {
  ges_update(st, tr, alpha, beta, gamma, lambda);
  return st;
}

/// Deterministic saddle-point iteration
///   omega <- omega + beta (A theta + b - M omega),  theta <- theta - alpha A^T omega_old.
template <typename Scalar>
LearnerState<Scalar> expected_saddle_step(LearnerState<Scalar> st, const KeyMatrices<Scalar>& km,
                                          Scalar alpha, Scalar beta) {
  detail::check_vector(km, st.theta, "expected_saddle_step", "theta");
  detail::check_vector(km, st.omega, "expected_saddle_step", "omega");
  if (st.diverged) return st;
  const VectorX<Scalar> grad_theta = km.A.transpose() * st.omega;
  st.omega += beta * (km.A * st.theta + km.b - km.M * st.omega);
  st.theta -= alpha * grad_theta;
  ++st.t;
  detail::flag_divergence(st);
  return st;
}

/// Expected off-line update theta + alpha (A theta + b).
template <typename Scalar>
VectorX<Scalar> offline_expected_step(const VectorX<Scalar>& theta, const KeyMatrices<Scalar>& km,
                                      Scalar alpha) {
  detail::check_vector(km, theta, "offline_expected_step", "theta");
  return theta + alpha * (km.A * theta + km.b);
}

// ---------------------------------------------------------------------------
// Step sizes

enum class ScheduleKind { Constant, InverseSqrt, Theorem2, AppendixE };

const char* to_string(ScheduleKind k);
ScheduleKind parse_schedule_kind(const std::string& name);

/// Emits (alpha_t, beta_t) for t = 1, 2, ...
struct StepSizeSchedule {
  ScheduleKind kind = ScheduleKind::Constant;
  double alpha0 = 0.0;
  double beta0 = 0.0;
  double ratio = 1.0;  // beta / alpha
  double C = 0.0;      // only for AppendixE

  std::pair<double, double> operator()(long t) const;
  double alpha(long t) const { return (*this)(t).first; }
  double beta(long t) const { return (*this)(t).second; }
};

struct ScheduleParams {
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<double> beta_over_alpha;
  std::optional<double> C;
  std::optional<RateConstants<double>> rates;
};

/// Builds a schedule. Constant and InverseSqrt need alpha and either beta or
/// beta_over_alpha; Theorem2 needs rate constants; AppendixE needs C.
StepSizeSchedule make_schedule(ScheduleKind kind, const ScheduleParams& params);

/// C = 4 diam^2(D_omega) C1~^2 + diam^2(D_theta) C2~^2 with
/// C1~^2 = C_b^2 + C_A^2 diam^2(D_theta) + C_M^2 diam^2(D_omega) and
/// C2~^2 = C_A^2 diam^2(D_omega). Needs gamma lambda rho_max < 1.
double appendix_e_constant(Index p, double gamma, double lambda, const BoundInputs& in,
                           double diam_theta, double diam_omega);

// ---------------------------------------------------------------------------
// Saddle function and primal-dual gap

/// Psi(theta, omega) = (A theta + b)^T omega - 1/2 omega^T M omega.
template <typename Scalar>
Scalar psi(const KeyMatrices<Scalar>& km, const VectorX<Scalar>& theta, const VectorX<Scalar>& omega) {
  return (km.A * theta + km.b).dot(omega) - Scalar(0.5) * omega.dot(km.M * omega);
}

/// g(omega) = 1/2 omega^T M omega - b^T omega.
template <typename Scalar>
Scalar g_dual(const KeyMatrices<Scalar>& km, const VectorX<Scalar>& omega) {
  return Scalar(0.5) * omega.dot(km.M * omega) - km.b.dot(omega);
}

/// Saddle-point gap over origin-centered balls of radii r_theta and r_omega:
///   max_{|w| <= r_omega} Psi(theta, w) - min_{|v| <= r_theta} Psi(v, omega).
/// The inner minimum is -r_theta |A^T omega| - g(omega). The inner maximum is
/// M^-1 (A theta + b) when that lies in the ball, otherwise the boundary
/// solution (M + mu I)^-1 (A theta + b) with mu > 0 found by bisection on the
/// secular equation |w(mu)| = r_omega.
template <typename Scalar>
Scalar primal_dual_gap(const KeyMatrices<Scalar>& km, const VectorX<Scalar>& theta,
                       const VectorX<Scalar>& omega, Scalar radius_theta, Scalar radius_omega) {
  using std::sqrt;
  detail::check_vector(km, theta, "primal_dual_gap", "theta");
  detail::check_vector(km, omega, "primal_dual_gap", "omega");
  if (!(radius_theta > Scalar(0) && radius_omega > Scalar(0))) {
    throw DomainError("primal_dual_gap: radii must be positive");
  }
  const VectorX<Scalar> theta_star = td_fixed_point(km);
  Eigen::LLT<MatrixX<Scalar>> llt(km.M);
  if (llt.info() != Eigen::Success) throw RankError("primal_dual_gap: M is not positive definite");
  const VectorX<Scalar> omega_star = llt.solve(km.A * theta_star + km.b);
  if (theta_star.norm() > radius_theta || omega_star.norm() > radius_omega) {
    std::ostringstream os;
    os << "primal_dual_gap: saddle point (|theta*| = " << theta_star.norm()
       << ", |omega*| = " << omega_star.norm()
       << ") lies outside the declared domains; increase the radii";
    throw DomainError(os.str());
  }

  const VectorX<Scalar> r = km.A * theta + km.b;
  VectorX<Scalar> w = llt.solve(r);
  if (w.norm() > radius_omega) {
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(km.M);
    const VectorX<Scalar> y = es.eigenvectors().transpose() * r;
    const VectorX<Scalar>& ev = es.eigenvalues();
    auto norm_at = [&](Scalar mu) {
      return sqrt((y.array() / (ev.array() + mu)).square().sum());
    };
    Scalar lo = Scalar(0);
    Scalar hi = r.norm() / radius_omega;
    while (norm_at(hi) > radius_omega) hi *= Scalar(2);
    for (int it = 0; it < 300 && hi - lo > std::numeric_limits<Scalar>::epsilon() * hi; ++it) {
      const Scalar mid = Scalar(0.5) * (lo + hi);
      (norm_at(mid) > radius_omega ? lo : hi) = mid;
    }
    const VectorX<Scalar> z = (y.array() / (ev.array() + hi)).matrix();
    w = es.eigenvectors() * z;
  }
  const Scalar max_term = r.dot(w) - Scalar(0.5) * w.dot(km.M * w);
  const Scalar min_term = -radius_theta * (km.A.transpose() * omega).norm() - g_dual(km, omega);
  return max_term - min_term;
}

/// Step-size weighted averages sum(alpha_t x_t) / sum(alpha_t), with
/// iterate k (0-based) weighted by the schedule's alpha at t = k + 1.
template <typename Scalar>
std::pair<VectorX<Scalar>, VectorX<Scalar>> averaged_iterates(
    const std::vector<std::pair<VectorX<Scalar>, VectorX<Scalar>>>& iterates,
    const StepSizeSchedule& schedule) {
  if (iterates.empty()) throw ModelError("averaged_iterates: empty series");
  VectorX<Scalar> th = VectorX<Scalar>::Zero(iterates.front().first.size());
  VectorX<Scalar> om = VectorX<Scalar>::Zero(iterates.front().second.size());
  Scalar total = Scalar(0);
  for (std::size_t k = 0; k < iterates.size(); ++k) {
    const Scalar w = Scalar(schedule.alpha(static_cast<long>(k) + 1));
    th += w * iterates[k].first;
    om += w * iterates[k].second;
    total += w;
  }
  return {th / total, om / total};
}

// ---------------------------------------------------------------------------
// Streams and diagnostics

/// Source of transitions under the behavior policy.
template <typename Scalar>
class TransitionSource {
 public:
  virtual ~TransitionSource() = default;
  virtual Index dim() const = 0;
  /// Starts a new episode.
  virtual void reset(Rng& rng) = 0;
  /// Samples the next transition; sets terminal or episode_end on the last
  /// transition of an episode.
  virtual Transition<Scalar> next(Rng& rng) = 0;
};

template <typename Scalar>
struct DiagnosticRecord {
  long step = 0;
  long episode = 0;
  Scalar mspbe = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar mse = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar D_t = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar lyapunov = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar gap = std::numeric_limits<Scalar>::quiet_NaN();  // of the averaged iterates
  VectorX<Scalar> theta;
  VectorX<Scalar> omega;
};

template <typename Scalar>
struct DiagnosticSeries {
  long stride = 1;
  std::vector<DiagnosticRecord<Scalar>> records;
  bool diverged = false;
  long diverged_at = -1;
  long steps = 0;
  long episodes = 0;
  VectorX<Scalar> theta_avg;
  VectorX<Scalar> omega_avg;
};

/// Optional metrics evaluated at each recorded step. Unset hooks leave NaN.
template <typename Scalar>
struct DiagnosticHooks {
  using Vec = VectorX<Scalar>;
  std::function<Scalar(const Vec&)> mspbe;
  std::function<Scalar(const Vec&)> mse;
  std::function<Scalar(const Vec&, const Vec&)> D_t;
  std::function<Scalar(const Vec&, const Vec&)> lyapunov;
  std::function<Scalar(const Vec&, const Vec&)> gap;
};

/// D_t = nu |theta - theta*|^2 + |omega - M^-1 (A theta + b)|^2.
template <typename Scalar>
std::function<Scalar(const VectorX<Scalar>&, const VectorX<Scalar>&)> make_D_t(
    const KeyMatrices<Scalar>& km, Scalar nu) {
  const VectorX<Scalar> theta_star = td_fixed_point(km);
  auto llt = std::make_shared<Eigen::LLT<MatrixX<Scalar>>>(km.M);
  return [km, nu, theta_star, llt](const VectorX<Scalar>& th, const VectorX<Scalar>& om) {
    const VectorX<Scalar> target = llt->solve(km.A * th + km.b);
    return nu * (th - theta_star).squaredNorm() + (om - target).squaredNorm();
  };
}

struct RunOptions {
  long n_episodes = 5000;
  long max_steps = -1;  // negative: no cap
  long stride = 100;
  double gamma = 0.9;
  double lambda = 0.0;
  std::uint64_t seed = 0;
};

/// Runs GES(lambda) from the zero state over n_episodes episodes of `source`.
/// Records diagnostics at step 0, every `stride` steps and at the end. A
/// diverged run stops early and keeps its partial series.
template <typename Scalar>
std::pair<LearnerState<Scalar>, DiagnosticSeries<Scalar>> run_episodes(
    TransitionSource<Scalar>& source, const StepSizeSchedule& schedule, const RunOptions& opt,
    const DiagnosticHooks<Scalar>& hooks = {}) {
  if (opt.stride <= 0) throw ConfigError("run_episodes: stride must be positive");
  Rng rng(opt.seed);
  const Index p = source.dim();
  LearnerState<Scalar> st = LearnerState<Scalar>::zeros(p);
  DiagnosticSeries<Scalar> series;
  series.stride = opt.stride;
  series.theta_avg = VectorX<Scalar>::Zero(p);
  series.omega_avg = VectorX<Scalar>::Zero(p);
  VectorX<Scalar> sum_theta = VectorX<Scalar>::Zero(p);
  VectorX<Scalar> sum_omega = VectorX<Scalar>::Zero(p);
  Scalar sum_alpha = Scalar(0);

  auto record = [&](long episode) {
    DiagnosticRecord<Scalar> rec;
    rec.step = st.t;
    rec.episode = episode;
    rec.theta = st.theta;
    rec.omega = st.omega;
    if (!st.diverged) {
      if (hooks.mspbe) rec.mspbe = hooks.mspbe(st.theta);
      if (hooks.mse) rec.mse = hooks.mse(st.theta);
      if (hooks.D_t) rec.D_t = hooks.D_t(st.theta, st.omega);
      if (hooks.lyapunov) rec.lyapunov = hooks.lyapunov(st.theta, st.omega);
      if (hooks.gap && sum_alpha > Scalar(0)) {
        rec.gap = hooks.gap(sum_theta / sum_alpha, sum_omega / sum_alpha);
      }
    }
    series.records.push_back(std::move(rec));
  };

  record(0);
  const Scalar gamma = Scalar(opt.gamma);
  const Scalar lambda = Scalar(opt.lambda);
  long episode = 0;
  bool stop = false;
  while (episode < opt.n_episodes && !stop) {
    source.reset(rng);
    st.trace.setZero();
    bool done = false;
    while (!done) {
      const Transition<Scalar> tr = source.next(rng);
      const auto [alpha, beta] = schedule(st.t + 1);
      ges_update(st, tr, Scalar(alpha), Scalar(beta), gamma, lambda);
      sum_theta += Scalar(alpha) * st.theta;
      sum_omega += Scalar(alpha) * st.omega;
      sum_alpha += Scalar(alpha);
      done = tr.terminal || tr.episode_end;
      if (st.diverged) {
        stop = true;
        break;
      }
      if (st.t % opt.stride == 0) record(episode + (done ? 1 : 0));
      if (opt.max_steps >= 0 && st.t >= opt.max_steps) {
        stop = true;
        break;
      }
    }
    if (done) ++episode;
  }
  if (series.records.back().step != st.t || st.diverged) record(episode);

  series.diverged = st.diverged;
  series.diverged_at = st.diverged_at;
  series.steps = st.t;
  series.episodes = episode;
  if (sum_alpha > Scalar(0)) {
    series.theta_avg = sum_theta / sum_alpha;
    series.omega_avg = sum_omega / sum_alpha;
  }
  return {std::move(st), std::move(series)};
}

}  // namespace ges
