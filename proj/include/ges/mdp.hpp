#pragma once

#include <ges/core.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace ges {

/// Tabular MDP: kernel p[s][a][s'], expected rewards R(s,a), discount gamma.
///
/// The kernel is stored as one n_states x n_states row-stochastic matrix per
/// action. All pair-level operators follow the PairIndex carried here.
template <typename Scalar>
class FiniteMdp {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  FiniteMdp(std::vector<Matrix> kernel, Matrix reward, Scalar gamma,
            PairOrder order = PairOrder::StateMajor, std::vector<bool> terminal = {})
      : kernel_(std::move(kernel)), reward_(std::move(reward)), gamma_(gamma),
        terminal_(std::move(terminal)) {
    if (kernel_.empty()) throw ModelError("FiniteMdp: at least one action is required");
    const Index n = kernel_.front().rows();
    const Index m = static_cast<Index>(kernel_.size());
    pairs_ = PairIndex(n, m, order);
    for (Index a = 0; a < m; ++a) {
      const Matrix& k = kernel_[static_cast<std::size_t>(a)];
      if (k.rows() != n || k.cols() != n) {
        throw ModelError("FiniteMdp: kernel for action " + std::to_string(a) + " is not " +
                         std::to_string(n) + "x" + std::to_string(n));
      }
      for (Index s = 0; s < n; ++s) {
        if ((k.row(s).array() < Scalar(0)).any()) {
          throw ModelError("FiniteMdp: negative transition probability at (s=" +
                           std::to_string(s) + ", a=" + std::to_string(a) + ")");
        }
        using std::abs;
        if (abs(k.row(s).sum() - Scalar(1)) > Scalar(1e-12)) {
          throw ModelError("FiniteMdp: transition row (s=" + std::to_string(s) + ", a=" +
                           std::to_string(a) + ") does not sum to 1");
        }
      }
    }
    if (reward_.rows() != n || reward_.cols() != m) {
      throw ModelError("FiniteMdp: reward table must be n_states x n_actions");
    }
    if (!(gamma_ > Scalar(0) && gamma_ < Scalar(1))) {
      throw ModelError("FiniteMdp: gamma must lie strictly inside (0,1)");
    }
    if (terminal_.empty()) terminal_.assign(static_cast<std::size_t>(n), false);
    if (static_cast<Index>(terminal_.size()) != n) {
      throw ModelError("FiniteMdp: terminal flags must have one entry per state");
    }
  }

  Index n_states() const { return pairs_.n_states(); }
  Index n_actions() const { return pairs_.n_actions(); }
  Index n_pairs() const { return pairs_.size(); }
  const PairIndex& pairs() const { return pairs_; }
  Scalar gamma() const { return gamma_; }

  const Matrix& kernel(Index a) const { return kernel_[static_cast<std::size_t>(a)]; }
  Scalar p(Index s, Index a, Index s_next) const { return kernel(a)(s, s_next); }
  Scalar reward(Index s, Index a) const { return reward_(s, a); }
  const Matrix& reward_table() const { return reward_; }
  bool terminal(Index s) const { return terminal_[static_cast<std::size_t>(s)]; }
  const std::vector<bool>& terminal_flags() const { return terminal_; }

  /// Expected reward laid out over pairs in this MDP's enumeration.
  Vector reward_vector() const {
    Vector r(n_pairs());
    for (Index s = 0; s < n_states(); ++s)
      for (Index a = 0; a < n_actions(); ++a) r(pairs_(s, a)) = reward_(s, a);
    return r;
  }

 private:
  std::vector<Matrix> kernel_;
  Matrix reward_;
  Scalar gamma_;
  std::vector<bool> terminal_;
  PairIndex pairs_;
};

/// pi(a|s) stored as an n_states x n_actions table.
template <typename Scalar>
class Policy {
 public:
  using Matrix = MatrixX<Scalar>;

  Policy() = default;
  explicit Policy(Matrix probs) : probs_(std::move(probs)) {
    using std::abs;
    for (Index s = 0; s < probs_.rows(); ++s) {
      if ((probs_.row(s).array() < Scalar(0)).any()) {
        throw ModelError("Policy: negative probability in state " + std::to_string(s));
      }
      if (abs(probs_.row(s).sum() - Scalar(1)) > Scalar(1e-12)) {
        throw ModelError("Policy: row for state " + std::to_string(s) + " does not sum to 1");
      }
    }
  }

  /// Same distribution over actions in every state.
  static Policy uniform_rows(Index n_states, const VectorX<Scalar>& action_probs) {
    Matrix m(n_states, action_probs.size());
    for (Index s = 0; s < n_states; ++s) m.row(s) = action_probs.transpose();
    return Policy(std::move(m));
  }

  Scalar operator()(Index s, Index a) const { return probs_(s, a); }
  const Matrix& probs() const { return probs_; }
  Index n_states() const { return probs_.rows(); }
  Index n_actions() const { return probs_.cols(); }

 private:
  Matrix probs_;
};

/// Linear features phi(s,a) in R^p, stored as the pair-level matrix Phi whose
/// rows follow the owning MDP's PairIndex.
template <typename Scalar>
class FeatureMap {
 public:
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  FeatureMap() = default;

  /// phi_max defaults to the largest absolute entry of Phi.
  FeatureMap(Matrix phi, PairIndex pairs, Scalar phi_max = Scalar(-1))
      : phi_(std::move(phi)), pairs_(pairs) {
    if (phi_.rows() != pairs_.size()) {
      throw ModelError("FeatureMap: Phi has " + std::to_string(phi_.rows()) +
                       " rows but the pair enumeration has " + std::to_string(pairs_.size()));
    }
    const Scalar observed = phi_.size() == 0 ? Scalar(0) : phi_.cwiseAbs().maxCoeff();
    phi_max_ = phi_max < Scalar(0) ? observed : phi_max;
    if (observed > phi_max_) {
      throw ModelError("FeatureMap: a feature entry exceeds the declared phi_max");
    }
  }

  Index dim() const { return phi_.cols(); }
  Scalar phi_max() const { return phi_max_; }
  const Matrix& matrix() const { return phi_; }
  const PairIndex& pairs() const { return pairs_; }
  auto operator()(Index s, Index a) const { return phi_.row(pairs_(s, a)).transpose(); }

 private:
  Matrix phi_;
  PairIndex pairs_;
  Scalar phi_max_ = Scalar(0);
};

template <typename Scalar>
struct StationaryDistribution {
  VectorX<Scalar> xi;

  auto Xi() const { return xi.asDiagonal(); }
  Index size() const { return xi.size(); }
};

struct StationaryOptions {
  double tolerance = 1e-12;
  long max_iterations = 1'000'000;
  // Chains up to this many pairs fall back to a dense eigen solve when the
  // power iteration stalls.
  Index dense_fallback_limit = 2000;
};

namespace detail {

template <typename Scalar>
void check_policy_shape(const FiniteMdp<Scalar>& mdp, const Policy<Scalar>& pi, const char* who) {
  if (pi.n_states() != mdp.n_states() || pi.n_actions() != mdp.n_actions()) {
    std::ostringstream os;
    os << who << ": policy is " << pi.n_states() << "x" << pi.n_actions() << " but the MDP has "
       << mdp.n_states() << " states and " << mdp.n_actions() << " actions";
    throw ModelError(os.str());
  }
}

}  // namespace detail

/// Pair-level transition operator:
/// [P]_{(s,a),(s',a')} = p[s][a][s'] * pi(a'|s').
template <typename Scalar>
MatrixX<Scalar> state_action_transition(const FiniteMdp<Scalar>& mdp, const Policy<Scalar>& pi) {
  detail::check_policy_shape(mdp, pi, "state_action_transition");
  const PairIndex& idx = mdp.pairs();
  const Index n = idx.size();
  MatrixX<Scalar> P = MatrixX<Scalar>::Zero(n, n);
  for (Index s = 0; s < mdp.n_states(); ++s) {
    for (Index a = 0; a < mdp.n_actions(); ++a) {
      const Index row = idx(s, a);
      for (Index s2 = 0; s2 < mdp.n_states(); ++s2) {
        const Scalar p = mdp.p(s, a, s2);
        if (p == Scalar(0)) continue;
        for (Index a2 = 0; a2 < mdp.n_actions(); ++a2) P(row, idx(s2, a2)) = p * pi(s2, a2);
      }
    }
  }
  return P;
}

/// True iff pi(a|s) > 0 implies mu(a|s) > 0 everywhere.
template <typename Scalar>
bool coverage_check(const Policy<Scalar>& pi, const Policy<Scalar>& mu) {
  if (pi.n_states() != mu.n_states() || pi.n_actions() != mu.n_actions()) return false;
  return ((pi.probs().array() <= Scalar(0)) || (mu.probs().array() > Scalar(0))).all();
}

/// Stationary distribution of a row-stochastic matrix.
///
/// Runs power iteration on the lazy chain (P + I)/2, which shares P's stationary

namespace detail {

/// Every pair reaches every other through positive entries of P.
template <typename Scalar>
bool strongly_connected(const MatrixX<Scalar>& P) {
  const Index n = P.rows();
  auto covers = [&](bool forward) {
    std::vector<char> seen(std::size_t(n), 0);
    std::vector<Index> stack{0};
    seen[0] = 1;
    Index count = 1;
    while (!stack.empty()) {
      const Index u = stack.back();
      stack.pop_back();
      for (Index v = 0; v < n; ++v) {
        const Scalar w = forward ? P(u, v) : P(v, u);
        if (w > Scalar(0) && !seen[std::size_t(v)]) {
          seen[std::size_t(v)] = 1;
          ++count;
          stack.push_back(v);
        }
      }
    }
    return count == n;
  };
  return covers(true) && covers(false);
}

}  // namespace detail

/// distribution and is aperiodic, from the uniform vector. Falls back to a dense
/// eigen solve when the iteration stalls. Throws ErgodicityError unless the
/// fixed point is unique and strictly positive.
template <typename Scalar>
StationaryDistribution<Scalar> stationary_distribution(const MatrixX<Scalar>& P,
                                                       const StationaryOptions& opt = {}) {
  using std::abs;
  const Index n = P.rows();
  if (P.cols() != n || n == 0) throw ModelError("stationary_distribution: P must be square");

  VectorX<Scalar> x = VectorX<Scalar>::Constant(n, Scalar(1) / Scalar(n));
  bool converged = false;
  const MatrixX<Scalar> Pt = P.transpose();
  for (long it = 0; it < opt.max_iterations; ++it) {
    VectorX<Scalar> next = Scalar(0.5) * (x + Pt * x);
    next /= next.sum();
    const Scalar delta = (next - x).cwiseAbs().maxCoeff();
    x.swap(next);
    if (delta <= Scalar(opt.tolerance)) {
      converged = true;
      break;
    }
  }

  if (!converged) {
    if (n > opt.dense_fallback_limit) {
      throw ErgodicityError("stationary_distribution: power iteration did not converge within " +
                            std::to_string(opt.max_iterations) + " iterations");
    }
    Eigen::EigenSolver<MatrixX<Scalar>> es(Pt);
    if (es.info() != Eigen::Success) {
      throw ErgodicityError("stationary_distribution: dense eigen fallback failed");
    }
    Index best = 0;
    for (Index i = 1; i < n; ++i) {
      if (abs(es.eigenvalues()(i) - Scalar(1)) < abs(es.eigenvalues()(best) - Scalar(1))) best = i;
    }
    x = es.eigenvectors().col(best).real();
    x /= x.sum();
  }

  // Uniqueness: the eigenvalue 1 must be simple.
  Eigen::FullPivLU<MatrixX<Scalar>> lu(Pt - MatrixX<Scalar>::Identity(n, n));
  if (lu.dimensionOfKernel() != 1) {
    throw ErgodicityError(
        "stationary_distribution: chain is not ergodic (eigenvalue 1 has multiplicity " +
        std::to_string(lu.dimensionOfKernel()) + ")");
  }
  const Scalar min_entry = x.minCoeff();
  if (!(min_entry > Scalar(0)) || !detail::strongly_connected(P)) {
    throw ErgodicityError(
        "stationary_distribution: chain is not ergodic (a state-action pair has zero "
        "stationary mass)");
  }
  const Scalar residual = (Pt * x - x).cwiseAbs().maxCoeff();
  if (residual > Scalar(1e-8)) {
    throw ErgodicityError("stationary_distribution: invariance residual too large");
  }
  return {x};
}

/// Stationary distribution over pairs of the chain induced by behavior mu.
template <typename Scalar>
StationaryDistribution<Scalar> stationary_distribution(const FiniteMdp<Scalar>& mdp,
                                                       const Policy<Scalar>& mu,
                                                       const StationaryOptions& opt = {}) {
  return stationary_distribution(state_action_transition(mdp, mu), opt);
}

}  // namespace ges
