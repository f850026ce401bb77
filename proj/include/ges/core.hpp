#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>

namespace ges {

using Index = Eigen::Index;

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Error hierarchy. Every failure mode named by the library derives from
// ges::Error so callers can catch broadly or narrowly.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent shapes or malformed model data (non-stochastic rows, bad gamma).
class ModelError : public Error {
 public:
  using Error::Error;
};

/// The behavior chain has no unique, strictly positive stationary distribution.
class ErgodicityError : public Error {
 public:
  using Error::Error;
};

/// A linear system the caller asked to solve is singular or numerically so.
class SolvabilityError : public Error {
 public:
  using Error::Error;
};

/// M = Phi^T Xi Phi is not positive definite (feature matrix lacks full column rank).
class RankError : public Error {
 public:
  using Error::Error;
};

/// A Lyapunov equation was requested for a matrix pair that is not Hurwitz.
class HurwitzError : public Error {
 public:
  using Error::Error;
};

/// The saddle point lies outside the declared primal/dual balls.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An iterative numerical routine (eigen solver, power iteration) failed.
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Linear solves treat a matrix as singular above this condition number.
inline constexpr double kSingularConditionThreshold = 1e12;

/// Enumeration of (state, action) pairs onto rows of pair-level matrices.
///
/// StateMajor lays pairs out as s * n_actions + a. ActionMajor lays them out as
/// a * n_states + s, which reproduces orderings such as
/// (s1,right),(s2,right),(s1,left),(s2,left) when "right" is action 0.
enum class PairOrder { StateMajor, ActionMajor };

class PairIndex {
 public:
  PairIndex() = default;
  PairIndex(Index n_states, Index n_actions, PairOrder order = PairOrder::StateMajor)
      : n_states_(n_states), n_actions_(n_actions), order_(order) {
    if (n_states <= 0 || n_actions <= 0) {
      throw ModelError("PairIndex: state and action counts must be positive");
    }
  }

  Index operator()(Index s, Index a) const {
    return order_ == PairOrder::StateMajor ? s * n_actions_ + a : a * n_states_ + s;
  }

  std::pair<Index, Index> pair(Index row) const {
    if (order_ == PairOrder::StateMajor) return {row / n_actions_, row % n_actions_};
    return {row % n_states_, row / n_states_};
  }

  Index size() const { return n_states_ * n_actions_; }
  Index n_states() const { return n_states_; }
  Index n_actions() const { return n_actions_; }
  PairOrder order() const { return order_; }

  friend bool operator==(const PairIndex&, const PairIndex&) = default;

 private:
  Index n_states_ = 0;
  Index n_actions_ = 0;
  PairOrder order_ = PairOrder::StateMajor;
};

inline const char* to_string(PairOrder order) {
  return order == PairOrder::StateMajor ? "state-major" : "action-major";
}

}  // namespace ges
