#pragma once

#include <ges/core.hpp>
#include <ges/mdp.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace ges {

enum class Provenance { Analytic, MonteCarlo };

inline const char* to_string(Provenance p) {
  return p == Provenance::Analytic ? "analytic" : "monte-carlo";
}

/// A, b and M of the expected GES(lambda) update:
///   A = Phi^T Xi (I - gamma lambda P)^-1 (gamma P - I) Phi
///   b = Phi^T Xi (I - gamma lambda P)^-1 R
///   M = Phi^T Xi Phi
template <typename Scalar>
struct KeyMatrices {
  MatrixX<Scalar> A;
  VectorX<Scalar> b;
  MatrixX<Scalar> M;
  Scalar lambda = Scalar(0);
  Scalar gamma = Scalar(0);
  Provenance provenance = Provenance::Analytic;

  Index dim() const { return A.rows(); }
};

namespace detail {

template <typename Scalar>
Scalar symmetry_tolerance(Provenance p) {
  return p == Provenance::Analytic ? Scalar(1e-12) : Scalar(1e-3);
}

template <typename Scalar>
void check_key_matrices(const KeyMatrices<Scalar>& km, const char* who) {
  const Index p = km.A.rows();
  if (km.A.cols() != p || km.b.size() != p || km.M.rows() != p || km.M.cols() != p) {
    throw ModelError(std::string(who) + ": key matrices have inconsistent dimensions");
  }
  if (p > 0) {
    const Scalar scale = std::max(Scalar(1), km.M.cwiseAbs().maxCoeff());
    const Scalar asym = (km.M - km.M.transpose()).cwiseAbs().maxCoeff();
    if (asym > symmetry_tolerance<Scalar>(km.provenance) * scale) {
      throw ModelError(std::string(who) + ": M is not symmetric within the " +
                       to_string(km.provenance) + " tolerance");
    }
  }
}

template <typename Scalar>
void check_vector(const KeyMatrices<Scalar>& km, const VectorX<Scalar>& v, const char* who,
                  const char* name) {
  if (v.size() != km.dim()) {
    throw ModelError(std::string(who) + ": " + name + " has length " + std::to_string(v.size()) +
                     ", expected " + std::to_string(km.dim()));
  }
}

template <typename Scalar>
std::string echo(const MatrixX<Scalar>& m) {
  std::ostringstream os;
  os.precision(17);
  os << m;
  return os.str();
}

/// Condition number sigma_max / sigma_min (infinity when singular).
template <typename Scalar>
Scalar condition_number(const MatrixX<Scalar>& m) {
  if (m.size() == 0) return Scalar(1);
  Eigen::JacobiSVD<MatrixX<Scalar>> svd(m);
  const auto& s = svd.singularValues();
  const Scalar smin = s(s.size() - 1);
  if (smin <= Scalar(0)) return std::numeric_limits<Scalar>::infinity();
  return s(0) / smin;
}

template <typename Scalar>
Scalar spectral_radius(const MatrixX<Scalar>& m) {
  Eigen::EigenSolver<MatrixX<Scalar>> es(m, false);
  if (es.info() != Eigen::Success) {
    throw ConvergenceError("spectral_radius: eigen solver did not converge for\n" + echo(m));
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

template <typename Scalar>
Scalar operator_norm(const MatrixX<Scalar>& m) {
  if (m.size() == 0) return Scalar(0);
  Eigen::JacobiSVD<MatrixX<Scalar>> svd(m);
  return svd.singularValues()(0);
}

}  // namespace detail

/// Key matrices from explicit pair-level operators.
///
/// `P_bootstrap` enters the (gamma P - I) factor and `P_trace` the resolvent
/// (I - gamma lambda P_trace)^-1. GES(lambda) uses the target chain for both;
/// the tree-backup row of the fixed-point table uses the behavior chain for the
/// resolvent. `xi` may be any positive weighting; scaling it by c > 0 scales
/// A, b and M by c.
template <typename Scalar>
KeyMatrices<Scalar> key_matrices_from_operators(const MatrixX<Scalar>& Phi, const VectorX<Scalar>& xi,
                                                const MatrixX<Scalar>& P_bootstrap,
                                                const MatrixX<Scalar>& P_trace,
                                                const VectorX<Scalar>& R, Scalar gamma,
                                                Scalar lambda) {
  const Index n = Phi.rows();
  if (xi.size() != n || P_bootstrap.rows() != n || P_bootstrap.cols() != n ||
      P_trace.rows() != n || P_trace.cols() != n || R.size() != n) {
    throw ModelError("key_matrices: operators do not share the pair dimension " +
                     std::to_string(n));
  }
  if (!(lambda >= Scalar(0) && lambda <= Scalar(1))) {
    throw ModelError("key_matrices: lambda must lie in [0,1]");
  }
  const MatrixX<Scalar> I = MatrixX<Scalar>::Identity(n, n);
  Eigen::PartialPivLU<MatrixX<Scalar>> resolvent(I - gamma * lambda * P_trace);
  const Scalar rcond = resolvent.rcond();
  if (!(rcond > Scalar(1.0 / kSingularConditionThreshold))) {
    throw SolvabilityError("key_matrices: (I - gamma*lambda*P) is singular (rcond estimate " +
                           std::to_string(static_cast<double>(rcond)) + ")");
  }
  const MatrixX<Scalar> W = resolvent.solve((gamma * P_bootstrap - I) * Phi);
  const VectorX<Scalar> w = resolvent.solve(R);
  const auto Xi = xi.asDiagonal();

  KeyMatrices<Scalar> km;
  km.A = Phi.transpose() * (Xi * W);
  km.b = Phi.transpose() * (Xi * w);
  MatrixX<Scalar> M = Phi.transpose() * (Xi * Phi);
  km.M = Scalar(0.5) * (M + M.transpose());
  km.lambda = lambda;
  km.gamma = gamma;
  km.provenance = Provenance::Analytic;
  return km;
}

/// GES(lambda) key matrices of target pi, behavior mu and features on `mdp`.
template <typename Scalar>
KeyMatrices<Scalar> key_matrices(const FiniteMdp<Scalar>& mdp, const Policy<Scalar>& pi,
                                 const Policy<Scalar>& mu, const FeatureMap<Scalar>& features,
                                 Scalar lambda) {
  detail::check_policy_shape(mdp, pi, "key_matrices");
  detail::check_policy_shape(mdp, mu, "key_matrices");
  if (!(features.pairs() == mdp.pairs())) {
    throw ModelError("key_matrices: feature map and MDP use different pair enumerations");
  }
  if (!coverage_check(pi, mu)) {
    throw ModelError("key_matrices: behavior policy does not cover the target policy");
  }
  const StationaryDistribution<Scalar> xi = stationary_distribution(mdp, mu);
  const MatrixX<Scalar> P = state_action_transition(mdp, pi);
  return key_matrices_from_operators<Scalar>(features.matrix(), xi.xi, P, P, mdp.reward_vector(),
                                             mdp.gamma(), lambda);
}

/// Evaluates MSPBE(theta) = 1/2 (A theta + b)^T M^-1 (A theta + b) against a
/// fixed set of key matrices, factoring M once.
///
/// In Projected mode M^-1 is replaced by the Moore-Penrose pseudo-inverse. That
/// equals the Xi-weighted projected Bellman error for feature sets whose Phi is
/// rank deficient (A theta + b always lies in range(M)), and agrees with the
/// default mode whenever M is nonsingular.
template <typename Scalar>
class MspbeEvaluator {
 public:
  enum class Mode { Inverse, Projected };

  explicit MspbeEvaluator(const KeyMatrices<Scalar>& km, Mode mode = Mode::Inverse)
      : A_(km.A), b_(km.b), mode_(mode) {
    detail::check_key_matrices(km, "mspbe");
    const MatrixX<Scalar> Msym = Scalar(0.5) * (km.M + km.M.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(Msym);
    if (es.info() != Eigen::Success) throw ConvergenceError("mspbe: eigen solver failed on M");
    const VectorX<Scalar>& ev = es.eigenvalues();
    const Scalar top = ev.size() ? std::max(ev.cwiseAbs().maxCoeff(), Scalar(0)) : Scalar(0);
    const Scalar cut = top / Scalar(kSingularConditionThreshold);
    if (mode_ == Mode::Inverse && (ev.size() == 0 || !(ev(0) > cut))) {
      throw RankError(
          "mspbe: M = Phi^T Xi Phi is singular; the feature matrix must have full column rank "
          "(rank(Phi) = p) and every pair positive stationary mass");
    }
    V_ = es.eigenvectors();
    inv_ev_.resize(ev.size());
    for (Index i = 0; i < ev.size(); ++i) {
      inv_ev_(i) = ev(i) > cut ? Scalar(1) / ev(i) : Scalar(0);
    }
  }

  Scalar operator()(const VectorX<Scalar>& theta) const {
    if (theta.size() != A_.cols()) throw ModelError("mspbe: theta has the wrong dimension");
    const VectorX<Scalar> r = A_ * theta + b_;
    const VectorX<Scalar> y = V_.transpose() * r;
    return Scalar(0.5) * (y.array().square() * inv_ev_.array()).sum();
  }

  Mode mode() const { return mode_; }

 private:
  MatrixX<Scalar> A_;
  VectorX<Scalar> b_;
  MatrixX<Scalar> V_;
  VectorX<Scalar> inv_ev_;
  Mode mode_;
};

/// MSPBE(theta) = 1/2 ||A theta + b||^2_{M^-1}. Throws RankError for singular M.
template <typename Scalar>
Scalar mspbe(const KeyMatrices<Scalar>& km, const VectorX<Scalar>& theta) {
  return MspbeEvaluator<Scalar>(km)(theta);
}

/// MSPBE with the pseudo-inverse of M; defined for rank-deficient features.
template <typename Scalar>
Scalar projected_mspbe(const KeyMatrices<Scalar>& km, const VectorX<Scalar>& theta) {
  return MspbeEvaluator<Scalar>(km, MspbeEvaluator<Scalar>::Mode::Projected)(theta);
}

/// TD fixed point: the unique solution of A theta + b = 0.
/// Throws SolvabilityError when cond(A) exceeds 1e12; never falls back to a
/// pseudo-inverse.
template <typename Scalar>
VectorX<Scalar> td_fixed_point(const KeyMatrices<Scalar>& km) {
  detail::check_key_matrices(km, "td_fixed_point");
  const Scalar cond = detail::condition_number(km.A);
  if (!(cond <= Scalar(kSingularConditionThreshold))) {
    std::ostringstream os;
    os << "td_fixed_point: A is singular or near-singular (condition number " << cond
       << "); the TD fixed point is not unique";
    throw SolvabilityError(os.str());
  }
  Eigen::PartialPivLU<MatrixX<Scalar>> lu(km.A);
  VectorX<Scalar> theta = lu.solve(-km.b);
  theta += lu.solve(-km.b - km.A * theta);  // one step of iterative refinement
  return theta;
}

/// Minimum-norm least-squares solution of A theta = -b. Intended for feature
/// sets where A is singular by construction; callers check the residual.
template <typename Scalar>
VectorX<Scalar> td_fixed_point_min_norm(const KeyMatrices<Scalar>& km) {
  detail::check_key_matrices(km, "td_fixed_point_min_norm");
  Eigen::CompleteOrthogonalDecomposition<MatrixX<Scalar>> cod(km.A);
  return cod.solve(-km.b);
}

template <typename Scalar>
struct StabilityReport {
  std::vector<std::complex<Scalar>> eigenvalues;
  bool stable = false;
  Scalar max_real_part = Scalar(0);
  std::optional<Scalar> safe_step_size;
  /// rho(I + alpha A) at the safe step size; NaN when unstable.
  Scalar spectral_radius_at_safe_step = std::numeric_limits<Scalar>::quiet_NaN();
};

/// Spectrum of A and the verdict of the off-line expected iteration
/// theta <- theta + alpha (A theta + b).
///
/// When every eigenvalue has negative real part the report carries a step size
/// alpha with rho(I + alpha A) < 1: the candidate min_i Re(-l_i)/|l_i|^2 (half of
/// the largest admissible value) is shrunk by halving until the spectral radius
/// of I + alpha A, computed directly, is below one.
template <typename Scalar>
StabilityReport<Scalar> stability_check(const MatrixX<Scalar>& A) {
  if (A.rows() != A.cols()) throw ModelError("stability_check: A must be square");
  Eigen::EigenSolver<MatrixX<Scalar>> es(A, false);
  if (es.info() != Eigen::Success) {
    throw ConvergenceError("stability_check: eigen solver did not converge for A =\n" +
                           detail::echo(A));
  }
  StabilityReport<Scalar> rep;
  rep.max_real_part = -std::numeric_limits<Scalar>::infinity();
  for (Index i = 0; i < es.eigenvalues().size(); ++i) {
    const std::complex<Scalar> l = es.eigenvalues()(i);
    rep.eigenvalues.push_back(l);
    rep.max_real_part = std::max(rep.max_real_part, l.real());
  }
  rep.stable = rep.max_real_part < Scalar(0);
  if (!rep.stable) return rep;

  Scalar alpha = std::numeric_limits<Scalar>::infinity();
  for (const auto& l : rep.eigenvalues) alpha = std::min(alpha, -l.real() / std::norm(l));
  const MatrixX<Scalar> I = MatrixX<Scalar>::Identity(A.rows(), A.cols());
  for (int halvings = 0; halvings < 200; ++halvings) {
    const Scalar rho = detail::spectral_radius<Scalar>(I + alpha * A);
    if (rho < Scalar(1)) {
      rep.safe_step_size = alpha;
      rep.spectral_radius_at_safe_step = rho;
      break;
    }
    alpha /= Scalar(2);
  }
  return rep;
}

template <typename Scalar>
StabilityReport<Scalar> stability_check(const KeyMatrices<Scalar>& km) {
  return stability_check<Scalar>(km.A);
}

/// Step sizes and contraction factor of the deterministic saddle-point
/// iteration. Extreme values of A are its singular values; those of the
/// symmetric positive definite M are its eigenvalues.
template <typename Scalar>
struct RateConstants {
  Scalar nu;
  Scalar alpha_star;
  Scalar beta_star;
  Scalar contraction;  // 1 - 1/(12 kappa(M)^3 kappa(A)^4)
  Scalar kappa_M;
  Scalar kappa_A;
  Scalar sigma_max_A;
  Scalar sigma_min_A;
  Scalar lambda_max_M;
  Scalar lambda_min_M;
};

template <typename Scalar>
RateConstants<Scalar> rate_constants(const KeyMatrices<Scalar>& km) {
  detail::check_key_matrices(km, "rate_constants");
  Eigen::JacobiSVD<MatrixX<Scalar>> svd(km.A);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || !(s(s.size() - 1) > Scalar(0)) ||
      s(0) / s(s.size() - 1) > Scalar(kSingularConditionThreshold)) {
    throw SolvabilityError("rate_constants: A is singular");
  }
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(Scalar(0.5) * (km.M + km.M.transpose()),
                                                    Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  if (!(ev(0) > Scalar(0)) || ev(ev.size() - 1) / ev(0) > Scalar(kSingularConditionThreshold)) {
    throw RankError("rate_constants: M is not positive definite");
  }
  RateConstants<Scalar> rc;
  rc.sigma_max_A = s(0);
  rc.sigma_min_A = s(s.size() - 1);
  rc.lambda_max_M = ev(ev.size() - 1);
  rc.lambda_min_M = ev(0);
  rc.kappa_A = rc.sigma_max_A / rc.sigma_min_A;
  rc.kappa_M = rc.lambda_max_M / rc.lambda_min_M;
  rc.nu = Scalar(2) * rc.kappa_A * rc.kappa_A * rc.kappa_M * rc.sigma_max_A / rc.lambda_min_M;
  rc.alpha_star = rc.lambda_min_M /
                  ((rc.lambda_max_M + rc.lambda_min_M) *
                   (rc.sigma_max_A * rc.sigma_max_A / rc.lambda_min_M + rc.nu * rc.sigma_max_A));
  rc.beta_star = Scalar(2) / (rc.lambda_max_M + rc.lambda_min_M);
  using std::pow;
  rc.contraction =
      Scalar(1) - Scalar(1) / (Scalar(12) * pow(rc.kappa_M, Scalar(3)) * pow(rc.kappa_A, Scalar(4)));
  return rc;
}

/// Solves X^T Q + Q X = C by Kronecker vectorization. Dense n^2 x n^2 solve;
/// meant for p up to a few dozen.
template <typename Scalar>
MatrixX<Scalar> solve_lyapunov(const MatrixX<Scalar>& X, const MatrixX<Scalar>& C) {
  const Index n = X.rows();
  if (X.cols() != n || C.rows() != n || C.cols() != n) {
    throw ModelError("solve_lyapunov: X and C must be square of equal size");
  }
  const Index nn = n * n;
  MatrixX<Scalar> K = MatrixX<Scalar>::Zero(nn, nn);
  // Column-major vec: vec(Q)[j*n + r] = Q(r, j).
  for (Index j = 0; j < n; ++j) {
    for (Index r = 0; r < n; ++r) {
      const Index row = j * n + r;
      for (Index c = 0; c < n; ++c) K(row, j * n + c) += X(c, r);  // (X^T Q)(r, j)
      for (Index k = 0; k < n; ++k) K(row, k * n + r) += X(k, j);  // (Q X)(r, j)
    }
  }
  Eigen::PartialPivLU<MatrixX<Scalar>> lu(K);
  if (!(lu.rcond() > Scalar(1.0 / kSingularConditionThreshold))) {
    throw SolvabilityError("solve_lyapunov: Kronecker system is singular");
  }
  const VectorX<Scalar> q = lu.solve(Eigen::Map<const VectorX<Scalar>>(C.data(), nn));
  MatrixX<Scalar> Q = Eigen::Map<const MatrixX<Scalar>>(q.data(), n, n);
  return Scalar(0.5) * (Q + Q.transpose());
}

/// Lyapunov weighting for the two-timescale iteration.
///
/// H = -A^T M^-1 A and L = 2A; Q1, Q2 solve -H^T Q1 - Q1 H = I and
/// M^T Q2 + Q2 M = I; Q = blockdiag(s1 Q1, s2 Q2) / (s1 + s2) with
/// s1 = ||Q1 A^T||_op and s2 = ||Q2 M^-1 A L||_op.
template <typename Scalar>
struct LyapunovSystem {
  MatrixX<Scalar> H;
  MatrixX<Scalar> L;
  MatrixX<Scalar> Q1;
  MatrixX<Scalar> Q2;
  MatrixX<Scalar> Q;
  Scalar weight1 = Scalar(0);  // s1 / (s1 + s2)
  Scalar weight2 = Scalar(0);  // s2 / (s1 + s2)
  Scalar residual1 = Scalar(0);
  Scalar residual2 = Scalar(0);
};

template <typename Scalar>
LyapunovSystem<Scalar> lyapunov_system(const KeyMatrices<Scalar>& km) {
  detail::check_key_matrices(km, "lyapunov_system");
  const Index p = km.dim();
  const MatrixX<Scalar> I = MatrixX<Scalar>::Identity(p, p);

  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es_m(km.M, Eigen::EigenvaluesOnly);
  const bool m_ok = p > 0 && es_m.eigenvalues()(0) > Scalar(0);
  LyapunovSystem<Scalar> sys;
  bool h_ok = false;
  MatrixX<Scalar> MinvA;
  if (m_ok) {
    Eigen::LLT<MatrixX<Scalar>> llt(km.M);
    MinvA = llt.solve(km.A);
    sys.H = -km.A.transpose() * MinvA;
    Eigen::EigenSolver<MatrixX<Scalar>> es_h(sys.H, false);
    h_ok = es_h.info() == Eigen::Success && es_h.eigenvalues().real().maxCoeff() < Scalar(0) &&
           detail::condition_number(km.A) <= Scalar(kSingularConditionThreshold);
  }
  if (!m_ok || !h_ok) {
    throw HurwitzError(
        "lyapunov_system: both H = -A^T M^-1 A and -M must be Hurwitz (requires A nonsingular "
        "and M positive definite)");
  }
  sys.L = Scalar(2) * km.A;
  sys.Q1 = solve_lyapunov<Scalar>(-sys.H, I);
  sys.Q2 = solve_lyapunov<Scalar>(km.M, I);
  sys.residual1 = (-sys.H.transpose() * sys.Q1 - sys.Q1 * sys.H - I).cwiseAbs().maxCoeff();
  sys.residual2 = (km.M.transpose() * sys.Q2 + sys.Q2 * km.M - I).cwiseAbs().maxCoeff();

  const Scalar s1 = detail::operator_norm<Scalar>(sys.Q1 * km.A.transpose());
  const Scalar s2 = detail::operator_norm<Scalar>(sys.Q2 * MinvA * sys.L);
  sys.weight1 = s1 / (s1 + s2);
  sys.weight2 = s2 / (s1 + s2);
  sys.Q = MatrixX<Scalar>::Zero(2 * p, 2 * p);
  sys.Q.topLeftCorner(p, p) = sys.weight1 * sys.Q1;
  sys.Q.bottomRightCorner(p, p) = sys.weight2 * sys.Q2;
  return sys;
}

/// L(z) = z^T Q z with z = (theta - theta*, rho - rho*) and rho = omega - M^-1 A theta.
template <typename Scalar>
Scalar lyapunov_value(const LyapunovSystem<Scalar>& sys, const KeyMatrices<Scalar>& km,
                      const VectorX<Scalar>& theta, const VectorX<Scalar>& omega,
                      const VectorX<Scalar>& theta_star, const VectorX<Scalar>& omega_star) {
  const Index p = km.dim();
  if (sys.Q.rows() != 2 * p) throw ModelError("lyapunov_value: system does not match key matrices");
  detail::check_vector(km, theta, "lyapunov_value", "theta");
  detail::check_vector(km, omega, "lyapunov_value", "omega");
  detail::check_vector(km, theta_star, "lyapunov_value", "theta_star");
  detail::check_vector(km, omega_star, "lyapunov_value", "omega_star");
  Eigen::LLT<MatrixX<Scalar>> llt(km.M);
  VectorX<Scalar> z(2 * p);
  z.head(p) = theta - theta_star;
  z.tail(p) = (omega - llt.solve(km.A * theta)) - (omega_star - llt.solve(km.A * theta_star));
  return z.dot(sys.Q * z);
}

/// Constants of the finite-sample bound that follow from the feature, reward
/// and importance-ratio bounds. Constants that depend on the chain's mixing
/// time (tau, and through it eta1) or on the unspecified kappa2 (and eta2)
/// are absent.
template <typename Scalar>
struct BoundConstants {
  Scalar C_M;
  Scalar C_Minv;
  std::optional<Scalar> C_e;  // needs gamma lambda rho_max < 1
  std::optional<Scalar> C_b;
  std::optional<Scalar> C_A;
  std::optional<Scalar> C1;
  std::optional<Scalar> C2;
  std::optional<Scalar> zeta;
  std::optional<Scalar> cb_tilde;
  Scalar varkappa1;
  Scalar lambda_max_Q;
  Scalar lambda_min_Q;
  Scalar kappa_Q;
  std::vector<std::string> not_computable{"tau", "varkappa2", "eta1", "eta2"};
};

struct BoundInputs {
  double phi_max = 1.0;
  double r_max = 1.0;
  double rho_max = 1.0;
  double beta_over_alpha = 1.0;
};

template <typename Scalar>
BoundConstants<Scalar> bound_constants(const KeyMatrices<Scalar>& km, const LyapunovSystem<Scalar>& sys,
                                       const BoundInputs& in) {
  using std::sqrt;
  const Scalar p = Scalar(km.dim());
  const Scalar phi_max = Scalar(in.phi_max);
  BoundConstants<Scalar> bc;
  bc.C_M = p * sqrt(p) * phi_max * phi_max;
  bc.C_Minv = detail::operator_norm<Scalar>(km.M.inverse());
  const Scalar decay = km.gamma * km.lambda * Scalar(in.rho_max);
  if (decay < Scalar(1)) {
    bc.C_e = phi_max / (Scalar(1) - decay);
    bc.C_b = Scalar(in.r_max) * *bc.C_e;
    bc.C_A = (Scalar(1) + km.gamma) * *bc.C_e * phi_max;
    const Scalar CA = *bc.C_A;
    bc.C1 = Scalar(2) * CA * CA * bc.C_Minv + CA + CA * CA * CA * bc.C_Minv * bc.C_Minv;
    bc.C2 = CA + bc.C_M * bc.C_Minv * CA + bc.C_M;
    bc.zeta = *bc.C1 + Scalar(in.beta_over_alpha) * *bc.C2;
    bc.cb_tilde = *bc.C_b / *bc.C2;
  }
  const Scalar xi1 = Scalar(2) * sys.weight1;
  const Scalar xi2 = Scalar(2) * sys.weight2;
  bc.varkappa1 = xi2 / (xi1 + xi2);
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(sys.Q, Eigen::EigenvaluesOnly);
  bc.lambda_min_Q = es.eigenvalues()(0);
  bc.lambda_max_Q = es.eigenvalues()(es.eigenvalues().size() - 1);
  bc.kappa_Q = bc.lambda_max_Q / bc.lambda_min_Q;
  return bc;
}

template <typename Scalar>
struct FixedPointRow {
  KeyMatrices<Scalar> km;
  std::optional<VectorX<Scalar>> theta;
  Scalar residual = std::numeric_limits<Scalar>::quiet_NaN();
  std::string message;

  bool solvable() const { return theta.has_value(); }
};

/// TD fixed points of the GES(lambda) and GTB(lambda) rows:
///   GES: Phi^T Xi (I - gamma lambda P_pi)^-1 (gamma P_pi - I) Phi theta = -b_pi
///   GTB: Phi^T Xi (I - gamma lambda P_mu)^-1 (gamma P_pi - I) Phi theta = -b_mu
/// where b_x = Phi^T Xi (I - gamma lambda P_x)^-1 R. A singular row is flagged
/// in its entry rather than failing the table.
template <typename Scalar>
std::map<std::string, FixedPointRow<Scalar>> fixed_point_table(const FiniteMdp<Scalar>& mdp,
                                                               const Policy<Scalar>& pi,
                                                               const Policy<Scalar>& mu,
                                                               const FeatureMap<Scalar>& features,
                                                               Scalar lambda) {
  if (!coverage_check(pi, mu)) {
    throw ModelError("fixed_point_table: behavior policy does not cover the target policy");
  }
  const StationaryDistribution<Scalar> xi = stationary_distribution(mdp, mu);
  const MatrixX<Scalar> P_pi = state_action_transition(mdp, pi);
  const MatrixX<Scalar> P_mu = state_action_transition(mdp, mu);
  const VectorX<Scalar> R = mdp.reward_vector();

  std::map<std::string, FixedPointRow<Scalar>> table;
  auto fill = [&](const std::string& name, const MatrixX<Scalar>& P_trace) {
    FixedPointRow<Scalar> row;
    row.km = key_matrices_from_operators<Scalar>(features.matrix(), xi.xi, P_pi, P_trace, R,
                                                 mdp.gamma(), lambda);
    try {
      row.theta = td_fixed_point(row.km);
      row.residual = (row.km.A * *row.theta + row.km.b).cwiseAbs().maxCoeff();
    } catch (const SolvabilityError& e) {
      row.message = e.what();
    }
    table.emplace(name, std::move(row));
  };
  fill("GES", P_pi);
  fill("GTB", P_mu);
  return table;
}

}  // namespace ges
