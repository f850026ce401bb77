#pragma once
// Independent reference computations and random instance generators used by
// the tests. Nothing here calls into the library's own solvers.

#include <ges/mdp.hpp>
#include <ges/rng.hpp>

#include <Eigen/Dense>

#include <vector>

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline Vec random_distribution(ges::Rng& rng, Eigen::Index n, double floor = 0.0) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = floor + rng.uniform();
  return v / v.sum();
}

/// Dense random MDP: every transition row has full support.
inline ges::FiniteMdp<double> random_mdp(ges::Rng& rng, Eigen::Index n_states, Eigen::Index n_actions,
                                         double gamma) {
  std::vector<Mat> kernel;
  for (Eigen::Index a = 0; a < n_actions; ++a) {
    Mat k(n_states, n_states);
    for (Eigen::Index s = 0; s < n_states; ++s)
      k.row(s) = random_distribution(rng, n_states, 0.05).transpose();
    kernel.push_back(k);
  }
  Mat R(n_states, n_actions);
  for (Eigen::Index i = 0; i < R.size(); ++i) R.data()[i] = rng.uniform(-1.0, 1.0);
  return ges::FiniteMdp<double>(kernel, R, gamma);
}

inline ges::Policy<double> random_policy(ges::Rng& rng, Eigen::Index n_states,
                                         Eigen::Index n_actions, double floor = 0.1) {
  Mat p(n_states, n_actions);
  for (Eigen::Index s = 0; s < n_states; ++s)
    p.row(s) = random_distribution(rng, n_actions, floor).transpose();
  return ges::Policy<double>(p);
}

inline Mat random_matrix(ges::Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

/// P over pairs by explicit summation over (s, a, s', a').
inline Mat brute_force_transition(const ges::FiniteMdp<double>& mdp, const ges::Policy<double>& pi) {
  const auto& idx = mdp.pairs();
  Mat P = Mat::Zero(idx.size(), idx.size());
  for (Eigen::Index row = 0; row < idx.size(); ++row) {
    const auto [s, a] = idx.pair(row);
    for (Eigen::Index col = 0; col < idx.size(); ++col) {
      const auto [s2, a2] = idx.pair(col);
      P(row, col) = mdp.p(s, a, s2) * pi(s2, a2);
    }
  }
  return P;
}

/// Left Perron vector of P from a dense eigen solve, normalized to sum 1.
inline Vec stationary_by_eigen(const Mat& P) {
  Eigen::EigenSolver<Mat> es(P.transpose());
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < P.rows(); ++i)
    if (std::abs(es.eigenvalues()(i) - 1.0) < std::abs(es.eigenvalues()(best) - 1.0)) best = i;
  Vec x = es.eigenvectors().col(best).real();
  return x / x.sum();
}

/// (I - c P)^-1 by the truncated Neumann series sum_k (c P)^k.
inline Mat neumann_resolvent(const Mat& P, double c, double tol = 1e-15) {
  Mat sum = Mat::Identity(P.rows(), P.cols());
  Mat term = sum;
  for (int k = 0; k < 100000; ++k) {
    term = c * (term * P);
    sum += term;
    if (term.cwiseAbs().maxCoeff() < tol) break;
  }
  return sum;
}

struct KeyMats {
  Mat A;
  Vec b;
  Mat M;
};

/// A, b, M from their definitions, with the resolvent by Neumann series.
inline KeyMats key_matrices(const Mat& Phi, const Vec& xi, const Mat& P, const Vec& R, double gamma,
                            double lambda) {
  const Mat Xi = xi.asDiagonal();
  const Mat res = neumann_resolvent(P, gamma * lambda);
  const Mat I = Mat::Identity(P.rows(), P.cols());
  return {Phi.transpose() * Xi * res * (gamma * P - I) * Phi, Phi.transpose() * Xi * res * R,
          Phi.transpose() * Xi * Phi};
}

/// 1/2 |Phi theta - Pi B_lambda(Phi theta)|^2_Xi with the projection built explicitly.
inline double mspbe_projected_bellman(const Mat& Phi, const Vec& xi, const Mat& P, const Vec& R,
                                      double gamma, double lambda, const Vec& theta) {
  const Mat Xi = xi.asDiagonal();
  const Mat I = Mat::Identity(P.rows(), P.cols());
  const Mat Pi = Phi * (Phi.transpose() * Xi * Phi).inverse() * Phi.transpose() * Xi;
  const Vec q = Phi * theta;
  const Vec Bq = q + (I - gamma * lambda * P).inverse() * (R + gamma * P * q - q);
  const Vec err = q - Pi * Bq;
  return 0.5 * err.dot(Xi * err);
}

/// z^T Q z by explicit double loop.
inline double quadratic_form(const Mat& Q, const Vec& z) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i)
    for (Eigen::Index j = 0; j < z.size(); ++j) s += z(i) * Q(i, j) * z(j);
  return s;
}

}  // namespace oracle
