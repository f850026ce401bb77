#pragma once

#include <ges/analysis.hpp>
#include <ges/environments.hpp>
#include <ges/learners.hpp>

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ges {

/// Experiment description, read from a `key = value` document. The first
/// non-comment line must be `schema_version = 1`. Unknown keys are rejected.
struct ExperimentConfig {
  int schema_version = 1;
  std::string environment = "two_state";  // two_state | baird | mountain_car
  double lambda = 0.99;
  double gamma = 0.99;
  /// two_state only: R(s1,right) R(s1,left) R(s2,right) R(s2,left).
  std::vector<double> reward;
  std::string schedule = "constant";
  double alpha = 0.0125;  // single runs
  double beta_over_alpha = 1.0;
  int grid_j_min = -10;  // sweep grid: 0.1 * 2^j for alpha and beta/alpha
  int grid_j_max = 0;
  long n_runs = 5;
  long n_episodes = 5000;
  std::uint64_t seed = 0;  // run k uses seed + k
  long stride = 1000;
  long episode_length = 20;
  /// two_state/baird: one stream of n_episodes * episode_length steps with no
  /// restarts or trace resets.
  bool continuing = false;
  long max_episode_steps = 1000;  // mountain_car
  long mc_episodes = 5000;        // mountain_car: episodes for the sampled key matrices
  long mse_rollouts = 0;          // 0 disables the MSE metric
  long mse_horizon = 0;           // 0: smallest horizon with gamma^H <= 1e-6
  double radius_theta = 10.0;  // appendix_e schedule: origin-centered domain radii
  double radius_omega = 10.0;
  std::string output_dir = "results";
  int threads = 0;  // 0: GES_MAX_THREADS or hardware concurrency
  bool plots = true;

  static ExperimentConfig parse(std::istream& in, const std::string& source = "<stream>");
  static ExperimentConfig load(const std::string& path);

  /// Canonical `key = value` text with every field, 17 significant digits.
  std::string canonical() const;
  /// FNV-1a 64 of canonical(), as 16 hex digits.
  std::string hash() const;

  std::vector<double> alpha_grid() const;
  std::vector<double> ratio_grid() const { return alpha_grid(); }
  void validate() const;
};

/// Applies GES_OUTPUT_DIR and GES_MAX_THREADS when set.
void apply_environment_overrides(ExperimentConfig& cfg);

/// Everything shared by the runs of one experiment; immutable once built.
struct Experiment {
  ExperimentConfig config;
  std::optional<TabularExport> tabular;
  std::optional<MountainCarSpec> car;
  KeyMatrices<double> km;
  /// MSPBE uses the pseudo-inverse of M (rank-deficient or sampled M).
  bool projected_mspbe = false;
  std::shared_ptr<const MspbeEvaluator<double>> mspbe_eval;
  /// Fixed point of the key matrices when A is nonsingular.
  std::optional<VectorX<double>> theta_star;
  std::optional<RateConstants<double>> rates;
  std::optional<LyapunovSystem<double>> lyapunov;
  std::optional<VectorX<double>> q_hat;
  VectorX<double> xi;
  bool mse_unnormalized = false;

  std::unique_ptr<TransitionSource<double>> make_source() const;
  DiagnosticHooks<double> hooks() const;
  StepSizeSchedule schedule(double alpha, double beta_over_alpha) const;
};

Experiment prepare(const ExperimentConfig& cfg);

struct RunRecord {
  std::string config_hash;
  std::string environment;
  double lambda = 0.0;
  double gamma = 0.0;
  double alpha = 0.0;
  double beta_over_alpha = 0.0;
  std::uint64_t seed = 0;
  int alpha_index = -1;
  int ratio_index = -1;
  DiagnosticSeries<double> series;
  VectorX<double> theta;
  VectorX<double> omega;
  bool diverged = false;
  bool mse_unnormalized = false;
  double wall_time_s = 0.0;

  double final_mspbe() const;
  double final_mse() const;
};

RunRecord run_single(const Experiment& exp, double alpha, double beta_over_alpha, std::uint64_t seed);

struct SweepOptions {
  int threads = 1;
  /// When set, each finished run also writes its step rows to a file here.
  std::optional<std::string> cell_dir;
};

/// Every grid cell x seed. Records come back ordered by (alpha, ratio, seed)
/// whatever the thread count.
std::vector<RunRecord> sweep(const Experiment& exp, const SweepOptions& opt);

/// Running means of the sampled A_t = e_t (gamma phibar' - phi_t)^T,
/// b_t = r_t e_t and M_t = phi_t phi_t^T over n_episodes episodes (or
/// max_steps steps of an endless stream).
KeyMatrices<double> empirical_key_matrices(TransitionSource<double>& source, long n_episodes,
                                           double gamma, double lambda, std::uint64_t seed,
                                           long max_steps = -1);

/// Monte-Carlo q^pi over pairs: rollouts of `horizon` steps under the target
/// policy from each pair.
VectorX<double> estimate_q(const TabularExport& env, long n_rollouts, long horizon,
                           std::uint64_t seed);

/// Smallest horizon H with gamma^H <= 1e-6.
long default_mse_horizon(double gamma);

struct MseResult {
  double value = 0.0;
  /// q-hat has zero Xi-norm, so value is the plain |Phi theta|^2_Xi.
  bool unnormalized = false;
};

/// |Phi theta - q|^2_Xi / |q|^2_Xi, with the unnormalized fallback.
MseResult mse_against(const VectorX<double>& q, const MatrixX<double>& Phi,
                      const VectorX<double>& xi, const VectorX<double>& theta);

MseResult empirical_mse(const VectorX<double>& theta, const TabularExport& env, long n_rollouts,
                        long horizon, std::uint64_t seed);

struct DivergenceOptions {
  double gamma = 0.999;
  double lambda = 0.99;
  double alpha = 0.1;
  long t_max = 2000;
  VectorX<double> theta0 = Eigen::Vector2d(1.0, 0.0);
  double threshold = 1e6;
};

struct DivergenceReport {
  bool divergent_regime = false;
  double gamma_threshold = 0.0;  // 5 / (6 - lambda)
  double c_closed_form = 0.0;    // (6g - g l - 5) / (4 (1 - g l)), normalized xi
  double c_matrix = 0.0;         // A(0,0) of the assembled key matrices
  std::vector<double> abs_theta1;  // |theta_{t,1}| for t = 0..t_max
  long crossing_step = -1;
  long predicted_crossing = -1;
};

/// Iterates the expected off-line update on the zero-reward Two-State MDP.
DivergenceReport divergence_demo(const DivergenceOptions& opt);

struct EmitOptions {
  bool plots = true;
};

struct EmittedFiles {
  std::string steps_csv;
  std::string runs_csv;
  std::string summary_csv;
  std::vector<std::string> plots;
  std::vector<std::string> configs;
};

/// Writes steps.csv, runs.csv, summary.csv, one config-<hash>.txt per config
/// and, optionally, mspbe.svg / mse.svg into `dir`.
EmittedFiles emit_results(const std::vector<RunRecord>& records,
                          const std::vector<ExperimentConfig>& configs, const std::string& dir,
                          const EmitOptions& opt = {});

/// Column header of steps.csv.
inline constexpr const char kStepsHeader[] =
    "env,lambda,gamma,alpha,beta_over_alpha,seed,step,mspbe,mse,D_t,lyapunov,diverged";

void write_step_rows(std::ostream& out, const RunRecord& rec);

int max_threads_from_env(int fallback);

}  // namespace ges
