#include <ges/harness.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

namespace ges {

namespace {

constexpr std::uint64_t kKeyMatrixSeedSalt = 0x6b65792d6d617473ULL;  // "key-mats"
constexpr std::uint64_t kQSeedSalt = 0x712d68617421ULL;

double reward_bound(const TabularExport& env) {
  const double r = env.mdp.reward_table().cwiseAbs().maxCoeff();
  return r > 0.0 ? r : 1.0;
}

double rho_bound(const TabularExport& env) {
  double best = 0.0;
  for (Index s = 0; s < env.mdp.n_states(); ++s)
    for (Index a = 0; a < env.mdp.n_actions(); ++a)
      if (env.mu(s, a) > 0.0) best = std::max(best, env.pi(s, a) / env.mu(s, a));
  return best;
}

}  // namespace

Experiment prepare(const ExperimentConfig& cfg) {
  cfg.validate();
  Experiment exp;
  exp.config = cfg;
  if (cfg.environment == "two_state") {
    TwoStateSpec spec;
    spec.gamma = cfg.gamma;
    spec.lambda = cfg.lambda;
    spec.episode_length = cfg.episode_length;
    if (!cfg.reward.empty()) {
      spec.reward << cfg.reward[0], cfg.reward[1], cfg.reward[2], cfg.reward[3];
    }
    exp.tabular = as_finite_mdp(spec);
  } else if (cfg.environment == "baird") {
    BairdStarSpec spec;
    spec.gamma = cfg.gamma;
    spec.lambda = cfg.lambda;
    spec.episode_length = cfg.episode_length;
    exp.tabular = as_finite_mdp(spec);
  } else {
    MountainCarSpec spec;
    spec.gamma = cfg.gamma;
    spec.lambda = cfg.lambda;
    spec.max_episode_steps = cfg.max_episode_steps;
    exp.car = spec;
  }

  if (exp.tabular) {
    const auto& t = *exp.tabular;
    exp.km = key_matrices(t.mdp, t.pi, t.mu, t.features, cfg.lambda);
    exp.xi = stationary_distribution(t.mdp, t.mu).xi;
  } else {
    MountainCarEnvironment src(*exp.car);
    exp.km = empirical_key_matrices(src, cfg.mc_episodes, cfg.gamma, cfg.lambda,
                                    cfg.seed ^ kKeyMatrixSeedSalt);
  }

  using Mode = MspbeEvaluator<double>::Mode;
  try {
    exp.mspbe_eval = std::make_shared<const MspbeEvaluator<double>>(exp.km, Mode::Inverse);
  } catch (const RankError&) {
    exp.projected_mspbe = true;
    exp.mspbe_eval = std::make_shared<const MspbeEvaluator<double>>(exp.km, Mode::Projected);
  }
  try {
    exp.theta_star = td_fixed_point(exp.km);
    exp.rates = rate_constants(exp.km);
    if (exp.km.dim() <= 50) exp.lyapunov = lyapunov_system(exp.km);
  } catch (const Error&) {
    // Singular A or M: the diagnostics that need a unique saddle point stay off.
  }

  if (exp.tabular && cfg.mse_rollouts > 0) {
    const long horizon = cfg.mse_horizon > 0 ? cfg.mse_horizon : default_mse_horizon(cfg.gamma);
    exp.q_hat = estimate_q(*exp.tabular, cfg.mse_rollouts, horizon, cfg.seed ^ kQSeedSalt);
    const auto& Phi = exp.tabular->features.matrix();
    exp.mse_unnormalized =
        mse_against(*exp.q_hat, Phi, exp.xi, VectorX<double>::Zero(Phi.cols())).unnormalized;
  }
  return exp;
}

std::unique_ptr<TransitionSource<double>> Experiment::make_source() const {
  if (tabular) {
    return std::make_unique<TabularEnvironment>(*tabular,
                                                config.continuing ? 0 : config.episode_length);
  }
  return std::make_unique<MountainCarEnvironment>(*car);
}

DiagnosticHooks<double> Experiment::hooks() const {
  DiagnosticHooks<double> h;
  auto eval = mspbe_eval;
  h.mspbe = [eval](const VectorX<double>& th) { return (*eval)(th); };
  if (q_hat && tabular) {
    auto q = *q_hat;
    auto Phi = tabular->features.matrix();
    auto w = xi;
    h.mse = [q, Phi, w](const VectorX<double>& th) { return mse_against(q, Phi, w, th).value; };
  }
  if (theta_star && rates) h.D_t = make_D_t(km, rates->nu);
  if (theta_star && lyapunov) {
    auto sys = *lyapunov;
    auto k = km;
    auto ts = *theta_star;
    VectorX<double> os = VectorX<double>::Zero(ts.size());
    h.lyapunov = [sys, k, ts, os](const VectorX<double>& th, const VectorX<double>& om) {
      return lyapunov_value(sys, k, th, om, ts, os);
    };
  }
  return h;
}

StepSizeSchedule Experiment::schedule(double alpha, double beta_over_alpha) const {
  const ScheduleKind kind = parse_schedule_kind(config.schedule);
  ScheduleParams params;
  params.alpha = alpha;
  params.beta_over_alpha = beta_over_alpha;
  params.rates = rates;
  if (kind == ScheduleKind::AppendixE) {
    BoundInputs in;
    if (tabular) {
      in.phi_max = tabular->features.phi_max();
      in.r_max = reward_bound(*tabular);
      in.rho_max = rho_bound(*tabular);
    } else {
      in.phi_max = 1.0;
      in.r_max = 1.0;
      in.rho_max = MountainCarEnvironment(*car).rho_max();
    }
    params.C = appendix_e_constant(km.dim(), config.gamma, config.lambda, in,
                                   2.0 * config.radius_theta, 2.0 * config.radius_omega);
  }
  return make_schedule(kind, params);
}

double RunRecord::final_mspbe() const {
  if (diverged || series.records.empty()) return std::numeric_limits<double>::infinity();
  return series.records.back().mspbe;
}

double RunRecord::final_mse() const {
  if (diverged || series.records.empty()) return std::numeric_limits<double>::infinity();
  return series.records.back().mse;
}

RunRecord run_single(const Experiment& exp, double alpha, double beta_over_alpha,
                     std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  auto source = exp.make_source();
  RunOptions opt;
  opt.n_episodes = exp.config.n_episodes;
  if (exp.config.continuing) {
    opt.n_episodes = 1;
    opt.max_steps = exp.config.n_episodes * exp.config.episode_length;
  }
  opt.stride = exp.config.stride;
  opt.gamma = exp.config.gamma;
  opt.lambda = exp.config.lambda;
  opt.seed = seed;
  auto [state, series] = run_episodes(*source, exp.schedule(alpha, beta_over_alpha), opt, exp.hooks());

  RunRecord rec;
  rec.config_hash = exp.config.hash();
  rec.environment = exp.config.environment;
  rec.lambda = exp.config.lambda;
  rec.gamma = exp.config.gamma;
  rec.alpha = alpha;
  rec.beta_over_alpha = beta_over_alpha;
  rec.seed = seed;
  rec.theta = state.theta;
  rec.omega = state.omega;
  rec.diverged = series.diverged;
  rec.mse_unnormalized = exp.mse_unnormalized;
  rec.series = std::move(series);
  rec.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::vector<RunRecord> sweep(const Experiment& exp, const SweepOptions& opt) {
  struct Task {
    int ai, ri;
    long run;
  };
  const auto grid = exp.config.alpha_grid();
  const auto ratios = exp.config.ratio_grid();
  std::vector<Task> tasks;
  for (int ai = 0; ai < int(grid.size()); ++ai)
    for (int ri = 0; ri < int(ratios.size()); ++ri)
      for (long k = 0; k < exp.config.n_runs; ++k) tasks.push_back({ai, ri, k});

  if (opt.cell_dir) std::filesystem::create_directories(*opt.cell_dir);
  std::vector<RunRecord> out(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      try {
        const Task& t = tasks[i];
        RunRecord rec = run_single(exp, grid[std::size_t(t.ai)], ratios[std::size_t(t.ri)],
                                   exp.config.seed + std::uint64_t(t.run));
        rec.alpha_index = t.ai;
        rec.ratio_index = t.ri;
        if (opt.cell_dir) {
          const std::string path = *opt.cell_dir + "/" + rec.config_hash + "_a" +
                                   std::to_string(t.ai) + "_r" + std::to_string(t.ri) + "_s" +
                                   std::to_string(rec.seed) + ".csv";
          std::ofstream f(path);
          if (!f) throw IoError("cannot write cell file '" + path + "'");
          f << kStepsHeader << "\n";
          write_step_rows(f, rec);
        }
        out[i] = std::move(rec);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(tasks.size());
        return;
      }
    }
  };

  const int n_threads = std::max(1, std::min<int>(opt.threads, int(tasks.size())));
  std::vector<std::thread> pool;
  for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
  return out;
}

KeyMatrices<double> empirical_key_matrices(TransitionSource<double>& source, long n_episodes,
                                           double gamma, double lambda, std::uint64_t seed,
                                           long max_steps) {
  const Index p = source.dim();
  KeyMatrices<double> km;
  km.A = MatrixX<double>::Zero(p, p);
  km.b = VectorX<double>::Zero(p);
  km.M = MatrixX<double>::Zero(p, p);
  km.gamma = gamma;
  km.lambda = lambda;
  km.provenance = Provenance::MonteCarlo;

  Rng rng(seed);
  VectorX<double> e = VectorX<double>::Zero(p);
  std::vector<Index> nz_d, nz_phi;
  long steps = 0;
  bool stop = false;
  for (long ep = 0; ep < n_episodes && !stop; ++ep) {
    source.reset(rng);
    e.setZero();
    for (;;) {
      const Transition<double> tr = source.next(rng);
      e = (lambda * gamma * tr.rho) * e + tr.phi;
      nz_d.clear();
      nz_phi.clear();
      for (Index j = 0; j < p; ++j) {
        const double d = (tr.terminal ? 0.0 : gamma * tr.expected_phi_next(j)) - tr.phi(j);
        if (d != 0.0) nz_d.push_back(j);
        if (tr.phi(j) != 0.0) nz_phi.push_back(j);
      }
      for (Index j : nz_d) {
        const double d = (tr.terminal ? 0.0 : gamma * tr.expected_phi_next(j)) - tr.phi(j);
        km.A.col(j) += d * e;
      }
      if (tr.r != 0.0) km.b += tr.r * e;
      for (Index i : nz_phi)
        for (Index j : nz_phi) km.M(i, j) += tr.phi(i) * tr.phi(j);
      ++steps;
      if (tr.terminal || tr.episode_end) break;
      if (max_steps >= 0 && steps >= max_steps) {
        stop = true;
        break;
      }
    }
    if (max_steps >= 0 && steps >= max_steps) stop = true;
  }
  if (steps == 0) throw ModelError("empirical_key_matrices: the stream produced no transitions");
  const double n = double(steps);
  km.A /= n;
  km.b /= n;
  km.M /= n;
  return km;
}

long default_mse_horizon(double gamma) {
  return static_cast<long>(std::ceil(std::log(1e-6) / std::log(gamma)));
}

VectorX<double> estimate_q(const TabularExport& env, long n_rollouts, long horizon,
                           std::uint64_t seed) {
  const auto& mdp = env.mdp;
  if (n_rollouts < 1) throw ConfigError("estimate_q: need at least one rollout");
  if (horizon < default_mse_horizon(mdp.gamma())) {
    throw ConfigError("estimate_q: horizon " + std::to_string(horizon) +
                      " leaves a discount tail above 1e-6");
  }
  Rng rng(seed);
  VectorX<double> q = VectorX<double>::Zero(mdp.n_pairs());
  for (Index s0 = 0; s0 < mdp.n_states(); ++s0) {
    for (Index a0 = 0; a0 < mdp.n_actions(); ++a0) {
      double total = 0.0;
      for (long k = 0; k < n_rollouts; ++k) {
        Index s = s0, a = a0;
        double discount = 1.0, ret = 0.0;
        for (long t = 0; t < horizon; ++t) {
          ret += discount * mdp.reward(s, a);
          discount *= mdp.gamma();
          s = rng.categorical(mdp.kernel(a).row(s));
          if (mdp.terminal(s)) break;
          a = rng.categorical(env.pi.probs().row(s));
        }
        total += ret;
      }
      q(mdp.pairs()(s0, a0)) = total / double(n_rollouts);
    }
  }
  return q;
}

MseResult mse_against(const VectorX<double>& q, const MatrixX<double>& Phi, const VectorX<double>& xi,
                      const VectorX<double>& theta) {
  if (q.size() != Phi.rows() || xi.size() != Phi.rows() || theta.size() != Phi.cols()) {
    throw ModelError("mse: q, Phi, xi and theta disagree in size");
  }
  const VectorX<double> err = Phi * theta - q;
  const double num = (xi.array() * err.array().square()).sum();
  const double den = (xi.array() * q.array().square()).sum();
  if (den <= 1e-300) return {(xi.array() * (Phi * theta).array().square()).sum(), true};
  return {num / den, false};
}

MseResult empirical_mse(const VectorX<double>& theta, const TabularExport& env, long n_rollouts,
                        long horizon, std::uint64_t seed) {
  const VectorX<double> q = estimate_q(env, n_rollouts, horizon, seed);
  const VectorX<double> xi = stationary_distribution(env.mdp, env.mu).xi;
  return mse_against(q, env.features.matrix(), xi, theta);
}

DivergenceReport divergence_demo(const DivergenceOptions& opt) {
  TwoStateSpec spec;
  spec.gamma = opt.gamma;
  spec.lambda = opt.lambda;
  const TabularExport env = as_finite_mdp(spec);
  const KeyMatrices<double> km = key_matrices(env.mdp, env.pi, env.mu, env.features, opt.lambda);
  if (opt.theta0.size() != 2) throw ConfigError("divergence_demo: theta0 must have two entries");

  DivergenceReport rep;
  const double g = opt.gamma, l = opt.lambda;
  rep.gamma_threshold = 5.0 / (6.0 - l);
  rep.c_closed_form = (6.0 * g - g * l - 5.0) / (4.0 * (1.0 - g * l));
  rep.c_matrix = km.A(0, 0);
  rep.divergent_regime = g > rep.gamma_threshold;

  const double factor = 1.0 + opt.alpha * rep.c_matrix;
  const double start = std::abs(opt.theta0(0));
  if (start > 0.0 && factor > 1.0 && start <= opt.threshold) {
    rep.predicted_crossing =
        static_cast<long>(std::floor(std::log(opt.threshold / start) / std::log(factor))) + 1;
  } else if (start > opt.threshold) {
    rep.predicted_crossing = 0;
  }

  VectorX<double> theta = opt.theta0;
  rep.abs_theta1.reserve(std::size_t(opt.t_max) + 1);
  rep.abs_theta1.push_back(std::abs(theta(0)));
  if (rep.abs_theta1.back() > opt.threshold) rep.crossing_step = 0;
  for (long t = 1; t <= opt.t_max; ++t) {
    theta = offline_expected_step(theta, km, opt.alpha);
    rep.abs_theta1.push_back(std::abs(theta(0)));
    if (rep.crossing_step < 0 && rep.abs_theta1.back() > opt.threshold) rep.crossing_step = t;
  }
  return rep;
}

}  // namespace ges
