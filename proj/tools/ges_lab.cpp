// ges_lab: command-line front end for the analysis and experiment library.

#include <ges/analysis.hpp>
#include <ges/harness.hpp>
#include <ges/mdp_io.hpp>

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

using namespace ges;

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string vec(const VectorX<double>& v) {
  std::string s;
  for (Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + num(v(i));
  return s;
}

/// Writes to `path`, or stdout when empty.
void deliver(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path + "'");
  f << text;
}

struct MdpArgs {
  std::string file;
  std::string target = "target";
  std::string behavior = "behavior";
  std::optional<double> lambda;
  std::string out;
};

void add_mdp_args(CLI::App* cmd, MdpArgs& a) {
  cmd->add_option("mdp", a.file, "MDP file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--target", a.target, "Target policy name");
  cmd->add_option("--behavior", a.behavior, "Behavior policy name");
  cmd->add_option("--lambda", a.lambda, "Trace decay (default: the file's lambda, else 0)");
  cmd->add_option("-o,--out", a.out, "Report file (default: stdout)");
}

struct LoadedMdp {
  MdpDocument doc;
  double lambda;
};

LoadedMdp load(const MdpArgs& a) {
  LoadedMdp m{read_mdp_file(a.file), 0.0};
  if (!m.doc.features) throw IoError(a.file + ": no feature map");
  m.lambda = a.lambda.value_or(m.doc.lambda.value_or(0.0));
  return m;
}

int cmd_analyze(const MdpArgs& a) {
  const auto m = load(a);
  const auto& doc = m.doc;
  const auto km = key_matrices(doc.mdp, doc.policy(a.target), doc.policy(a.behavior), *doc.features,
                               m.lambda);
  std::ostringstream os;
  os << "file = " << a.file << "\n";
  os << "gamma = " << num(km.gamma) << "\n";
  os << "lambda = " << num(km.lambda) << "\n";
  os << "features = " << km.dim() << "\n";

  const auto rep = stability_check(km);
  os << "stable = " << (rep.stable ? "true" : "false") << "\n";
  os << "max_real_part = " << num(rep.max_real_part) << "\n";
  for (std::size_t i = 0; i < rep.eigenvalues.size(); ++i) {
    os << "eigenvalue." << i << " = " << num(rep.eigenvalues[i].real()) << " "
       << num(rep.eigenvalues[i].imag()) << "\n";
  }
  if (rep.safe_step_size) {
    os << "safe_step_size = " << num(*rep.safe_step_size) << "\n";
    os << "spectral_radius_at_safe_step = " << num(rep.spectral_radius_at_safe_step) << "\n";
  }
  try {
    const auto theta = td_fixed_point(km);
    os << "theta_star = " << vec(theta) << "\n";
    os << "mspbe_at_theta_star = " << num(mspbe(km, theta)) << "\n";
  } catch (const Error& e) {
    os << "theta_star = unavailable (" << e.what() << ")\n";
    const auto theta = td_fixed_point_min_norm(km);
    os << "theta_min_norm = " << vec(theta) << "\n";
    os << "projected_mspbe_at_theta_min_norm = " << num(projected_mspbe(km, theta)) << "\n";
  }
  try {
    const auto rc = rate_constants(km);
    os << "nu = " << num(rc.nu) << "\n";
    os << "alpha_star = " << num(rc.alpha_star) << "\n";
    os << "beta_star = " << num(rc.beta_star) << "\n";
    os << "contraction = " << num(rc.contraction) << "\n";
    os << "kappa_M = " << num(rc.kappa_M) << "\n";
    os << "kappa_A = " << num(rc.kappa_A) << "\n";
  } catch (const Error& e) {
    os << "rate_constants = unavailable (" << e.what() << ")\n";
  }
  deliver(os.str(), a.out);
  return 0;
}

int cmd_fixed_points(const MdpArgs& a) {
  const auto m = load(a);
  const auto& doc = m.doc;
  const auto table = fixed_point_table(doc.mdp, doc.policy(a.target), doc.policy(a.behavior),
                                       *doc.features, m.lambda);
  std::ostringstream os;
  os << "lambda = " << num(m.lambda) << "\n";
  for (const auto& [name, row] : table) {
    if (row.solvable()) {
      os << name << ".theta = " << vec(*row.theta) << "\n";
      os << name << ".residual = " << num(row.residual) << "\n";
    } else {
      os << name << ".theta = unsolvable\n";
      os << name << ".message = " << row.message << "\n";
    }
  }
  deliver(os.str(), a.out);
  return 0;
}

ExperimentConfig load_config(const std::string& path, const std::string& out_dir) {
  auto cfg = ExperimentConfig::load(path);
  apply_environment_overrides(cfg);
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  return cfg;
}

int resolved_threads(const ExperimentConfig& cfg) {
  if (cfg.threads > 0) return cfg.threads;
  const int hw = int(std::max(1u, std::thread::hardware_concurrency()));
  return max_threads_from_env(hw);
}

void report(const EmittedFiles& files, const std::vector<RunRecord>& recs) {
  long diverged = 0;
  for (const auto& r : recs) diverged += r.diverged ? 1 : 0;
  std::cout << "runs = " << recs.size() << "\n";
  std::cout << "diverged = " << diverged << "\n";
  std::cout << "steps_csv = " << files.steps_csv << "\n";
  std::cout << "runs_csv = " << files.runs_csv << "\n";
  std::cout << "summary_csv = " << files.summary_csv << "\n";
  for (const auto& p : files.plots) std::cout << "plot = " << p << "\n";
}

struct RunArgs {
  std::string config;
  std::string out_dir;
  std::optional<double> alpha;
  std::optional<double> ratio;
  std::optional<std::uint64_t> seed;
};

int cmd_run(const RunArgs& a) {
  const auto cfg = load_config(a.config, a.out_dir);
  const auto exp = prepare(cfg);
  const auto rec = run_single(exp, a.alpha.value_or(cfg.alpha), a.ratio.value_or(cfg.beta_over_alpha),
                              a.seed.value_or(cfg.seed));
  const std::vector<RunRecord> recs{rec};
  const auto files = emit_results(recs, {cfg}, cfg.output_dir, {cfg.plots});
  report(files, recs);
  std::cout << "final_mspbe = " << num(rec.final_mspbe()) << "\n";
  std::cout << "theta = " << vec(rec.theta) << "\n";
  return 0;
}

int cmd_sweep(const std::string& config, const std::string& out_dir, bool cells) {
  const auto cfg = load_config(config, out_dir);
  const auto exp = prepare(cfg);
  SweepOptions opt;
  opt.threads = resolved_threads(cfg);
  if (cells) opt.cell_dir = cfg.output_dir + "/cells";
  const auto recs = sweep(exp, opt);
  const auto files = emit_results(recs, {cfg}, cfg.output_dir, {cfg.plots});
  report(files, recs);
  return 0;
}

struct DemoArgs {
  DivergenceOptions opt;
  std::string csv;
};

int cmd_demo(const DemoArgs& a) {
  const auto rep = divergence_demo(a.opt);
  std::cout << "regime = " << (rep.divergent_regime ? "divergent" : "stable") << "\n";
  std::cout << "gamma_threshold = " << num(rep.gamma_threshold) << "\n";
  std::cout << "c = " << num(rep.c_matrix) << "\n";
  std::cout << "c_closed_form = " << num(rep.c_closed_form) << "\n";
  std::cout << "growth_factor = " << num(1.0 + a.opt.alpha * rep.c_matrix) << "\n";
  std::cout << "crossing_step = " << rep.crossing_step << "\n";
  std::cout << "predicted_crossing = " << rep.predicted_crossing << "\n";
  std::cout << "final_abs_theta1 = " << num(rep.abs_theta1.back()) << "\n";
  if (!a.csv.empty()) {
    std::ostringstream os;
    os << "step,abs_theta1\n";
    for (std::size_t t = 0; t < rep.abs_theta1.size(); ++t) os << t << "," << num(rep.abs_theta1[t]) << "\n";
    deliver(os.str(), a.csv);
  }
  return 0;
}

struct ExportArgs {
  std::string environment;
  std::string out;
  double gamma = 0.9;
  std::optional<double> lambda;
  std::vector<double> reward;
};

int cmd_export(const ExportArgs& a) {
  TabularExport env = [&] {
    if (a.environment == "two_state") {
      TwoStateSpec spec;
      spec.gamma = a.gamma;
      if (!a.reward.empty()) {
        if (a.reward.size() != 4) throw ConfigError("--reward takes four values");
        spec.reward << a.reward[0], a.reward[1], a.reward[2], a.reward[3];
      }
      return as_finite_mdp(spec);
    }
    if (!a.reward.empty()) throw ConfigError("--reward applies to two_state only");
    BairdStarSpec spec;
    spec.gamma = a.gamma;
    return as_finite_mdp(spec);
  }();
  if (a.out.empty()) {
    write_mdp(std::cout, env, a.lambda);
  } else {
    write_mdp_file(a.out, env, a.lambda);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-based off-policy evaluation lab"};
  app.require_subcommand(1);

  MdpArgs analyze_args;
  auto* analyze = app.add_subcommand("analyze", "Key matrices, stability and rate constants of an MDP file");
  add_mdp_args(analyze, analyze_args);

  MdpArgs fp_args;
  auto* fixed = app.add_subcommand("fixed-points", "GES and GTB fixed points of an MDP file");
  add_mdp_args(fixed, fp_args);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Single learning run from a config");
  run->add_option("config", run_args.config, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--out-dir", run_args.out_dir, "Output directory");
  run->add_option("--alpha", run_args.alpha, "Primal step size");
  run->add_option("--ratio", run_args.ratio, "beta / alpha");
  run->add_option("--seed", run_args.seed, "Seed");

  std::string sweep_config, sweep_out;
  bool sweep_cells = false;
  auto* sw = app.add_subcommand("sweep", "Step-size grid experiment from a config");
  sw->add_option("config", sweep_config, "Config file")->required()->check(CLI::ExistingFile);
  sw->add_option("--out-dir", sweep_out, "Output directory");
  sw->add_flag("--cells", sweep_cells, "Also write one CSV per finished run");

  DemoArgs demo_args;
  auto* demo = app.add_subcommand("demo-divergence", "Off-line expected update on the two-state MDP");
  demo->add_option("--gamma", demo_args.opt.gamma, "Discount")->capture_default_str();
  demo->add_option("--lambda", demo_args.opt.lambda, "Trace decay")->capture_default_str();
  demo->add_option("--alpha", demo_args.opt.alpha, "Step size")->capture_default_str();
  demo->add_option("--t-max", demo_args.opt.t_max, "Iterations")->capture_default_str();
  demo->add_option("--csv", demo_args.csv, "Write the |theta_1| curve here");

  ExportArgs export_args;
  auto* exp = app.add_subcommand("export", "Write a tabular environment as an MDP file");
  exp->add_option("environment", export_args.environment, "two_state or baird")
      ->required()
      ->check(CLI::IsMember({"two_state", "baird"}));
  exp->add_option("-o,--out", export_args.out, "Output file (default: stdout)");
  exp->add_option("--gamma", export_args.gamma, "Discount")->capture_default_str();
  exp->add_option("--lambda", export_args.lambda, "Trace decay stored in the file");
  exp->add_option("--reward", export_args.reward, "two_state rewards R(s1,R) R(s1,L) R(s2,R) R(s2,L)")
      ->expected(4);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*analyze) return cmd_analyze(analyze_args);
    if (*fixed) return cmd_fixed_points(fp_args);
    if (*run) return cmd_run(run_args);
    if (*sw) return cmd_sweep(sweep_config, sweep_out, sweep_cells);
    if (*demo) return cmd_demo(demo_args);
    if (*exp) return cmd_export(export_args);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
