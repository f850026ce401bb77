#include <ges/harness.hpp>
#include <ges/learners.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

namespace ges {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T v{};
  if (!(is >> v)) throw ConfigError("config: '" + key + "' expects a number, got '" + value + "'");
  std::string rest;
  if (is >> rest) throw ConfigError("config: trailing text after '" + key + "' value");
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config: '" + key + "' expects true or false");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"schema_version", [](auto& c, auto& k, auto& v) { c.schema_version = parse_number<int>(k, v); }},
      {"environment", [](auto& c, auto&, auto& v) { c.environment = v; }},
      {"lambda", [](auto& c, auto& k, auto& v) { c.lambda = parse_number<double>(k, v); }},
      {"gamma", [](auto& c, auto& k, auto& v) { c.gamma = parse_number<double>(k, v); }},
      {"reward",
       [](auto& c, auto& k, auto& v) {
         c.reward.clear();
         std::istringstream is(v);
         std::string tok;
         while (is >> tok) c.reward.push_back(parse_number<double>(k, tok));
       }},
      {"schedule", [](auto& c, auto&, auto& v) { c.schedule = v; }},
      {"alpha", [](auto& c, auto& k, auto& v) { c.alpha = parse_number<double>(k, v); }},
      {"beta_over_alpha",
       [](auto& c, auto& k, auto& v) { c.beta_over_alpha = parse_number<double>(k, v); }},
      {"grid_j_min", [](auto& c, auto& k, auto& v) { c.grid_j_min = parse_number<int>(k, v); }},
      {"grid_j_max", [](auto& c, auto& k, auto& v) { c.grid_j_max = parse_number<int>(k, v); }},
      {"n_runs", [](auto& c, auto& k, auto& v) { c.n_runs = parse_number<long>(k, v); }},
      {"n_episodes", [](auto& c, auto& k, auto& v) { c.n_episodes = parse_number<long>(k, v); }},
      {"seed", [](auto& c, auto& k, auto& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"stride", [](auto& c, auto& k, auto& v) { c.stride = parse_number<long>(k, v); }},
      {"episode_length",
       [](auto& c, auto& k, auto& v) { c.episode_length = parse_number<long>(k, v); }},
      {"continuing", [](auto& c, auto& k, auto& v) { c.continuing = parse_bool(k, v); }},
      {"max_episode_steps",
       [](auto& c, auto& k, auto& v) { c.max_episode_steps = parse_number<long>(k, v); }},
      {"mc_episodes", [](auto& c, auto& k, auto& v) { c.mc_episodes = parse_number<long>(k, v); }},
      {"mse_rollouts", [](auto& c, auto& k, auto& v) { c.mse_rollouts = parse_number<long>(k, v); }},
      {"mse_horizon", [](auto& c, auto& k, auto& v) { c.mse_horizon = parse_number<long>(k, v); }},
      {"radius_theta",
       [](auto& c, auto& k, auto& v) { c.radius_theta = parse_number<double>(k, v); }},
      {"radius_omega",
       [](auto& c, auto& k, auto& v) { c.radius_omega = parse_number<double>(k, v); }},
      {"output_dir", [](auto& c, auto&, auto& v) { c.output_dir = v; }},
      {"threads", [](auto& c, auto& k, auto& v) { c.threads = parse_number<int>(k, v); }},
      {"plots", [](auto& c, auto& k, auto& v) { c.plots = parse_bool(k, v); }},
  };
  return table;
}

}  // namespace

ExperimentConfig ExperimentConfig::parse(std::istream& in, const std::string& source) {
  ExperimentConfig cfg;
  std::string raw;
  long lineno = 0;
  bool saw_version = false;
  while (std::getline(in, raw)) {
    ++lineno;
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!saw_version && key != "schema_version") {
      throw ConfigError(where + "the first entry must be 'schema_version = 1'");
    }
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(where + "unknown key '" + key + "'");
    try {
      it->second(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
    saw_version = true;
  }
  if (!saw_version) throw ConfigError(source + ": empty config");
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse(in, path);
}

void ExperimentConfig::validate() const {
  if (schema_version != 1) throw ConfigError("config: unsupported schema_version");
  if (environment != "two_state" && environment != "baird" && environment != "mountain_car") {
    throw ConfigError("config: environment must be two_state, baird or mountain_car");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("config: lambda must lie in [0,1]");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("config: gamma must lie in (0,1)");
  if (!reward.empty() && (environment != "two_state" || reward.size() != 4)) {
    throw ConfigError("config: reward takes four values and applies to two_state only");
  }
  parse_schedule_kind(schedule);
  if (!(alpha > 0.0) || !(beta_over_alpha > 0.0)) {
    throw ConfigError("config: alpha and beta_over_alpha must be positive");
  }
  if (grid_j_min < -10 || grid_j_max > 0 || grid_j_min > grid_j_max) {
    throw ConfigError("config: grid exponents must satisfy -10 <= grid_j_min <= grid_j_max <= 0");
  }
  if (n_runs < 1) throw ConfigError("config: n_runs must be at least 1");
  if (n_episodes < 1) throw ConfigError("config: n_episodes must be at least 1");
  if (stride < 1) throw ConfigError("config: stride must be at least 1");
  if (episode_length < 1) throw ConfigError("config: episode_length must be at least 1");
  if (continuing && environment == "mountain_car") {
    throw ConfigError("config: continuing applies to tabular environments only");
  }
  if (max_episode_steps < 1) throw ConfigError("config: max_episode_steps must be at least 1");
  if (mc_episodes < 1) throw ConfigError("config: mc_episodes must be at least 1");
  if (mse_rollouts < 0 || mse_horizon < 0) throw ConfigError("config: MSE settings must be >= 0");
  if (!(radius_theta > 0.0) || !(radius_omega > 0.0)) {
    throw ConfigError("config: domain radii must be positive");
  }
  if (threads < 0) throw ConfigError("config: threads must be >= 0");
}

std::string ExperimentConfig::canonical() const {
  std::ostringstream os;
  os << "schema_version = " << schema_version << "\n";
  os << "environment = " << environment << "\n";
  os << "lambda = " << fmt17(lambda) << "\n";
  os << "gamma = " << fmt17(gamma) << "\n";
  if (!reward.empty()) {
    os << "reward =";
    for (double r : reward) os << " " << fmt17(r);
    os << "\n";
  }
  os << "schedule = " << schedule << "\n";
  os << "alpha = " << fmt17(alpha) << "\n";
  os << "beta_over_alpha = " << fmt17(beta_over_alpha) << "\n";
  os << "grid_j_min = " << grid_j_min << "\n";
  os << "grid_j_max = " << grid_j_max << "\n";
  os << "n_runs = " << n_runs << "\n";
  os << "n_episodes = " << n_episodes << "\n";
  os << "seed = " << seed << "\n";
  os << "stride = " << stride << "\n";
  os << "episode_length = " << episode_length << "\n";
  if (continuing) os << "continuing = true\n";
  os << "max_episode_steps = " << max_episode_steps << "\n";
  os << "mc_episodes = " << mc_episodes << "\n";
  os << "mse_rollouts = " << mse_rollouts << "\n";
  os << "mse_horizon = " << mse_horizon << "\n";
  os << "radius_theta = " << fmt17(radius_theta) << "\n";
  os << "radius_omega = " << fmt17(radius_omega) << "\n";
  return os.str();
}

std::string ExperimentConfig::hash() const {
  // Output location, thread count and plotting do not change results and are
  // left out of canonical(), so they do not enter the hash either.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<double> ExperimentConfig::alpha_grid() const {
  std::vector<double> g;
  for (int j = grid_j_min; j <= grid_j_max; ++j) g.push_back(0.1 * std::ldexp(1.0, j));
  return g;
}

int max_threads_from_env(int fallback) {
  if (const char* v = std::getenv("GES_MAX_THREADS")) {
    const int n = std::atoi(v);
    if (n > 0) return n;
  }
  return fallback;
}

void apply_environment_overrides(ExperimentConfig& cfg) {
  if (const char* dir = std::getenv("GES_OUTPUT_DIR"); dir && *dir) cfg.output_dir = dir;
  if (const char* v = std::getenv("GES_MAX_THREADS")) {
    const int cap = std::atoi(v);
    if (cap > 0 && (cfg.threads == 0 || cfg.threads > cap)) cfg.threads = cap;
  }
}

}  // namespace ges
