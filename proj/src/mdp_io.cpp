#include <ges/mdp_io.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

namespace ges {

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class LineError {
 public:
  LineError(std::string source, long line) : source_(std::move(source)), line_(line) {}
  [[noreturn]] void fail(const std::string& what) const {
    throw IoError(source_ + ":" + std::to_string(line_) + ": " + what);
  }

 private:
  std::string source_;
  long line_;
};

template <typename T>
T take(std::istringstream& is, const LineError& err, const char* what) {
  T v{};
  if (!(is >> v)) err.fail(std::string("expected ") + what);
  return v;
}

void expect_end(std::istringstream& is, const LineError& err) {
  std::string extra;
  if (is >> extra) err.fail("unexpected trailing token '" + extra + "'");
}

Index take_index(std::istringstream& is, const LineError& err, const char* what, Index bound) {
  const long v = take<long>(is, err, what);
  if (v < 0 || v >= bound) err.fail(std::string(what) + " " + std::to_string(v) + " out of range");
  return v;
}

}  // namespace

const Policy<double>& MdpDocument::policy(const std::string& name) const {
  auto it = policies.find(name);
  if (it == policies.end()) throw IoError("MDP document has no policy named '" + name + "'");
  return it->second;
}

MdpDocument parse_mdp(std::istream& in, const std::string& source) {
  long n_states = -1, n_actions = -1, n_features = -1;
  double gamma = -1.0;
  std::optional<double> lambda, phi_max;
  PairOrder order = PairOrder::StateMajor;
  std::vector<std::string> action_names;
  std::vector<MatrixX<double>> kernel;
  std::vector<std::vector<bool>> kernel_seen;
  MatrixX<double> reward, phi;
  std::vector<bool> phi_seen;
  std::vector<bool> terminal;
  std::map<std::string, MatrixX<double>> policies;
  std::map<std::string, std::vector<bool>> policy_seen;
  bool header = false;

  auto sized = [&](const LineError& err) {
    if (n_states <= 0 || n_actions <= 0) err.fail("n_states and n_actions must precede this line");
    if (kernel.empty()) {
      kernel.assign(static_cast<std::size_t>(n_actions), MatrixX<double>::Zero(n_states, n_states));
      kernel_seen.assign(static_cast<std::size_t>(n_actions),
                         std::vector<bool>(static_cast<std::size_t>(n_states), false));
      reward = MatrixX<double>::Zero(n_states, n_actions);
      terminal.assign(static_cast<std::size_t>(n_states), false);
    }
  };

  std::string raw;
  long lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const LineError err(source, lineno);
    if (auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream is(raw);
    std::string key;
    if (!(is >> key)) continue;
    if (!header) {
      if (key != "ges-mdp") err.fail("missing 'ges-mdp 1' header");
      if (take<int>(is, err, "format version") != 1) err.fail("unsupported format version");
      expect_end(is, err);
      header = true;
      continue;
    }
    if (key == "n_states") {
      n_states = take<long>(is, err, "state count");
      if (n_states <= 0) err.fail("n_states must be positive");
    } else if (key == "n_actions") {
      n_actions = take<long>(is, err, "action count");
      if (n_actions <= 0) err.fail("n_actions must be positive");
    } else if (key == "gamma") {
      gamma = take<double>(is, err, "discount");
    } else if (key == "lambda") {
      lambda = take<double>(is, err, "trace decay");
    } else if (key == "actions") {
      std::string name;
      while (is >> name) action_names.push_back(name);
      continue;
    } else if (key == "pair_order") {
      const auto v = take<std::string>(is, err, "pair order");
      if (v == "state-major") order = PairOrder::StateMajor;
      else if (v == "action-major") order = PairOrder::ActionMajor;
      else err.fail("pair_order must be state-major or action-major");
    } else if (key == "transition") {
      sized(err);
      const Index s = take_index(is, err, "state", n_states);
      const Index a = take_index(is, err, "action", n_actions);
      for (Index s2 = 0; s2 < n_states; ++s2)
        kernel[static_cast<std::size_t>(a)](s, s2) = take<double>(is, err, "probability");
      kernel_seen[static_cast<std::size_t>(a)][static_cast<std::size_t>(s)] = true;
    } else if (key == "reward") {
      sized(err);
      const Index s = take_index(is, err, "state", n_states);
      const Index a = take_index(is, err, "action", n_actions);
      reward(s, a) = take<double>(is, err, "reward");
    } else if (key == "policy") {
      sized(err);
      const auto name = take<std::string>(is, err, "policy name");
      auto& table = policies[name];
      auto& seen = policy_seen[name];
      if (table.size() == 0) {
        table = MatrixX<double>::Zero(n_states, n_actions);
        seen.assign(static_cast<std::size_t>(n_states), false);
      }
      const Index s = take_index(is, err, "state", n_states);
      for (Index a = 0; a < n_actions; ++a) table(s, a) = take<double>(is, err, "probability");
      seen[static_cast<std::size_t>(s)] = true;
    } else if (key == "features") {
      sized(err);
      n_features = take<long>(is, err, "feature dimension");
      if (n_features <= 0) err.fail("features must be positive");
      phi = MatrixX<double>::Zero(n_states * n_actions, n_features);
      phi_seen.assign(static_cast<std::size_t>(n_states * n_actions), false);
    } else if (key == "phi") {
      if (n_features <= 0) err.fail("'features <p>' must precede phi lines");
      const Index s = take_index(is, err, "state", n_states);
      const Index a = take_index(is, err, "action", n_actions);
      const Index row = PairIndex(n_states, n_actions, order)(s, a);
      for (Index j = 0; j < n_features; ++j) phi(row, j) = take<double>(is, err, "feature value");
      phi_seen[static_cast<std::size_t>(row)] = true;
    } else if (key == "phi_max") {
      phi_max = take<double>(is, err, "feature bound");
    } else if (key == "terminal") {
      sized(err);
      terminal[static_cast<std::size_t>(take_index(is, err, "state", n_states))] = true;
    } else {
      err.fail("unknown directive '" + key + "'");
    }
    expect_end(is, err);
  }

  if (!header) throw IoError(source + ": empty document");
  if (kernel.empty()) throw IoError(source + ": no transition lines");
  for (std::size_t a = 0; a < kernel_seen.size(); ++a)
    for (std::size_t s = 0; s < kernel_seen[a].size(); ++s)
      if (!kernel_seen[a][s])
        throw IoError(source + ": missing transition for state " + std::to_string(s) + " action " +
                      std::to_string(a));
  if (gamma < 0.0) throw IoError(source + ": missing gamma");
  if (!action_names.empty() && static_cast<long>(action_names.size()) != n_actions)
    throw IoError(source + ": 'actions' lists the wrong number of names");

  MdpDocument doc{FiniteMdp<double>(std::move(kernel), std::move(reward), gamma, order, terminal),
                  {}, std::nullopt, lambda, action_names};
  for (auto& [name, table] : policies) {
    for (bool ok : policy_seen[name])
      if (!ok) throw IoError(source + ": policy '" + name + "' does not cover every state");
    doc.policies.emplace(name, Policy<double>(table));
  }
  if (n_features > 0) {
    for (bool ok : phi_seen)
      if (!ok) throw IoError(source + ": phi is missing a state-action row");
    doc.features.emplace(phi, doc.mdp.pairs(), phi_max.value_or(-1.0));
  }
  return doc;
}

MdpDocument read_mdp_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open MDP file '" + path + "'");
  return parse_mdp(in, path);
}

void write_mdp(std::ostream& out, const TabularExport& env, std::optional<double> lambda) {
  const auto& mdp = env.mdp;
  out << "ges-mdp 1\n";
  out << "# " << env.name << "\n";
  out << "n_states " << mdp.n_states() << "\n";
  out << "n_actions " << mdp.n_actions() << "\n";
  out << "gamma " << fmt17(mdp.gamma()) << "\n";
  if (lambda) out << "lambda " << fmt17(*lambda) << "\n";
  out << "pair_order " << to_string(mdp.pairs().order()) << "\n";
  for (Index s = 0; s < mdp.n_states(); ++s) {
    for (Index a = 0; a < mdp.n_actions(); ++a) {
      out << "transition " << s << " " << a;
      for (Index s2 = 0; s2 < mdp.n_states(); ++s2) out << " " << fmt17(mdp.p(s, a, s2));
      out << "\n";
    }
  }
  for (Index s = 0; s < mdp.n_states(); ++s)
    for (Index a = 0; a < mdp.n_actions(); ++a)
      out << "reward " << s << " " << a << " " << fmt17(mdp.reward(s, a)) << "\n";
  for (const auto& [name, pol] : {std::pair{"target", &env.pi}, std::pair{"behavior", &env.mu}}) {
    for (Index s = 0; s < mdp.n_states(); ++s) {
      out << "policy " << name << " " << s;
      for (Index a = 0; a < mdp.n_actions(); ++a) out << " " << fmt17((*pol)(s, a));
      out << "\n";
    }
  }
  out << "features " << env.features.dim() << "\n";
  out << "phi_max " << fmt17(env.features.phi_max()) << "\n";
  for (Index s = 0; s < mdp.n_states(); ++s) {
    for (Index a = 0; a < mdp.n_actions(); ++a) {
      out << "phi " << s << " " << a;
      const VectorX<double> f = env.features(s, a);
      for (Index j = 0; j < f.size(); ++j) out << " " << fmt17(f(j));
      out << "\n";
    }
  }
  for (Index s = 0; s < mdp.n_states(); ++s)
    if (mdp.terminal(s)) out << "terminal " << s << "\n";
}

void write_mdp_file(const std::string& path, const TabularExport& env, std::optional<double> lambda) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write MDP file '" + path + "'");
  write_mdp(out, env, lambda);
  if (!out) throw IoError("error while writing '" + path + "'");
}

}  // namespace ges
