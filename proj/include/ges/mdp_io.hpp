#pragma once

#include <ges/environments.hpp>
#include <ges/mdp.hpp>

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ges {

/// Plain-text MDP document. One directive per line, '#' starts a comment:
///
///   ges-mdp 1                          header, must come first
///   n_states <n>
///   n_actions <m>
///   gamma <g>
///   lambda <l>                         optional default trace decay
///   actions <name0> <name1> ...        optional action labels
///   pair_order state-major|action-major  optional, default state-major
///   transition <s> <a> <p_0> ... <p_{n-1}>   one line per (s, a)
///   reward <s> <a> <r>                 missing entries are zero
///   policy <name> <s> <pi_0> ... <pi_{m-1}>  one line per state
///   features <p>
///   phi <s> <a> <f_0> ... <f_{p-1}>    one line per (s, a)
///   phi_max <v>                        optional declared feature bound
///   terminal <s>                       optional, repeatable
///
/// States and actions are 0-based indices.
struct MdpDocument {
  FiniteMdp<double> mdp;
  std::map<std::string, Policy<double>> policies;
  std::optional<FeatureMap<double>> features;
  std::optional<double> lambda;
  std::vector<std::string> action_names;

  const Policy<double>& policy(const std::string& name) const;
};

MdpDocument parse_mdp(std::istream& in, const std::string& source = "<stream>");
MdpDocument read_mdp_file(const std::string& path);

/// Writes `env` with policies named "target" and "behavior"; numbers carry 17
/// significant digits so a round trip is exact.
void write_mdp(std::ostream& out, const TabularExport& env, std::optional<double> lambda = {});
void write_mdp_file(const std::string& path, const TabularExport& env,
                    std::optional<double> lambda = {});

}  // namespace ges
