#include <ges/learners.hpp>

#include <cmath>

namespace ges {

const char* to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::Constant: return "constant";
    case ScheduleKind::InverseSqrt: return "inverse_sqrt";
    case ScheduleKind::Theorem2: return "theorem2";
    case ScheduleKind::AppendixE: return "appendix_e";
  }
  return "unknown";
}

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "constant") return ScheduleKind::Constant;
  if (name == "inverse_sqrt" || name == "inverse-sqrt") return ScheduleKind::InverseSqrt;
  if (name == "theorem2") return ScheduleKind::Theorem2;
  if (name == "appendix_e" || name == "appendixE") return ScheduleKind::AppendixE;
  throw ConfigError("unknown step-size schedule '" + name + "'");
}

std::pair<double, double> StepSizeSchedule::operator()(long t) const {
  if (t < 1) throw ConfigError("step-size schedules are indexed from t = 1");
  switch (kind) {
    case ScheduleKind::Constant:
    case ScheduleKind::Theorem2:
      return {alpha0, beta0};
    case ScheduleKind::InverseSqrt: {
      const double s = std::sqrt(double(t));
      return {alpha0 / s, beta0 / s};
    }
    case ScheduleKind::AppendixE: {
      const double a = 2.0 / (C * std::sqrt(5.0 * double(t)));
      return {a, a};
    }
  }
  return {alpha0, beta0};
}

StepSizeSchedule make_schedule(ScheduleKind kind, const ScheduleParams& params) {
  StepSizeSchedule s;
  s.kind = kind;
  switch (kind) {
    case ScheduleKind::Constant:
    case ScheduleKind::InverseSqrt: {
      if (!params.alpha) throw ConfigError("make_schedule: alpha is required");
      s.alpha0 = *params.alpha;
      if (params.beta) {
        s.beta0 = *params.beta;
      } else if (params.beta_over_alpha) {
        s.beta0 = *params.beta_over_alpha * s.alpha0;
      } else {
        throw ConfigError("make_schedule: beta or beta_over_alpha is required");
      }
      break;
    }
    case ScheduleKind::Theorem2:
      if (!params.rates) throw ConfigError("make_schedule: theorem2 schedule needs rate constants");
      s.alpha0 = params.rates->alpha_star;
      s.beta0 = params.rates->beta_star;
      break;
    case ScheduleKind::AppendixE:
      if (!params.C) throw ConfigError("make_schedule: appendix_e schedule needs the constant C");
      s.C = *params.C;
      if (!(s.C > 0.0)) throw ConfigError("make_schedule: C must be positive");
      s.alpha0 = s.beta0 = 2.0 / (s.C * std::sqrt(5.0));
      break;
  }
  if (!(s.alpha0 > 0.0) || !(s.beta0 > 0.0)) {
    throw ConfigError("make_schedule: step sizes must be strictly positive");
  }
  s.ratio = s.beta0 / s.alpha0;
  return s;
}

double appendix_e_constant(Index p, double gamma, double lambda, const BoundInputs& in,
                           double diam_theta, double diam_omega) {
  const double decay = gamma * lambda * in.rho_max;
  if (!(decay < 1.0)) {
    throw ConfigError("appendix_e_constant: gamma * lambda * rho_max must be below 1");
  }
  const double pd = double(p);
  const double C_M = pd * std::sqrt(pd) * in.phi_max * in.phi_max;
  const double C_e = in.phi_max / (1.0 - decay);
  const double C_b = in.r_max * C_e;
  const double C_A = (1.0 + gamma) * C_e * in.phi_max;
  const double dt2 = diam_theta * diam_theta;
  const double dw2 = diam_omega * diam_omega;
  const double c1 = C_b * C_b + C_A * C_A * dt2 + C_M * C_M * dw2;
  const double c2 = C_A * C_A * dw2;
  return 4.0 * dw2 * c1 + dt2 * c2;
}

}  // namespace ges
