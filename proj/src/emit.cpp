#include <ges/harness.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

namespace ges {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path + "'");
  f.precision(17);
  return f;
}

struct CellKey {
  std::string hash;
  double alpha;
  double ratio;
  bool operator<(const CellKey& o) const {
    return std::tie(hash, alpha, ratio) < std::tie(o.hash, o.alpha, o.ratio);
  }
};

struct CellStats {
  const RunRecord* first = nullptr;
  std::vector<const RunRecord*> runs;
  double mean(double (RunRecord::*metric)() const) const {
    double s = 0.0;
    for (const RunRecord* r : runs) s += (r->*metric)();
    return s / double(runs.size());
  }
};

/// Mean of a metric over the runs of one cell, aligned on recorded steps.
std::vector<std::pair<double, double>> mean_curve(const CellStats& cell,
                                                  double DiagnosticRecord<double>::*field) {
  std::map<long, std::pair<double, int>> acc;
  for (const RunRecord* r : cell.runs) {
    for (const auto& rec : r->series.records) {
      const double v = rec.*field;
      if (!std::isfinite(v)) continue;
      auto& slot = acc[rec.step];
      slot.first += v;
      slot.second += 1;
    }
  }
  std::vector<std::pair<double, double>> out;
  for (const auto& [step, s] : acc) out.emplace_back(double(step), s.first / s.second);
  return out;
}

void write_svg(const std::string& path, const std::string& title,
               const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& lines) {
  constexpr double W = 640, H = 400, L = 70, R = 20, T = 40, B = 50;
  double xmax = 1.0, ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  for (const auto& [label, pts] : lines) {
    for (const auto& [x, y] : pts) {
      xmax = std::max(xmax, x);
      if (y > 0.0) {
        ymin = std::min(ymin, std::log10(y));
        ymax = std::max(ymax, std::log10(y));
      }
    }
  }
  if (!std::isfinite(ymin)) ymin = -1.0, ymax = 0.0;
  ymin = std::floor(ymin);
  ymax = std::ceil(ymax);
  if (ymax <= ymin) ymax = ymin + 1.0;
  auto px = [&](double x) { return L + (W - L - R) * x / xmax; };
  auto py = [&](double ly) { return H - B - (H - T - B) * (ly - ymin) / (ymax - ymin); };

  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ofstream f = open_out(path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
    << "</text>\n";
  f << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  f << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  for (double ly = ymin; ly <= ymax + 1e-9; ly += 1.0) {
    f << "<text x=\"" << L - 6 << "\" y=\"" << py(ly) + 4 << "\" text-anchor=\"end\">1e"
      << int(ly) << "</text>\n";
  }
  f << "<text x=\"" << W - R << "\" y=\"" << H - B + 30 << "\" text-anchor=\"end\">step (max "
    << num(xmax) << ")</text>\n";
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const char* c = colors[i % (sizeof colors / sizeof *colors)];
    f << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : lines[i].second)
      if (y > 0.0) f << px(x) << "," << py(std::log10(y)) << " ";
    f << "\"/>\n";
    f << "<text x=\"" << L + 10 << "\" y=\"" << T + 14 * (double(i) + 1) << "\" fill=\"" << c
      << "\">" << lines[i].first << "</text>\n";
  }
  f << "</svg>\n";
}

}  // namespace

void write_step_rows(std::ostream& out, const RunRecord& rec) {
  for (const auto& r : rec.series.records) {
    out << rec.environment << "," << num(rec.lambda) << "," << num(rec.gamma) << ","
        << num(rec.alpha) << "," << num(rec.beta_over_alpha) << "," << rec.seed << "," << r.step
        << "," << num(r.mspbe) << "," << num(r.mse) << "," << num(r.D_t) << ","
        << num(r.lyapunov) << "," << (rec.diverged ? 1 : 0) << "\n";
  }
}

EmittedFiles emit_results(const std::vector<RunRecord>& records,
                          const std::vector<ExperimentConfig>& configs, const std::string& dir,
                          const EmitOptions& opt) {
  if (records.empty()) throw IoError("emit_results: no records to write");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("emit_results: cannot create '" + dir + "': " + ec.message());

  EmittedFiles files;
  files.steps_csv = dir + "/steps.csv";
  files.runs_csv = dir + "/runs.csv";
  files.summary_csv = dir + "/summary.csv";

  {
    std::ofstream f = open_out(files.steps_csv);
    f << kStepsHeader << "\n";
    for (const auto& rec : records) write_step_rows(f, rec);
  }
  {
    std::ofstream f = open_out(files.runs_csv);
    f << "config_hash,env,lambda,gamma,alpha,beta_over_alpha,seed,steps,episodes,final_mspbe,"
         "final_mse,mse_unnormalized,diverged,diverged_at,wall_time_s,theta\n";
    for (const auto& r : records) {
      f << r.config_hash << "," << r.environment << "," << num(r.lambda) << "," << num(r.gamma)
        << "," << num(r.alpha) << "," << num(r.beta_over_alpha) << "," << r.seed << ","
        << r.series.steps << "," << r.series.episodes << "," << num(r.final_mspbe()) << ","
        << num(r.final_mse()) << "," << (r.mse_unnormalized ? 1 : 0) << ","
        << (r.diverged ? 1 : 0) << "," << r.series.diverged_at << "," << num(r.wall_time_s)
        << ",";
      for (Index i = 0; i < r.theta.size(); ++i) f << (i ? " " : "") << num(r.theta(i));
      f << "\n";
    }
  }

  std::map<CellKey, CellStats> cells;
  for (const auto& r : records) {
    auto& c = cells[{r.config_hash, r.alpha, r.beta_over_alpha}];
    if (!c.first) c.first = &r;
    c.runs.push_back(&r);
  }

  struct Best {
    const CellStats* cell = nullptr;
    double value = std::numeric_limits<double>::infinity();
  };
  std::map<std::string, std::pair<Best, Best>> best;  // hash -> (mspbe, mse)
  for (const auto& [key, cell] : cells) {
    auto& b = best[key.hash];
    const double m = cell.mean(&RunRecord::final_mspbe);
    const double e = cell.mean(&RunRecord::final_mse);
    if (!b.first.cell || m < b.first.value) b.first = {&cell, m};
    if (!b.second.cell || e < b.second.value) b.second = {&cell, e};
  }
  {
    std::ofstream f = open_out(files.summary_csv);
    f << "config_hash,env,lambda,gamma,metric,alpha,beta_over_alpha,mean_final,n_seeds,n_diverged,"
         "mse_unnormalized\n";
    for (const auto& [hash, pair] : best) {
      for (const auto& [name, b] : {std::pair{"mspbe", pair.first}, std::pair{"mse", pair.second}}) {
        const RunRecord& r = *b.cell->first;
        long diverged = 0;
        for (const RunRecord* x : b.cell->runs) diverged += x->diverged ? 1 : 0;
        f << hash << "," << r.environment << "," << num(r.lambda) << "," << num(r.gamma) << ","
          << name << "," << num(r.alpha) << "," << num(r.beta_over_alpha) << "," << num(b.value)
          << "," << b.cell->runs.size() << "," << diverged << "," << (r.mse_unnormalized ? 1 : 0)
          << "\n";
      }
    }
  }

  for (const auto& cfg : configs) {
    const std::string path = dir + "/config-" + cfg.hash() + ".txt";
    std::ofstream f = open_out(path);
    f << cfg.canonical();
    files.configs.push_back(path);
  }

  if (opt.plots) {
    using Field = double DiagnosticRecord<double>::*;
    const std::pair<const char*, Field> metrics[] = {{"mspbe", &DiagnosticRecord<double>::mspbe},
                                                     {"mse", &DiagnosticRecord<double>::mse}};
    for (std::size_t m = 0; m < 2; ++m) {
      std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> lines;
      for (const auto& [hash, pair] : best) {
        const CellStats* cell = m == 0 ? pair.first.cell : pair.second.cell;
        auto curve = mean_curve(*cell, metrics[m].second);
        if (curve.empty()) continue;
        const RunRecord& r = *cell->first;
        lines.emplace_back(r.environment + " alpha=" + num(r.alpha) +
                               " beta/alpha=" + num(r.beta_over_alpha),
                           std::move(curve));
      }
      if (lines.empty()) continue;
      const std::string path = dir + "/" + metrics[m].first + ".svg";
      write_svg(path, std::string("best-cell ") + metrics[m].first + " (mean over seeds)", lines);
      files.plots.push_back(path);
    }
  }
  return files;
}

}  // namespace ges
