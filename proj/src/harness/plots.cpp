#include "bro/harness/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "bro/errors.hpp"
#include "bro/harness/training.hpp"

namespace bro::harness {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + "\"";
}

const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[i % (sizeof palette / sizeof palette[0])];
}

struct Aggregate {
  std::string statistic;
  double center;
  double low;
  double high;
};

Aggregate aggregate(const std::vector<double>& values, const PlotOptions& options, Rng& rng) {
  if (values.size() >= 4) {
    ScoreMatrix m(static_cast<Eigen::Index>(values.size()), 1);
    for (std::size_t i = 0; i < values.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = values[i];
    const Interval ci = bootstrap_ci(m, options.n_boot, options.level, rng);
    return {"iqm", iqm(values), ci.low, ci.high};
  }
  double sum = 0.0;
  for (double v : values) sum += v;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return {"mean", sum / static_cast<double>(values.size()), *lo, *hi};
}

// Labels in plotting order: base first, then ablation toggles in their
// canonical order, then anything else alphabetically.
std::vector<std::string> ordered_labels(const std::map<std::string, std::vector<const RunSeries*>>& groups,
                                        const std::string& base) {
  std::vector<std::string> labels;
  if (groups.count(base)) labels.push_back(base);
  for (const auto& name : ablation_toggle_names()) {
    if (name != base && groups.count(name)) labels.push_back(name);
  }
  for (const auto& [label, runs] : groups) {
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) labels.push_back(label);
  }
  return labels;
}

struct Axis {
  double lo;
  double hi;
  double pixel_lo;
  double pixel_hi;
  double map(double v) const {
    if (hi == lo) return 0.5 * (pixel_lo + pixel_hi);
    return pixel_lo + (v - lo) / (hi - lo) * (pixel_hi - pixel_lo);
  }
};

std::vector<double> ticks(double lo, double hi, int count) {
  std::vector<double> out;
  for (int i = 0; i <= count; ++i) out.push_back(lo + (hi - lo) * i / count);
  return out;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

constexpr double kWidth = 720, kHeight = 440, kLeft = 80, kRight = 170, kTop = 40, kBottom = 60;

std::string svg_header(const std::string& title) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << escape_xml(title) << "</text>\n";
  return s.str();
}

std::string curves_svg(const std::vector<CurvePoint>& points, const std::vector<std::string>& labels) {
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& p : points) {
    if (first) {
      xmin = xmax = static_cast<double>(p.env_step);
      ymin = p.low;
      ymax = p.high;
      first = false;
    }
    xmin = std::min(xmin, static_cast<double>(p.env_step));
    xmax = std::max(xmax, static_cast<double>(p.env_step));
    ymin = std::min(ymin, p.low);
    ymax = std::max(ymax, p.high);
  }
  const Axis x{xmin, xmax, kLeft, kWidth - kRight};
  const Axis y{ymin, ymax, kHeight - kBottom, kTop};

  std::ostringstream s;
  s << svg_header("Evaluation return");
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight
    << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
    << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  for (double t : ticks(xmin, xmax, 5)) {
    s << "<text x=\"" << x.map(t) << "\" y=\"" << kHeight - kBottom + 18
      << "\" text-anchor=\"middle\">" << tick_label(t) << "</text>\n";
  }
  for (double t : ticks(ymin, ymax, 5)) {
    s << "<text x=\"" << kLeft - 6 << "\" y=\"" << y.map(t) + 4 << "\" text-anchor=\"end\">"
      << tick_label(t) << "</text>\n";
  }
  s << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 15
    << "\" text-anchor=\"middle\">environment steps</text>\n";

  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::vector<const CurvePoint*> series;
    for (const auto& p : points) {
      if (p.label == labels[i]) series.push_back(&p);
    }
    if (series.empty()) continue;
    std::ostringstream band, line;
    for (const auto* p : series) band << x.map(static_cast<double>(p->env_step)) << ',' << y.map(p->high) << ' ';
    for (auto it = series.rbegin(); it != series.rend(); ++it) {
      band << x.map(static_cast<double>((*it)->env_step)) << ',' << y.map((*it)->low) << ' ';
    }
    for (const auto* p : series) line << x.map(static_cast<double>(p->env_step)) << ',' << y.map(p->center) << ' ';
    s << "<polygon points=\"" << band.str() << "\" fill=\"" << color(i) << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    s << "<polyline points=\"" << line.str() << "\" fill=\"none\" stroke=\"" << color(i)
      << "\" stroke-width=\"2\"/>\n";
    const double ly = kTop + 18.0 * static_cast<double>(i);
    s << "<rect x=\"" << kWidth - kRight + 15 << "\" y=\"" << ly << "\" width=\"12\" height=\"12\" fill=\""
      << color(i) << "\"/>\n";
    s << "<text x=\"" << kWidth - kRight + 32 << "\" y=\"" << ly + 10 << "\">"
      << escape_xml(labels[i]) << " (" << series.front()->statistic << ", n=" << series.front()->runs
      << ")</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string ablation_svg(const std::vector<AblationBar>& bars, const std::string& base) {
  double ymax = 100.0, ymin = 0.0;
  for (const auto& b : bars) {
    if (!std::isfinite(b.percent_of_base)) continue;
    ymax = std::max(ymax, b.percent_of_base);
    ymin = std::min(ymin, b.percent_of_base);
  }
  const Axis y{ymin, ymax * 1.1, kHeight - kBottom, kTop};
  const double slot = (kWidth - kLeft - 40) / static_cast<double>(bars.size());

  std::ostringstream s;
  s << svg_header("Final performance relative to " + base + " (%)");
  s << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
    << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  for (double t : ticks(ymin, ymax * 1.1, 5)) {
    s << "<text x=\"" << kLeft - 6 << "\" y=\"" << y.map(t) + 4 << "\" text-anchor=\"end\">"
      << tick_label(t) << "</text>\n";
  }
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto& b = bars[i];
    const double pct = std::isfinite(b.percent_of_base) ? b.percent_of_base : 0.0;
    const double x0 = kLeft + slot * static_cast<double>(i) + slot * 0.15;
    const double top = y.map(std::max(pct, 0.0));
    const double bottom = y.map(std::min(pct, 0.0));
    s << "<rect x=\"" << x0 << "\" y=\"" << top << "\" width=\"" << slot * 0.7 << "\" height=\""
      << bottom - top << "\" fill=\"" << (b.label == base ? "#555555" : color(i)) << "\"/>\n";
    s << "<text x=\"" << x0 + slot * 0.35 << "\" y=\"" << top - 4 << "\" text-anchor=\"middle\">"
      << tick_label(b.percent_of_base) << "</text>\n";
    s << "<text x=\"" << x0 + slot * 0.35 << "\" y=\"" << kHeight - kBottom + 18
      << "\" text-anchor=\"middle\">" << escape_xml(b.label) << "</text>\n";
  }
  s << "<line x1=\"" << kLeft << "\" y1=\"" << y.map(100.0) << "\" x2=\"" << kWidth - 40 << "\" y2=\""
    << y.map(100.0) << "\" stroke=\"black\" stroke-dasharray=\"4 3\"/>\n";
  s << "<line x1=\"" << kLeft << "\" y1=\"" << y.map(0.0) << "\" x2=\"" << kWidth - 40 << "\" y2=\""
    << y.map(0.0) << "\" stroke=\"black\"/>\n";
  s << "</svg>\n";
  return s.str();
}

// Last finite evaluation of a run; diverged runs score as the random policy.
double final_return(const RunSeries& run, const ScoreBounds& bounds) {
  if (run.records.empty() || run.records.back().status == "diverged") return bounds.random_return;
  return run.records.back().eval_return;
}

}  // namespace

std::vector<std::filesystem::path> find_metrics_files(const std::filesystem::path& runs_dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(runs_dir)) {
    throw std::runtime_error("runs directory " + runs_dir.string() + " does not exist");
  }
  for (const auto& entry : std::filesystem::recursive_directory_iterator(runs_dir)) {
    if (entry.is_regular_file() && entry.path().filename() == kMetricsFile) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<RunSeries> load_runs(const std::vector<std::filesystem::path>& metrics_files) {
  std::vector<RunSeries> runs;
  for (const auto& path : metrics_files) {
    RunSeries run;
    run.source = path;
    run.records = read_metrics(path);
    const auto config_path = path.parent_path() / kConfigFile;
    if (std::filesystem::exists(config_path)) {
      run.config = load_run_config(config_path);
      run.label = run.config->label;
    } else {
      run.label = path.parent_path().filename().string();
    }
    runs.push_back(std::move(run));
  }
  return runs;
}

PlotReport emit_plots(const std::vector<std::filesystem::path>& metrics_files,
                      const std::filesystem::path& out_dir, const PlotOptions& options) {
  require_domain(!metrics_files.empty(), "emit_plots needs at least one metrics file");
  const std::vector<RunSeries> runs = load_runs(metrics_files);
  std::filesystem::create_directories(out_dir);

  std::map<std::string, std::vector<const RunSeries*>> groups;
  for (const auto& run : runs) groups[run.label].push_back(&run);
  const std::vector<std::string> labels = ordered_labels(groups, options.base_label);

  PlotReport report;
  Rng rng(options.seed);

  // Learning curves over the env steps every run of a label has evaluated.
  for (const auto& label : labels) {
    const auto& members = groups.at(label);
    std::map<std::int64_t, std::vector<double>> by_step;
    for (const RunSeries* run : members) {
      for (const auto& r : run->records) {
        if (r.status == "ok" && std::isfinite(r.eval_return)) by_step[r.env_step].push_back(r.eval_return);
      }
    }
    for (const auto& [step, values] : by_step) {
      if (values.size() != members.size()) continue;
      const Aggregate a = aggregate(values, options, rng);
      report.curves.push_back({label, step, static_cast<int>(values.size()), a.statistic, a.center,
                               a.low, a.high});
    }
  }

  std::ostringstream csv;
  csv << "label,env_step,runs,statistic,center,low,high\n";
  for (const auto& p : report.curves) {
    csv << csv_field(p.label) << ',' << p.env_step << ',' << p.runs << ',' << p.statistic << ','
        << num(p.center) << ',' << num(p.low) << ',' << num(p.high) << '\n';
  }
  write_text(out_dir / "curves.csv", csv.str());
  write_text(out_dir / "learning_curves.svg", curves_svg(report.curves, labels));
  report.files.push_back(out_dir / "curves.csv");
  report.files.push_back(out_dir / "learning_curves.svg");

  // Ablation bars: only when the base and at least one other label exist.
  if (groups.count(options.base_label) && labels.size() > 1) {
    double base_score = 0.0;
    for (const auto& label : labels) {
      const auto& members = groups.at(label);
      std::vector<double> finals, normalized;
      for (const RunSeries* run : members) {
        if (!run->config) {
          throw std::runtime_error("ablation chart needs " + std::string(kConfigFile) + " beside " +
                                   run->source.string());
        }
        const ScoreBounds bounds = score_bounds(run->config->env);
        finals.push_back(final_return(*run, bounds));
        normalized.push_back(normalize_score(bounds, finals.back()));
      }
      AblationBar bar;
      bar.label = label;
      bar.runs = static_cast<int>(members.size());
      bar.final_return = aggregate(finals, options, rng).center;
      bar.normalized_score = aggregate(normalized, options, rng).center;
      if (label == options.base_label) base_score = bar.normalized_score;
      report.bars.push_back(bar);
    }
    for (auto& bar : report.bars) {
      bar.percent_of_base = base_score != 0.0 ? 100.0 * bar.normalized_score / base_score
                                              : std::numeric_limits<double>::quiet_NaN();
    }
    std::ostringstream bars;
    bars << "label,runs,final_return,normalized_score,percent_of_base\n";
    for (const auto& b : report.bars) {
      bars << csv_field(b.label) << ',' << b.runs << ',' << num(b.final_return) << ','
           << num(b.normalized_score) << ',' << num(b.percent_of_base) << '\n';
    }
    write_text(out_dir / "ablation.csv", bars.str());
    write_text(out_dir / "ablation.svg", ablation_svg(report.bars, options.base_label));
    report.files.push_back(out_dir / "ablation.csv");
    report.files.push_back(out_dir / "ablation.svg");
  }
  return report;
}

}  // namespace bro::harness
