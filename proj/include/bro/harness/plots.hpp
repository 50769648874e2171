#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bro/harness/config.hpp"
#include "bro/harness/metrics.hpp"
#include "bro/harness/stats.hpp"

namespace bro::harness {

struct RunSeries {
  std::string label;
  std::filesystem::path source;
  // From config.json beside the metrics file, when present.
  std::optional<RunConfig> config;
  std::vector<MetricRecord> records;
};

// Every metrics.jsonl below runs_dir, sorted by path.
std::vector<std::filesystem::path> find_metrics_files(const std::filesystem::path& runs_dir);
// Runs are labelled by their config's label, or the parent directory name.
std::vector<RunSeries> load_runs(const std::vector<std::filesystem::path>& metrics_files);

struct CurvePoint {
  std::string label;
  std::int64_t env_step = 0;
  int runs = 0;
  // "iqm" with a bootstrap interval for >= 4 runs, else "mean" with min/max.
  std::string statistic;
  double center = 0.0;
  double low = 0.0;
  double high = 0.0;
};

struct AblationBar {
  std::string label;
  int runs = 0;
  // IQM (or mean below 4 runs) of each run's last evaluation.
  double final_return = 0.0;
  double normalized_score = 0.0;
  double percent_of_base = 0.0;
};

struct PlotOptions {
  std::string base_label = "bro";
  int n_boot = kDefaultBootstrapSamples;
  double level = 0.95;
  std::uint64_t seed = 0;
};

struct PlotReport {
  std::vector<CurvePoint> curves;
  std::vector<AblationBar> bars;
  std::vector<std::filesystem::path> files;
};

// Writes learning_curves.svg + curves.csv, and when a run labelled
// base_label is present alongside other labels, ablation.svg + ablation.csv
// with each label's final normalized score as a percent of the base.
// Diverged runs count as a random-policy score. Throws MetricsParseError
// naming the offending file.
PlotReport emit_plots(const std::vector<std::filesystem::path>& metrics_files,
                      const std::filesystem::path& out_dir, const PlotOptions& options = {});

}  // namespace bro::harness
