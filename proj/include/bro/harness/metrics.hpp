#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bro/agent.hpp"

namespace bro::harness {

class MetricsParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Means of the per-update diagnostics since the previous record.
struct DiagnosticSummary {
  std::int64_t updates = 0;
  double td_error = 0.0;
  double critic_loss = 0.0;
  double mean_q = 0.0;
  double critic_grad_norm = 0.0;
  double actor_grad_norm = 0.0;
  double optimistic_actor_grad_norm = 0.0;
  double temperature = 0.0;
  double optimism = 0.0;
  double kl_weight = 0.0;
  double measured_kl = 0.0;
  double entropy = 0.0;

  bool operator==(const DiagnosticSummary&) const = default;
};

class DiagnosticAccumulator {
 public:
  void add(const DiagnosticRow& row);
  // Returns the running means and starts a new window.
  DiagnosticSummary take();

 private:
  DiagnosticSummary sum_;
};

struct MetricRecord {
  std::int64_t env_step = 0;
  std::int64_t gradient_step = 0;
  double eval_return = 0.0;
  std::vector<double> episode_returns;
  DiagnosticSummary diagnostics;
  // Scheduled resets applied since the previous record.
  std::vector<std::int64_t> resets;
  // "ok" or "diverged".
  std::string status = "ok";

  bool operator==(const MetricRecord&) const = default;
};

// One JSON object per line, fixed key order:
//   env_step, gradient_step, eval_return, episode_returns, resets, status,
//   updates, td_error, critic_loss, mean_q, critic_grad_norm, actor_grad_norm,
//   optimistic_actor_grad_norm, temperature, optimism, kl_weight, measured_kl, entropy
std::string to_json_line(const MetricRecord& record);
MetricRecord parse_metric_line(std::string_view line);

// Append-only writer; every record is flushed as a complete line so any
// prefix of the file stays parseable.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void append(const MetricRecord& record);

 private:
  std::ofstream out_;
};

// Reads every complete line. A trailing partial line (no newline, as left by
// an interrupted write) is ignored; a malformed complete line raises
// MetricsParseError naming the file and line number.
std::vector<MetricRecord> read_metrics(const std::filesystem::path& path);

}  // namespace bro::harness
