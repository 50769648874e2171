#include "bro/harness/metrics.hpp"

#include <limits>
#include <sstream>

#include <json.hpp>

namespace bro::harness {

using Json = nlohmann::ordered_json;

void DiagnosticAccumulator::add(const DiagnosticRow& row) {
  if (row.skipped) return;
  ++sum_.updates;
  sum_.td_error += row.td_error;
  sum_.critic_loss += row.critic_loss;
  sum_.mean_q += row.mean_q;
  sum_.critic_grad_norm += row.critic_grad_norm;
  sum_.actor_grad_norm += row.actor_grad_norm;
  sum_.optimistic_actor_grad_norm += row.optimistic_actor_grad_norm;
  sum_.temperature += row.temperature;
  sum_.optimism += row.optimism;
  sum_.kl_weight += row.kl_weight;
  sum_.measured_kl += row.measured_kl;
  sum_.entropy += row.entropy;
}

DiagnosticSummary DiagnosticAccumulator::take() {
  DiagnosticSummary out = sum_;
  if (out.updates > 0) {
    const auto n = static_cast<double>(out.updates);
    out.td_error /= n;
    out.critic_loss /= n;
    out.mean_q /= n;
    out.critic_grad_norm /= n;
    out.actor_grad_norm /= n;
    out.optimistic_actor_grad_norm /= n;
    out.temperature /= n;
    out.optimism /= n;
    out.kl_weight /= n;
    out.measured_kl /= n;
    out.entropy /= n;
  }
  sum_ = {};
  return out;
}

std::string to_json_line(const MetricRecord& r) {
  Json j = Json::object();
  j["env_step"] = r.env_step;
  j["gradient_step"] = r.gradient_step;
  j["eval_return"] = r.eval_return;
  j["episode_returns"] = r.episode_returns;
  j["resets"] = r.resets;
  j["status"] = r.status;
  const DiagnosticSummary& d = r.diagnostics;
  j["updates"] = d.updates;
  j["td_error"] = d.td_error;
  j["critic_loss"] = d.critic_loss;
  j["mean_q"] = d.mean_q;
  j["critic_grad_norm"] = d.critic_grad_norm;
  j["actor_grad_norm"] = d.actor_grad_norm;
  j["optimistic_actor_grad_norm"] = d.optimistic_actor_grad_norm;
  j["temperature"] = d.temperature;
  j["optimism"] = d.optimism;
  j["kl_weight"] = d.kl_weight;
  j["measured_kl"] = d.measured_kl;
  j["entropy"] = d.entropy;
  // Non-finite diagnostics of a diverged run serialize as null.
  return j.dump();
}

namespace {

double number_or_nan(const Json& j, const char* key) {
  const Json& v = j.at(key);
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return v.get<double>();
}

}  // namespace

MetricRecord parse_metric_line(std::string_view line) {
  const Json j = Json::parse(line);
  if (!j.is_object()) throw MetricsParseError("metric line is not a JSON object");
  MetricRecord r;
  r.env_step = j.at("env_step").get<std::int64_t>();
  r.gradient_step = j.at("gradient_step").get<std::int64_t>();
  r.eval_return = number_or_nan(j, "eval_return");
  r.episode_returns = j.at("episode_returns").get<std::vector<double>>();
  r.resets = j.at("resets").get<std::vector<std::int64_t>>();
  r.status = j.at("status").get<std::string>();
  DiagnosticSummary& d = r.diagnostics;
  d.updates = j.at("updates").get<std::int64_t>();
  d.td_error = number_or_nan(j, "td_error");
  d.critic_loss = number_or_nan(j, "critic_loss");
  d.mean_q = number_or_nan(j, "mean_q");
  d.critic_grad_norm = number_or_nan(j, "critic_grad_norm");
  d.actor_grad_norm = number_or_nan(j, "actor_grad_norm");
  d.optimistic_actor_grad_norm = number_or_nan(j, "optimistic_actor_grad_norm");
  d.temperature = number_or_nan(j, "temperature");
  d.optimism = number_or_nan(j, "optimism");
  d.kl_weight = number_or_nan(j, "kl_weight");
  d.measured_kl = number_or_nan(j, "measured_kl");
  d.entropy = number_or_nan(j, "entropy");
  return r;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path)
    : out_(path, std::ios::out | std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open metrics file " + path.string());
}

void MetricsWriter::append(const MetricRecord& record) {
  out_ << to_json_line(record) << '\n';
  out_.flush();
}

std::vector<MetricRecord> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MetricsParseError(path.string() + ": cannot open metrics file");
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  std::vector<MetricRecord> records;
  std::size_t start = 0;
  int line_no = 0;
  while (start < text.size()) {
    const std::size_t end = text.find('\n', start);
    if (end == std::string::npos) break;  // partial trailing line
    ++line_no;
    const std::string_view line(text.data() + start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    try {
      records.push_back(parse_metric_line(line));
    } catch (const std::exception& e) {
      throw MetricsParseError(path.string() + ":" + std::to_string(line_no) +
                              ": malformed metrics record: " + e.what());
    }
  }
  return records;
}

}  // namespace bro::harness
