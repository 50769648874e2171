#include "bro/harness/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bro/errors.hpp"

namespace bro::harness {

double iqm(std::vector<double> scores) {
  const std::size_t n = scores.size();
  require_domain(n >= 4, "iqm needs at least 4 scores");
  require_domain(std::all_of(scores.begin(), scores.end(), [](double v) { return std::isfinite(v); }),
                 "iqm scores must be finite");
  std::sort(scores.begin(), scores.end());
  const std::size_t trim = n / 4;
  const double sum = std::accumulate(scores.begin() + trim, scores.end() - trim, 0.0);
  return sum / static_cast<double>(n - 2 * trim);
}

double iqm(const ScoreMatrix& scores) {
  return iqm(std::vector<double>(scores.data(), scores.data() + scores.size()));
}

double percentile(std::vector<double> values, double q) {
  require_domain(!values.empty(), "percentile of an empty set");
  require_domain(q >= 0.0 && q <= 1.0, "percentile q must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

Interval bootstrap_ci(const ScoreMatrix& scores, int n_boot, double level, Rng& rng) {
  const Eigen::Index runs = scores.rows();
  const Eigen::Index tasks = scores.cols();
  require_domain(runs >= 2 && tasks >= 1, "bootstrap_ci needs at least 2 runs and 1 task");
  require_domain(runs * tasks >= 4, "bootstrap_ci needs at least 4 scores for the IQM");
  require_domain(scores.allFinite(), "bootstrap_ci scores must be finite");
  require_domain(n_boot >= 1, "n_boot must be >= 1");
  require_domain(level > 0.0 && level < 1.0, "level must lie in (0, 1)");

  std::vector<double> replicates(static_cast<std::size_t>(n_boot));
  std::vector<double> sample(static_cast<std::size_t>(runs * tasks));
  for (auto& rep : replicates) {
    std::size_t i = 0;
    for (Eigen::Index t = 0; t < tasks; ++t) {
      for (Eigen::Index r = 0; r < runs; ++r) {
        sample[i++] = scores(static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(runs))), t);
      }
    }
    rep = iqm(sample);
  }
  const double tail = 0.5 * (1.0 - level);
  return {percentile(replicates, tail), percentile(replicates, 1.0 - tail)};
}

}  // namespace bro::harness
