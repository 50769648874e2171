#pragma once

#include <utility>
#include <vector>

#include "bro/networks.hpp"
#include "bro/rng.hpp"

namespace bro::harness {

// Drops floor(n/4) values from each end of the sorted scores and averages
// the rest. Throws DomainError for n < 4 or non-finite input.
double iqm(std::vector<double> scores);

// Linear interpolation between order statistics at position q * (n - 1).
double percentile(std::vector<double> values, double q);

// Normalized scores, one row per run and one column per task.
using ScoreMatrix = Eigen::MatrixXd;

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

// Stratified bootstrap: each replicate resamples the runs of every task
// independently with replacement and takes the IQM over all resampled
// scores. Returns the central `level` percentile interval of the replicates.
Interval bootstrap_ci(const ScoreMatrix& scores, int n_boot, double level, Rng& rng);

inline constexpr int kDefaultBootstrapSamples = 2000;

// IQM of every score in the matrix.
double iqm(const ScoreMatrix& scores);

}  // namespace bro::harness
