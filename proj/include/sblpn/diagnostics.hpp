#pragma once

#include <Eigen/Dense>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sblpn/samplers.hpp"

namespace sblpn {

/// The pooled within-chain covariance is singular.
class RankDeficientError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Brooks-Gelman multivariate potential scale reduction factor.
/// Needs >= 2 chains of equal shape with rows >= cols + 2.
double mpsrf(const std::vector<Eigen::MatrixXd>& chains);
double mpsrf(const ChainSet& cs);

struct EssEstimate {
  double ess = 0.0;
  bool degenerate = false;  // constant input; ess set to N
};

/// Geyer initial monotone sequence estimator for one series (length >= 10).
EssEstimate ess_1d(const Eigen::Ref<const Eigen::VectorXd>& series);

/// Per-column ESS, OpenMP-parallel over columns.
std::vector<EssEstimate> ess_per_coordinate(const Eigen::MatrixXd& samples);
std::vector<EssEstimate> ess_per_coordinate_serial(const Eigen::MatrixXd& samples);

enum class EssAggregate { min, mean };

double ess(const Eigen::MatrixXd& samples, EssAggregate agg);

/// Per coordinate, the sum of the per-chain ESS values.
std::vector<EssEstimate> ess_chainset(const ChainSet& cs);

struct QuantileBand {
  Eigen::VectorXd mean;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

/// Column means and lo/hi quantiles with linear interpolation between order
/// statistics (Hyndman-Fan type 7). Requires 0 <= lo < hi <= 1.
QuantileBand quantile_band(const Eigen::MatrixXd& samples, double lo, double hi);

/// Rows of all chains stacked.
Eigen::MatrixXd pooled_samples(const ChainSet& cs);

struct RunSummary {
  double time_s = 0.0;
  std::optional<double> mpsrf;
  std::optional<double> mpsrf_minus1_times_time;
  std::vector<Eigen::Index> mpsrf_coordinates;  // empty when all coordinates were used
  double ess_min = 0.0;
  Eigen::Index ess_min_coordinate = 0;
  double ess_per_second = 0.0;
  int degenerate_coordinates = 0;
  std::vector<double> accept_rates;
  std::vector<double> post_freeze_accept;
  std::vector<std::string> warnings;
};

/// Table-style metrics for a finished run that took `time_s` seconds of sampling.
/// When rows < dim + 2, MPSRF uses a seeded random subset of rows / 2 coordinates.
/// An MPSRF failure becomes a warning and leaves the MPSRF fields empty.
RunSummary summarize(const ChainSet& cs, double time_s);

}  // namespace sblpn
