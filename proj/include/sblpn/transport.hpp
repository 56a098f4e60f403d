#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "sblpn/prior.hpp"

namespace sblpn {

/// Reference coordinates (u, tau); standard normal under the prior.
struct RefPoint {
  Eigen::VectorXd u;
  Eigen::VectorXd tau;

  Eigen::Index size() const { return u.size(); }
};

/// |tau| beyond this is clamped: the normal tails underflow there.
inline constexpr double kTauMax = 37.0;

/// First component of the prior-normalizing map, Phi^{-1}(GG_cdf(theta)).
/// Evaluated from whichever GG tail is smaller so both tails stay accurate.
double s_theta(double theta, const GGParams& p);

/// Inverse of s_theta. tau is clamped to [-kTauMax, kTauMax] and the result
/// to the positive normal doubles, so the value is never 0 or inf.
double t_tau(double tau, const GGParams& p);

/// Naive t_tau: GG quantile of Phi(tau). Loses the upper tail once Phi rounds to 1.
/// Kept for comparison only.
double t_tau_naive(double tau, const GGParams& p);

/// d t_tau / d tau = phi(tau) / pi_theta(t_tau(tau)).
double t_tau_deriv(double tau, const GGParams& p);

/// x / sqrt(theta).
double s_cond(double x, double theta);

/// u * sqrt(t_tau(tau)).
double t_cond(double u, double tau, const GGParams& p);

RefPoint S_map(const HierPoint& s, const GGParams& p);
HierPoint T_map(const RefPoint& rp, const GGParams& p);

/// log |det grad S| at s, so that
/// sbl_prior_logpdf(s) = log phi(S(s)) + log_det_jac_S(s).
double log_det_jac_S(const HierPoint& s, const GGParams& p);

/// t_tau tabulated for one GGParams: cubic Hermite interpolation of
/// log t_tau on a uniform tau grid with exact nodal slopes. Relative error
/// below 1e-12 on [-kTauMax, kTauMax] at the default spacing. Immutable after
/// construction, so it can be shared between threads.
class TTauTable {
 public:
  explicit TTauTable(const GGParams& p, double spacing = 1.0 / 512);

  const GGParams& params() const { return p_; }
  /// Same clamping as t_tau.
  double theta(double tau) const;
  /// Also writes d theta / d tau of the interpolant.
  double theta(double tau, double& dtheta) const;
  /// T_map with the tabulated first component.
  HierPoint T_map(const RefPoint& rp) const;

 private:
  GGParams p_;
  double h_;
  std::vector<double> logt_;   // log t_tau at the nodes
  std::vector<double> dlogt_;  // d log t_tau / d tau at the nodes
};

/// Elementwise s_theta / t_tau over contiguous buffers, OpenMP-parallel.
void s_theta_batch(std::span<const double> theta, std::span<double> tau, const GGParams& p);
void t_tau_batch(std::span<const double> tau, std::span<double> theta, const GGParams& p);

/// Single-threaded references for the batch kernels.
void s_theta_batch_serial(std::span<const double> theta, std::span<double> tau,
                          const GGParams& p);
void t_tau_batch_serial(std::span<const double> tau, std::span<double> theta, const GGParams& p);

}  // namespace sblpn
