#pragma once

#include <Eigen/Dense>
#include <array>
#include <limits>
#include <string>

#include "sblpn/specfun.hpp"

namespace sblpn {

/// Generalized gamma hyper-prior GG(r, beta, theta_scale) with density
/// |r| / Gamma(beta) / theta_scale * (t / theta_scale)^(r beta - 1) exp(-(t / theta_scale)^r).
struct GGParams {
  double r = 1.0;
  double beta = 1.0;
  double theta_scale = 1.0;

  /// Throws std::invalid_argument unless r != 0, beta > 0, theta_scale > 0.
  void validate() const;
};

/// The four hyper-prior settings commonly used with SBL, indexed 0..3 for
/// r = 1, 1/2, -1/2, -1.
inline constexpr std::array<GGParams, 4> kGGPresets{{
    {1.0, 1.501, 5e-2},
    {0.5, 3.0918, 5.9323e-3},
    {-0.5, 2.0165, 1.2583e-3},
    {-1.0, 1.0017, 1.2308e-4},
}};

/// Preset lookup by power r in {1, 0.5, -0.5, -1}. Throws std::invalid_argument otherwise.
GGParams gg_preset(double r);

/// State in original coordinates: signal x and per-coordinate variances theta.
struct HierPoint {
  Eigen::VectorXd x;
  Eigen::VectorXd theta;

  Eigen::Index size() const { return x.size(); }
};

/// Normalized log density of GG(p) at theta; -inf for theta <= 0.
double gg_logpdf(double theta, const GGParams& p);

/// d/dtheta of gg_logpdf.
double gg_logpdf_deriv(double theta, const GGParams& p);

/// CDF of GG(p). Throws std::domain_error for theta <= 0.
double gg_cdf(double theta, const GGParams& p);

/// 1 - gg_cdf, evaluated from the complementary gamma ratio.
double gg_ccdf(double theta, const GGParams& p);

/// Quantile of GG(p) for z in (0, 1). Throws std::domain_error otherwise.
double gg_quantile(double z, const GGParams& p);

/// Quantile given both the lower tail probability and its complement.
/// `normal_score` as in specfun::reg_inc_gamma_inv, for `lower`.
double gg_quantile(double lower, double upper, const GGParams& p,
                   double normal_score = std::numeric_limits<double>::quiet_NaN());

double gg_sample(const GGParams& p, Rng& rng);

/// Mode of GG(p): max{0, theta_scale ((r beta - 1) / r)^(1 / r)}.
double gg_mode(const GGParams& p);

/// Joint log density sum_i [log N(x_i | 0, theta_i) + gg_logpdf(theta_i)], with
/// all normalizing constants. -inf when any theta_i <= 0.
double sbl_prior_logpdf(const HierPoint& s, const GGParams& p);

/// Gradient of sbl_prior_logpdf with respect to (x, theta).
HierPoint sbl_prior_grad(const HierPoint& s, const GGParams& p);

/// theta_i iid GG(p), x_i | theta_i ~ N(0, theta_i).
HierPoint sbl_prior_sample(Eigen::Index n, const GGParams& p, Rng& rng);

std::string to_string(const GGParams& p);

}  // namespace sblpn
