#pragma once

#include <limits>

#include <random>

namespace sblpn {

/// Random stream used throughout the toolkit. Every chain owns one.
using Rng = std::mt19937_64;

namespace specfun {

/// Standard normal CDF, Phi(t) = erfc(-t / sqrt 2) / 2.
double std_normal_cdf(double t);

/// 1 - Phi(t) evaluated directly through erfc, so no cancellation for large t.
double std_normal_upper_tail(double t);

/// Log of the standard normal density.
double std_normal_logpdf(double t);

/// Inverse of std_normal_cdf for p in (0, 1). Throws std::domain_error otherwise.
///
/// Accurate to a few ulps down to p = 1e-300 (Wichura's AS241 followed by one
/// Halley correction against std_normal_cdf).
double std_normal_quantile(double p);

/// Value t with std_normal_upper_tail(t) = q, without forming 1 - q.
double std_normal_quantile_upper(double q);

/// Lower and upper regularized incomplete gamma ratios, P + Q = 1.
struct GammaRatios {
  double p;
  double q;
};

/// P(z; beta) and Q(z; beta) together. The smaller of the two is computed
/// directly (series below beta + 1, Lentz continued fraction above) and the
/// larger is its complement.
GammaRatios reg_inc_gamma_pq(double beta, double z);

/// P(z; beta) = gamma(beta, z) / Gamma(beta).
double reg_inc_gamma(double beta, double z);

/// Q(z; beta) = 1 - P(z; beta).
double reg_inc_gamma_upper(double beta, double z);

/// Log density of Gamma(beta, 1) at z > 0.
double gamma_logpdf(double beta, double z);

/// Solves P(z; beta) = p. Both tails are supplied: when p > 1/2 the root is
/// found on log Q against q, so deep upper tails never see 1 - p.
/// `normal_score`, when finite, must be the standard normal quantile of p; it
/// only seeds the iteration.
double reg_inc_gamma_inv(double beta, double p, double q,
                         double normal_score = std::numeric_limits<double>::quiet_NaN());

/// Draw from Gamma(beta, 1) (Marsaglia-Tsang; shape < 1 boosted by U^{1/beta}).
double gamma_sample(double beta, Rng& rng);

}  // namespace specfun
}  // namespace sblpn
