#include "sblpn/prior.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "sblpn/random.hpp"

namespace sblpn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kHalfLog2Pi = 0.91893853320467274178;

// (theta / scale)^r, computed in log space.
double scaled_power(double theta, const GGParams& p) {
  return std::exp(p.r * (std::log(theta) - std::log(p.theta_scale)));
}

}  // namespace

void GGParams::validate() const {
  if (!(r != 0.0 && std::isfinite(r))) throw std::invalid_argument("GGParams: r must be nonzero");
  if (!(beta > 0.0)) throw std::invalid_argument("GGParams: beta must be positive");
  if (!(theta_scale > 0.0)) throw std::invalid_argument("GGParams: theta_scale must be positive");
}

GGParams gg_preset(double r) {
  for (const auto& p : kGGPresets) {
    if (p.r == r) return p;
  }
  throw std::invalid_argument("no hyper-prior preset for r = " + std::to_string(r));
}

double gg_logpdf(double theta, const GGParams& p) {
  if (!(theta > 0.0)) return -kInf;
  return std::log(std::fabs(p.r)) - std::lgamma(p.beta) - p.r * p.beta * std::log(p.theta_scale) +
         (p.r * p.beta - 1.0) * std::log(theta) - scaled_power(theta, p);
}

double gg_logpdf_deriv(double theta, const GGParams& p) {
  return (p.r * p.beta - 1.0) / theta - p.r * scaled_power(theta, p) / theta;
}

double gg_cdf(double theta, const GGParams& p) {
  if (!(theta > 0.0)) throw std::domain_error("gg_cdf: theta must be positive");
  const auto pq = specfun::reg_inc_gamma_pq(p.beta, scaled_power(theta, p));
  return p.r > 0 ? pq.p : pq.q;
}

double gg_ccdf(double theta, const GGParams& p) {
  if (!(theta > 0.0)) throw std::domain_error("gg_ccdf: theta must be positive");
  const auto pq = specfun::reg_inc_gamma_pq(p.beta, scaled_power(theta, p));
  return p.r > 0 ? pq.q : pq.p;
}

double gg_quantile(double z, const GGParams& p) {
  if (!(z > 0.0 && z < 1.0)) throw std::domain_error("gg_quantile: z must lie in (0, 1)");
  return gg_quantile(z, 1.0 - z, p);
}

double gg_quantile(double lower, double upper, const GGParams& p, double normal_score) {
  // For r < 0 the map theta -> (theta / scale)^r is decreasing, so the tails swap.
  const double g = p.r > 0 ? specfun::reg_inc_gamma_inv(p.beta, lower, upper, normal_score)
                           : specfun::reg_inc_gamma_inv(p.beta, upper, lower, -normal_score);
  return std::exp(std::log(p.theta_scale) + std::log(g) / p.r);
}

double gg_sample(const GGParams& p, Rng& rng) {
  const double g = specfun::gamma_sample(p.beta, rng);
  return std::exp(std::log(p.theta_scale) + std::log(g) / p.r);
}

double gg_mode(const GGParams& p) {
  const double a = (p.r * p.beta - 1.0) / p.r;
  if (a <= 0.0) return 0.0;
  return p.theta_scale * std::pow(a, 1.0 / p.r);
}

double sbl_prior_logpdf(const HierPoint& s, const GGParams& p) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double t = s.theta[i];
    if (!(t > 0.0)) return -kInf;
    acc += -kHalfLog2Pi - 0.5 * std::log(t) - s.x[i] * s.x[i] / (2.0 * t) + gg_logpdf(t, p);
  }
  return acc;
}

HierPoint sbl_prior_grad(const HierPoint& s, const GGParams& p) {
  HierPoint g{Eigen::VectorXd(s.size()), Eigen::VectorXd(s.size())};
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double t = s.theta[i];
    if (!(t > 0.0)) throw std::domain_error("sbl_prior_grad: theta must be positive");
    const double x = s.x[i];
    g.x[i] = -x / t;
    g.theta[i] = x * x / (2.0 * t * t) - 0.5 / t + gg_logpdf_deriv(t, p);
  }
  return g;
}

HierPoint sbl_prior_sample(Eigen::Index n, const GGParams& p, Rng& rng) {
  HierPoint s{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    s.theta[i] = gg_sample(p, rng);
    s.x[i] = std::sqrt(s.theta[i]) * standard_normal(rng);
  }
  return s;
}

std::string to_string(const GGParams& p) {
  std::ostringstream os;
  os.precision(17);
  os << "GG(r=" << p.r << ", beta=" << p.beta << ", theta_scale=" << p.theta_scale << ")";
  return os.str();
}

}  // namespace sblpn
