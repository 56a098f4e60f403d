#include "sblpn/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sblpn {

namespace {

double clamp_positive(double theta) {
  return std::clamp(theta, std::numeric_limits<double>::min(), std::numeric_limits<double>::max());
}

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw std::invalid_argument("batch transport: input and output sizes differ");
}

}  // namespace

double s_theta(double theta, const GGParams& p) {
  if (!(theta > 0.0)) throw std::domain_error("s_theta: theta must be positive");
  const double lower = gg_cdf(theta, p);
  const double upper = gg_ccdf(theta, p);
  if (lower <= upper) {
    if (lower <= 0.0) return -kTauMax;
    return std::max(specfun::std_normal_quantile(lower), -kTauMax);
  }
  if (upper <= 0.0) return kTauMax;
  return std::min(specfun::std_normal_quantile_upper(upper), kTauMax);
}

double t_tau(double tau, const GGParams& p) {
  const double t = std::clamp(tau, -kTauMax, kTauMax);
  const double lower = specfun::std_normal_cdf(t);
  const double upper = specfun::std_normal_upper_tail(t);
  return clamp_positive(gg_quantile(lower, upper, p, t));
}

double t_tau_naive(double tau, const GGParams& p) {
  const double z = specfun::std_normal_cdf(tau);
  return gg_quantile(z, 1.0 - z, p);
}

double t_tau_deriv(double tau, const GGParams& p) {
  const double theta = t_tau(tau, p);
  const double t = std::clamp(tau, -kTauMax, kTauMax);
  return std::exp(specfun::std_normal_logpdf(t) - gg_logpdf(theta, p));
}

double s_cond(double x, double theta) {
  if (!(theta > 0.0)) throw std::domain_error("s_cond: theta must be positive");
  return x / std::sqrt(theta);
}

double t_cond(double u, double tau, const GGParams& p) { return u * std::sqrt(t_tau(tau, p)); }

RefPoint S_map(const HierPoint& s, const GGParams& p) {
  const Eigen::Index n = s.size();
  RefPoint rp{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    rp.tau[i] = s_theta(s.theta[i], p);
    rp.u[i] = s_cond(s.x[i], s.theta[i]);
  }
  return rp;
}

HierPoint T_map(const RefPoint& rp, const GGParams& p) {
  const Eigen::Index n = rp.size();
  HierPoint s{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    s.theta[i] = t_tau(rp.tau[i], p);
    s.x[i] = rp.u[i] * std::sqrt(s.theta[i]);
  }
  return s;
}

double log_det_jac_S(const HierPoint& s, const GGParams& p) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double theta = s.theta[i];
    if (!(theta > 0.0)) throw std::domain_error("log_det_jac_S: theta must be positive");
    acc += gg_logpdf(theta, p) - specfun::std_normal_logpdf(s_theta(theta, p)) -
           0.5 * std::log(theta);
  }
  return acc;
}

TTauTable::TTauTable(const GGParams& p, double spacing) : p_(p), h_(spacing) {
  p.validate();
  if (!(spacing > 0.0 && spacing <= 0.5)) throw std::invalid_argument("TTauTable: bad spacing");
  const auto n = static_cast<std::size_t>(std::ceil(2.0 * kTauMax / spacing)) + 1;
  h_ = 2.0 * kTauMax / static_cast<double>(n - 1);
  logt_.resize(n);
  dlogt_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = -kTauMax + h_ * static_cast<double>(i);
    const double theta = t_tau(tau, p);
    logt_[i] = std::log(theta);
    dlogt_[i] = std::exp(specfun::std_normal_logpdf(tau) - gg_logpdf(theta, p) - logt_[i]);
  }
}

double TTauTable::theta(double tau, double& dtheta) const {
  const double s = (std::clamp(tau, -kTauMax, kTauMax) + kTauMax) / h_;
  const auto last = static_cast<double>(logt_.size() - 2);
  const double fi = std::min(std::floor(s), last);
  const auto i = static_cast<std::size_t>(fi);
  const double x = s - fi;
  const double f0 = logt_[i], f1 = logt_[i + 1];
  const double d0 = h_ * dlogt_[i], d1 = h_ * dlogt_[i + 1];
  const double x2 = x * x, om = 1.0 - x;
  const double f = (1.0 + 2.0 * x) * om * om * f0 + x * om * om * d0 + x2 * (3.0 - 2.0 * x) * f1 +
                   x2 * (x - 1.0) * d1;
  const double df = (6.0 * x2 - 6.0 * x) * (f0 - f1) + (3.0 * x2 - 4.0 * x + 1.0) * d0 +
                    (3.0 * x2 - 2.0 * x) * d1;
  const double theta = clamp_positive(std::exp(f));
  dtheta = theta * df / h_;
  return theta;
}

double TTauTable::theta(double tau) const {
  double d;
  return theta(tau, d);
}

HierPoint TTauTable::T_map(const RefPoint& rp) const {
  const Eigen::Index n = rp.size();
  HierPoint s{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    s.theta[i] = theta(rp.tau[i]);
    s.x[i] = rp.u[i] * std::sqrt(s.theta[i]);
  }
  return s;
}

void s_theta_batch(std::span<const double> theta, std::span<double> tau, const GGParams& p) {
  check_sizes(theta.size(), tau.size());
  if (std::any_of(theta.begin(), theta.end(), [](double t) { return !(t > 0.0); }))
    throw std::domain_error("s_theta_batch: theta must be positive");
  const auto n = static_cast<std::ptrdiff_t>(theta.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) tau[i] = s_theta(theta[i], p);
}

void t_tau_batch(std::span<const double> tau, std::span<double> theta, const GGParams& p) {
  check_sizes(tau.size(), theta.size());
  const auto n = static_cast<std::ptrdiff_t>(tau.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) theta[i] = t_tau(tau[i], p);
}

void s_theta_batch_serial(std::span<const double> theta, std::span<double> tau,
                          const GGParams& p) {
  check_sizes(theta.size(), tau.size());
  std::transform(theta.begin(), theta.end(), tau.begin(),
                 [&](double t) { return s_theta(t, p); });
}

void t_tau_batch_serial(std::span<const double> tau, std::span<double> theta, const GGParams& p) {
  check_sizes(tau.size(), theta.size());
  std::transform(tau.begin(), tau.end(), theta.begin(), [&](double t) { return t_tau(t, p); });
}

}  // namespace sblpn
