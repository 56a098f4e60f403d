#include "sblpn/samplers.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>

namespace sblpn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kAmReg = 1e-10;
constexpr long kCholRefresh = 50;
constexpr int kMaxShrink = 100;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Eigen::VectorXd normal_vector(Eigen::Index n, Rng& rng) {
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = standard_normal(rng);
  return z;
}

// Robbins-Monro gain for iteration k (1-based).
double rm_gain(long k) { return std::pow(static_cast<double>(k), -0.6); }

double accept_prob(double log_ratio) {
  if (std::isnan(log_ratio)) return 0.0;
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

// Shared bookkeeping: retained rows, acceptance counters, adaptation window.
class ChainRecorder {
 public:
  ChainRecorder(const ChainConfig& cfg, Eigen::Index dim)
      : cfg_(cfg), adapt_until_(cfg.adapt ? static_cast<long>(cfg.burn_in_fraction *
                                                              static_cast<double>(cfg.n_samples))
                                           : 0) {
    res_.samples.resize(cfg.retained(), dim);
    res_.seed = cfg.seed;
  }

  bool adapting(long k) const { return k < adapt_until_; }

  void record(long k, bool accepted, const Eigen::VectorXd& state) {
    if (accepted) {
      ++accepted_;
      if (!adapting(k)) ++accepted_post_;
    }
    if ((k + 1) % cfg_.thin == 0) res_.samples.row((k + 1) / cfg_.thin - 1) = state.transpose();
  }

  ChainResult finish(double wall_time, double step) {
    const double n = static_cast<double>(cfg_.n_samples);
    const double post = static_cast<double>(cfg_.n_samples - std::min(adapt_until_, cfg_.n_samples));
    res_.accept_rate = static_cast<double>(accepted_) / n;
    res_.post_freeze_accept = post > 0 ? static_cast<double>(accepted_post_) / post : 0.0;
    res_.wall_time = wall_time;
    res_.final_step_size = step;
    return std::move(res_);
  }

 private:
  const ChainConfig& cfg_;
  long adapt_until_;
  long accepted_ = 0;
  long accepted_post_ = 0;
  ChainResult res_;
};

// Running mean and covariance of the chain (lower triangle only).
class Welford {
 public:
  explicit Welford(const Eigen::VectorXd& x0)
      : mean_(x0), m2_(Eigen::MatrixXd::Zero(x0.size(), x0.size())) {}

  void add(const Eigen::VectorXd& x) {
    ++count_;
    const Eigen::VectorXd delta = x - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_.selfadjointView<Eigen::Lower>().rankUpdate(
        delta, static_cast<double>(count_ - 1) / static_cast<double>(count_));
  }

  Eigen::MatrixXd covariance() const {
    Eigen::MatrixXd c = m2_.selfadjointView<Eigen::Lower>();
    return c / static_cast<double>(std::max<long>(count_ - 1, 1));
  }

 private:
  long count_ = 1;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd m2_;
};

void require_finite_start(double lp, const char* who) {
  if (!std::isfinite(lp))
    throw SamplerError(std::string(who) + ": log density is not finite at the initial state");
}

}  // namespace

InitPolicy parse_init_policy(const std::string& name) {
  if (name == "map") return InitPolicy::map;
  if (name == "prior") return InitPolicy::prior;
  if (name == "custom") return InitPolicy::custom;
  throw std::invalid_argument("unknown init policy '" + name + "'");
}

std::string to_string(InitPolicy p) {
  switch (p) {
    case InitPolicy::map: return "map";
    case InitPolicy::prior: return "prior";
    case InitPolicy::custom: return "custom";
  }
  return "?";
}

void ChainConfig::validate() const {
  if (n_samples < 1) throw std::invalid_argument("ChainConfig: n_samples must be >= 1");
  if (thin < 1) throw std::invalid_argument("ChainConfig: thin must be >= 1");
  if (step_size && !(*step_size > 0.0 && std::isfinite(*step_size)))
    throw std::invalid_argument("ChainConfig: step_size must be positive");
  if (target_accept && !(*target_accept > 0.0 && *target_accept < 1.0))
    throw std::invalid_argument("ChainConfig: target_accept must lie in (0, 1)");
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction <= 1.0))
    throw std::invalid_argument("ChainConfig: burn_in_fraction must lie in [0, 1]");
}

ChainResult am_sample(const LogDensity& logpost, const Eigen::VectorXd& init,
                      const ChainConfig& cfg, Rng& rng, const Eigen::VectorXd& initial_scales) {
  cfg.validate();
  const Eigen::Index d = init.size();
  Eigen::VectorXd scales =
      initial_scales.size() == 0 ? Eigen::VectorXd::Constant(d, 0.1) : initial_scales;
  if (scales.size() != d) throw std::invalid_argument("am_sample: initial_scales size mismatch");
  const double target = cfg.target_accept.value_or(0.234);

  Eigen::VectorXd x = init;
  double lp = logpost(x);
  require_finite_start(lp, "am_sample");

  ChainRecorder rec(cfg, d);
  Welford stats(x);
  const long switch_at = 2 * d;
  double log_lambda = 2.0 * std::log(cfg.step_size.value_or(1.0));
  bool full_cov = false;
  Eigen::MatrixXd chol;

  const auto t0 = Clock::now();
  for (long k = 0; k < cfg.n_samples; ++k) {
    const Eigen::VectorXd z = normal_vector(d, rng);
    const double s = std::exp(0.5 * log_lambda);
    const Eigen::VectorXd prop = full_cov ? Eigen::VectorXd(x + s * (chol * z))
                                          : Eigen::VectorXd(x + s * scales.cwiseProduct(z));
    const double lpp = logpost(prop);
    const double log_ratio = lpp == -kInf ? -kInf : lpp - lp;
    const bool accepted = std::log(uniform_open01(rng)) < log_ratio;
    if (accepted) {
      x = prop;
      lp = lpp;
    }
    rec.record(k, accepted, x);

    if (!rec.adapting(k)) continue;
    log_lambda += rm_gain(k + 1) * (accept_prob(log_ratio) - target);
    stats.add(x);
    const bool at_switch = k + 1 == switch_at;
    if (at_switch || (full_cov && (k + 1) % kCholRefresh == 0)) {
      Eigen::MatrixXd cov = stats.covariance();
      cov.diagonal().array() += kAmReg;
      Eigen::LLT<Eigen::MatrixXd> llt(cov);
      if (llt.info() == Eigen::Success) {
        chol = llt.matrixL();
        if (at_switch) log_lambda = std::log(2.38 * 2.38 / static_cast<double>(d));
        full_cov = true;
      }
    }
  }
  return rec.finish(seconds_since(t0), std::exp(0.5 * log_lambda));
}

ChainResult mala_sample(const LogDensityGrad& logpost, const Eigen::VectorXd& init,
                        const ChainConfig& cfg, Rng& rng) {
  cfg.validate();
  const Eigen::Index d = init.size();
  const double target = cfg.target_accept.value_or(0.574);

  Eigen::VectorXd x = init, g(d);
  double lp = logpost(x, g);
  require_finite_start(lp, "mala_sample");
  if (!g.allFinite()) throw SamplerError("mala_sample: gradient is not finite at the initial state");

  ChainRecorder rec(cfg, d);
  double log_eps = std::log(cfg.step_size.value_or(0.1));
  Eigen::VectorXd gp(d);

  const auto t0 = Clock::now();
  for (long k = 0; k < cfg.n_samples; ++k) {
    const double eps = std::exp(log_eps);
    const double h = 0.5 * eps * eps;
    const Eigen::VectorXd z = normal_vector(d, rng);
    const Eigen::VectorXd prop = x + h * g + eps * z;
    const double lpp = logpost(prop, gp);
    double log_ratio = -kInf;
    if (std::isfinite(lpp) && gp.allFinite()) {
      const double log_q_rev = -(x - prop - h * gp).squaredNorm() / (2.0 * eps * eps);
      const double log_q_fwd = -0.5 * z.squaredNorm();
      log_ratio = lpp - lp + log_q_rev - log_q_fwd;
    }
    const bool accepted = std::log(uniform_open01(rng)) < log_ratio;
    if (accepted) {
      x = prop;
      lp = lpp;
      g = gp;
    }
    rec.record(k, accepted, x);
    if (rec.adapting(k)) log_eps += rm_gain(k + 1) * (accept_prob(log_ratio) - target);
  }
  return rec.finish(seconds_since(t0), std::exp(log_eps));
}

GGParams gibbs_theta_conditional(double x, const GGParams& p) {
  return {p.r, p.beta + 0.5, p.theta_scale + 0.5 * x * x};
}

Eigen::VectorXd gibbs_draw_theta(const Eigen::VectorXd& x, const GGParams& p, Rng& rng) {
  Eigen::VectorXd theta(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const GGParams c = gibbs_theta_conditional(x[i], p);
    // r = -1: theta_scale / theta ~ Gamma(beta).
    const double g = specfun::gamma_sample(c.beta, rng);
    theta[i] = std::clamp(c.theta_scale / g, std::numeric_limits<double>::min(),
                          std::numeric_limits<double>::max());
  }
  return theta;
}

namespace {

struct GibbsLinear {
  Eigen::MatrixXd AtA;
  Eigen::VectorXd Aty;
  bool orthogonal;
  double sigma;
};

Eigen::VectorXd draw_x(const GibbsLinear& m, const Eigen::VectorXd& theta, Rng& rng) {
  const Eigen::Index n = theta.size();
  const double s2 = m.sigma * m.sigma;
  const Eigen::VectorXd xi = normal_vector(n, rng);
  if (m.orthogonal) {
    Eigen::VectorXd x(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double var = 1.0 / (1.0 / s2 + 1.0 / theta[i]);
      x[i] = var * m.Aty[i] / s2 + std::sqrt(var) * xi[i];
    }
    return x;
  }
  Eigen::MatrixXd prec = m.AtA / s2;
  prec.diagonal() += theta.cwiseInverse();
  Eigen::LLT<Eigen::MatrixXd> llt(prec);
  if (llt.info() != Eigen::Success) throw SamplerError("gibbs: precision matrix is not SPD");
  const Eigen::VectorXd mu = llt.solve(m.Aty / s2);
  return mu + llt.matrixU().solve(xi);
}

}  // namespace

Eigen::VectorXd gibbs_draw_x(const Eigen::MatrixXd& A, bool A_orthogonal,
                             const Eigen::VectorXd& y, double sigma,
                             const Eigen::VectorXd& theta, Rng& rng) {
  const GibbsLinear m{A.transpose() * A, A.transpose() * y, A_orthogonal, sigma};
  return draw_x(m, theta, rng);
}

ChainResult gibbs_sbl(const PosteriorSpec& spec, const Eigen::VectorXd& init,
                      const ChainConfig& cfg, Rng& rng) {
  cfg.validate();
  if (spec.prior.r != -1.0)
    throw UnsupportedModelError("gibbs: the conjugate sweep needs r = -1, got r = " +
                                std::to_string(spec.prior.r));
  if (spec.coordinate != Coordinates::original)
    throw UnsupportedModelError("gibbs: samples the original posterior only");
  const auto* lin = dynamic_cast<const LinearOperator*>(spec.likelihood.forward.get());
  if (!lin) throw UnsupportedModelError("gibbs: forward operator is not linear");

  const Eigen::Index n = spec.n;
  if (init.size() != 2 * n) throw std::invalid_argument("gibbs: init size mismatch");
  Eigen::MatrixXd A = lin->matrix();
  bool orthogonal = lin->orthogonal();
  if (spec.reparam) {
    Eigen::MatrixXd Linv(n, n);
    for (Eigen::Index j = 0; j < n; ++j) Linv.col(j) = spec.reparam->solve_L(Eigen::VectorXd::Unit(n, j));
    A = A * Linv;
    orthogonal = (A.transpose() * A - Eigen::MatrixXd::Identity(n, n)).norm() < 1e-10;
  }
  const GibbsLinear m{A.transpose() * A, A.transpose() * spec.likelihood.data, orthogonal,
                      spec.likelihood.noise_std};

  HierPoint s = unstack_hier(init);
  if ((s.theta.array() <= 0.0).any()) throw SamplerError("gibbs: initial theta must be positive");

  ChainRecorder rec(cfg, 2 * n);
  const auto t0 = Clock::now();
  for (long k = 0; k < cfg.n_samples; ++k) {
    s.x = draw_x(m, s.theta, rng);
    s.theta = gibbs_draw_theta(s.x, spec.prior, rng);
    rec.record(k, true, stack(s.x, s.theta));
  }
  return rec.finish(seconds_since(t0), 0.0);
}

ChainResult ess_sample(const LogDensity& loglik, const Eigen::VectorXd& init,
                       const ChainConfig& cfg, Rng& rng) {
  cfg.validate();
  const Eigen::Index d = init.size();
  Eigen::VectorXd f = init;
  double ll = loglik(f);
  require_finite_start(ll, "ess_sample");

  ChainRecorder rec(cfg, d);
  const double two_pi = 2.0 * std::numbers::pi;
  const auto t0 = Clock::now();
  for (long k = 0; k < cfg.n_samples; ++k) {
    const Eigen::VectorXd nu = normal_vector(d, rng);
    const double log_y = ll + std::log(uniform_open01(rng));
    double angle = two_pi * uniform_open01(rng);
    double lo = angle - two_pi, hi = angle;
    for (int shrink = 0;; ++shrink) {
      Eigen::VectorXd cand = f * std::cos(angle) + nu * std::sin(angle);
      const double llc = loglik(cand);
      if (llc > log_y) {
        f = std::move(cand);
        ll = llc;
        break;
      }
      if (shrink == kMaxShrink || hi - lo <= std::numeric_limits<double>::epsilon())
        throw SamplerError("ess_sample: slice bracket collapsed without acceptance at iteration " +
                           std::to_string(k));
      (angle < 0.0 ? lo : hi) = angle;
      angle = lo + (hi - lo) * uniform_open01(rng);
    }
    rec.record(k, true, f);
  }
  return rec.finish(seconds_since(t0), 0.0);
}

Eigen::VectorXd initial_state(const PosteriorSpec& spec, const ChainConfig& cfg, Rng& rng,
                              const Eigen::VectorXd* map_state) {
  switch (cfg.init) {
    case InitPolicy::map:
      if (!map_state) throw std::invalid_argument("initial_state: MAP policy without a MAP state");
      return *map_state;
    case InitPolicy::custom:
      if (cfg.custom_init.size() != 2 * spec.n)
        throw std::invalid_argument("initial_state: custom init has the wrong size");
      return cfg.custom_init;
    case InitPolicy::prior:
      break;
  }
  if (spec.coordinate == Coordinates::normalized) return normal_vector(2 * spec.n, rng);
  const HierPoint s = sbl_prior_sample(spec.n, spec.prior, rng);
  return stack(s.x, s.theta);
}

void ChainSet::validate() const {
  for (const auto& c : chains)
    if (c.samples.cols() != dim || c.samples.rows() != retained)
      throw std::invalid_argument("ChainSet: chains disagree in shape");
}

namespace {

std::vector<std::uint64_t> sorted_seeds(const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw std::invalid_argument("run_chains: need at least one seed");
  std::vector<std::uint64_t> s = seeds;
  std::sort(s.begin(), s.end());
  if (std::adjacent_find(s.begin(), s.end()) != s.end())
    throw std::invalid_argument("run_chains: seeds must be distinct");
  return s;
}

struct Slot {
  std::optional<ChainResult> result;
  std::string error;
};

void run_one(const ChainKernel& kernel, ChainConfig cfg, std::uint64_t seed, Slot& slot) {
  cfg.seed = seed;
  try {
    slot.result = kernel(cfg);
    slot.result->seed = seed;
  } catch (const std::exception& e) {
    slot.error = e.what();
  } catch (...) {
    slot.error = "unknown error";
  }
}

ChainSet collect(const std::vector<std::uint64_t>& seeds, std::vector<Slot>& slots) {
  ChainSet cs;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (slots[i].result) {
      cs.chains.push_back(std::move(*slots[i].result));
    } else {
      cs.failures.push_back({seeds[i], slots[i].error});
    }
  }
  if (!cs.chains.empty()) {
    cs.dim = cs.chains.front().samples.cols();
    cs.retained = cs.chains.front().samples.rows();
  }
  cs.validate();
  return cs;
}

}  // namespace

ChainSet run_chains(const ChainKernel& kernel, const ChainConfig& base,
                    const std::vector<std::uint64_t>& seeds, int threads) {
  base.validate();
  const auto s = sorted_seeds(seeds);
  std::vector<Slot> slots(s.size());
  const int nt = threads > 0 ? threads : omp_get_max_threads();
  const long J = static_cast<long>(s.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(nt)
  for (long j = 0; j < J; ++j) run_one(kernel, base, s[j], slots[j]);
  return collect(s, slots);
}

ChainSet run_chains_serial(const ChainKernel& kernel, const ChainConfig& base,
                           const std::vector<std::uint64_t>& seeds) {
  base.validate();
  const auto s = sorted_seeds(seeds);
  std::vector<Slot> slots(s.size());
  for (std::size_t j = 0; j < s.size(); ++j) run_one(kernel, base, s[j], slots[j]);
  return collect(s, slots);
}

}  // namespace sblpn
