#include "sblpn/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sblpn {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void GaussianLikelihood::validate() const {
  if (!forward) throw std::invalid_argument("GaussianLikelihood: missing forward operator");
  if (data.size() != forward->output_dim())
    throw std::invalid_argument("GaussianLikelihood: data size does not match the operator");
  if (!(noise_std > 0.0)) throw std::invalid_argument("GaussianLikelihood: noise_std must be > 0");
}

double loglik(const Eigen::VectorXd& x, const GaussianLikelihood& lik) {
  const Eigen::VectorXd r = lik.forward->apply(x) - lik.data;
  return -0.5 * r.squaredNorm() / (lik.noise_std * lik.noise_std);
}

double loglik_grad(const Eigen::VectorXd& x, const GaussianLikelihood& lik,
                   Eigen::VectorXd& grad) {
  const double s2 = lik.noise_std * lik.noise_std;
  const Eigen::VectorXd r = lik.forward->apply(x) - lik.data;
  grad = -lik.forward->jacobian_transpose_apply(x, r) / s2;
  return -0.5 * r.squaredNorm() / s2;
}

Coordinates parse_coordinates(const std::string& name) {
  if (name == "original") return Coordinates::original;
  if (name == "normalized") return Coordinates::normalized;
  throw std::invalid_argument("unknown posterior coordinates '" + name + "'");
}

std::string to_string(Coordinates c) {
  return c == Coordinates::original ? "original" : "normalized";
}

Eigen::VectorXd PosteriorSpec::signal(const Eigen::VectorXd& z) const {
  return reparam ? reparam->solve_L(z) : z;
}

PosteriorSpec make_posterior(const ProblemInstance& pb, const GGParams& prior,
                             Coordinates coordinate) {
  prior.validate();
  PosteriorSpec spec;
  spec.likelihood = GaussianLikelihood{pb.op, pb.data, pb.noise_std};
  spec.likelihood.validate();
  spec.prior = prior;
  spec.n = pb.op->input_dim();
  spec.coordinate = coordinate;
  if (pb.increment_reparam) spec.reparam.emplace(spec.n);
  if (coordinate == Coordinates::normalized) spec.ttau = std::make_shared<const TTauTable>(prior);
  return spec;
}

namespace {

// Log-likelihood at the prior-level variable z and its gradient in z.
double loglik_prior_level(const Eigen::VectorXd& z, const PosteriorSpec& spec,
                          Eigen::VectorXd* grad) {
  const Eigen::VectorXd x = spec.signal(z);
  if (!grad) return loglik(x, spec.likelihood);
  Eigen::VectorXd gx;
  const double v = loglik_grad(x, spec.likelihood, gx);
  *grad = spec.reparam ? spec.reparam->solve_Lt(gx) : gx;
  return v;
}

}  // namespace

double original_logpost(const HierPoint& s, const PosteriorSpec& spec) {
  const double prior = sbl_prior_logpdf(s, spec.prior);
  if (prior == -kInf) return -kInf;
  return loglik_prior_level(s.x, spec, nullptr) + prior;
}

HierPoint original_logpost_grad(const HierPoint& s, const PosteriorSpec& spec) {
  HierPoint g = sbl_prior_grad(s, spec.prior);
  Eigen::VectorXd gl;
  loglik_prior_level(s.x, spec, &gl);
  g.x += gl;
  return g;
}

namespace {

HierPoint pull_back(const RefPoint& rp, const PosteriorSpec& spec) {
  return spec.ttau ? spec.ttau->T_map(rp) : T_map(rp, spec.prior);
}

}  // namespace

double normalized_loglik(const RefPoint& rp, const PosteriorSpec& spec) {
  return loglik_prior_level(pull_back(rp, spec).x, spec, nullptr);
}

double normalized_logpost(const RefPoint& rp, const PosteriorSpec& spec) {
  return normalized_loglik(rp, spec) - 0.5 * (rp.u.squaredNorm() + rp.tau.squaredNorm());
}

double normalized_logpost_grad(const RefPoint& rp, const PosteriorSpec& spec, RefPoint& g) {
  const Eigen::Index n = rp.size();
  Eigen::VectorXd theta(n), dtheta(n), x(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (spec.ttau) {
      theta[i] = spec.ttau->theta(rp.tau[i], dtheta[i]);
    } else {
      theta[i] = t_tau(rp.tau[i], spec.prior);
      dtheta[i] = t_tau_deriv(rp.tau[i], spec.prior);
    }
    x[i] = rp.u[i] * std::sqrt(theta[i]);
  }
  Eigen::VectorXd gl;
  const double ll = loglik_prior_level(x, spec, &gl);
  g.u.resize(n);
  g.tau.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double root = std::sqrt(theta[i]);
    g.u[i] = root * gl[i] - rp.u[i];
    g.tau[i] = gl[i] * rp.u[i] * dtheta[i] / (2.0 * root) - rp.tau[i];
  }
  return ll - 0.5 * (rp.u.squaredNorm() + rp.tau.squaredNorm());
}

RefPoint normalized_logpost_grad(const RefPoint& rp, const PosteriorSpec& spec) {
  RefPoint g;
  normalized_logpost_grad(rp, spec, g);
  return g;
}

Eigen::VectorXd stack(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd out(a.size() + b.size());
  out << a, b;
  return out;
}

HierPoint unstack_hier(const Eigen::VectorXd& state) {
  const Eigen::Index n = state.size() / 2;
  return {state.head(n), state.tail(n)};
}

RefPoint unstack_ref(const Eigen::VectorXd& state) {
  const Eigen::Index n = state.size() / 2;
  return {state.head(n), state.tail(n)};
}

double logpost(const Eigen::VectorXd& state, const PosteriorSpec& spec) {
  if (spec.coordinate == Coordinates::original) return original_logpost(unstack_hier(state), spec);
  return normalized_logpost(unstack_ref(state), spec);
}

double logpost_grad(const Eigen::VectorXd& state, const PosteriorSpec& spec,
                    Eigen::VectorXd& grad) {
  if (spec.coordinate == Coordinates::original) {
    const HierPoint s = unstack_hier(state);
    const double v = original_logpost(s, spec);
    if (v == -kInf) return v;
    const HierPoint g = original_logpost_grad(s, spec);
    grad = stack(g.x, g.theta);
    return v;
  }
  RefPoint g;
  const double v = normalized_logpost_grad(unstack_ref(state), spec, g);
  grad = stack(g.u, g.tau);
  return v;
}

HierPoint to_original(const Eigen::VectorXd& state, const PosteriorSpec& spec) {
  if (spec.coordinate == Coordinates::original) return unstack_hier(state);
  return T_map(unstack_ref(state), spec.prior);
}

MapResult map_estimate(const PosteriorSpec& spec, const Eigen::VectorXd& init, int max_iter) {
  const Eigen::Index n = init.size() / 2;
  const bool original = spec.coordinate == Coordinates::original;
  Eigen::VectorXd x0 = init;
  if (original) {
    if ((init.tail(n).array() <= 0.0).any())
      throw std::domain_error("map_estimate: initial theta must be positive");
    x0.tail(n) = init.tail(n).array().log();
  }

  auto objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd& g) -> double {
    Eigen::VectorXd state = v;
    if (original) state.tail(n) = v.tail(n).array().exp();
    Eigen::VectorXd grad;
    double lp;
    try {
      lp = logpost_grad(state, spec, grad);
    } catch (const EvaluationError&) {
      return kInf;
    }
    if (!std::isfinite(lp)) return kInf;
    g = -grad;
    if (original) g.tail(n).array() *= state.tail(n).array();  // chain rule through exp
    return -lp;
  };

  LbfgsOptions opt;
  opt.max_iter = max_iter;
  const LbfgsResult r = lbfgs_minimize(objective, x0, opt);

  MapResult out;
  out.state = r.x;
  if (original) out.state.tail(n) = r.x.tail(n).array().exp();
  out.logpost = -r.f;
  out.grad_norm = r.grad_norm;
  out.iterations = r.iterations;
  out.converged = r.converged;
  out.message = r.message;
  return out;
}

}  // namespace sblpn
