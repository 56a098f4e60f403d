#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <string>

#include "sblpn/forward.hpp"
#include "sblpn/optimize.hpp"
#include "sblpn/prior.hpp"
#include "sblpn/transport.hpp"

namespace sblpn {

/// f(x; y) with i.i.d. Gaussian noise: -||F(x) - y||^2 / (2 sigma^2).
/// The constant -m log(sigma sqrt(2 pi)) is dropped.
struct GaussianLikelihood {
  std::shared_ptr<const ForwardOperator> forward;
  Eigen::VectorXd data;
  double noise_std = 1.0;

  /// Throws std::invalid_argument on dimension mismatch or noise_std <= 0.
  void validate() const;
};

double loglik(const Eigen::VectorXd& x, const GaussianLikelihood& lik);

/// Log-likelihood and its gradient in x, -J^T (F(x) - y) / sigma^2.
double loglik_grad(const Eigen::VectorXd& x, const GaussianLikelihood& lik,
                   Eigen::VectorXd& grad);

enum class Coordinates { original, normalized };

Coordinates parse_coordinates(const std::string& name);
std::string to_string(Coordinates c);

/// Everything needed to evaluate a posterior. When `reparam` is set the
/// hierarchical prior sits on increments z and the likelihood sees x = L^{-1} z.
struct PosteriorSpec {
  GaussianLikelihood likelihood;
  GGParams prior;
  Eigen::Index n = 0;
  Coordinates coordinate = Coordinates::original;
  std::optional<FdMatrix> reparam;
  /// Tabulated t_tau used by the normalized evaluators; exact t_tau when null.
  std::shared_ptr<const TTauTable> ttau;

  /// Physical signal from the prior-level variable.
  Eigen::VectorXd signal(const Eigen::VectorXd& z) const;
};

/// Builds the t_tau table for normalized coordinates.
PosteriorSpec make_posterior(const ProblemInstance& pb, const GGParams& prior,
                             Coordinates coordinate);

/// log f + log pi0 in original coordinates. The additive constants of the
/// likelihood are dropped; the prior keeps its normalization.
/// -inf on the boundary theta_i <= 0.
double original_logpost(const HierPoint& s, const PosteriorSpec& spec);
HierPoint original_logpost_grad(const HierPoint& s, const PosteriorSpec& spec);

/// log f(T(u, tau)), the likelihood part of the normalized posterior.
double normalized_loglik(const RefPoint& rp, const PosteriorSpec& spec);
/// log f(T(u, tau)) - (|u|^2 + |tau|^2) / 2.
double normalized_logpost(const RefPoint& rp, const PosteriorSpec& spec);
RefPoint normalized_logpost_grad(const RefPoint& rp, const PosteriorSpec& spec);
/// Value and gradient from one pass through the map.
double normalized_logpost_grad(const RefPoint& rp, const PosteriorSpec& spec, RefPoint& grad);

/// Flat state layout used by the samplers: [x; theta] or [u; tau].
Eigen::VectorXd stack(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
HierPoint unstack_hier(const Eigen::VectorXd& state);
RefPoint unstack_ref(const Eigen::VectorXd& state);

/// Log posterior of a flat state in the spec's coordinates.
double logpost(const Eigen::VectorXd& state, const PosteriorSpec& spec);
/// Same, plus the gradient. Returns -inf (gradient untouched) outside the domain.
double logpost_grad(const Eigen::VectorXd& state, const PosteriorSpec& spec,
                    Eigen::VectorXd& grad);

/// Pulls a flat state back to original coordinates (T_map for normalized
/// specs); the x block stays at the prior level (increments when reparameterized).
HierPoint to_original(const Eigen::VectorXd& state, const PosteriorSpec& spec);

struct MapResult {
  Eigen::VectorXd state;  // in the spec's coordinates
  double logpost = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// L-BFGS on the negative log posterior. Original coordinates are optimized in
/// (x, log theta); the returned point is mapped back and is a stationary point
/// of the density in (x, theta).
MapResult map_estimate(const PosteriorSpec& spec, const Eigen::VectorXd& init, int max_iter = 5000);

}  // namespace sblpn
