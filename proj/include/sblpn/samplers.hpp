#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sblpn/model.hpp"
#include "sblpn/random.hpp"

namespace sblpn {

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The requested kernel cannot be built for this model (e.g. Gibbs with r != -1).
class UnsupportedModelError : public SamplerError {
 public:
  using SamplerError::SamplerError;
};

/// Log density of a flat state; -inf outside the support.
using LogDensity = std::function<double(const Eigen::VectorXd&)>;
/// Log density and gradient. The gradient is only read when the value is finite.
using LogDensityGrad = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

enum class InitPolicy { map, prior, custom };

InitPolicy parse_init_policy(const std::string& name);
std::string to_string(InitPolicy p);

struct ChainConfig {
  long n_samples = 1000;  // iterations; every thin-th one is retained
  long thin = 1;
  std::uint64_t seed = 0;
  InitPolicy init = InitPolicy::prior;
  Eigen::VectorXd custom_init;  // used when init == custom

  /// Initial step size. For AM it multiplies the initial proposal scales.
  std::optional<double> step_size;
  /// Adapt the step (MALA) or the proposal scale (AM) by Robbins-Monro.
  bool adapt = true;
  /// Defaults: 0.234 for AM, 0.574 for MALA.
  std::optional<double> target_accept;
  /// Adaptation stops after this fraction of the iterations.
  double burn_in_fraction = 0.5;

  /// Throws std::invalid_argument.
  void validate() const;
  long retained() const { return n_samples / thin; }
};

struct ChainResult {
  Eigen::MatrixXd samples;  // retained x dim
  double accept_rate = 0.0;
  double post_freeze_accept = 0.0;  // over iterations after adaptation stopped
  double wall_time = 0.0;           // seconds, sampling loop only
  double final_step_size = 0.0;     // 0 when the kernel has none
  std::uint64_t seed = 0;
};

/// Random-walk Metropolis with adapted covariance lambda (Sigma_emp + 1e-10 I).
/// The first 2d iterations use a diagonal proposal with `initial_scales`
/// (0.1 per coordinate when empty) times step_size. lambda then restarts at
/// 2.38^2 / d and its log follows Robbins-Monro with gain k^-0.6.
/// The Cholesky factor is refreshed every 50 iterations.
ChainResult am_sample(const LogDensity& logpost, const Eigen::VectorXd& init,
                      const ChainConfig& cfg, Rng& rng,
                      const Eigen::VectorXd& initial_scales = Eigen::VectorXd());

/// Metropolis-adjusted Langevin. Default step 0.1 when cfg.step_size is unset.
ChainResult mala_sample(const LogDensityGrad& logpost, const Eigen::VectorXd& init,
                        const ChainConfig& cfg, Rng& rng);

/// Conditional draws of the Gibbs sweep, exposed for testing.
/// x | theta for A x = y with noise sigma. `A_orthogonal` selects the
/// coordinatewise update.
Eigen::VectorXd gibbs_draw_x(const Eigen::MatrixXd& A, bool A_orthogonal,
                             const Eigen::VectorXd& y, double sigma,
                             const Eigen::VectorXd& theta, Rng& rng);
/// theta_i | x_i ~ GG(-1, beta + 1/2, theta_scale + x_i^2 / 2).
Eigen::VectorXd gibbs_draw_theta(const Eigen::VectorXd& x, const GGParams& p, Rng& rng);
/// Parameters of the theta_i | x_i conditional.
GGParams gibbs_theta_conditional(double x, const GGParams& p);

/// Blocked Gibbs on [x; theta] for a linear model with r = -1. With an
/// increment reparameterization the sampled block is z and the operator F L^{-1}.
/// Throws UnsupportedModelError otherwise.
ChainResult gibbs_sbl(const PosteriorSpec& spec, const Eigen::VectorXd& init,
                      const ChainConfig& cfg, Rng& rng);

/// Elliptical slice sampling under a standard normal prior on every coordinate.
/// Throws SamplerError after 100 shrinks without acceptance.
ChainResult ess_sample(const LogDensity& loglik, const Eigen::VectorXd& init,
                       const ChainConfig& cfg, Rng& rng);

/// Draws the initial state for a chain in the spec's coordinates.
/// `map_state` is required for InitPolicy::map.
Eigen::VectorXd initial_state(const PosteriorSpec& spec, const ChainConfig& cfg, Rng& rng,
                              const Eigen::VectorXd* map_state = nullptr);

struct ChainFailure {
  std::uint64_t seed = 0;
  std::string message;
};

struct ChainSet {
  std::vector<ChainResult> chains;  // ascending seed
  std::vector<ChainFailure> failures;
  Eigen::Index dim = 0;
  Eigen::Index retained = 0;
  std::map<std::string, std::string> metadata;

  /// Throws std::invalid_argument unless all chains share dim and retained.
  void validate() const;
};

/// Runs one chain for cfg (cfg.seed already set).
using ChainKernel = std::function<ChainResult(const ChainConfig&)>;

/// One chain per seed, run concurrently on up to `threads` threads (0 = OpenMP default).
/// Failed chains are reported in `failures`; completed ones are kept.
ChainSet run_chains(const ChainKernel& kernel, const ChainConfig& base,
                    const std::vector<std::uint64_t>& seeds, int threads = 0);

/// Sequential reference for run_chains.
ChainSet run_chains_serial(const ChainKernel& kernel, const ChainConfig& base,
                           const std::vector<std::uint64_t>& seeds);

}  // namespace sblpn
