#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sblpn/diagnostics.hpp"
#include "sblpn/forward.hpp"
#include "sblpn/model.hpp"
#include "sblpn/samplers.hpp"

namespace sblpn {

inline constexpr const char* kVersion = "0.1.0";

enum class SamplerKind { am, mala, gibbs, ess };

SamplerKind parse_sampler(const std::string& name);
std::string to_string(SamplerKind s);

/// Bad flags, bad config file, or an invalid combination of settings.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  Preset preset = Preset::toy;
  GGParams prior = kGGPresets[3];
  Coordinates posterior = Coordinates::normalized;
  SamplerKind sampler = SamplerKind::am;
  int chains = 4;
  long samples = 0;  // 0: preset default
  long thin = 0;     // 0: preset default
  InitPolicy init = InitPolicy::prior;
  std::uint64_t seed = 0;
  std::optional<double> step_size;
  bool adapt = false;  // MALA only; AM always adapts
  int threads = 0;
  std::string out_dir;
  bool force = false;

  /// Fills preset defaults (samples, thin, MALA step) in place.
  void resolve();
  /// Throws UsageError for invalid combinations.
  void validate() const;
};

/// Iterations per chain and thinning used when the flags leave them unset.
long default_samples(Preset p);
long default_thin(Preset p);

/// Tabulated MALA step sizes for the four hyper-prior columns; nullopt otherwise.
std::optional<double> tabulated_mala_step(double r, Coordinates c);

/// Parses CLI flags (and an optional --config INI file; flags win).
/// SBL_SEED supplies the seed when --seed is absent. Throws UsageError.
ExperimentConfig parse_config(int argc, const char* const* argv);
std::string usage_text();

/// Per-chain seeds derived from the run seed.
std::vector<std::uint64_t> chain_seeds(std::uint64_t seed, int chains);

struct ExperimentOutcome {
  ExperimentConfig config;
  ProblemInstance problem;
  PosteriorSpec spec;
  ChainSet internal;                  // samples in the sampler's coordinates
  std::vector<Eigen::MatrixXd> xtheta;  // per chain, columns [x (physical); theta]
  RunSummary summary;
  std::optional<MapResult> map;
  std::optional<double> frac_below;  // toy: share of x < 0.5
  std::optional<double> frac_above;  // toy: share of x > 1.0
};

/// Builds problem, posterior and kernel, runs the chains and maps the samples
/// back to (x, theta). Does not touch the file system.
ExperimentOutcome run_experiment(const ExperimentConfig& cfg);

/// Pulls one internal sample row back to [x (physical); theta].
Eigen::VectorXd to_xtheta(const Eigen::VectorXd& state, const PosteriorSpec& spec);

/// Throws UsageError when out_dir exists, is non-empty and force is off.
void prepare_out_dir(const ExperimentConfig& cfg);

/// Writes chain_<k>.csv, summary.json, bands.csv, trace.csv and MANIFEST.
void emit_outputs(const ExperimentOutcome& out);

/// MANIFEST for a run that failed before producing chains.
void emit_failure_manifest(const ExperimentConfig& cfg, const std::string& error);

}  // namespace sblpn
