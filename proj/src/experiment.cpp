#include "sblpn/experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace sblpn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kBurnIn = 0.5;
}  // namespace

SamplerKind parse_sampler(const std::string& name) {
  if (name == "am") return SamplerKind::am;
  if (name == "mala") return SamplerKind::mala;
  if (name == "gibbs") return SamplerKind::gibbs;
  if (name == "ess") return SamplerKind::ess;
  throw std::invalid_argument("unknown sampler '" + name + "'");
}

std::string to_string(SamplerKind s) {
  switch (s) {
    case SamplerKind::am: return "am";
    case SamplerKind::mala: return "mala";
    case SamplerKind::gibbs: return "gibbs";
    case SamplerKind::ess: return "ess";
  }
  return "?";
}

long default_samples(Preset p) {
  switch (p) {
    case Preset::toy: return 400000;
    case Preset::deconvolution: return 400000;
    case Preset::burgers: return 100000;
    case Preset::impulse: return 40000;
  }
  return 1000;
}

long default_thin(Preset p) {
  switch (p) {
    case Preset::toy: return 10;
    case Preset::deconvolution: return 100;
    case Preset::burgers: return 100;
    case Preset::impulse: return 10;
  }
  return 1;
}

std::optional<double> tabulated_mala_step(double r, Coordinates c) {
  struct Row {
    double r, original, normalized;
  };
  static constexpr Row rows[] = {{1.0, 3e-3, 7e-2}, {0.5, 2e-3, 7e-2}, {-0.5, 2e-4, 8e-2},
                                 {-1.0, 1e-4, 8e-2}};
  for (const auto& row : rows)
    if (row.r == r) return c == Coordinates::original ? row.original : row.normalized;
  return std::nullopt;
}

void ExperimentConfig::resolve() {
  if (samples == 0) samples = default_samples(preset);
  if (thin == 0) thin = default_thin(preset);
  if (sampler == SamplerKind::mala && !step_size) {
    step_size = tabulated_mala_step(prior.r, posterior);
    if (!step_size) {
      step_size = 0.1;
      adapt = true;
    }
  }
  if (out_dir.empty())
    out_dir = "out/" + to_string(preset) + "_" + to_string(posterior) + "_" + to_string(sampler);
}

void ExperimentConfig::validate() const {
  try {
    prior.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (chains < 1) throw UsageError("chains must be >= 1");
  if (samples < 1) throw UsageError("samples must be >= 1");
  if (thin < 1) throw UsageError("thin must be >= 1");
  if (samples / thin < 1) throw UsageError("samples / thin must leave at least one retained row");
  if (threads < 0) throw UsageError("threads must be >= 0");
  if (step_size && !(*step_size > 0.0)) throw UsageError("step-size must be positive");
  if (sampler == SamplerKind::gibbs) {
    if (posterior != Coordinates::original)
      throw UsageError("sampler gibbs draws from the original posterior; use --posterior original");
    if (preset == Preset::burgers)
      throw UsageError("sampler gibbs needs a linear forward operator; burgers is nonlinear");
    if (prior.r != -1.0) throw UsageError("sampler gibbs needs the conjugate hyper-prior r = -1");
  }
  if (sampler == SamplerKind::ess && posterior != Coordinates::normalized)
    throw UsageError(
        "sampler ess needs a standard normal prior; use --posterior normalized");
}

namespace {

struct RawOptions {
  std::string preset;
  double r = -1.0;
  std::optional<double> beta, theta_scale;
  std::string posterior = "normalized";
  std::string sampler = "am";
  int chains = 4;
  long samples = 0, thin = 0;
  std::string init = "prior";
  std::uint64_t seed = 0;
  std::optional<double> step_size;
  bool adapt = false;
  int threads = 0;
  std::string out;
  bool force = false;
};

void build_app(CLI::App& app, RawOptions& o) {
  app.description("Sampling hierarchical sparse-Bayesian posteriors with prior-normalizing maps");
  app.set_config("--config", "", "INI file with flag values (command-line flags win)");
  app.config_formatter(std::make_shared<CLI::ConfigINI>());
  app.add_option("--preset", o.preset, "toy | deconvolution | burgers | impulse")->required();
  app.add_option("--r", o.r, "hyper-prior power: 1, 0.5, -0.5 or -1");
  app.add_option("--beta", o.beta, "override the hyper-prior shape beta");
  app.add_option("--theta-scale", o.theta_scale, "override the hyper-prior scale");
  app.add_option("--posterior", o.posterior, "original | normalized");
  app.add_option("--sampler", o.sampler, "am | mala | gibbs | ess");
  app.add_option("--chains", o.chains, "number of independent chains");
  app.add_option("--samples", o.samples, "iterations per chain (0: preset default)");
  app.add_option("--thin", o.thin, "keep every thin-th iteration (0: preset default)");
  app.add_option("--init", o.init, "map | prior");
  app.add_option("--seed", o.seed, "run seed (default: $SBL_SEED, else 0)");
  app.add_option("--step-size", o.step_size, "MALA step, or AM initial-scale multiplier");
  app.add_flag("--adapt", o.adapt, "adapt the MALA step toward 57.4% acceptance");
  app.add_option("--threads", o.threads, "concurrent chains (0: OpenMP default)");
  app.add_option("--out", o.out, "output directory");
  app.add_flag("--force", o.force, "overwrite a non-empty output directory");
}

template <class F>
auto named(const char* key, F&& f) {
  try {
    return f();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("--") + key + ": " + e.what());
  }
}

}  // namespace

std::string usage_text() {
  CLI::App app{"sblpn"};
  RawOptions o;
  build_app(app, o);
  app.name("sblpn");
  return app.help();
}

ExperimentConfig parse_config(int argc, const char* const* argv) {
  CLI::App app{"sblpn"};
  app.name("sblpn");
  RawOptions o;
  build_app(app, o);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    throw UsageError(app.help());
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  ExperimentConfig cfg;
  cfg.preset = named("preset", [&] { return parse_preset(o.preset); });
  cfg.prior = named("r", [&] { return gg_preset(o.r); });
  if (o.beta) cfg.prior.beta = *o.beta;
  if (o.theta_scale) cfg.prior.theta_scale = *o.theta_scale;
  cfg.posterior = named("posterior", [&] { return parse_coordinates(o.posterior); });
  cfg.sampler = named("sampler", [&] { return parse_sampler(o.sampler); });
  cfg.init = named("init", [&] { return parse_init_policy(o.init); });
  if (cfg.init == InitPolicy::custom) throw UsageError("--init: custom is library-only");
  cfg.chains = o.chains;
  cfg.samples = o.samples;
  cfg.thin = o.thin;
  cfg.seed = o.seed;
  if (app.count("--seed") == 0) {
    if (const char* env = std::getenv("SBL_SEED")) {
      const std::string s(env);
      std::uint64_t v = 0;
      const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size())
        throw UsageError("SBL_SEED: not an unsigned integer: '" + s + "'");
      cfg.seed = v;
    }
  }
  cfg.step_size = o.step_size;
  cfg.adapt = o.adapt;
  cfg.threads = o.threads;
  cfg.out_dir = o.out;
  cfg.force = o.force;
  if (cfg.samples < 0 || cfg.thin < 0) throw UsageError("--samples and --thin must be >= 0");
  cfg.resolve();
  cfg.validate();
  return cfg;
}

std::vector<std::uint64_t> chain_seeds(std::uint64_t seed, int chains) {
  std::vector<std::uint64_t> s;
  for (int k = 0; k < chains; ++k) s.push_back(seed * 1000003u + static_cast<std::uint64_t>(k) + 1u);
  return s;
}

Eigen::VectorXd to_xtheta(const Eigen::VectorXd& state, const PosteriorSpec& spec) {
  const HierPoint h = to_original(state, spec);
  return stack(spec.signal(h.x), h.theta);
}

namespace {

Eigen::VectorXd map_start(const PosteriorSpec& spec) {
  if (spec.coordinate == Coordinates::normalized) return Eigen::VectorXd::Zero(2 * spec.n);
  return stack(Eigen::VectorXd::Zero(spec.n), Eigen::VectorXd::Constant(spec.n, spec.prior.theta_scale));
}

LogDensity guarded(const PosteriorSpec& spec) {
  return [&spec](const Eigen::VectorXd& v) {
    try {
      return logpost(v, spec);
    } catch (const EvaluationError&) {
      return -kInf;
    }
  };
}

LogDensityGrad guarded_grad(const PosteriorSpec& spec) {
  return [&spec](const Eigen::VectorXd& v, Eigen::VectorXd& g) {
    try {
      return logpost_grad(v, spec, g);
    } catch (const EvaluationError&) {
      return -kInf;
    }
  };
}

Eigen::VectorXd am_scales(const Eigen::VectorXd& x0, const PosteriorSpec& spec) {
  if (spec.coordinate == Coordinates::normalized) return Eigen::VectorXd::Constant(x0.size(), 0.1);
  const Eigen::VectorXd theta = x0.tail(spec.n);
  return stack(0.1 * theta.cwiseSqrt(), 0.1 * theta);
}

}  // namespace

ExperimentOutcome run_experiment(const ExperimentConfig& input) {
  ExperimentConfig cfg = input;
  cfg.resolve();
  cfg.validate();

  ExperimentOutcome out;
  out.problem = make_problem(cfg.preset, cfg.seed);
  out.spec = make_posterior(out.problem, cfg.prior, cfg.posterior);
  const PosteriorSpec& spec = out.spec;

  // Deconvolution in original coordinates takes ~2e4 L-BFGS iterations.
  if (cfg.init == InitPolicy::map) out.map = map_estimate(spec, map_start(spec), 40000);

  ChainConfig base;
  base.n_samples = cfg.samples;
  base.thin = cfg.thin;
  base.init = cfg.init;
  base.step_size = cfg.step_size;
  base.adapt = cfg.sampler == SamplerKind::am ? true : cfg.adapt;
  base.burn_in_fraction = kBurnIn;

  const Eigen::VectorXd* map_state = out.map ? &out.map->state : nullptr;
  const LogDensity lp = guarded(spec);
  const LogDensityGrad lpg = guarded_grad(spec);
  const SamplerKind kind = cfg.sampler;
  const ChainKernel kernel = [&](const ChainConfig& c) {
    Rng rng = make_rng(c.seed);
    const Eigen::VectorXd x0 = initial_state(spec, c, rng, map_state);
    switch (kind) {
      case SamplerKind::am: return am_sample(lp, x0, c, rng, am_scales(x0, spec));
      case SamplerKind::mala: return mala_sample(lpg, x0, c, rng);
      case SamplerKind::gibbs: return gibbs_sbl(spec, x0, c, rng);
      case SamplerKind::ess:
        return ess_sample(
            [&](const Eigen::VectorXd& v) {
              try {
                return normalized_loglik(unstack_ref(v), spec);
              } catch (const EvaluationError&) {
                return -kInf;
              }
            },
            x0, c, rng);
    }
    throw std::logic_error("unhandled sampler");
  };

  const auto t0 = std::chrono::steady_clock::now();
  out.internal = run_chains(kernel, base, chain_seeds(cfg.seed, cfg.chains), cfg.threads);
  const double time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.config = cfg;
  if (out.internal.chains.empty()) {
    std::string msg = "all chains failed:";
    for (const auto& f : out.internal.failures)
      msg += " [seed " + std::to_string(f.seed) + "] " + f.message;
    throw SamplerError(msg);
  }

  ChainSet mapped = out.internal;
  for (auto& c : mapped.chains) {
    Eigen::MatrixXd m(c.samples.rows(), c.samples.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      m.row(i) = to_xtheta(c.samples.row(i).transpose(), spec).transpose();
    c.samples = m;
    out.xtheta.push_back(std::move(m));
  }
  out.summary = summarize(mapped, time_s);

  if (cfg.preset == Preset::toy) {
    long below = 0, above = 0, total = 0;
    for (const auto& m : out.xtheta) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        below += m(i, 0) < 0.5;
        above += m(i, 0) > 1.0;
        ++total;
      }
    }
    out.frac_below = static_cast<double>(below) / static_cast<double>(total);
    out.frac_above = static_cast<double>(above) / static_cast<double>(total);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output

void prepare_out_dir(const ExperimentConfig& cfg) {
  const fs::path dir(cfg.out_dir);
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_empty(dir, ec) && !cfg.force)
    throw UsageError("output directory '" + cfg.out_dir +
                     "' is not empty; pass --force to overwrite");
}

namespace {

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + p.string() + "' for writing");
  return f;
}

void close_out(std::ofstream& f, const fs::path& p) {
  f.close();
  if (!f) throw std::runtime_error("write failed for '" + p.string() + "'");
}

std::vector<std::string> column_names(Eigen::Index n) {
  std::vector<std::string> names;
  for (Eigen::Index i = 1; i <= n; ++i) names.push_back("x_" + std::to_string(i));
  for (Eigen::Index i = 1; i <= n; ++i) names.push_back("theta_" + std::to_string(i));
  return names;
}

json config_json(const ExperimentConfig& c) {
  json j;
  j["preset"] = to_string(c.preset);
  j["r"] = c.prior.r;
  j["beta"] = c.prior.beta;
  j["theta_scale"] = c.prior.theta_scale;
  j["posterior"] = to_string(c.posterior);
  j["sampler"] = to_string(c.sampler);
  j["chains"] = c.chains;
  j["samples"] = c.samples;
  j["thin"] = c.thin;
  j["init"] = to_string(c.init);
  j["seed"] = c.seed;
  j["step_size"] = c.step_size ? json(*c.step_size) : json(nullptr);
  j["adapt"] = c.sampler == SamplerKind::am || c.adapt;
  j["threads"] = c.threads;
  j["out"] = c.out_dir;
  return j;
}

json sampler_settings(const ExperimentConfig& c) {
  json j;
  switch (c.sampler) {
    case SamplerKind::am:
      j["proposal"] = "lambda (Sigma_emp + 1e-10 I) after 2d diagonal-proposal iterations";
      j["initial_scales"] = c.posterior == Coordinates::original
                                ? "0.1 sqrt(theta0) for x, 0.1 theta0 for theta"
                                : "0.1";
      j["target_accept"] = 0.234;
      j["robbins_monro_gain"] = "k^-0.6 on log lambda";
      j["cholesky_refresh"] = 50;
      j["burn_in_fraction"] = kBurnIn;
      break;
    case SamplerKind::mala:
      j["target_accept"] = 0.574;
      j["adaptation"] = c.adapt ? "k^-0.6 on log step until burn-in" : "none (fixed step)";
      j["burn_in_fraction"] = kBurnIn;
      break;
    case SamplerKind::gibbs:
      j["x_update"] = "coordinatewise when F^T F = I, else Cholesky of the precision";
      break;
    case SamplerKind::ess:
      j["max_shrink"] = 100;
      break;
  }
  j["retained_samples_include_burn_in"] = true;
  return j;
}

json summary_json(const ExperimentOutcome& o) {
  const RunSummary& s = o.summary;
  const auto names = column_names(o.spec.n);
  json j;
  j["version"] = kVersion;
  j["config"] = config_json(o.config);
  j["problem"] = o.problem.metadata;
  j["sampler_settings"] = sampler_settings(o.config);
  json chains = json::array();
  for (const auto& c : o.internal.chains)
    chains.push_back({{"seed", c.seed},
                      {"accept_rate", c.accept_rate},
                      {"post_freeze_accept", c.post_freeze_accept},
                      {"final_step_size", c.final_step_size}});
  j["chains"] = chains;
  json fails = json::array();
  for (const auto& f : o.internal.failures) fails.push_back({{"seed", f.seed}, {"error", f.message}});
  j["failures"] = fails;
  j["retained_per_chain"] = o.internal.retained;
  j["mpsrf"] = s.mpsrf ? json(*s.mpsrf) : json(nullptr);
  if (!s.mpsrf_coordinates.empty()) {
    json sub = json::array();
    for (auto i : s.mpsrf_coordinates) sub.push_back(names[static_cast<std::size_t>(i)]);
    j["mpsrf_coordinate_subset"] = sub;
  }
  j["ess_min"] = s.ess_min;
  j["ess_min_coordinate"] = names[static_cast<std::size_t>(s.ess_min_coordinate)];
  j["ess_aggregation"] = "sum over chains, minimum over coordinates";
  j["degenerate_coordinates"] = s.degenerate_coordinates;
  j["warnings"] = s.warnings;
  if (o.map) {
    j["map"] = {{"logpost", o.map->logpost},
                {"grad_norm", o.map->grad_norm},
                {"iterations", o.map->iterations},
                {"converged", o.map->converged},
                {"message", o.map->message}};
  }
  if (o.frac_below) {
    j["mode_occupancy"] = {{"x_below_0.5", *o.frac_below}, {"x_above_1.0", *o.frac_above}};
  }
  const auto ti = static_cast<std::size_t>(o.problem.trace_index);
  j["trace"] = {{"coordinate", names[ti]}, {"location", o.problem.grid[o.problem.trace_index]}};
  j["timing"] = {{"time_s", s.time_s},
                 {"mpsrf_minus1_times_time",
                  s.mpsrf_minus1_times_time ? json(*s.mpsrf_minus1_times_time) : json(nullptr)},
                 {"ess_per_second", s.ess_per_second},
                 {"note", "sampling wall time only; excludes setup, MAP search and I/O"}};
  return j;
}

void write_manifest(const fs::path& dir, const std::vector<std::pair<std::string, std::string>>& kv) {
  const fs::path p = dir / "MANIFEST";
  auto f = open_out(p);
  for (const auto& [k, v] : kv) f << k << '=' << v << '\n';
  close_out(f, p);
}

std::vector<std::pair<std::string, std::string>> config_kv(const ExperimentConfig& c) {
  std::vector<std::pair<std::string, std::string>> kv{{"software", std::string("sblpn ") + kVersion}};
  const json j = config_json(c);
  for (const auto& [k, v] : j.items())
    kv.emplace_back("config." + k, v.is_string() ? v.get<std::string>() : v.dump());
  return kv;
}

}  // namespace

void emit_outputs(const ExperimentOutcome& o) {
  const fs::path dir(o.config.out_dir);
  fs::create_directories(dir);
  const Eigen::Index n = o.spec.n;
  const auto names = column_names(n);

  std::string header;
  for (std::size_t i = 0; i < names.size(); ++i) header += (i ? "," : "") + names[i];

  std::vector<std::string> files;
  for (std::size_t k = 0; k < o.xtheta.size(); ++k) {
    const std::string name = "chain_" + std::to_string(k) + ".csv";
    const fs::path p = dir / name;
    auto f = open_out(p);
    f << header << '\n';
    const Eigen::MatrixXd& m = o.xtheta[k];
    std::string line;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      line.clear();
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (j) line += ',';
        line += num(m(i, j));
      }
      f << line << '\n';
    }
    close_out(f, p);
    files.push_back(name);
  }

  {
    const fs::path p = dir / "summary.json";
    auto f = open_out(p);
    f << summary_json(o).dump(2) << '\n';
    close_out(f, p);
  }

  {
    Eigen::MatrixXd pooled(o.internal.retained * static_cast<Eigen::Index>(o.xtheta.size()), 2 * n);
    for (std::size_t k = 0; k < o.xtheta.size(); ++k)
      pooled.middleRows(static_cast<Eigen::Index>(k) * o.internal.retained, o.internal.retained) =
          o.xtheta[k];
    const QuantileBand b = quantile_band(pooled, 0.05, 0.95);
    const fs::path p = dir / "bands.csv";
    auto f = open_out(p);
    f << "coordinate,location,truth,mean,q05,q95\n";
    for (Eigen::Index j = 0; j < 2 * n; ++j) {
      const Eigen::Index i = j % n;
      const std::string truth = j < n ? num(o.problem.true_state[i]) : "";
      f << names[static_cast<std::size_t>(j)] << ',' << num(o.problem.grid[i]) << ',' << truth
        << ',' << num(b.mean[j]) << ',' << num(b.lower[j]) << ',' << num(b.upper[j]) << '\n';
    }
    close_out(f, p);
  }

  {
    const Eigen::Index t = o.problem.trace_index;
    const bool normalized = o.config.posterior == Coordinates::normalized;
    const std::string a = normalized ? "u" : (o.spec.reparam ? "z" : "x");
    const std::string b = normalized ? "tau" : "theta";
    const fs::path p = dir / "trace.csv";
    auto f = open_out(p);
    f << "chain,iteration,x,theta," << a << ',' << b << '\n';
    for (std::size_t k = 0; k < o.xtheta.size(); ++k) {
      const auto& xs = o.xtheta[k];
      const auto& in = o.internal.chains[k].samples;
      for (Eigen::Index i = 0; i < xs.rows(); ++i)
        f << k << ',' << (i + 1) * o.config.thin << ',' << num(xs(i, t)) << ','
          << num(xs(i, n + t)) << ',' << num(in(i, t)) << ',' << num(in(i, n + t)) << '\n';
    }
    close_out(f, p);
  }

  auto kv = config_kv(o.config);
  std::string seeds;
  for (const auto& c : o.internal.chains) seeds += (seeds.empty() ? "" : ",") + std::to_string(c.seed);
  kv.emplace_back("chain_seeds", seeds);
  std::string failed;
  for (const auto& f : o.internal.failures)
    failed += (failed.empty() ? "" : "; ") + std::to_string(f.seed) + ": " + f.message;
  kv.emplace_back("failed_chains", failed);
  kv.emplace_back("complete", o.internal.failures.empty() ? "true" : "false");
  std::string fl;
  for (const auto& s : files) fl += (fl.empty() ? "" : ",") + s;
  kv.emplace_back("files", fl + ",summary.json,bands.csv,trace.csv");
  kv.emplace_back("columns", "x in physical coordinates, theta per prior-level coordinate");
  kv.emplace_back("wall_time", "sampling loop only; excludes problem setup, MAP search and I/O");
  write_manifest(dir, kv);
}

void emit_failure_manifest(const ExperimentConfig& cfg, const std::string& error) {
  const fs::path dir(cfg.out_dir);
  fs::create_directories(dir);
  auto kv = config_kv(cfg);
  kv.emplace_back("complete", "false");
  std::string e = error;
  for (char& ch : e)
    if (ch == '\n') ch = ' ';
  kv.emplace_back("error", e);
  write_manifest(dir, kv);
}

}  // namespace sblpn
