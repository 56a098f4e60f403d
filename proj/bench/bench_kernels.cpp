// OpenMP kernels against their serial references.

#include <benchmark/benchmark.h>

#include <vector>

#include "sblpn/diagnostics.hpp"
#include "sblpn/experiment.hpp"

using namespace sblpn;

namespace {

std::vector<double> tau_grid(std::size_t n) {
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = -8.0 + 16.0 * static_cast<double>(i) / static_cast<double>(n);
  return t;
}

template <bool Parallel>
void BM_t_tau(benchmark::State& st) {
  const auto tau = tau_grid(static_cast<std::size_t>(st.range(0)));
  std::vector<double> theta(tau.size());
  for (auto _ : st) {
    if constexpr (Parallel) t_tau_batch(tau, theta, kGGPresets[3]);
    else t_tau_batch_serial(tau, theta, kGGPresets[3]);
    benchmark::DoNotOptimize(theta.data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

template <bool Parallel>
void BM_s_theta(benchmark::State& st) {
  const auto tau = tau_grid(static_cast<std::size_t>(st.range(0)));
  std::vector<double> theta(tau.size()), back(tau.size());
  t_tau_batch_serial(tau, theta, kGGPresets[3]);
  for (auto _ : st) {
    if constexpr (Parallel) s_theta_batch(theta, back, kGGPresets[3]);
    else s_theta_batch_serial(theta, back, kGGPresets[3]);
    benchmark::DoNotOptimize(back.data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

template <bool Parallel>
void BM_ess(benchmark::State& st) {
  Rng rng = make_rng(1);
  Eigen::MatrixXd m(20000, st.range(0));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  for (auto _ : st) {
    auto e = Parallel ? ess_per_coordinate(m) : ess_per_coordinate_serial(m);
    benchmark::DoNotOptimize(e.data());
  }
}

template <bool Parallel>
void BM_chains(benchmark::State& st) {
  const auto spec = make_posterior(make_problem(Preset::toy, 0), kGGPresets[3], Coordinates::normalized);
  const LogDensity f = [&](const Eigen::VectorXd& v) { return logpost(v, spec); };
  const ChainKernel kernel = [&](const ChainConfig& c) {
    Rng rng = make_rng(c.seed);
    return am_sample(f, initial_state(spec, c, rng), c, rng);
  };
  ChainConfig base;
  base.n_samples = 20000;
  base.thin = 10;
  const auto seeds = chain_seeds(1, 4);
  for (auto _ : st) {
    auto cs = Parallel ? run_chains(kernel, base, seeds) : run_chains_serial(kernel, base, seeds);
    benchmark::DoNotOptimize(cs.chains.data());
  }
}

}  // namespace

BENCHMARK(BM_t_tau<false>)->Name("t_tau/serial")->Arg(1 << 14);
BENCHMARK(BM_t_tau<true>)->Name("t_tau/openmp")->Arg(1 << 14);
BENCHMARK(BM_s_theta<false>)->Name("s_theta/serial")->Arg(1 << 14);
BENCHMARK(BM_s_theta<true>)->Name("s_theta/openmp")->Arg(1 << 14);
BENCHMARK(BM_ess<false>)->Name("ess/serial")->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ess<true>)->Name("ess/openmp")->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_chains<false>)->Name("run_chains/serial")->Unit(benchmark::kMillisecond);
BENCHMARK(BM_chains<true>)->Name("run_chains/openmp")->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
