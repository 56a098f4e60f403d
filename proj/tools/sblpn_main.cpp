#include <cstdio>
#include <exception>
#include <iostream>

#include "sblpn/experiment.hpp"

namespace {

constexpr int kUsage = 2;
constexpr int kRunFailed = 3;
constexpr int kPartial = 4;

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << sblpn::usage_text();
    return kUsage;
  }

  sblpn::ExperimentConfig cfg;
  try {
    cfg = sblpn::parse_config(argc, argv);
    sblpn::prepare_out_dir(cfg);
  } catch (const sblpn::UsageError& e) {
    std::cerr << e.what() << '\n';
    return kUsage;
  }

  try {
    const sblpn::ExperimentOutcome out = sblpn::run_experiment(cfg);
    sblpn::emit_outputs(out);
    const auto& s = out.summary;
    std::printf("%s: %zu chains x %ld retained -> %s\n", sblpn::to_string(cfg.preset).c_str(),
                out.internal.chains.size(), static_cast<long>(out.internal.retained),
                cfg.out_dir.c_str());
    std::printf("  time %.3f s, mpsrf %s, ess_min %.1f\n", s.time_s,
                s.mpsrf ? std::to_string(*s.mpsrf).c_str() : "n/a", s.ess_min);
    for (const auto& w : s.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    if (!out.internal.failures.empty()) {
      for (const auto& f : out.internal.failures)
        std::fprintf(stderr, "chain seed %llu failed: %s\n",
                     static_cast<unsigned long long>(f.seed), f.message.c_str());
      return kPartial;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    try {
      sblpn::emit_failure_manifest(cfg, e.what());
    } catch (const std::exception& e2) {
      std::cerr << "error: " << e2.what() << '\n';
    }
    return kRunFailed;
  }
}
