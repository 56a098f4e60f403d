#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "sblpn/model.hpp"
#include "sblpn/random.hpp"

using namespace sblpn;

namespace {

PosteriorSpec toy_spec(const GGParams& p, Coordinates c) {
  return make_posterior(make_problem(Preset::toy, 0), p, c);
}

// Interior point: the image of a moderate reference draw.
HierPoint random_interior(Eigen::Index n, const GGParams& p, Rng& rng) {
  RefPoint rp{Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    rp.u[i] = standard_normal(rng);
    rp.tau[i] = std::clamp(standard_normal(rng), -3.0, 3.0);
  }
  return T_map(rp, p);
}

// Direct transcription of the log posterior with the log-theta power written
// out; differences between points cancel every constant.
double explicit_logpost(const HierPoint& s, const PosteriorSpec& spec) {
  const GGParams& p = spec.prior;
  const Eigen::VectorXd x = spec.signal(s.x);
  const Eigen::MatrixXd F = spec.likelihood.forward->jacobian(x);
  const Eigen::VectorXd r = F * x - spec.likelihood.data;
  double v = -r.squaredNorm() / (2 * spec.likelihood.noise_std * spec.likelihood.noise_std);
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    const double t = s.theta[i];
    v -= s.x[i] * s.x[i] / (2 * t) + std::pow(t / p.theta_scale, p.r) -
         (p.r * p.beta - 1.5) * std::log(t);
  }
  return v;
}

Eigen::VectorXd grad_flat(const HierPoint& g) { return stack(g.x, g.theta); }
Eigen::VectorXd grad_flat(const RefPoint& g) { return stack(g.u, g.tau); }

double fd_check_original(const PosteriorSpec& spec, const HierPoint& s) {
  const Eigen::Index n = s.size();
  Eigen::VectorXd h(2 * n);
  h << 1e-6 * s.theta.cwiseSqrt(), 1e-6 * s.theta;
  auto f = [&](const Eigen::VectorXd& v) { return original_logpost(unstack_hier(v), spec); };
  const Eigen::VectorXd fd = oracle::fd_gradient(f, stack(s.x, s.theta), h);
  return oracle::rel_error(grad_flat(original_logpost_grad(s, spec)), fd);
}

double fd_check_normalized(const PosteriorSpec& spec, const RefPoint& rp) {
  const Eigen::Index n = rp.size();
  auto f = [&](const Eigen::VectorXd& v) { return normalized_logpost(unstack_ref(v), spec); };
  const Eigen::VectorXd fd =
      oracle::fd_gradient(f, stack(rp.u, rp.tau), Eigen::VectorXd::Constant(2 * n, 1e-6));
  return oracle::rel_error(grad_flat(normalized_logpost_grad(rp, spec)), fd);
}

}  // namespace

TEST_CASE("loglik") {
  auto id = std::make_shared<LinearOperator>(Eigen::MatrixXd::Identity(3, 3));
  const Eigen::VectorXd y = Eigen::Vector3d(0.1, -2.0, 5.0);
  GaussianLikelihood lik{id, y, 0.3};
  CHECK(loglik(y, lik) == 0.0);

  const auto spec = toy_spec(kGGPresets[3], Coordinates::original);
  CHECK(loglik(Eigen::VectorXd::Constant(1, 0.2), spec.likelihood) == 0.0);

  Rng rng = make_rng(11);
  Eigen::MatrixXd A(7, 5);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = standard_normal(rng);
  Eigen::VectorXd data(7), x(5);
  for (auto& v : data) v = standard_normal(rng);
  for (auto& v : x) v = standard_normal(rng);
  GaussianLikelihood lin{std::make_shared<LinearOperator>(A), data, 0.05};
  const Eigen::VectorXd r = A * x - data;
  const double direct = -0.5 * r.dot(r) / 0.0025;
  CHECK(std::fabs(loglik(x, lin) - direct) <= 1e-12 * std::fabs(direct));

  CHECK_THROWS_AS((GaussianLikelihood{id, Eigen::VectorXd::Zero(2), 1.0}.validate()),
                  std::invalid_argument);
  CHECK_THROWS_AS((GaussianLikelihood{id, y, 0.0}.validate()), std::invalid_argument);
}

TEST_CASE("original posterior matches the explicit formula up to a constant") {
  for (const auto& p : kGGPresets) {
    for (Preset pr : {Preset::toy, Preset::deconvolution}) {
      const auto spec = make_posterior(make_problem(pr, 4), p, Coordinates::original);
      Rng rng = make_rng(5);
      const HierPoint s0 = random_interior(spec.n, p, rng);
      const double base = original_logpost(s0, spec) - explicit_logpost(s0, spec);
      for (int k = 0; k < 20; ++k) {
        const HierPoint s = random_interior(spec.n, p, rng);
        const double d = original_logpost(s, spec) - explicit_logpost(s, spec) - base;
        CHECK(std::fabs(d) <= 1e-10 * std::max(1.0, std::fabs(original_logpost(s, spec))));
      }
    }
  }
}

TEST_CASE("original posterior boundary") {
  const auto spec = toy_spec(kGGPresets[3], Coordinates::original);
  HierPoint s{Eigen::VectorXd::Constant(1, 0.3), Eigen::VectorXd::Zero(1)};
  CHECK(original_logpost(s, spec) == -std::numeric_limits<double>::infinity());
  s.theta[0] = -1.0;
  CHECK(original_logpost(s, spec) == -std::numeric_limits<double>::infinity());
  double prev = std::numeric_limits<double>::infinity();
  for (double t = 1e-12; t > 1e-20; t /= 10) {
    s.theta[0] = t;
    const double v = original_logpost(s, spec);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("toy posterior has two separated local maxima") {
  const auto spec = toy_spec(kGGPresets[3], Coordinates::original);
  const MapResult near_zero = map_estimate(spec, stack(Eigen::VectorXd::Constant(1, 0.01),
                                                       Eigen::VectorXd::Constant(1, 1e-4)));
  const MapResult near_data = map_estimate(spec, stack(Eigen::VectorXd::Constant(1, 0.15),
                                                       Eigen::VectorXd::Constant(1, 5e-3)));
  REQUIRE(near_zero.converged);
  REQUIRE(near_data.converged);
  CHECK(std::fabs(near_zero.state[0]) < 0.02);
  CHECK(near_data.state[0] > 0.1);
  CHECK(near_data.state[0] < 0.2);
  // A saddle separates them along the segment joining the two modes.
  double lowest = std::numeric_limits<double>::infinity();
  for (int k = 1; k < 100; ++k) {
    const double w = k / 100.0;
    const Eigen::VectorXd lt =
        (1 - w) * near_zero.state.array().log() + w * near_data.state.array().log();
    const double x = (1 - w) * near_zero.state[0] + w * near_data.state[0];
    lowest = std::min(lowest, original_logpost(HierPoint{Eigen::VectorXd::Constant(1, x),
                                                         Eigen::VectorXd::Constant(1, std::exp(lt[1]))},
                                               spec));
  }
  CHECK(lowest < std::min(near_zero.logpost, near_data.logpost) - 0.1);
}

TEST_CASE("original gradient matches finite differences") {
  for (const auto& p : kGGPresets) {
    for (Preset pr : {Preset::toy, Preset::deconvolution}) {
      const auto spec = make_posterior(make_problem(pr, 6), p, Coordinates::original);
      Rng rng = make_rng(7);
      for (int k = 0; k < 10; ++k) {
        const HierPoint s = random_interior(spec.n, p, rng);
        CHECK(fd_check_original(spec, s) < 1e-5);
      }
    }
  }

  const auto spec = toy_spec(kGGPresets[0], Coordinates::original);
  const HierPoint s{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 0.1)};
  const HierPoint g = original_logpost_grad(s, spec);
  CHECK(g.x[0] == doctest::Approx(0.2 / std::pow(10.0, -2.8)).epsilon(1e-14));
}

TEST_CASE("normalized gradient matches finite differences") {
  for (const auto& p : kGGPresets) {
    for (Preset pr : {Preset::toy, Preset::deconvolution}) {
      const auto spec = make_posterior(make_problem(pr, 6), p, Coordinates::normalized);
      Rng rng = make_rng(8);
      for (int k = 0; k < 10; ++k) {
        RefPoint rp{Eigen::VectorXd(spec.n), Eigen::VectorXd(spec.n)};
        for (Eigen::Index i = 0; i < spec.n; ++i) {
          rp.u[i] = standard_normal(rng);
          rp.tau[i] = standard_normal(rng);
        }
        CHECK(fd_check_normalized(spec, rp) < 1e-5);
      }
    }
  }
}

TEST_CASE("normalized posterior with a constant likelihood") {
  auto zero = std::make_shared<LinearOperator>(Eigen::MatrixXd::Zero(2, 6));
  PosteriorSpec spec;
  spec.likelihood = GaussianLikelihood{zero, Eigen::VectorXd::Zero(2), 0.1};
  spec.prior = kGGPresets[1];
  spec.n = 6;
  spec.coordinate = Coordinates::normalized;
  Rng rng = make_rng(2);
  for (int k = 0; k < 20; ++k) {
    RefPoint rp{Eigen::VectorXd(6), Eigen::VectorXd(6)};
    for (Eigen::Index i = 0; i < 6; ++i) {
      rp.u[i] = 2 * standard_normal(rng);
      rp.tau[i] = 2 * standard_normal(rng);
    }
    CHECK(normalized_logpost(rp, spec) == -0.5 * (rp.u.squaredNorm() + rp.tau.squaredNorm()));
    const RefPoint g = normalized_logpost_grad(rp, spec);
    CHECK(g.u == -rp.u);
    CHECK(g.tau == -rp.tau);
  }
}

TEST_CASE("normalized gradient at u = 0") {
  const auto spec = make_posterior(make_problem(Preset::deconvolution, 1), kGGPresets[2],
                                   Coordinates::normalized);
  RefPoint rp{Eigen::VectorXd::Zero(spec.n), Eigen::VectorXd::LinSpaced(spec.n, -2, 2)};
  Eigen::VectorXd gx;
  loglik_grad(spec.signal(Eigen::VectorXd::Zero(spec.n)), spec.likelihood, gx);
  const Eigen::VectorXd gz = spec.reparam->solve_Lt(gx);
  const RefPoint g = normalized_logpost_grad(rp, spec);
  Eigen::VectorXd theta(spec.n);
  for (Eigen::Index i = 0; i < spec.n; ++i) theta[i] = t_tau(rp.tau[i], spec.prior);
  CHECK(oracle::rel_error(g.u, theta.cwiseSqrt().cwiseProduct(gz)) < 1e-14);
  CHECK(oracle::rel_error(g.tau, -rp.tau) < 1e-14);
}

TEST_CASE("change of variables") {
  for (const auto& p : kGGPresets) {
    for (Preset pr : {Preset::toy, Preset::deconvolution}) {
      const auto orig = make_posterior(make_problem(pr, 3), p, Coordinates::original);
      const auto norm = make_posterior(make_problem(pr, 3), p, Coordinates::normalized);
      Rng rng = make_rng(12);
      std::vector<double> c;
      while (c.size() < 100) {
        const HierPoint s = random_interior(orig.n, p, rng);
        bool ok = true;
        for (Eigen::Index i = 0; i < s.size(); ++i) ok = ok && std::fabs(s_theta(s.theta[i], p)) <= 8;
        if (!ok) continue;
        c.push_back(normalized_logpost(S_map(s, p), norm) + log_det_jac_S(s, p) -
                    original_logpost(s, orig));
      }
      CHECK(oracle::variance(c) < 1e-16);
    }
  }
}

TEST_CASE("increment reparameterization") {
  const auto pb = make_problem(Preset::deconvolution, 2);
  const auto spec = make_posterior(pb, kGGPresets[3], Coordinates::original);
  REQUIRE(spec.reparam);
  const Eigen::MatrixXd F = std::static_pointer_cast<const LinearOperator>(pb.op)->matrix();
  const Eigen::MatrixXd Linv = FdMatrix(128).matrix().inverse();
  GaussianLikelihood composed{std::make_shared<LinearOperator>(F * Linv), pb.data, pb.noise_std};
  Rng rng = make_rng(4);
  for (int k = 0; k < 10; ++k) {
    Eigen::VectorXd z(128);
    for (auto& v : z) v = 0.1 * standard_normal(rng);
    const double a = loglik(spec.signal(z), spec.likelihood), b = loglik(z, composed);
    CHECK(std::fabs(a - b) <= 1e-12 * std::max(1.0, std::fabs(b)));
  }
}

TEST_CASE("flat state helpers") {
  const auto spec = toy_spec(kGGPresets[0], Coordinates::normalized);
  const Eigen::VectorXd st = stack(Eigen::VectorXd::Constant(1, 0.3), Eigen::VectorXd::Constant(1, -0.4));
  const RefPoint rp = unstack_ref(st);
  CHECK(rp.u[0] == 0.3);
  CHECK(rp.tau[0] == -0.4);
  CHECK(logpost(st, spec) == normalized_logpost(rp, spec));
  Eigen::VectorXd g;
  CHECK(logpost_grad(st, spec, g) == logpost(st, spec));
  const HierPoint h = to_original(st, spec);
  CHECK(h.theta[0] == t_tau(-0.4, spec.prior));
  CHECK(parse_coordinates("original") == Coordinates::original);
  CHECK_THROWS_AS(parse_coordinates("latent"), std::invalid_argument);
}

TEST_CASE("MAP: toy r = 1 is unique") {
  const auto spec = toy_spec(kGGPresets[0], Coordinates::original);
  std::vector<MapResult> runs;
  for (double x0 : {-0.4, 0.0, 0.5, 1.5})
    for (double t0 : {1e-3, 0.05, 1.0})
      runs.push_back(map_estimate(spec, stack(Eigen::VectorXd::Constant(1, x0),
                                               Eigen::VectorXd::Constant(1, t0))));
  for (const auto& r : runs) {
    CHECK(r.converged);
    CHECK(r.grad_norm <= 1e-6 * (1 + std::fabs(r.logpost)));
    CHECK(std::fabs(r.state[0] - runs[0].state[0]) < 1e-5);
    CHECK(std::fabs(r.state[1] - runs[0].state[1]) < 1e-5 * runs[0].state[1]);
  }
  // Stationary in (x, theta).
  const HierPoint g = original_logpost_grad(unstack_hier(runs[0].state), spec);
  CHECK(grad_flat(g).norm() < 1e-4);

  const MapResult again = map_estimate(spec, runs[0].state);
  CHECK(std::fabs(again.logpost - runs[0].logpost) < 1e-10);
}

TEST_CASE("MAP: deconvolution in both coordinates") {
  for (Coordinates c : {Coordinates::original, Coordinates::normalized}) {
    const auto spec = make_posterior(make_problem(Preset::deconvolution, 1), kGGPresets[0], c);
    const Eigen::VectorXd init =
        c == Coordinates::original
            ? stack(Eigen::VectorXd::Zero(128), Eigen::VectorXd::Constant(128, kGGPresets[0].theta_scale))
            : Eigen::VectorXd::Zero(256);
    // (x, log theta) is poorly conditioned here; L-BFGS needs ~2e4 iterations.
    const MapResult r = map_estimate(spec, init, 40000);
    CHECK(r.converged);
    CHECK(r.grad_norm <= 1e-6 * (1 + std::fabs(r.logpost)));
    CHECK(r.logpost > logpost(init, spec));
    const MapResult again = map_estimate(spec, r.state, 40000);
    CHECK(std::fabs(again.logpost - r.logpost) < 1e-10 * std::max(1.0, std::fabs(r.logpost)));

    const MapResult capped = map_estimate(spec, init, 3);
    CHECK(!capped.converged);
    CHECK(capped.iterations == 3);
    CHECK(!capped.message.empty());
  }
}
