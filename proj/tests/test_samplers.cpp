#include <doctest.h>

#include <boost/math/distributions/inverse_gamma.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include "oracles.hpp"
#include "sblpn/diagnostics.hpp"
#include "sblpn/samplers.hpp"

using namespace sblpn;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Mean within 3 Monte Carlo standard errors (ESS-based), variance within 10%.
void check_moments(const Eigen::MatrixXd& s, const Eigen::VectorXd& mean, const Eigen::VectorXd& var) {
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    const Eigen::VectorXd c = s.col(j);
    const double m = c.mean();
    const double v = (c.array() - m).square().sum() / static_cast<double>(c.size() - 1);
    const double se = std::sqrt(var[j] / ess_1d(c).ess);
    CHECK(std::fabs(m - mean[j]) < 3 * se);
    CHECK(std::fabs(v / var[j] - 1) < 0.1);
  }
}

const Eigen::VectorXd kMean = (Eigen::VectorXd(3) << 1.0, -2.0, 0.5).finished();
const Eigen::VectorXd kVar = (Eigen::VectorXd(3) << 1.0, 4.0, 0.25).finished();

double gauss_lp(const Eigen::VectorXd& x) {
  return -0.5 * ((x - kMean).array().square() / kVar.array()).sum();
}
double gauss_lpg(const Eigen::VectorXd& x, Eigen::VectorXd& g) {
  g = -((x - kMean).array() / kVar.array()).matrix();
  return gauss_lp(x);
}

PosteriorSpec scalar_spec(double y, double sigma, const GGParams& p) {
  PosteriorSpec spec;
  spec.likelihood = GaussianLikelihood{std::make_shared<LinearOperator>(Eigen::MatrixXd::Ones(1, 1)),
                                       Eigen::VectorXd::Constant(1, y), sigma};
  spec.prior = p;
  spec.n = 1;
  spec.coordinate = Coordinates::original;
  return spec;
}

}  // namespace

TEST_CASE("AM: standard normal d = 5") {
  ChainConfig cfg;
  cfg.n_samples = 100000;
  Rng rng = make_rng(1);
  const auto r = am_sample([](const Eigen::VectorXd& x) { return -0.5 * x.squaredNorm(); },
                           Eigen::VectorXd::Zero(5), cfg, rng);
  CHECK(r.samples.rows() == 100000);
  const Eigen::MatrixXd tail = r.samples.bottomRows(50000);
  for (Eigen::Index j = 0; j < 5; ++j) {
    const Eigen::VectorXd c = tail.col(j);
    CHECK(std::fabs(c.mean()) < 0.05);
    const double v = (c.array() - c.mean()).square().mean();
    CHECK(v > 0.9);
    CHECK(v < 1.1);
  }
  CHECK(std::fabs(r.post_freeze_accept - 0.234) < 0.05);
}

TEST_CASE("AM and MALA reproduce a Gaussian target") {
  ChainConfig cfg;
  cfg.n_samples = 100000;
  Rng r1 = make_rng(2);
  const auto am = am_sample(gauss_lp, Eigen::VectorXd::Zero(3), cfg, r1);
  check_moments(am.samples.bottomRows(50000), kMean, kVar);

  Rng r2 = make_rng(3);
  const auto mala = mala_sample(gauss_lpg, Eigen::VectorXd::Zero(3), cfg, r2);
  check_moments(mala.samples.bottomRows(50000), kMean, kVar);
  CHECK(std::fabs(mala.post_freeze_accept - 0.574) < 0.05);
  CHECK(mala.final_step_size > 0.0);
}

TEST_CASE("AM adapts on the toy posterior") {
  const auto spec = make_posterior(make_problem(Preset::toy, 0), kGGPresets[3], Coordinates::normalized);
  ChainConfig cfg;
  cfg.n_samples = 100000;
  Rng rng = make_rng(4);
  const auto r = am_sample([&](const Eigen::VectorXd& s) { return logpost(s, spec); },
                           Eigen::VectorXd::Zero(2), cfg, rng);
  CHECK(std::fabs(r.post_freeze_accept - 0.234) < 0.05);
}

TEST_CASE("AM rejects the boundary") {
  ChainConfig cfg;
  cfg.n_samples = 5000;
  Rng rng = make_rng(5);
  const auto r = am_sample(
      [](const Eigen::VectorXd& x) { return x[0] <= 0.0 ? kNegInf : -x[0]; },
      Eigen::VectorXd::Constant(1, 0.01), cfg, rng);
  CHECK(r.samples.minCoeff() > 0.0);
  Rng rng2 = make_rng(5);
  CHECK_THROWS_AS(am_sample([](const Eigen::VectorXd&) { return kNegInf; }, Eigen::VectorXd::Zero(1),
                            cfg, rng2),
                  SamplerError);
}

TEST_CASE("MALA with a flat target is a random walk") {
  ChainConfig cfg;
  cfg.n_samples = 20000;
  cfg.step_size = 0.3;
  cfg.adapt = false;
  Rng rng = make_rng(6);
  const auto r = mala_sample(
      [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
        g = Eigen::VectorXd::Zero(x.size());
        return x.cwiseAbs().maxCoeff() > 1e6 ? kNegInf : 0.0;
      },
      Eigen::VectorXd::Zero(2), cfg, rng);
  CHECK(r.accept_rate == 1.0);
  CHECK(r.final_step_size == 0.3);
  const Eigen::MatrixXd inc = r.samples.bottomRows(19999) - r.samples.topRows(19999);
  for (Eigen::Index j = 0; j < 2; ++j) {
    const double v = inc.col(j).squaredNorm() / 19999.0;
    CHECK(std::fabs(v / 0.09 - 1) < 0.05);
  }
}

TEST_CASE("ESS sampler") {
  ChainConfig cfg;
  cfg.n_samples = 10000;
  Rng rng = make_rng(7);
  const auto flat = ess_sample([](const Eigen::VectorXd&) { return 0.0; }, Eigen::VectorXd::Zero(2),
                               cfg, rng);
  CHECK(flat.accept_rate == 1.0);
  check_moments(flat.samples, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2));

  // Conjugate: prior N(0, 1), likelihood N(a; x, s^2).
  const double a = 1.3, s2 = 0.25;
  const double vstar = 1.0 / (1.0 + 1.0 / s2), mstar = vstar * a / s2;
  cfg.n_samples = 100000;
  Rng rng2 = make_rng(8);
  const auto conj = ess_sample(
      [&](const Eigen::VectorXd& x) { return -0.5 * (x[0] - a) * (x[0] - a) / s2; },
      Eigen::VectorXd::Zero(1), cfg, rng2);
  check_moments(conj.samples, Eigen::VectorXd::Constant(1, mstar), Eigen::VectorXd::Constant(1, vstar));

  Rng rng3 = make_rng(9);
  cfg.n_samples = 10;
  CHECK_THROWS_AS(ess_sample(
                      [](const Eigen::VectorXd& x) {
                        return x[0] == 0.0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
                      },
                      Eigen::VectorXd::Zero(1), cfg, rng3),
                  SamplerError);
}

TEST_CASE("Gibbs: conditional of x given theta") {
  const double y = 0.3, sigma = 0.2, theta = 0.5;
  const double var = 1.0 / (1.0 / (sigma * sigma) + 1.0 / theta), mu = var * y / (sigma * sigma);
  for (bool orth : {true, false}) {
    Rng rng = make_rng(10);
    std::vector<double> xs(100000);
    for (auto& v : xs)
      v = gibbs_draw_x(Eigen::MatrixXd::Ones(1, 1), orth, Eigen::VectorXd::Constant(1, y), sigma,
                       Eigen::VectorXd::Constant(1, theta), rng)[0];
    CHECK(oracle::ks_statistic(xs, [&](double t) { return oracle::phi_cdf_fast((t - mu) / std::sqrt(var)); }) <
          0.01);
  }
}

TEST_CASE("Gibbs: multivariate x conditional") {
  // Non-orthogonal operator: compare the sample covariance with the dense inverse.
  Eigen::MatrixXd A(3, 2);
  A << 1, 0.5, 0.2, 1, 0.3, -0.4;
  const Eigen::Vector3d y(0.4, -0.1, 0.2);
  const Eigen::Vector2d theta(0.3, 2.0);
  const double sigma = 0.5;
  const Eigen::MatrixXd P = A.transpose() * A / (sigma * sigma) +
                            Eigen::Vector2d(1 / theta[0], 1 / theta[1]).asDiagonal().toDenseMatrix();
  const Eigen::MatrixXd C = P.inverse();
  const Eigen::VectorXd mu = C * A.transpose() * y / (sigma * sigma);
  Rng rng = make_rng(11);
  const int N = 100000;
  Eigen::MatrixXd s(N, 2);
  for (int k = 0; k < N; ++k) s.row(k) = gibbs_draw_x(A, false, y, sigma, theta, rng).transpose();
  const Eigen::RowVectorXd m = s.colwise().mean();
  const Eigen::MatrixXd c = s.rowwise() - m;
  const Eigen::MatrixXd cov = c.transpose() * c / (N - 1);
  for (int j = 0; j < 2; ++j) CHECK(std::fabs(m[j] - mu[j]) < 4 * std::sqrt(C(j, j) / N));
  CHECK((cov - C).cwiseAbs().maxCoeff() < 0.03 * C.cwiseAbs().maxCoeff());
}

TEST_CASE("Gibbs: conditional of theta given x") {
  const GGParams p = kGGPresets[3];
  const GGParams c = gibbs_theta_conditional(0.7, p);
  CHECK(c.r == -1.0);
  CHECK(c.beta == doctest::Approx(1.5017).epsilon(1e-15));
  CHECK(c.theta_scale == doctest::Approx(p.theta_scale + 0.245).epsilon(1e-15));

  // Inverse gamma with shape beta + 1/2 and scale theta_scale + x^2 / 2.
  const boost::math::inverse_gamma_distribution<double> ig(1.5017, p.theta_scale + 0.245);
  Rng rng = make_rng(12);
  std::vector<double> ts(100000);
  for (auto& v : ts) v = gibbs_draw_theta(Eigen::VectorXd::Constant(1, 0.7), p, rng)[0];
  CHECK(oracle::ks_statistic(ts, [&](double t) { return boost::math::cdf(ig, t); }) < 0.01);
}

TEST_CASE("Gibbs sweep preserves the exact posterior") {
  // n = 1, F = 1: x has a Student-type prior marginal, so p(x | y) is tabulated
  // by quadrature and theta | x is inverse gamma.
  const GGParams p{-1.0, 2.0, 0.5};
  const double y = 0.3, sigma = 0.4;
  const auto spec = scalar_spec(y, sigma, p);
  auto dens = [&](double x) {
    return std::pow(1 + x * x / (2 * p.theta_scale), -(p.beta + 0.5)) *
           std::exp(-(x - y) * (x - y) / (2 * sigma * sigma));
  };
  const double lo = y - 12 * sigma, hi = y + 12 * sigma;
  const int G = 200001;
  std::vector<double> grid(G), cdf(G, 0.0);
  for (int i = 0; i < G; ++i) grid[i] = lo + (hi - lo) * i / (G - 1);
  for (int i = 1; i < G; ++i) cdf[i] = cdf[i - 1] + 0.5 * (dens(grid[i]) + dens(grid[i - 1])) * (grid[i] - grid[i - 1]);
  const double Z = cdf.back();
  const double Ex = oracle::integrate([&](double x) { return x * dens(x); }, lo, hi) / Z;
  const double Vx = oracle::integrate([&](double x) { return (x - Ex) * (x - Ex) * dens(x); }, lo, hi) / Z;
  const double Elt = oracle::integrate([&](double x) {
                       return dens(x) * (std::log(p.theta_scale + x * x / 2) -
                                         boost::math::digamma(p.beta + 0.5));
                     }, lo, hi) / Z;

  Rng rng = make_rng(13);
  ChainConfig cfg;
  cfg.n_samples = 1;
  const int R = 10000;
  std::vector<double> xs(R), lts(R);
  for (int k = 0; k < R; ++k) {
    const double u = uniform_open01(rng) * Z;
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    const auto i = std::max<std::ptrdiff_t>(1, it - cdf.begin());
    const double w = (u - cdf[i - 1]) / (cdf[i] - cdf[i - 1]);
    const double x0 = grid[i - 1] + w * (grid[i] - grid[i - 1]);
    const boost::math::inverse_gamma_distribution<double> ig(p.beta + 0.5, p.theta_scale + x0 * x0 / 2);
    const double t0 = boost::math::quantile(ig, uniform_open01(rng));
    const auto r = gibbs_sbl(spec, Eigen::Vector2d(x0, t0), cfg, rng);
    xs[k] = r.samples(0, 0);
    lts[k] = std::log(r.samples(0, 1));
  }
  CHECK(std::fabs(oracle::mean(xs) - Ex) < 4 * std::sqrt(Vx / R));
  CHECK(std::fabs(oracle::variance(xs) / Vx - 1) < 0.06);
  const double vlt = oracle::variance(lts);
  CHECK(std::fabs(oracle::mean(lts) - Elt) < 4 * std::sqrt(vlt / R));
}

TEST_CASE("Gibbs refuses unsupported models") {
  ChainConfig cfg;
  Rng rng = make_rng(0);
  const Eigen::Vector2d init(0.0, 1.0);
  CHECK_THROWS_AS(gibbs_sbl(scalar_spec(0.1, 0.1, kGGPresets[0]), init, cfg, rng), UnsupportedModelError);
  auto spec = scalar_spec(0.1, 0.1, kGGPresets[3]);
  spec.coordinate = Coordinates::normalized;
  CHECK_THROWS_AS(gibbs_sbl(spec, init, cfg, rng), UnsupportedModelError);
  const auto burgers = make_posterior(make_problem(Preset::burgers, 0), kGGPresets[3], Coordinates::original);
  CHECK_THROWS_AS(gibbs_sbl(burgers, Eigen::VectorXd::Ones(200), cfg, rng), UnsupportedModelError);
}

TEST_CASE("determinism and thinning") {
  ChainKernel kernel = [](const ChainConfig& c) {
    Rng rng = make_rng(c.seed);
    return am_sample(gauss_lp, Eigen::VectorXd::Zero(3), c, rng);
  };
  ChainConfig base;
  base.n_samples = 100000;
  base.thin = 100;
  const std::vector<std::uint64_t> seeds{44, 3, 17, 8};
  const ChainSet a = run_chains(kernel, base, seeds, 2);
  const ChainSet b = run_chains(kernel, base, seeds, 4);
  const ChainSet s = run_chains_serial(kernel, base, seeds);
  REQUIRE(a.chains.size() == 4);
  CHECK(a.retained == 1000);
  CHECK(a.dim == 3);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(a.chains[j].samples.rows() == 1000);
    CHECK(a.chains[j].samples == b.chains[j].samples);
    CHECK(a.chains[j].samples == s.chains[j].samples);
    if (j > 0) CHECK(a.chains[j - 1].seed < a.chains[j].seed);
  }
  // Thinned rows are the iterations k with (k + 1) % thin == 0.
  ChainConfig full = base;
  full.thin = 1;
  full.seed = 17;
  Rng rng = make_rng(17);
  const auto one = am_sample(gauss_lp, Eigen::VectorXd::Zero(3), full, rng);
  CHECK(one.samples.row(99) == a.chains[2].samples.row(0));
  CHECK(one.samples.row(99999) == a.chains[2].samples.row(999));

  CHECK_THROWS_AS(run_chains(kernel, base, {1, 2, 1}), std::invalid_argument);
}

TEST_CASE("chain failures are aggregated") {
  ChainKernel kernel = [](const ChainConfig& c) {
    if (c.seed == 2) throw SamplerError("boom");
    Rng rng = make_rng(c.seed);
    return am_sample(gauss_lp, Eigen::VectorXd::Zero(3), c, rng);
  };
  ChainConfig base;
  base.n_samples = 200;
  const ChainSet cs = run_chains(kernel, base, {1, 2, 3});
  CHECK(cs.chains.size() == 2);
  REQUIRE(cs.failures.size() == 1);
  CHECK(cs.failures[0].seed == 2);
  CHECK(cs.failures[0].message.find("boom") != std::string::npos);
}

TEST_CASE("chain config validation") {
  ChainConfig c;
  c.thin = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.thin = 1;
  c.n_samples = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.n_samples = 10;
  c.target_accept = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.target_accept.reset();
  c.thin = 3;
  CHECK(c.retained() == 3);
  CHECK(parse_init_policy("map") == InitPolicy::map);
  CHECK_THROWS_AS(parse_init_policy("zero"), std::invalid_argument);
}

TEST_CASE("initial states") {
  const auto orig = make_posterior(make_problem(Preset::deconvolution, 0), kGGPresets[3], Coordinates::original);
  ChainConfig c;
  Rng rng = make_rng(3);
  const Eigen::VectorXd s = initial_state(orig, c, rng);
  CHECK(s.size() == 256);
  CHECK((s.tail(128).array() > 0).all());
  CHECK(std::isfinite(logpost(s, orig)));
  c.init = InitPolicy::custom;
  c.custom_init = Eigen::VectorXd::Ones(256);
  CHECK(initial_state(orig, c, rng) == c.custom_init);
  c.init = InitPolicy::map;
  CHECK_THROWS(initial_state(orig, c, rng));
  const Eigen::VectorXd m = Eigen::VectorXd::Constant(256, 0.5);
  CHECK(initial_state(orig, c, rng, &m) == m);
}
