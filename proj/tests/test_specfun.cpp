#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "oracles.hpp"
#include "sblpn/prior.hpp"
#include "sblpn/random.hpp"
#include "sblpn/specfun.hpp"

using namespace sblpn;
using namespace sblpn::specfun;

TEST_CASE("normal cdf and tails") {
  CHECK(std_normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-16));
  CHECK(std_normal_upper_tail(0.0) == doctest::Approx(0.5).epsilon(1e-16));
  CHECK(std::fabs(std_normal_cdf(40.0) - 1.0) <= std::numeric_limits<double>::epsilon());
  CHECK(std::fabs(std_normal_cdf(1.959964) - oracle::normal_cdf(1.959964)) < 1e-12);
  CHECK(std::fabs(std_normal_cdf(1.959964) - 0.975) < 1e-6);

  const double t10 = std_normal_upper_tail(10.0);
  CHECK(t10 > 0.0);
  CHECK(t10 < 1e-20);
  CHECK(std::fabs(std_normal_upper_tail(-3.0) - (1.0 - std_normal_upper_tail(3.0))) < 1e-15);
}

TEST_CASE("cdf plus upper tail is one on [-38, 38]") {
  for (double t = -38.0; t <= 38.0; t += 0.0625)
    CHECK(std::fabs(std_normal_cdf(t) + std_normal_upper_tail(t) - 1.0) <= 1e-14);
}

TEST_CASE("normal quantile") {
  CHECK(std_normal_quantile(0.5) == 0.0);
  const double q975 = oracle::bisect([](double t) { return oracle::normal_cdf(t) - 0.975; }, 0, 5);
  CHECK(std::fabs(std_normal_quantile(0.975) - q975) < 1e-5);
  CHECK(std::fabs(std_normal_quantile(0.975) - 1.959964) < 1e-5);

  const double deep = std_normal_quantile(1e-300);
  CHECK(std::isfinite(deep));
  CHECK(deep < 0.0);
  CHECK(std::fabs(std_normal_cdf(deep) - 1e-300) / 1e-300 < 1e-12);

  CHECK_THROWS_AS(std_normal_quantile(0.0), std::domain_error);
  CHECK_THROWS_AS(std_normal_quantile(1.0), std::domain_error);
  CHECK_THROWS_AS(std_normal_quantile(-0.1), std::domain_error);
}

TEST_CASE("quantile round trip on a log grid down to 1e-300") {
  for (double lp = -300.0; lp <= -0.31; lp += 0.5) {
    const double p = std::pow(10.0, lp);
    const double t = std_normal_quantile(p);
    CHECK(std::fabs(std_normal_cdf(t) - p) / p <= 1e-12);
    // Mirror point in the upper half, where representable.
    if (1.0 - p < 1.0) {
      const double back = std_normal_cdf(std_normal_quantile(1.0 - p));
      CHECK(std::fabs(back - (1.0 - p)) / (1.0 - p) <= 1e-12);
    }
  }
  const double p = 1.0 - 1e-16;
  CHECK(std::fabs(std_normal_cdf(std_normal_quantile(p)) - p) / p <= 1e-12);
}

TEST_CASE("upper-tail quantile does not form 1 - q") {
  for (double lq = -300.0; lq <= -1.0; lq += 7.0) {
    const double q = std::pow(10.0, lq);
    const double t = std_normal_quantile_upper(q);
    CHECK(std::fabs(std_normal_upper_tail(t) - q) / q <= 1e-12);
  }
}

TEST_CASE("regularized incomplete gamma") {
  CHECK(reg_inc_gamma(1.0, std::log(2.0)) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(reg_inc_gamma(1.0017, 0.0) == 0.0);
  CHECK(std::fabs(reg_inc_gamma(3.0918, 3.0) - oracle::inc_gamma_p(3.0918, 3.0)) < 1e-10);
  for (double beta : {0.5, 1.0017, 1.501, 2.0165, 3.0918, 7.5})
    for (double z : {1e-6, 0.01, 0.3, 1.0, 2.5, 6.0, 15.0})
      CHECK(std::fabs(reg_inc_gamma(beta, z) - oracle::inc_gamma_p(beta, z)) < 1e-10);
  CHECK_THROWS_AS(reg_inc_gamma(0.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(reg_inc_gamma(1.0, -1.0), std::domain_error);
}

TEST_CASE("P + Q = 1 and Q keeps the deep upper tail") {
  for (double z : {0.1, 1.0, 10.0, 100.0, 600.0}) {
    const auto r = reg_inc_gamma_pq(1.501, z);
    CHECK(std::fabs(r.p + r.q - 1.0) < 1e-14);
  }
  // Q(600; 1) = e^-600.
  CHECK(reg_inc_gamma_upper(1.0, 600.0) == doctest::Approx(std::exp(-600.0)).epsilon(1e-12));
}

TEST_CASE("incomplete gamma is monotone on random pairs") {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> lz(-8.0, 3.0);
  for (int i = 0; i < 2000; ++i) {
    double a = std::pow(10.0, lz(gen)), b = std::pow(10.0, lz(gen));
    if (a > b) std::swap(a, b);
    for (const auto& p : kGGPresets) CHECK(reg_inc_gamma(p.beta, a) <= reg_inc_gamma(p.beta, b));
  }
}

TEST_CASE("inverse incomplete gamma") {
  CHECK(reg_inc_gamma_inv(1.0, 0.5, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-13));

  const double z_small = reg_inc_gamma_inv(1.0017, 1e-12, 1.0 - 1e-12);
  CHECK(z_small > 0.0);
  CHECK(std::fabs(reg_inc_gamma(1.0017, z_small) - 1e-12) < 1e-10);
  CHECK(std::fabs(reg_inc_gamma(1.0017, z_small) - 1e-12) / 1e-12 < 1e-8);

  const double z09 = reg_inc_gamma_inv(2.0165, 0.9, 0.1);
  const double ref = oracle::bisect([](double z) { return oracle::inc_gamma_p(2.0165, z) - 0.9; },
                                    0.0, 50.0);
  CHECK(std::fabs(z09 - ref) < 1e-8);

  // Upper tail via q only: Q(z; 1) = e^-z.
  const double z_up = reg_inc_gamma_inv(1.0, 1.0, 1e-200);
  CHECK(z_up == doctest::Approx(200.0 * std::log(10.0)).epsilon(1e-12));

  CHECK_THROWS_AS(reg_inc_gamma_inv(0.0, 0.5, 0.5), std::domain_error);
  CHECK_THROWS_AS(reg_inc_gamma_inv(1.0, 1.5, -0.5), std::domain_error);
}

TEST_CASE("inverse of P is the identity over 12 orders of magnitude") {
  for (const auto& p : kGGPresets) {
    for (double lz = -8.0; lz <= 1.5; lz += 0.25) {
      const double z = p.beta * std::pow(10.0, lz);
      const auto pq = reg_inc_gamma_pq(p.beta, z);
      if (pq.q == 0.0) continue;
      const double back = reg_inc_gamma_inv(p.beta, pq.p, pq.q);
      CHECK(std::fabs(back - z) / z <= 1e-8);
    }
  }
}

TEST_CASE("gamma sampler moments and KS") {
  Rng rng = make_rng(5);
  std::vector<double> d5, d1, dh;
  for (int i = 0; i < 100000; ++i) {
    d5.push_back(gamma_sample(5.0, rng));
    d1.push_back(gamma_sample(1.0, rng));
    dh.push_back(gamma_sample(0.5, rng));
  }
  CHECK(std::fabs(oracle::mean(d5) - 5.0) < 0.1);
  CHECK(std::fabs(oracle::variance(d5) - 5.0) < 0.3);
  CHECK(oracle::ks_statistic(d1, [](double z) { return 1.0 - std::exp(-z); }) < 0.01);
  CHECK(std::fabs(oracle::mean(dh) - 0.5) < 0.05);
  CHECK_THROWS_AS(gamma_sample(0.0, rng), std::domain_error);
}
