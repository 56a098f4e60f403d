#include "sblpn/specfun.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "sblpn/random.hpp"

namespace sblpn::specfun {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))

// Wichura, AS241 (PPND16). Relative accuracy about 1e-16 over the full range.
double ppnd16(double p) {
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r +
                 67265.770927008700853) * r + 45921.953931549871457) * r +
               13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((r * 5226.495278852545925 + 28729.085735721942674) * r +
                 39307.89580009271061) * r + 21213.794301586595867) * r +
               5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  // Tail: r = sqrt(-log(min(p, 1 - p))). 1 - p is exact for p >= 1/2.
  double r = q < 0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((r * 7.7454501427834140764e-4 + .0227238449892691845833) * r +
                .24178072517745061177) * r + 1.27045825245236838258) * r +
              3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r +
                .0151986665636164571966) * r + .14810397642748007459) * r +
              .68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r +
                .0012426609473880784386) * r + .026532189526576123093) * r +
              .29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r +
                1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
              .0148753612908506148525) * r + .13692988092273580531) * r +
            .59983220655588793769) * r + 1.0);
  }
  return q < 0 ? -val : val;
}

double gamma_series(double beta, double z) {
  // P(z; beta) = z^beta e^-z / Gamma(beta + 1) * sum_k z^k / ((beta+1)...(beta+k))
  double term = 1.0;
  double sum = 1.0;
  double ap = beta;
  for (int k = 0; k < 10000; ++k) {
    ap += 1.0;
    term *= z / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * 1e-17) break;
  }
  return std::exp(beta * std::log(z) - z - std::lgamma(beta + 1.0)) * sum;
}

double gamma_continued_fraction(double beta, double z) {
  // Modified Lentz evaluation of the continued fraction for Q(z; beta).
  constexpr double kTiny = 1e-300;
  double b = z + 1.0 - beta;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - beta);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return std::exp(beta * std::log(z) - z - std::lgamma(beta)) * h;
}

}  // namespace

double std_normal_cdf(double t) { return 0.5 * std::erfc(-t / std::numbers::sqrt2); }

double std_normal_upper_tail(double t) { return 0.5 * std::erfc(t / std::numbers::sqrt2); }

double std_normal_logpdf(double t) { return -0.5 * t * t - kLogSqrt2Pi; }

double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("std_normal_quantile: p must lie in (0, 1)");
  double x = ppnd16(p);
  // Halley refinement, relative in the tail that is represented accurately.
  for (int it = 0; it < 2; ++it) {
    double rel;
    double log_tail;
    if (x <= 0) {
      rel = std_normal_cdf(x) / p - 1.0;
      log_tail = std::log(p);
    } else {
      const double q = 1.0 - p;
      rel = -(std_normal_upper_tail(x) / q - 1.0);
      log_tail = std::log(q);
    }
    const double u = rel * std::exp(log_tail - std_normal_logpdf(x));
    if (!std::isfinite(u)) break;
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

double std_normal_quantile_upper(double q) { return -std_normal_quantile(q); }

GammaRatios reg_inc_gamma_pq(double beta, double z) {
  if (!(beta > 0.0)) throw std::domain_error("reg_inc_gamma: beta must be positive");
  if (!(z >= 0.0)) throw std::domain_error("reg_inc_gamma: z must be non-negative");
  if (z == 0.0) return {0.0, 1.0};
  if (std::isinf(z)) return {1.0, 0.0};
  if (z < beta + 1.0) {
    const double p = gamma_series(beta, z);
    return {p, 1.0 - p};
  }
  const double q = gamma_continued_fraction(beta, z);
  return {1.0 - q, q};
}

double reg_inc_gamma(double beta, double z) { return reg_inc_gamma_pq(beta, z).p; }

double reg_inc_gamma_upper(double beta, double z) { return reg_inc_gamma_pq(beta, z).q; }

double gamma_logpdf(double beta, double z) {
  if (!(z > 0.0)) return -kInf;
  return (beta - 1.0) * std::log(z) - z - std::lgamma(beta);
}

double reg_inc_gamma_inv(double beta, double p, double q, double normal_score) {
  if (!(beta > 0.0)) throw std::domain_error("reg_inc_gamma_inv: beta must be positive");
  if (!(p >= 0.0 && p <= 1.0 && q >= 0.0 && q <= 1.0))
    throw std::domain_error("reg_inc_gamma_inv: probabilities must lie in [0, 1]");
  if (p == 0.0) return 0.0;
  if (q == 0.0) return kInf;

  // Halley iteration in w = log z on whichever tail is smaller; g(w) increasing.
  // With s = g'(w): g'' = s (beta - z - s) on the lower tail, s (beta - z + s) on the upper.
  const bool lower = p <= q;
  const double target = lower ? std::log(p) : std::log(q);
  const double lg = std::lgamma(beta);
  auto g = [&](double w, double& slope, double& curv) {
    const double z = std::exp(w);
    const GammaRatios pq = reg_inc_gamma_pq(beta, z);
    const double log_ratio = lower ? std::log(pq.p) : std::log(pq.q);
    slope = std::exp(beta * w - z - lg - log_ratio);
    curv = slope * (beta - z + (lower ? -slope : slope));
    return lower ? log_ratio - target : target - log_ratio;
  };

  // Initial guess: Wilson-Hilferty, or the small-z power law when it breaks down.
  const double c = 1.0 / (9.0 * beta);
  const double x = std::isfinite(normal_score) ? normal_score
                   : lower                     ? std_normal_quantile(p)
                                               : std_normal_quantile_upper(q);
  const double wh = 1.0 - c + x * std::sqrt(c);
  double w;
  if (wh > 0.0 && !(lower && p < 1e-3)) {
    w = std::log(beta) + 3.0 * std::log(wh);
  } else if (lower) {
    w = (std::log(p) + std::lgamma(beta + 1.0)) / beta;
  } else {
    w = std::log(beta + 1.0);
  }

  double lo = std::log(std::numeric_limits<double>::denorm_min());
  double hi = std::log(beta + 1000.0);
  if (!(w > lo && w < hi)) w = std::isfinite(w) ? std::clamp(w, lo + 1.0, hi - 1.0) : 0.5 * (lo + hi);

  for (int it = 0; it < 300; ++it) {
    double slope = 0.0, curv = 0.0;
    const double val = g(w, slope, curv);
    if (std::isnan(val)) {
      // exp(w) outside the representable tail; shrink toward the interior.
      hi = w;
      w = 0.5 * (lo + hi);
      continue;
    }
    if (val == 0.0) break;
    (val > 0.0 ? hi : lo) = w;
    // Halley only near the root; far away its step shrinks to O(1 / beta).
    const bool near = std::fabs(val * curv) < slope * slope;
    double next = near ? w - 2.0 * val * slope / (2.0 * slope * slope - val * curv) : w - val / slope;
    const bool bracketed = std::isfinite(next) && next > lo && next < hi;
    if (!bracketed) next = 0.5 * (lo + hi);
    const double step = next - w;
    w = next;
    // Cubic convergence: a Halley step below 1e-6 leaves an error far below 1e-15.
    if (bracketed && std::fabs(step) < 1e-6 * std::fmax(1.0, std::fabs(w))) break;
    if (hi - lo < 1e-15 * std::fmax(1.0, std::fabs(w))) break;
  }
  return std::exp(w);
}

double gamma_sample(double beta, Rng& rng) {
  if (!(beta > 0.0)) throw std::domain_error("gamma_sample: beta must be positive");
  if (beta < 1.0) {
    const double g = gamma_sample(beta + 1.0, rng);
    return g * std::exp(std::log(uniform_open01(rng)) / beta);
  }
  const double d = beta - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = standard_normal(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open01(rng);
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace sblpn::specfun
