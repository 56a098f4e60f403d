#include "sblpn/optimize.hpp"

#include <cmath>
#include <deque>
#include <limits>
#include <vector>

namespace sblpn {

namespace {

struct Probe {
  double alpha;
  double f;
  double d;  // directional derivative
  Eigen::VectorXd g;
};

class LineSearch {
 public:
  LineSearch(const ObjectiveFn& fg, const Eigen::VectorXd& x, const Eigen::VectorXd& p,
             double f0, double d0, const LbfgsOptions& opt)
      : fg_(fg), x_(x), p_(p), f0_(f0), d0_(d0), opt_(opt) {}

  // Returns false when no strong-Wolfe point was found within the budget.
  bool run(double alpha0, Probe& out) {
    Probe prev{0.0, f0_, d0_, {}};
    double alpha = alpha0;
    for (int i = 0; i < opt_.max_line_search; ++i) {
      Probe cur = probe(alpha);
      if (!std::isfinite(cur.f) || cur.f > f0_ + opt_.c1 * alpha * d0_ ||
          (i > 0 && cur.f >= prev.f)) {
        return zoom(prev, cur, out);
      }
      if (std::fabs(cur.d) <= -opt_.c2 * d0_) {
        out = std::move(cur);
        return true;
      }
      if (cur.d >= 0.0) return zoom(cur, prev, out);
      prev = std::move(cur);
      alpha *= 2.0;
    }
    return false;
  }

 private:
  Probe probe(double alpha) {
    Probe pr{alpha, 0.0, 0.0, Eigen::VectorXd(x_.size())};
    pr.f = fg_(x_ + alpha * p_, pr.g);
    if (!std::isfinite(pr.f) || !pr.g.allFinite()) {
      pr.f = std::numeric_limits<double>::infinity();
      pr.d = std::numeric_limits<double>::quiet_NaN();
    } else {
      pr.d = pr.g.dot(p_);
    }
    ++evaluations_;
    return pr;
  }

  bool zoom(Probe lo, Probe hi, Probe& out) {
    for (int i = 0; i < opt_.max_line_search; ++i) {
      const double a = lo.alpha, b = hi.alpha;
      double alpha = 0.5 * (a + b);
      if (std::isfinite(hi.f) && std::isfinite(lo.d)) {
        // Quadratic through f(lo), f'(lo), f(hi).
        const double h = b - a;
        const double denom = 2.0 * (hi.f - lo.f - lo.d * h);
        if (denom > 0.0) {
          const double cand = a - lo.d * h * h / denom;
          const double lo_b = std::min(a, b) + 0.1 * std::fabs(h);
          const double hi_b = std::max(a, b) - 0.1 * std::fabs(h);
          if (cand > lo_b && cand < hi_b) alpha = cand;
        }
      }
      Probe cur = probe(alpha);
      if (!std::isfinite(cur.f) || cur.f > f0_ + opt_.c1 * alpha * d0_ || cur.f >= lo.f) {
        hi = std::move(cur);
      } else {
        if (std::fabs(cur.d) <= -opt_.c2 * d0_) {
          out = std::move(cur);
          return true;
        }
        if (cur.d * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
        lo = std::move(cur);
      }
      if (std::fabs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, lo.alpha)) break;
    }
    // Accept the best sufficient-decrease point if the curvature test never passed.
    if (lo.alpha > 0.0 && lo.f < f0_) {
      out = std::move(lo);
      return true;
    }
    return false;
  }

  const ObjectiveFn& fg_;
  const Eigen::VectorXd& x_;
  const Eigen::VectorXd& p_;
  double f0_;
  double d0_;
  const LbfgsOptions& opt_;
  int evaluations_ = 0;
};

}  // namespace

LbfgsResult lbfgs_minimize(const ObjectiveFn& fg, Eigen::VectorXd x0, const LbfgsOptions& opt) {
  LbfgsResult res;
  res.x = std::move(x0);
  Eigen::VectorXd g(res.x.size());
  res.f = fg(res.x, g);
  if (!std::isfinite(res.f) || !g.allFinite()) {
    res.message = "objective not finite at the initial point";
    return res;
  }

  std::deque<Eigen::VectorXd> s_hist, y_hist;
  std::deque<double> rho_hist;
  int failures = 0;

  for (res.iterations = 0; res.iterations < opt.max_iter; ++res.iterations) {
    res.grad_norm = g.norm();
    if (res.grad_norm <= opt.rel_grad_tol * (1.0 + std::fabs(res.f))) {
      res.converged = true;
      res.message = "gradient tolerance reached";
      return res;
    }

    // Two-loop recursion.
    Eigen::VectorXd q = g;
    std::vector<double> a(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      a[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= a[i] * y_hist[i];
    }
    if (!s_hist.empty()) q *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double b = rho_hist[i] * y_hist[i].dot(q);
      q += (a[i] - b) * s_hist[i];
    }
    Eigen::VectorXd p = -q;
    double d0 = g.dot(p);
    if (!(d0 < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      p = -g;
      d0 = -g.squaredNorm();
    }

    const double alpha0 = s_hist.empty() ? std::min(1.0, 1.0 / std::sqrt(-d0)) : 1.0;
    Probe step;
    LineSearch ls(fg, res.x, p, res.f, d0, opt);
    if (!ls.run(alpha0, step)) {
      if (++failures >= 2 || s_hist.empty()) {
        res.message = "line search failed";
        return res;
      }
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      continue;
    }
    failures = 0;

    Eigen::VectorXd s = step.alpha * p;
    Eigen::VectorXd y = step.g - g;
    const double sy = s.dot(y);
    res.x += s;
    const double f_prev = res.f;
    res.f = step.f;
    g = step.g;
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > opt.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    if (std::fabs(f_prev - res.f) <= 1e-16 * std::max(1.0, std::fabs(res.f)) &&
        res.grad_norm <= 1e-3 * (1.0 + std::fabs(res.f))) {
      res.grad_norm = g.norm();
      res.converged = res.grad_norm <= opt.rel_grad_tol * (1.0 + std::fabs(res.f));
      res.message = "no further progress";
      return res;
    }
  }
  res.grad_norm = g.norm();
  res.converged = res.grad_norm <= opt.rel_grad_tol * (1.0 + std::fabs(res.f));
  res.message = res.converged ? "gradient tolerance reached" : "iteration limit reached";
  return res;
}

}  // namespace sblpn
