#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>

namespace sblpn {

/// Objective returning f(x) and writing its gradient. May return +inf (or
/// throw nothing and return NaN) outside its domain; the line search backs off.
using ObjectiveFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct LbfgsOptions {
  int memory = 10;
  int max_iter = 2000;
  double rel_grad_tol = 1e-6;  // stop when |g| <= tol (1 + |f|)
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search = 40;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// Limited-memory BFGS with a strong-Wolfe line search (bracketing + zoom).
LbfgsResult lbfgs_minimize(const ObjectiveFn& fg, Eigen::VectorXd x0,
                           const LbfgsOptions& opt = {});

}  // namespace sblpn
