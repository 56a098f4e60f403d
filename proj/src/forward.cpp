#include "sblpn/forward.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "sblpn/random.hpp"

namespace sblpn {

LinearOperator::LinearOperator(Eigen::MatrixXd matrix) : matrix_(std::move(matrix)) {
  if (matrix_.rows() == matrix_.cols()) {
    const Eigen::MatrixXd gram = matrix_.transpose() * matrix_;
    orthogonal_ = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols()))
                      .cwiseAbs()
                      .maxCoeff() < 1e-10;
  }
}

// --- deconvolution ----------------------------------------------------------

double GaussianKernel::operator()(double t) const {
  return amplitude * std::exp(-t * t / (2.0 * width * width));
}

Eigen::VectorXd signal_grid(Eigen::Index n) {
  return Eigen::VectorXd::LinSpaced(n, 1.0, static_cast<double>(n)) / static_cast<double>(n);
}

std::vector<Eigen::Index> observation_indices(Eigen::Index n, Eigen::Index stride) {
  if (stride < 1) throw std::invalid_argument("observation stride must be at least 1");
  std::vector<Eigen::Index> idx;
  for (Eigen::Index k = 0; k < n; k += stride) idx.push_back(k);
  return idx;
}

Eigen::MatrixXd conv_operator(Eigen::Index n, Eigen::Index obs_stride, double amplitude,
                              double width) {
  if (n < 2) throw std::invalid_argument("conv_operator: need at least two grid points");
  const GaussianKernel k{amplitude, width};
  const Eigen::VectorXd s = signal_grid(n);
  const auto obs = observation_indices(n, obs_stride);
  Eigen::MatrixXd f(static_cast<Eigen::Index>(obs.size()), n);
  for (Eigen::Index j = 0; j < f.rows(); ++j) {
    const double t = s[obs[j]];
    for (Eigen::Index c = 0; c < n; ++c) f(j, c) = k(t - s[c]) / static_cast<double>(n);
  }
  return f;
}

FdMatrix::FdMatrix(Eigen::Index n) : n_(n) {
  if (n < 1) throw std::invalid_argument("FdMatrix: n must be positive");
}

Eigen::MatrixXd FdMatrix::matrix() const {
  Eigen::MatrixXd l = Eigen::MatrixXd::Identity(n_, n_);
  for (Eigen::Index i = 1; i < n_; ++i) l(i, i - 1) = -1.0;
  return l;
}

Eigen::VectorXd FdMatrix::apply(const Eigen::VectorXd& x) const {
  Eigen::VectorXd z(n_);
  z[0] = x[0];
  for (Eigen::Index i = 1; i < n_; ++i) z[i] = x[i] - x[i - 1];
  return z;
}

Eigen::VectorXd FdMatrix::solve_L(const Eigen::VectorXd& z) const {
  Eigen::VectorXd x(n_);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n_; ++i) x[i] = (acc += z[i]);
  return x;
}

Eigen::VectorXd FdMatrix::solve_Lt(const Eigen::VectorXd& v) const {
  Eigen::VectorXd w(n_);
  double acc = 0.0;
  for (Eigen::Index i = n_ - 1; i >= 0; --i) w[i] = (acc += v[i]);
  return w;
}

// --- Burgers ------------------------------------------------------------------

Eigen::VectorXd burgers_grid(Eigen::Index n) {
  return (Eigen::VectorXd::LinSpaced(n, 0.0, static_cast<double>(n - 1)).array() + 0.5) /
         static_cast<double>(n);
}

double godunov_flux(double ul, double ur) {
  const double a = std::max(ul, 0.0);
  const double b = std::min(ur, 0.0);
  return std::max(a * a, b * b);
}

namespace {

// Partial derivatives of godunov_flux with respect to its two arguments.
void godunov_flux_partials(double ul, double ur, double& dl, double& dr) {
  const double a = std::max(ul, 0.0);
  const double b = std::min(ur, 0.0);
  if (a * a >= b * b) {
    dl = 2.0 * a;
    dr = 0.0;
  } else {
    dl = 0.0;
    dr = 2.0 * b;
  }
}

void burgers_rhs(const Eigen::VectorXd& u, double dx, Eigen::VectorXd& out) {
  const Eigen::Index n = u.size();
  Eigen::VectorXd flux(n);  // flux(i) sits between cells i and i + 1
  for (Eigen::Index i = 0; i < n; ++i) flux[i] = godunov_flux(u[i], u[(i + 1) % n]);
  out.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = -(flux[i] - flux[(i + n - 1) % n]) / dx;
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void burgers_rhs_tangent(const Eigen::VectorXd& u, const RowMatrix& d, double dx,
                         RowMatrix& out) {
  const Eigen::Index n = u.size();
  RowMatrix flux(n, d.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    double dl, dr;
    const Eigen::Index ip = (i + 1) % n;
    godunov_flux_partials(u[i], u[ip], dl, dr);
    flux.row(i) = dl * d.row(i) + dr * d.row(ip);
  }
  out.resize(n, d.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    out.row(i) = -(flux.row(i) - flux.row((i + n - 1) % n)) / dx;
}

struct StepPlan {
  double dt;
  long steps;
  double last;
};

StepPlan plan_steps(const Eigen::VectorXd& u0, double t_end, double cfl) {
  if (u0.size() < 4) throw std::invalid_argument("burgers_solve: need at least 4 cells");
  if (!(t_end > 0.0)) throw std::invalid_argument("burgers_solve: t_end must be positive");
  if (!(cfl > 0.0 && cfl <= 1.0)) throw std::invalid_argument("burgers_solve: cfl in (0, 1]");
  if (!u0.allFinite()) throw EvaluationError("burgers_solve: non-finite initial data");
  const double dx = 1.0 / static_cast<double>(u0.size());
  const double speed = std::max(2.0 * u0.cwiseAbs().maxCoeff(), 1e-12);
  const double dt = cfl * dx / speed;
  const double ratio = t_end / dt;
  if (ratio > 1e8) throw EvaluationError("burgers_solve: step count exceeds 1e8");
  long steps = static_cast<long>(std::ceil(ratio - 1e-12));
  steps = std::max(steps, 1L);
  const double last = t_end - dt * static_cast<double>(steps - 1);
  return {dt, steps, last};
}

}  // namespace

Eigen::VectorXd burgers_solve(const Eigen::VectorXd& u0, double t_end, double cfl) {
  const StepPlan plan = plan_steps(u0, t_end, cfl);
  const double dx = 1.0 / static_cast<double>(u0.size());
  Eigen::VectorXd u = u0, u1, u2, u3, k;
  for (long s = 0; s < plan.steps; ++s) {
    const double h = s + 1 == plan.steps ? plan.last : plan.dt;
    // SSP-RK(4,3), Shu-Osher form with four half steps.
    burgers_rhs(u, dx, k);
    u1 = u + 0.5 * h * k;
    burgers_rhs(u1, dx, k);
    u2 = u1 + 0.5 * h * k;
    burgers_rhs(u2, dx, k);
    u3 = (2.0 / 3.0) * u + (1.0 / 3.0) * (u2 + 0.5 * h * k);
    burgers_rhs(u3, dx, k);
    u = u3 + 0.5 * h * k;
  }
  if (!u.allFinite()) throw EvaluationError("burgers_solve: state became non-finite");
  return u;
}

BurgersSensitivity burgers_solve_sensitivity(const Eigen::VectorXd& u0, double t_end,
                                             double cfl) {
  const StepPlan plan = plan_steps(u0, t_end, cfl);
  const Eigen::Index n = u0.size();
  const double dx = 1.0 / static_cast<double>(n);
  Eigen::VectorXd u = u0, u1, u2, u3, k;
  RowMatrix d = RowMatrix::Identity(n, n), d1, d2, d3, kd;
  for (long s = 0; s < plan.steps; ++s) {
    const double h = s + 1 == plan.steps ? plan.last : plan.dt;
    burgers_rhs(u, dx, k);
    burgers_rhs_tangent(u, d, dx, kd);
    u1 = u + 0.5 * h * k;
    d1 = d + 0.5 * h * kd;
    burgers_rhs(u1, dx, k);
    burgers_rhs_tangent(u1, d1, dx, kd);
    u2 = u1 + 0.5 * h * k;
    d2 = d1 + 0.5 * h * kd;
    burgers_rhs(u2, dx, k);
    burgers_rhs_tangent(u2, d2, dx, kd);
    u3 = (2.0 / 3.0) * u + (1.0 / 3.0) * (u2 + 0.5 * h * k);
    d3 = (2.0 / 3.0) * d + (1.0 / 3.0) * (d2 + 0.5 * h * kd);
    burgers_rhs(u3, dx, k);
    burgers_rhs_tangent(u3, d3, dx, kd);
    u = u3 + 0.5 * h * k;
    d = d3 + 0.5 * h * kd;
  }
  if (!u.allFinite()) throw EvaluationError("burgers_solve: state became non-finite");
  return {u, Eigen::MatrixXd(d)};
}

double burgers_initial(double x) { return std::fabs(x - 0.5) < 0.25 ? 1.0 : 0.0; }

double burgers_exact(double x, double t) {
  if (!(t >= 0.0 && t <= 0.25)) throw std::domain_error("burgers_exact: t must lie in [0, 1/4]");
  if (!(x >= 0.0 && x < 1.0)) throw std::domain_error("burgers_exact: x must lie in [0, 1)");
  if (t == 0.0) return burgers_initial(x);
  const double fan_head = 0.25 + 2.0 * t;  // characteristic speed f'(1) = 2
  const double shock = 0.75 + t;           // (f(1) - f(0)) / (1 - 0) = 1
  if (x <= 0.25) return 0.0;
  if (x <= fan_head) return (x - 0.25) / (2.0 * t);
  if (x < shock) return 1.0;
  return 0.0;
}

BurgersOperator::BurgersOperator(Eigen::Index n, double t_end, Eigen::Index obs_stride,
                                 double cfl)
    : n_(n), t_end_(t_end), cfl_(cfl), obs_(observation_indices(n, obs_stride)) {}

Eigen::VectorXd BurgersOperator::apply(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd u = burgers_solve(x, t_end_, cfl_);
  Eigen::VectorXd out(output_dim());
  for (Eigen::Index j = 0; j < out.size(); ++j) out[j] = u[obs_[j]];
  return out;
}

Eigen::MatrixXd BurgersOperator::jacobian(const Eigen::VectorXd& x) const {
  const BurgersSensitivity sens = burgers_solve_sensitivity(x, t_end_, cfl_);
  Eigen::MatrixXd jac(output_dim(), n_);
  for (Eigen::Index j = 0; j < jac.rows(); ++j) jac.row(j) = sens.du_du0.row(obs_[j]);
  return jac;
}

// --- DCT ------------------------------------------------------------------------

Eigen::MatrixXd dct_matrix(Eigen::Index n) {
  Eigen::MatrixXd c(n, n);
  const double nn = static_cast<double>(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double a = k == 0 ? std::sqrt(1.0 / nn) : std::sqrt(2.0 / nn);
    for (Eigen::Index j = 0; j < n; ++j)
      c(k, j) = a * std::cos(std::numbers::pi * (2.0 * j + 1.0) * k / (2.0 * nn));
  }
  return c;
}

Eigen::MatrixXd dct2_operator(Eigen::Index n1, Eigen::Index n2) {
  if (n1 < 1 || n2 < 1) throw std::invalid_argument("dct2_operator: sizes must be positive");
  const Eigen::MatrixXd c1 = dct_matrix(n1);
  const Eigen::MatrixXd c2 = dct_matrix(n2);
  Eigen::MatrixXd f(n1 * n2, n1 * n2);
  for (Eigen::Index a = 0; a < n2; ++a)
    for (Eigen::Index b = 0; b < n2; ++b) f.block(a * n1, b * n1, n1, n1) = c2(a, b) * c1;
  return f;
}

Eigen::MatrixXd dct2_apply(const Eigen::MatrixXd& image) {
  return dct_matrix(image.rows()) * image * dct_matrix(image.cols()).transpose();
}

// --- presets ----------------------------------------------------------------------

Preset parse_preset(const std::string& name) {
  if (name == "toy") return Preset::toy;
  if (name == "deconvolution") return Preset::deconvolution;
  if (name == "burgers") return Preset::burgers;
  if (name == "impulse") return Preset::impulse;
  throw std::invalid_argument("unknown preset '" + name + "'");
}

std::string to_string(Preset p) {
  switch (p) {
    case Preset::toy: return "toy";
    case Preset::deconvolution: return "deconvolution";
    case Preset::burgers: return "burgers";
    case Preset::impulse: return "impulse";
  }
  return "?";
}

double deconvolution_signal(double t) {
  if (t < 0.17) return 0.0;
  if (t < 0.35) return 1.0;
  if (t < 0.55) return 0.0;
  if (t < 0.75) return -0.7;
  if (t < 0.9) return 0.4;
  return 0.0;
}

Eigen::MatrixXd read_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open matrix file " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!row.empty()) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("empty matrix file " + path);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw std::runtime_error("ragged matrix file " + path);
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

std::string impulse_image_path() { return std::string(SBLPN_DATA_DIR) + "/impulse_20x20.txt"; }

Eigen::Index nearest_index(const Eigen::VectorXd& grid, double location) {
  Eigen::Index best;
  (grid.array() - location).abs().minCoeff(&best);
  return best;
}

namespace {

Eigen::VectorXd add_noise(Eigen::VectorXd clean, double sigma, Rng& rng) {
  for (Eigen::Index i = 0; i < clean.size(); ++i) clean[i] += sigma * standard_normal(rng);
  return clean;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

ProblemInstance make_problem(Preset preset, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  ProblemInstance pb;
  pb.preset = preset;
  pb.metadata["preset"] = to_string(preset);
  pb.metadata["data_seed"] = std::to_string(seed);
  switch (preset) {
    case Preset::toy: {
      pb.op = std::make_shared<LinearOperator>(Eigen::MatrixXd::Identity(1, 1));
      pb.data = Eigen::VectorXd::Constant(1, 0.2);
      pb.noise_std = std::sqrt(std::pow(10.0, -2.8));
      pb.true_state = Eigen::VectorXd::Constant(1, 0.2);
      pb.grid = Eigen::VectorXd::Zero(1);
      pb.trace_index = 0;
      pb.metadata["y"] = "0.2";
      pb.metadata["noise_variance"] = fmt(pb.noise_std * pb.noise_std);
      break;
    }
    case Preset::deconvolution: {
      constexpr Eigen::Index n = 128, stride = 6, n_fine = 1000;
      const GaussianKernel kernel{6.2, 2e-2};
      pb.op = std::make_shared<LinearOperator>(
          conv_operator(n, stride, kernel.amplitude, kernel.width));
      pb.grid = signal_grid(n);
      pb.true_state = pb.grid.unaryExpr([](double t) { return deconvolution_signal(t); });
      // Data from a 1000-point quadrature of the same integral.
      const Eigen::VectorXd fine = signal_grid(n_fine);
      const auto obs = observation_indices(n, stride);
      Eigen::VectorXd clean(static_cast<Eigen::Index>(obs.size()));
      for (Eigen::Index j = 0; j < clean.size(); ++j) {
        double acc = 0.0;
        for (Eigen::Index k = 0; k < n_fine; ++k)
          acc += kernel(pb.grid[obs[j]] - fine[k]) * deconvolution_signal(fine[k]);
        clean[j] = acc / static_cast<double>(n_fine);
      }
      pb.noise_std = 3e-2;
      pb.data = add_noise(clean, pb.noise_std, rng);
      pb.increment_reparam = true;
      pb.trace_index = nearest_index(pb.grid, 0.172);
      pb.metadata["n"] = std::to_string(n);
      pb.metadata["m"] = std::to_string(obs.size());
      pb.metadata["observation_nodes"] = "every 6th node starting at s_1 = 1/128";
      pb.metadata["quadrature"] = "equal weights 1/n on s_k = k/n";
      pb.metadata["data_grid"] = std::to_string(n_fine);
      break;
    }
    case Preset::burgers: {
      constexpr Eigen::Index n = 100, stride = 5;
      constexpr double t_end = 0.25, cfl = 0.4;
      auto op = std::make_shared<BurgersOperator>(n, t_end, stride, cfl);
      pb.grid = burgers_grid(n);
      pb.true_state = pb.grid.unaryExpr([](double x) { return burgers_initial(x); });
      Eigen::VectorXd clean(op->output_dim());
      for (Eigen::Index j = 0; j < clean.size(); ++j)
        clean[j] = burgers_exact(pb.grid[op->observed()[j]], t_end);
      pb.noise_std = 1e-2;
      pb.data = add_noise(clean, pb.noise_std, rng);
      pb.op = std::move(op);
      pb.increment_reparam = true;
      pb.trace_index = nearest_index(pb.grid, 0.252);
      pb.metadata["n"] = std::to_string(n);
      pb.metadata["m"] = std::to_string(clean.size());
      pb.metadata["cfl"] = fmt(cfl);
      pb.metadata["t_end"] = fmt(t_end);
      pb.metadata["grid"] = "cell centres (i + 1/2) / n";
      pb.metadata["data"] = "exact entropy solution at observed cell centres";
      break;
    }
    case Preset::impulse: {
      const Eigen::MatrixXd image = read_matrix_file(impulse_image_path());
      const Eigen::Index n1 = image.rows(), n2 = image.cols();
      pb.op = std::make_shared<LinearOperator>(dct2_operator(n1, n2));
      pb.true_state = Eigen::Map<const Eigen::VectorXd>(image.data(), n1 * n2);
      pb.grid = Eigen::VectorXd::LinSpaced(n1 * n2, 0.0, static_cast<double>(n1 * n2 - 1));
      pb.noise_std = 1e-2;
      pb.data = add_noise(pb.op->apply(pb.true_state), pb.noise_std, rng);
      pb.true_state.maxCoeff(&pb.trace_index);
      pb.metadata["image"] = std::to_string(n1) + "x" + std::to_string(n2);
      pb.metadata["image_file"] = impulse_image_path();
      break;
    }
  }
  pb.metadata["noise_std"] = fmt(pb.noise_std);
  return pb;
}

}  // namespace sblpn
