#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace sblpn {

/// Raised when a forward model cannot produce a finite output.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Map from the signal x to predicted observations. Implementations are
/// immutable after construction and reentrant.
class ForwardOperator {
 public:
  virtual ~ForwardOperator() = default;

  virtual Eigen::Index input_dim() const = 0;
  virtual Eigen::Index output_dim() const = 0;
  virtual Eigen::VectorXd apply(const Eigen::VectorXd& x) const = 0;
  virtual Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const = 0;

  /// J(x)^T v.
  virtual Eigen::VectorXd jacobian_transpose_apply(const Eigen::VectorXd& x,
                                                   const Eigen::VectorXd& v) const {
    return jacobian(x).transpose() * v;
  }

  virtual bool is_linear() const { return false; }
};

class LinearOperator final : public ForwardOperator {
 public:
  explicit LinearOperator(Eigen::MatrixXd matrix);

  Eigen::Index input_dim() const override { return matrix_.cols(); }
  Eigen::Index output_dim() const override { return matrix_.rows(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const override { return matrix_ * x; }
  Eigen::MatrixXd jacobian(const Eigen::VectorXd&) const override { return matrix_; }
  Eigen::VectorXd jacobian_transpose_apply(const Eigen::VectorXd&,
                                           const Eigen::VectorXd& v) const override {
    return matrix_.transpose() * v;
  }
  bool is_linear() const override { return true; }

  const Eigen::MatrixXd& matrix() const { return matrix_; }
  /// True when M^T M = I to 1e-10 (checked once at construction).
  bool orthogonal() const { return orthogonal_; }

 private:
  Eigen::MatrixXd matrix_;
  bool orthogonal_ = false;
};

// ---------------------------------------------------------------------------
// Deconvolution

/// Gaussian blur kernel A exp(-t^2 / (2 w^2)).
struct GaussianKernel {
  double amplitude = 6.2;
  double width = 2e-2;

  double operator()(double t) const;
};

/// Signal grid s_k = k / n, k = 1..n.
Eigen::VectorXd signal_grid(Eigen::Index n);

/// Observation nodes every `stride`-th grid node starting at the first,
/// i.e. 0-based indices 0, stride, 2 stride, ...
std::vector<Eigen::Index> observation_indices(Eigen::Index n, Eigen::Index stride);

/// Discretized convolution on the n-point grid, rows at the observation nodes,
/// equal quadrature weights 1/n.
Eigen::MatrixXd conv_operator(Eigen::Index n, Eigen::Index obs_stride, double amplitude,
                              double width);

/// Bidiagonal difference matrix L (1 on the diagonal, -1 below) and its solves.
class FdMatrix {
 public:
  explicit FdMatrix(Eigen::Index n);

  Eigen::Index size() const { return n_; }
  Eigen::MatrixXd matrix() const;
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  /// x = L^{-1} z, a running sum.
  Eigen::VectorXd solve_L(const Eigen::VectorXd& z) const;
  /// w = L^{-T} v, a reversed running sum.
  Eigen::VectorXd solve_Lt(const Eigen::VectorXd& v) const;

 private:
  Eigen::Index n_;
};

// ---------------------------------------------------------------------------
// Inviscid Burgers, u_t + (u^2)_x = 0 on the periodic unit interval

/// Cell centres (i + 1/2) / n.
Eigen::VectorXd burgers_grid(Eigen::Index n);

/// Godunov flux for f(u) = u^2.
double godunov_flux(double ul, double ur);

/// Finite-volume upwind solve with SSP-RK(4,3). The step is fixed per call,
/// dt = cfl dx / max(2 max|u0|, eps), and the last step is shortened to land
/// on t_end. Throws EvaluationError when the state becomes non-finite.
Eigen::VectorXd burgers_solve(const Eigen::VectorXd& u0, double t_end, double cfl = 0.4);

/// Solution and its forward-mode sensitivity d u(t_end) / d u0 through the
/// same discrete scheme (the step size is held fixed).
struct BurgersSensitivity {
  Eigen::VectorXd u;
  Eigen::MatrixXd du_du0;
};
BurgersSensitivity burgers_solve_sensitivity(const Eigen::VectorXd& u0, double t_end,
                                             double cfl = 0.4);

/// Entropy solution for the square-wave initial data 1 on |x - 1/2| < 1/4:
/// rarefaction fan from x = 1/4 and a unit-speed shock from x = 3/4.
/// Valid for 0 <= t <= 1/4 and x in [0, 1).
double burgers_exact(double x, double t);

/// Square-wave initial data.
double burgers_initial(double x);

class BurgersOperator final : public ForwardOperator {
 public:
  BurgersOperator(Eigen::Index n, double t_end, Eigen::Index obs_stride, double cfl = 0.4);

  Eigen::Index input_dim() const override { return n_; }
  Eigen::Index output_dim() const override { return static_cast<Eigen::Index>(obs_.size()); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const override;
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const override;

  const std::vector<Eigen::Index>& observed() const { return obs_; }
  double t_end() const { return t_end_; }
  double cfl() const { return cfl_; }

 private:
  Eigen::Index n_;
  double t_end_;
  double cfl_;
  std::vector<Eigen::Index> obs_;
};

// ---------------------------------------------------------------------------
// DCT

/// Orthonormal DCT-II matrix, C[k, j] = a_k cos(pi (2 j + 1) k / (2 n)).
Eigen::MatrixXd dct_matrix(Eigen::Index n);

/// 2D DCT acting on column-major vectorized n1 x n2 images, kron(C_n2, C_n1).
Eigen::MatrixXd dct2_operator(Eigen::Index n1, Eigen::Index n2);

/// Separable 2D DCT, C_n1 X C_n2^T.
Eigen::MatrixXd dct2_apply(const Eigen::MatrixXd& image);

// ---------------------------------------------------------------------------
// Problem presets

enum class Preset { toy, deconvolution, burgers, impulse };

Preset parse_preset(const std::string& name);
std::string to_string(Preset p);

struct ProblemInstance {
  Preset preset = Preset::toy;
  std::shared_ptr<const ForwardOperator> op;  // acts on the physical signal
  Eigen::VectorXd true_state;                 // physical signal on the inference grid
  Eigen::VectorXd data;
  double noise_std = 1.0;
  bool increment_reparam = false;  // sampled variable is z with x = L^{-1} z
  Eigen::VectorXd grid;            // location of every signal node
  Eigen::Index trace_index = 0;    // coordinate singled out for trace output
  std::map<std::string, std::string> metadata;
};

/// Deconvolution ground truth: piecewise constant, first jump at t = 0.17.
double deconvolution_signal(double t);

/// Reads a whitespace-separated matrix, one row per line.
Eigen::MatrixXd read_matrix_file(const std::string& path);

/// Default location of the impulse ground-truth image.
std::string impulse_image_path();

/// Builds operator, ground truth and noisy data for a preset. Data are
/// synthesized off the inference discretization where the preset calls for it
/// (1000-point quadrature for deconvolution, exact solution for Burgers).
ProblemInstance make_problem(Preset preset, std::uint64_t seed);

/// Index of the grid node closest to `location`.
Eigen::Index nearest_index(const Eigen::VectorXd& grid, double location);

}  // namespace sblpn
