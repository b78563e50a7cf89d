#pragma once

#include <functional>
#include <span>
#include <string>

#include <Eigen/Dense>

namespace pdmr {

struct FitResult {
  Eigen::VectorXd params;
  Eigen::MatrixXd covariance;  // residual-variance scaled (J^T J)^-1
  double residual_norm = 0.0;  // ||r||_2 at params
  bool converged = false;
  int iterations = 0;
  bool singular = false;       // J^T J rank-deficient; covariance is a pseudo-inverse
  std::string message;

  double sigma(Eigen::Index i) const;
  /// 95% half-width.
  double ci95(Eigen::Index i) const { return 1.96 * sigma(i); }
};

/// Residual callback: fill r (pre-sized to the residual count) at parameters p.
using ResidualFn = std::function<void(const Eigen::VectorXd& p, Eigen::VectorXd& r)>;
/// Scalar model y(x; p).
using ModelFn = std::function<double(double x, const Eigen::VectorXd& p)>;

struct SolverOptions {
  int max_iterations = 200;
  double step_tol = 1e-10;      // scaled relative step
  double gradient_tol = 1e-12;  // cosine between residual and Jacobian columns
  double cost_tol = 1e-15;      // relative actual and predicted reduction
  /// Box constraints; empty means unbounded. Steps are projected onto the box.
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  /// Per-parameter magnitude used for finite-difference steps when a parameter is near zero.
  Eigen::VectorXd typical;
};

/// Levenberg-Marquardt on a residual vector of fixed size with a central-difference Jacobian.
FitResult minimize(const ResidualFn& residuals, Eigen::Index n_residuals, const Eigen::VectorXd& init,
                   const SolverOptions& options = {});

/// Curve fit of model(x, p) to (x, y). Requires x.size() >= init.size().
FitResult least_squares(const ModelFn& model, std::span<const double> x, std::span<const double> y,
                        const Eigen::VectorXd& init, const SolverOptions& options = {});

}  // namespace pdmr
