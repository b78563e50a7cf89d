#include "pdmr/least_squares.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace pdmr {

double FitResult::sigma(Eigen::Index i) const {
  if (i < 0 || i >= covariance.rows()) throw std::out_of_range("FitResult::sigma: bad index");
  return std::sqrt(std::max(covariance(i, i), 0.0));
}

namespace {

struct Problem {
  const ResidualFn& fn;
  Eigen::Index m;
  const SolverOptions& opt;
  Eigen::VectorXd lower, upper, typical;

  Eigen::VectorXd clamp(Eigen::VectorXd p) const {
    return p.cwiseMax(lower).cwiseMin(upper);
  }

  Eigen::VectorXd eval(const Eigen::VectorXd& p) const {
    Eigen::VectorXd r(m);
    fn(p, r);
    return r;
  }

  Eigen::MatrixXd jacobian(const Eigen::VectorXd& p) const {
    const Eigen::Index n = p.size();
    Eigen::MatrixXd j(m, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double h = 1e-6 * std::max(std::abs(p(k)), typical(k));
      Eigen::VectorXd hi = p, lo = p;
      hi(k) = std::min(p(k) + h, upper(k));
      lo(k) = std::max(p(k) - h, lower(k));
      const double span = hi(k) - lo(k);
      if (span <= 0.0) {
        j.col(k).setZero();
        continue;
      }
      j.col(k) = (eval(hi) - eval(lo)) / span;
    }
    return j;
  }
};

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

void fill_covariance(FitResult& out, const Eigen::MatrixXd& j, Eigen::Index m) {
  const Eigen::Index n = j.cols();
  // Column-equilibrate so that parameters of very different magnitude do not read as rank loss.
  Eigen::VectorXd scale = j.colwise().norm().transpose();
  for (Eigen::Index k = 0; k < n; ++k) {
    if (scale(k) == 0.0) {
      scale(k) = 1.0;
      out.singular = true;
    }
  }
  const Eigen::MatrixXd js = j * scale.cwiseInverse().asDiagonal();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(js, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double cut = (s.size() > 0 ? s(0) : 0.0) * 1e-10;
  Eigen::VectorXd inv2 = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > cut && s(i) > 0.0) {
      inv2(i) = 1.0 / (s(i) * s(i));
    } else {
      out.singular = true;
    }
  }
  const double dof = static_cast<double>(std::max<Eigen::Index>(m - n, 1));
  const double s2 = out.residual_norm * out.residual_norm / dof;
  const Eigen::MatrixXd& v = svd.matrixV();
  const Eigen::MatrixXd unscaled = scale.cwiseInverse().asDiagonal() * v * inv2.asDiagonal() *
                                   v.transpose() * scale.cwiseInverse().asDiagonal();
  Eigen::MatrixXd cov = unscaled * s2;
  out.covariance = 0.5 * (cov + cov.transpose());
}

}  // namespace

FitResult minimize(const ResidualFn& residuals, Eigen::Index n_residuals, const Eigen::VectorXd& init,
                   const SolverOptions& options) {
  const Eigen::Index n = init.size();
  if (n == 0) throw std::invalid_argument("least squares: no parameters");
  if (n_residuals < n) throw std::invalid_argument("least squares: fewer residuals than parameters");
  if (!all_finite(init)) throw std::invalid_argument("least squares: initial parameters must be finite");
  const double inf = std::numeric_limits<double>::infinity();
  const auto sized = [&](const Eigen::VectorXd& v, double fill, const char* what) {
    if (v.size() == 0) return Eigen::VectorXd::Constant(n, fill).eval();
    if (v.size() != n) throw std::invalid_argument(std::string("least squares: ") + what + " size mismatch");
    return v;
  };
  Problem pb{residuals, n_residuals, options, sized(options.lower, -inf, "lower bound"),
             sized(options.upper, inf, "upper bound"), sized(options.typical, 0.0, "typical scale")};
  if ((pb.lower.array() > pb.upper.array()).any()) {
    throw std::invalid_argument("least squares: lower bound above upper bound");
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    if (pb.typical(k) <= 0.0) pb.typical(k) = std::abs(init(k)) > 0.0 ? std::abs(init(k)) : 1e-6;
  }

  FitResult out;
  Eigen::VectorXd p = pb.clamp(init);
  Eigen::VectorXd r = pb.eval(p);
  if (!all_finite(r)) throw std::invalid_argument("least squares: residuals not finite at initial point");
  double cost = 0.5 * r.squaredNorm();
  Eigen::MatrixXd j = pb.jacobian(p);
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  double lambda = -1.0;
  double nu = 2.0;
  bool recompute = false;

  for (out.iterations = 0; out.iterations < options.max_iterations; ++out.iterations) {
    if (recompute) {
      j = pb.jacobian(p);
      recompute = false;
    }
    const Eigen::MatrixXd a = j.transpose() * j;
    const Eigen::VectorXd g = j.transpose() * r;
    diag = diag.cwiseMax(a.diagonal().cwiseSqrt());
    for (Eigen::Index k = 0; k < n; ++k)
      if (diag(k) == 0.0) diag(k) = 1.0;

    if (cost == 0.0) {
      out.converged = true;
      out.message = "zero residual";
      break;
    }
    double gnorm = 0.0;
    const double rnorm = r.norm();
    for (Eigen::Index k = 0; k < n; ++k) {
      const double cn = j.col(k).norm();
      if (cn > 0.0) gnorm = std::max(gnorm, std::abs(g(k)) / (cn * rnorm));
    }
    if (gnorm <= options.gradient_tol) {
      out.converged = true;
      out.message = "gradient below tolerance";
      break;
    }
    if (lambda < 0.0) lambda = 1e-3 * (a.diagonal().cwiseQuotient(diag.cwiseProduct(diag))).maxCoeff();

    Eigen::MatrixXd damped = a;
    damped.diagonal() += lambda * diag.cwiseProduct(diag);
    Eigen::VectorXd step = damped.ldlt().solve(-g);
    if (!all_finite(step)) step = damped.completeOrthogonalDecomposition().solve(-g);
    const Eigen::VectorXd trial = pb.clamp(p + step);
    const Eigen::VectorXd actual_step = trial - p;
    const double scaled_step = diag.cwiseProduct(actual_step).norm();
    const double scaled_p = diag.cwiseProduct(p).norm();

    const Eigen::VectorXd r_trial = pb.eval(trial);
    const double cost_trial = all_finite(r_trial) ? 0.5 * r_trial.squaredNorm() : inf;
    const Eigen::VectorXd jstep = j * actual_step;
    const double predicted = -(g.dot(actual_step) + 0.5 * jstep.squaredNorm());
    const double rho = predicted > 0.0 ? (cost - cost_trial) / predicted : -1.0;

    if (cost_trial < cost) {
      const double rel_actual = (cost - cost_trial) / cost;
      const double rel_pred = predicted / cost;
      p = trial;
      r = r_trial;
      cost = cost_trial;
      recompute = true;
      const double t = 2.0 * rho - 1.0;
      lambda *= std::max(1.0 / 3.0, 1.0 - t * t * t);
      nu = 2.0;
      if (rel_actual <= options.cost_tol && rel_pred <= options.cost_tol) {
        j = pb.jacobian(p);
        recompute = false;
        out.converged = true;
        out.message = "cost reduction below tolerance";
        ++out.iterations;
        break;
      }
    } else {
      lambda *= nu;
      nu *= 2.0;
    }
    if (scaled_step <= options.step_tol * (scaled_p + options.step_tol)) {
      if (recompute) j = pb.jacobian(p);
      recompute = false;
      out.converged = true;
      out.message = "step below tolerance";
      ++out.iterations;
      break;
    }
    if (!std::isfinite(lambda) || lambda > 1e300) {
      out.message = "damping overflow";
      break;
    }
  }
  if (recompute) j = pb.jacobian(p);
  if (!out.converged && out.message.empty()) out.message = "iteration limit reached";

  out.params = p;
  out.residual_norm = r.norm();
  fill_covariance(out, j, n_residuals);
  return out;
}

FitResult least_squares(const ModelFn& model, std::span<const double> x, std::span<const double> y,
                        const Eigen::VectorXd& init, const SolverOptions& options) {
  if (x.size() != y.size()) throw std::invalid_argument("least squares: x and y differ in length");
  const auto m = static_cast<Eigen::Index>(x.size());
  return minimize(
      [&](const Eigen::VectorXd& p, Eigen::VectorXd& r) {
        for (Eigen::Index i = 0; i < m; ++i) r(i) = model(x[i], p) - y[i];
      },
      m, init, options);
}

}  // namespace pdmr
