#include "da/trustregion.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace da {

void TRParams::validate() const {
  if (!(delta0 > 0.0) || !(delta0 <= delta_max)) {
    throw ConfigurationError("require 0 < delta0 <= delta_max");
  }
  if (!(theta1 > 0.0 && theta1 < theta2 && theta2 < 1.0)) {
    throw ConfigurationError("require 0 < theta1 < theta2 < 1");
  }
  if (!(gamma_dec > 0.0 && gamma_dec < 1.0)) {
    throw ConfigurationError("require gamma_dec in (0, 1)");
  }
  if (!(gamma_inc > 1.0)) {
    throw ConfigurationError("require gamma_inc > 1");
  }
  if (!(eta > 0.0 && eta < 2.0)) {
    throw ConfigurationError("require eta in (0, 2)");
  }
}

SubspaceMetric::SubspaceMetric(Matrix p) : p_(std::move(p)) {
  if (p_.rows() != p_.cols()) {
    throw ConfigurationError("subspace metric must be square");
  }
  if ((p_ - p_.transpose()).lpNorm<Eigen::Infinity>() >
      1e-10 * (1.0 + p_.lpNorm<Eigen::Infinity>())) {
    throw ConfigurationError("subspace metric must be symmetric");
  }
}

SubspaceMetric SubspaceMetric::from_basis(const Matrix& basis0) {
  Matrix p = basis0.transpose() * basis0;
  p = 0.5 * (p + p.transpose());  // enforce exact symmetry
  return SubspaceMetric(std::move(p));
}

double SubspaceMetric::norm(const Vector& z) const {
  if (z.size() != p_.rows()) {
    throw DimensionError("metric norm applied to wrong size");
  }
  return std::sqrt(std::max(z.dot(p_ * z), 0.0));
}

double quadratic_model(const ReducedProblem& p, const Vector& w, const Vector& s) {
  if (s.size() != w.size()) {
    throw DimensionError("model step does not match weight size");
  }
  const Vector grad = reduced_grad(p, w);
  const Matrix hess = reduced_hessian(p);
  return reduced_cost(p, w) + s.dot(grad) + 0.5 * s.dot(hess * s);
}

namespace {

struct MetricSolve {
  Vector z;
  bool ok = false;
};

/// z(lambda) = (hess + 2 lambda P)^{-1} (hess w - grad).
MetricSolve solve_shifted(const Matrix& hess, const Matrix& p_ridged,
                          const Vector& rhs, double lambda) {
  const Matrix shifted = hess + 2.0 * lambda * p_ridged;
  const Eigen::LDLT<Matrix> solver(shifted);
  MetricSolve out;
  out.z = solver.solve(rhs);
  out.ok = out.z.allFinite() &&
           (shifted * out.z - rhs).lpNorm<Eigen::Infinity>() <=
               1e-8 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
  return out;
}

}  // namespace

SubproblemSolution solve_subproblem(const Vector& grad, const Matrix& hess,
                                    const Vector& w, const SubspaceMetric& p,
                                    double delta) {
  if (!(delta > 0.0)) {
    throw ConfigurationError("trust-region radius must be positive");
  }
  const Index dim = w.size();
  if (grad.size() != dim || hess.rows() != dim || hess.cols() != dim ||
      p.dim() != dim) {
    throw DimensionError("subproblem dimensions do not agree");
  }

  const double p_trace = p.matrix().trace();
  if (!(p_trace > 0.0)) {
    throw DegenerateBasisError("subspace metric is zero");
  }
  // Ridge keeps the shifted systems solvable when the basis is rank
  // deficient; it only affects the solver, not the reported metric norm.
  const double ridge = 1e-12 * p_trace / double(dim);
  const Matrix p_ridged =
      p.matrix() + ridge * Matrix::Identity(dim, dim);

  const Vector rhs = hess * w - grad;

  // Full ensemble-space step when it stays inside the region.
  {
    const Eigen::LDLT<Matrix> solver(hess);
    const Vector s_full = solver.solve(-grad);
    if (s_full.allFinite() &&
        (hess * s_full + grad).lpNorm<Eigen::Infinity>() <=
            1e-8 * (1.0 + grad.lpNorm<Eigen::Infinity>())) {
      if (p.norm(w + s_full) <= delta) {
        return SubproblemSolution{s_full, 0.0, false};
      }
    }
  }

  // Boundary case: safeguarded bisection on the secular function
  // phi(lambda) = |z(lambda)|_P - delta, decreasing in lambda.
  double lambda_lo = 0.0;
  double lambda_hi = 1e-8;
  MetricSolve hi_solve;
  bool bracketed = false;
  for (int grow = 0; grow < 400; ++grow) {
    hi_solve = solve_shifted(hess, p_ridged, rhs, lambda_hi);
    if (hi_solve.ok && p.norm(hi_solve.z) < delta) {
      bracketed = true;
      break;
    }
    if (hi_solve.ok) {
      lambda_lo = lambda_hi;
    }
    lambda_hi *= 2.0;
  }
  if (!bracketed) {
    throw SubproblemError("could not bracket the trust-region multiplier");
  }

  double lambda = lambda_hi;
  Vector z = hi_solve.z;
  for (int iter = 0; iter < 500; ++iter) {
    const double mid = 0.5 * (lambda_lo + lambda_hi);
    const MetricSolve mid_solve = solve_shifted(hess, p_ridged, rhs, mid);
    if (!mid_solve.ok) {
      throw SubproblemError("shifted trust-region system is singular");
    }
    const double norm_mid = p.norm(mid_solve.z);
    if (norm_mid >= delta) {
      lambda_lo = mid;
    } else {
      lambda_hi = mid;
      lambda = mid;
      z = mid_solve.z;
    }
    if (std::abs(norm_mid - delta) <= 1e-10 * delta) {
      lambda = mid;
      z = mid_solve.z;
      break;
    }
    if (lambda_hi - lambda_lo <= 1e-15 * std::max(lambda_hi, 1.0)) {
      break;
    }
  }
  return SubproblemSolution{z - w, lambda, true};
}

double prediction_ratio(double j_old, double j_new, double je_old, double je_new) {
  const double predicted = je_old - je_new;
  if (std::abs(predicted) <= 1e-14 * (1.0 + std::abs(je_old))) {
    return 0.0;
  }
  return (j_old - j_new) / predicted;
}

StateVector update_solution(const StateVector& current, const StateVector& trial,
                            double rho, double eta) {
  return (rho <= eta) ? current : trial;
}

double update_radius(double delta, double rho, const TRParams& params) {
  if (rho < params.theta1) {
    return delta * params.gamma_dec;
  }
  if (rho >= params.theta2 && rho <= 1.0) {
    return std::min(delta * params.gamma_inc, params.delta_max);
  }
  return delta;  // middle band and rho > 1
}

double covariance_scale(double delta, double delta_max) {
  if (!(delta_max > 0.0) || delta < 0.0) {
    throw ConfigurationError("covariance scale needs delta_max > 0 and delta >= 0");
  }
  return delta_max / (delta_max + delta);
}

namespace {

/// Euclidean trust-region subproblem by eigendecomposition, including the
/// hard case. Small dimensions only.
Vector solve_trs_euclidean(const Vector& grad, const Matrix& hess, double delta) {
  const Index dim = grad.size();
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(hess);
  const Vector evals = eig.eigenvalues();
  const Matrix q = eig.eigenvectors();
  const Vector g_rot = q.transpose() * grad;
  const double lambda_min = evals.minCoeff();

  const auto step_norm = [&](double mu) {
    double sum = 0.0;
    for (Index i = 0; i < dim; ++i) {
      const double denom = evals[i] + mu;
      sum += (g_rot[i] / denom) * (g_rot[i] / denom);
    }
    return std::sqrt(sum);
  };
  const auto build_step = [&](double mu) {
    Vector s_rot(dim);
    for (Index i = 0; i < dim; ++i) {
      s_rot[i] = -g_rot[i] / (evals[i] + mu);
    }
    return Vector(q * s_rot);
  };

  if (lambda_min > 0.0 && step_norm(0.0) <= delta) {
    return build_step(0.0);
  }

  const double mu_floor = std::max(0.0, -lambda_min);
  const double eps = 1e-12 * std::max(1.0, std::abs(lambda_min));

  // Hard case: the gradient has no weight on the minimal eigenspace and the
  // limiting step is interior; pad it along that eigenspace to the boundary.
  if (step_norm(mu_floor + eps) < delta) {
    Vector s_rot = Vector::Zero(dim);
    for (Index i = 0; i < dim; ++i) {
      const double denom = evals[i] + mu_floor;
      if (std::abs(denom) > eps) {
        s_rot[i] = -g_rot[i] / denom;
      }
    }
    Vector s = q * s_rot;
    const double norm_sq = s.squaredNorm();
    if (norm_sq < delta * delta) {
      Index min_index = 0;
      evals.minCoeff(&min_index);
      s += std::sqrt(delta * delta - norm_sq) * q.col(min_index);
    }
    return s;
  }

  double mu_lo = mu_floor + eps;
  double mu_hi = std::max(2.0 * mu_lo, 1.0);
  while (step_norm(mu_hi) > delta) {
    mu_hi *= 2.0;
    if (mu_hi > 1e300) {
      throw SubproblemError("Euclidean trust-region multiplier overflow");
    }
  }
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (mu_lo + mu_hi);
    if (step_norm(mid) > delta) {
      mu_lo = mid;
    } else {
      mu_hi = mid;
    }
    if (std::abs(step_norm(mu_hi) - delta) <= 1e-12 * delta) break;
  }
  return build_step(mu_hi);
}

}  // namespace

GenericTrResult generic_trust_region(
    const std::function<double(const Vector&)>& objective,
    const std::function<Vector(const Vector&)>& gradient,
    const std::function<Matrix(const Vector&)>& hessian, const Vector& x0,
    const GenericTrOptions& options) {
  options.params.validate();

  GenericTrResult result;
  result.x = x0;
  result.value = objective(x0);
  double delta = options.params.delta0;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    const Vector grad = gradient(result.x);
    result.grad_norm = grad.lpNorm<Eigen::Infinity>();
    result.iterations = iter;
    if (result.grad_norm <= options.grad_tol) {
      result.converged = true;
      return result;
    }

    const Matrix hess = hessian(result.x);
    const Vector step = solve_trs_euclidean(grad, hess, delta);
    const double predicted = -(grad.dot(step) + 0.5 * step.dot(hess * step));
    const double trial_value = objective(result.x + step);
    const double rho =
        prediction_ratio(result.value, trial_value, 0.0, -predicted);

    if (rho > options.params.eta) {
      result.x += step;
      result.value = trial_value;
    }

    // Appendix-style radius rule: no upper cap; rho > 1 keeps the radius.
    if (rho < options.params.theta1) {
      delta *= options.params.gamma_dec;
    } else if (rho >= options.params.theta2 && rho <= 1.0) {
      delta *= options.params.gamma_inc;
    }
  }

  result.iterations = options.max_iterations;
  result.grad_norm = gradient(result.x).lpNorm<Eigen::Infinity>();
  result.converged = result.grad_norm <= options.grad_tol;
  return result;
}

}  // namespace da
