#pragma once

#include "da/core.hpp"
#include "da/reduced.hpp"

#include <functional>

namespace da {

struct TRParams {
  double delta_max = 100.0;
  double delta0 = 0.1;
  double eta = 0.1;
  double theta1 = 0.25;
  double theta2 = 0.75;
  double gamma_inc = 1.4;
  double gamma_dec = 0.5;

  /// Throws ConfigurationError unless 0 < delta0 <= delta_max,
  /// 0 < theta1 < theta2 < 1, gamma_dec in (0,1), gamma_inc > 1 and
  /// eta in (0,2).
  void validate() const;
};

struct TRState {
  double delta = 0.1;
  int iteration = 0;
  double last_rho = 0.0;
};

/// The weight-space metric P = Psi_0^T Psi_0 under which the trust-region
/// constraint |Psi_0 (w + s)| <= Delta is measured.
class SubspaceMetric {
 public:
  explicit SubspaceMetric(Matrix p);

  static SubspaceMetric from_basis(const Matrix& basis0);

  const Matrix& matrix() const { return p_; }
  Index dim() const { return p_.rows(); }

  /// sqrt(z^T P z), clamped at zero.
  double norm(const Vector& z) const;

 private:
  Matrix p_;
};

/// m(s) = J(w) + s^T grad J(w) + (1/2) s^T hess J s for the reduced cost.
/// Exact for the quadratic reduced costs in this library.
double quadratic_model(const ReducedProblem& p, const Vector& w, const Vector& s);

struct SubproblemSolution {
  Vector step;
  double lambda = 0.0;      // multiplier of the trust-region constraint
  bool on_boundary = false;
};

/// Minimizes the quadratic model over steps s with |w + s|_P <= delta.
/// Returns the unconstrained minimizer when it is feasible; otherwise finds
/// the boundary solution of the stationarity system
///   grad + hess s + 2 lambda P (w + s) = 0,  |w + s|_P = delta
/// by safeguarded bisection on the secular function.
SubproblemSolution solve_subproblem(const Vector& grad, const Matrix& hess,
                                    const Vector& w, const SubspaceMetric& p,
                                    double delta);

/// rho = (J_old - J_new) / (JE_old - JE_new). A vanishing predicted decrease
/// (|denominator| <= 1e-14 * (1 + |JE_old|)) signals a degenerate step and is
/// reported as rho = 0 (rejection).
double prediction_ratio(double j_old, double j_new, double je_old, double je_new);

/// Keeps the current iterate when rho <= eta, otherwise moves to the trial.
StateVector update_solution(const StateVector& current, const StateVector& trial,
                            double rho, double eta);

/// Radius update: shrink below theta1, grow (capped at delta_max) on
/// [theta2, 1], keep otherwise (including rho > 1).
double update_radius(double delta, double rho, const TRParams& params);

/// lambda_B = delta_max / (delta_max + delta); multiplies the background
/// covariance between iterations. Decreasing in delta, with values in
/// [1/2, 1] on [0, delta_max].
double covariance_scale(double delta, double delta_max);

struct GenericTrOptions {
  TRParams params;
  double grad_tol = 1e-8;  // infinity norm
  int max_iterations = 500;
};

struct GenericTrResult {
  Vector x;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Generic trust-region minimizer with a Euclidean step constraint
/// |dx| <= delta. The radius rule here has no delta_max cap; the ratio
/// rho > 1 leaves the radius unchanged. Terminates when the gradient
/// infinity norm drops below grad_tol or the iteration cap is reached
/// (converged=false in the latter case).
GenericTrResult generic_trust_region(
    const std::function<double(const Vector&)>& objective,
    const std::function<Vector(const Vector&)>& gradient,
    const std::function<Matrix(const Vector&)>& hessian, const Vector& x0,
    const GenericTrOptions& options = {});

}  // namespace da
