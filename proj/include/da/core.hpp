#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace da {

using StateVector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Mismatched vector/matrix sizes between otherwise valid objects.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or construction arguments.
struct ConfigurationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A model integration produced non-finite values.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A linear system is numerically singular or unusably conditioned.
struct IllConditioningError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A reduced basis has no usable directions (all singular values zero,
/// or the subspace metric vanishes).
struct DegenerateBasisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The trust-region subproblem solver could not produce a step.
struct SubproblemError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Diagonal covariance with a scalar multiplier, C = scale * diag(variances).
/// The scale is kept separate so that repeated multiplicative updates
/// (B <- lambda * B) stay exact and cheap.
class DiagonalCovariance {
 public:
  DiagonalCovariance(Vector variances, double scale = 1.0);

  /// C = variance * I_n.
  static DiagonalCovariance scaled_identity(Index n, double variance);

  Index dim() const { return variances_.size(); }
  double scale() const { return scale_; }
  const Vector& base_variances() const { return variances_; }

  /// Effective variance of component i, scale * variances[i].
  double variance(Index i) const { return scale_ * variances_[i]; }

  /// Componentwise standard deviations sqrt(scale * variances).
  Vector stddev() const;

  /// C v.
  Vector apply(const Vector& v) const;
  /// C^{-1} v; throws IllConditioningError when scale == 0.
  Vector inverse_apply(const Vector& v) const;

  double trace() const { return scale_ * variances_.sum(); }

  /// B <- factor * B.
  void rescale(double factor);

 private:
  Vector variances_;
  double scale_;
};

/// Linear observation operator selecting a fixed subset of state components
/// (a 0/1 selection matrix, stored as the ordered index set).
class ObservationOperator {
 public:
  ObservationOperator(std::vector<Index> indices, Index state_dim);

  /// Observe every component.
  static ObservationOperator all(Index state_dim);

  Index state_dim() const { return state_dim_; }
  Index obs_dim() const { return static_cast<Index>(indices_.size()); }
  const std::vector<Index>& indices() const { return indices_; }

  /// H x: the selected components of x, in index order.
  Vector apply(const StateVector& x) const;

  /// H X for a matrix whose columns are states (row selection).
  Matrix apply_matrix(const Matrix& x) const;

 private:
  std::vector<Index> indices_;
  Index state_dim_;
};

/// A single observation y_k at time index k with its operator and error
/// statistics.
struct Observation {
  int time_index = 0;
  Vector value;
  ObservationOperator op;
  DiagonalCovariance noise;

  Observation(int k, Vector y, ObservationOperator h, DiagonalCovariance r);
};

/// v^T C^{-1} v.
double weighted_sq_norm(const Vector& v, const DiagonalCovariance& cov);

/// H x (free-function form of ObservationOperator::apply).
Vector apply_operator(const ObservationOperator& h, const StateVector& x);

}  // namespace da
