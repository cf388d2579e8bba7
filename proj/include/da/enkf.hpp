#pragma once

#include "da/core.hpp"
#include "da/ensemble.hpp"

#include <Eigen/Cholesky>

#include <cstdint>

namespace da {

struct EnkfOptions {
  /// Set the per-member synthetic observation noise to zero. Exposed so the
  /// stochastic filter can be tested against exact oracles.
  bool suppress_noise = false;
  /// Warn on standard error when the innovation system condition number
  /// exceeds this.
  double condition_warn_threshold = 1e12;
};

/// Factored Kalman gain K = S H^T (H S H^T + R)^{-1} for S = A A^T held as
/// the anomaly factor A; S is never densified. The inner m x m system is
/// solved by symmetric factorization.
class KalmanGainFactors {
 public:
  KalmanGainFactors(const CovarianceFactor& s, const ObservationOperator& h,
                    const DiagonalCovariance& r,
                    double condition_warn_threshold = 1e12);

  /// K v for an m-vector v.
  Vector apply(const Vector& v) const;

  /// Condition number of H S H^T + R.
  double condition() const { return condition_; }

 private:
  Matrix factor_;     // A, n x (Nens+1)
  Matrix projected_;  // H A, m x (Nens+1)
  Eigen::LDLT<Matrix> innovation_solver_;
  double condition_ = 0.0;
};

/// Stochastic (perturbed observations) EnKF analysis: each member is updated
/// with its own noisy copy of the observation,
///   x_i <- x_i + K (y + eps_i - H x_i),   eps_i ~ N(0, R) keyed by (seed, i).
Ensemble enkf_analysis(const Ensemble& e, const Observation& obs,
                       std::uint64_t seed, const EnkfOptions& opts = {});

}  // namespace da
